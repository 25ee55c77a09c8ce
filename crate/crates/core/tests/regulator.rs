use frg_flow::measure::{Estimator, EstimatorConfig, MeasureModel};
use frg_flow::{RegulatorFamily, Schedule};
use nalgebra::{DMatrix, DVector};

#[test]
fn integrability_check_finds_smallest_power_of_two() {
    let wide = MeasureModel::gaussian(DVector::zeros(1), DMatrix::from_element(1, 1, 100.0)).unwrap();
    let est = Estimator::new(wide, EstimatorConfig::quadrature(16)).unwrap();
    let fam = RegulatorFamily::new(DMatrix::identity(1, 1), Schedule::Expm1, DVector::zeros(1)).unwrap();
    // Needs 0.01 + r² − 2rṙ/R > 0 with r = e³ − 1, ṙ = e³.
    let (r, rd) = (3f64.exp_m1(), 3f64.exp());
    let expected = (0..10).map(|e| 2f64.powi(e)).find(|big_r| 0.01 + r * r - 2.0 * r * rd / big_r > 0.0).unwrap();
    assert_eq!(fam.check_integrability(&est, 3.0).unwrap(), expected);
    assert!(expected > 1.0);

    let lin = RegulatorFamily::identity(1, DVector::zeros(1)).unwrap();
    let std = Estimator::new(MeasureModel::standard_normal(1).unwrap(), EstimatorConfig::quadrature(16)).unwrap();
    assert_eq!(lin.check_integrability(&std, 0.5).unwrap(), 1.0);
}

#[test]
fn weight_is_minus_half_q() {
    let fam = RegulatorFamily::new(
        DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]),
        Schedule::Quadratic,
        DVector::from_vec(vec![0.3, -1.0]),
    )
    .unwrap();
    let x = [1.1, 0.4];
    let lw = fam.weight(1.7);
    assert!((lw.eval(&x) + 0.5 * fam.q(1.7, &x).unwrap()).abs() < 1e-12);
}
