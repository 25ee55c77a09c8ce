//! Fixtures shared by the benchmarks.

use frg_flow::measure::{EstimatorConfig, MeasureModel, Perturbation};
use frg_flow::{Problem, RegulatorFamily};
use nalgebra::{DMatrix, DVector};

/// Quartic perturbation of N(0, I) in `dim` dimensions with an identity regulator at `w = 0.3·1`.
pub fn quartic_problem(dim: usize, cfg: EstimatorConfig) -> Problem {
    let model = MeasureModel::perturbed(
        DVector::zeros(dim),
        DMatrix::identity(dim, dim),
        Perturbation::quartic(dim, 0.1).expect("valid perturbation"),
    )
    .expect("valid model");
    let family = RegulatorFamily::identity(dim, DVector::from_element(dim, 0.3)).expect("valid regulator");
    Problem::new(model, family, cfg).expect("valid problem")
}

pub fn quartic_model(dim: usize) -> MeasureModel {
    MeasureModel::perturbed(
        DVector::zeros(dim),
        DMatrix::identity(dim, dim),
        Perturbation::quartic(dim, 0.1).expect("valid perturbation"),
    )
    .expect("valid model")
}
