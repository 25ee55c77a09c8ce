//! Closed forms for Gaussian measures under a quadratic regulator.
//!
//! For `μ = N(m, C)` and `R_k = r(k)² R0` centred at `w`, the regulated measure is
//! `N(m_k, P⁻¹)` with `P = C⁻¹ + R_k` and `m_k = P⁻¹(C⁻¹m + R_k w)`.

use frg_flow::measure::{EstimatorConfig, MeasureModel};
use frg_flow::{Problem, RegulatorFamily, Schedule};
use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone)]
pub struct GaussCase {
    pub m: DVector<f64>,
    pub c: DMatrix<f64>,
    pub w: DVector<f64>,
    pub r0: DMatrix<f64>,
    pub schedule: Schedule,
}

impl GaussCase {
    pub fn new(m: &[f64], c: &[f64], w: &[f64], r0: &[f64], schedule: Schedule) -> Self {
        let n = m.len();
        Self {
            m: DVector::from_row_slice(m),
            c: DMatrix::from_row_slice(n, n, c),
            w: DVector::from_row_slice(w),
            r0: DMatrix::from_row_slice(n, n, r0),
            schedule,
        }
    }

    /// N(0, 1) regulated by `k²(x − w)²`.
    pub fn standard_1d(w: f64) -> Self {
        Self::new(&[0.0], &[1.0], &[w], &[1.0], Schedule::Linear)
    }

    pub fn dim(&self) -> usize {
        self.m.len()
    }

    pub fn model(&self) -> MeasureModel {
        MeasureModel::gaussian(self.m.clone(), self.c.clone()).expect("oracle covariance is SPD")
    }

    pub fn problem(&self, cfg: EstimatorConfig) -> frg_flow::Result<Problem> {
        Problem::new(self.model(), RegulatorFamily::new(self.r0.clone(), self.schedule, self.w.clone())?, cfg)
    }

    fn r(&self, k: f64) -> f64 {
        match self.schedule {
            Schedule::Linear => k,
            Schedule::Quadratic => k * k,
            Schedule::Expm1 => k.exp_m1(),
        }
    }

    pub fn rk(&self, k: f64) -> DMatrix<f64> {
        &self.r0 * self.r(k).powi(2)
    }

    fn cinv(&self) -> DMatrix<f64> {
        self.c.clone().try_inverse().expect("oracle covariance is invertible")
    }

    pub fn precision(&self, k: f64) -> DMatrix<f64> {
        self.cinv() + self.rk(k)
    }

    pub fn cov_k(&self, k: f64) -> DMatrix<f64> {
        self.precision(k).try_inverse().expect("regulated precision is invertible")
    }

    pub fn mean_k(&self, k: f64) -> DVector<f64> {
        self.cov_k(k) * (self.cinv() * &self.m + self.rk(k) * &self.w)
    }

    /// `V_k*(y) = ½(y − m_k)ᵀ P (y − m_k)`.
    pub fn vstar(&self, k: f64, y: &DVector<f64>) -> f64 {
        let d = y - self.mean_k(k);
        0.5 * d.dot(&(self.precision(k) * &d))
    }

    pub fn gamma(&self, k: f64, y: &DVector<f64>) -> f64 {
        let d = y - &self.w;
        self.vstar(k, y) - 0.5 * d.dot(&(self.rk(k) * &d))
    }

    /// `ln N_k` from completing the square.
    pub fn log_normalizer(&self, k: f64) -> f64 {
        let rk = self.rk(k);
        let cinv = self.cinv();
        let b = &cinv * &self.m + &rk * &self.w;
        let expo = 0.5 * b.dot(&(self.cov_k(k) * &b)) - 0.5 * self.m.dot(&(&cinv * &self.m)) - 0.5 * self.w.dot(&(&rk * &self.w));
        expo - 0.5 * (self.precision(k).determinant() * self.c.determinant()).ln()
    }
}

/// `d/dk N_k` for N(0, 1) with `w = 0` and `r = k`: `N_k = (1 + k²)^{−1/2}`.
pub fn standard_normalizer_derivative(k: f64) -> f64 {
    -k * (1.0 + k * k).powf(-1.5)
}

/// Admissibility ratio for N(0, 1), `r = k`, target `y`: `exp(−½y²/(1 + k²))`.
pub fn standard_admissibility(k: f64, y: f64) -> f64 {
    (-0.5 * y * y / (1.0 + k * k)).exp()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_case_reduces_to_scalar_formulas() {
        let g = GaussCase::standard_1d(0.0);
        let k: f64 = 1.3;
        let y = DVector::from_element(1, 0.7);
        assert!((g.vstar(k, &y) - 0.5 * (1.0 + k * k) * 0.49).abs() < 1e-14);
        assert!((g.log_normalizer(k) + 0.5 * (1.0 + k * k).ln()).abs() < 1e-14);
        let h = 1e-5;
        let fd = (g.log_normalizer(k + h).exp() - g.log_normalizer(k - h).exp()) / (2.0 * h);
        assert!((fd - standard_normalizer_derivative(k)).abs() < 1e-9);
    }

    #[test]
    fn regulator_centred_at_mean_keeps_gamma_fixed() {
        let g = GaussCase::new(&[0.3, -0.2], &[1.2, 0.3, 0.3, 0.8], &[0.3, -0.2], &[1.0, 0.1, 0.1, 2.0], Schedule::Quadratic);
        let y = DVector::from_vec(vec![1.0, 0.5]);
        assert!((g.gamma(0.0, &y) - g.gamma(2.0, &y)).abs() < 1e-12);
    }
}
