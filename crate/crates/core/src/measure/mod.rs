//! Probability measures on ℝⁿ and the expectation machinery built on them.
//!
//! Two families are supported: Gaussians `N(m, C)` and perturbed Gaussians
//! with density proportional to `exp[−p(x)]` relative to a Gaussian base,
//! where `p` is a sum of monomials with even powers and nonnegative
//! coefficients. Every such `p` is nonnegative, so the base density is an
//! envelope with constant 1 for rejection sampling, and every linear tilt
//! `exp[φ·x]` stays integrable.

mod estimator;
pub mod gauss_hermite;

pub(crate) use estimator::sample_flat;
pub use estimator::{
    expect, sample, Estimate, Estimator, EstimatorConfig, EstimatorMode, LogQuadratic, WeightedCloud, DEFAULT_DIM_SWITCH,
    DEFAULT_NODES_PER_DIM,
};

use nalgebra::{DMatrix, DVector};

use crate::error::{ensure_finite, Error, Result};
use crate::linalg;

/// `coeff · ∏ x_i^{powers[i]}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Monomial {
    pub coeff: f64,
    pub powers: Vec<u32>,
}

impl Monomial {
    fn eval(&self, x: &[f64]) -> f64 {
        self.coeff * self.powers.iter().zip(x).map(|(&p, &xi)| xi.powi(p as i32)).product::<f64>()
    }

    fn degree(&self) -> u32 {
        self.powers.iter().sum()
    }
}

/// Polynomial perturbation `p(x) ≥ 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Perturbation {
    dim: usize,
    terms: Vec<Monomial>,
}

impl Perturbation {
    pub fn new(dim: usize, terms: Vec<Monomial>) -> Result<Self> {
        for (t, term) in terms.iter().enumerate() {
            if term.powers.len() != dim {
                return Err(Error::InvalidModel(format!(
                    "perturbation term {t} has {} powers, expected {dim}",
                    term.powers.len()
                )));
            }
            if !term.coeff.is_finite() || term.coeff < 0.0 {
                return Err(Error::InvalidModel(format!(
                    "perturbation term {t} has coefficient {}; coefficients must be finite and nonnegative",
                    term.coeff
                )));
            }
            if let Some(i) = term.powers.iter().position(|p| p % 2 != 0) {
                return Err(Error::InvalidModel(format!(
                    "perturbation term {t} has odd power {} on coordinate {i}",
                    term.powers[i]
                )));
            }
        }
        Ok(Self { dim, terms })
    }

    /// `λ Σ_i x_i⁴`.
    pub fn quartic(dim: usize, lambda: f64) -> Result<Self> {
        let terms = (0..dim)
            .map(|i| {
                let mut powers = vec![0; dim];
                powers[i] = 4;
                Monomial { coeff: lambda, powers }
            })
            .collect();
        Self::new(dim, terms)
    }

    pub fn terms(&self) -> &[Monomial] {
        &self.terms
    }

    pub fn degree(&self) -> u32 {
        self.terms.iter().map(Monomial::degree).max().unwrap_or(0)
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|t| t.eval(x)).sum()
    }

    pub fn hessian(&self, x: &[f64]) -> DMatrix<f64> {
        let n = self.dim;
        let mut h = DMatrix::zeros(n, n);
        for term in &self.terms {
            for i in 0..n {
                for j in i..n {
                    let mut powers = term.powers.clone();
                    let mut c = term.coeff;
                    c *= powers[i] as f64;
                    if powers[i] == 0 {
                        continue;
                    }
                    powers[i] -= 1;
                    c *= powers[j] as f64;
                    if powers[j] == 0 {
                        continue;
                    }
                    powers[j] -= 1;
                    let v = c * powers.iter().zip(x).map(|(&p, &xi)| xi.powi(p as i32)).product::<f64>();
                    h[(i, j)] += v;
                    if i != j {
                        h[(j, i)] += v;
                    }
                }
            }
        }
        h
    }
}

/// The Gaussian part of a model, with cached factorizations.
#[derive(Debug, Clone)]
pub struct GaussianBase {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
    precision: DMatrix<f64>,
    chol: DMatrix<f64>,
    log_det: f64,
}

impl GaussianBase {
    fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let n = mean.len();
        if n == 0 {
            return Err(Error::InvalidModel("dimension must be positive".into()));
        }
        if cov.nrows() != n || cov.ncols() != n {
            return Err(Error::InvalidModel(format!("covariance is {}x{}, mean has length {n}", cov.nrows(), cov.ncols())));
        }
        ensure_finite("mean", mean.as_slice()).map_err(|e| Error::InvalidModel(e.to_string()))?;
        linalg::check_symmetric(&cov, "covariance")?;
        let chol = linalg::cholesky_lower(&cov, "covariance")?;
        let log_det = linalg::log_det_from_cholesky(&chol);
        let precision = linalg::spd_inverse(&cov).ok_or_else(|| Error::InvalidModel("covariance is not invertible".into()))?;
        Ok(Self { mean, cov, precision, chol, log_det })
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn precision(&self) -> &DMatrix<f64> {
        &self.precision
    }

    /// Lower Cholesky factor `L` with `L Lᵀ = C`.
    pub fn cholesky(&self) -> &DMatrix<f64> {
        &self.chol
    }

    pub fn log_det(&self) -> f64 {
        self.log_det
    }
}

#[derive(Debug, Clone)]
pub enum MeasureKind {
    Gaussian,
    PerturbedGaussian(Perturbation),
}

/// A probability measure `μ` on ℝⁿ.
#[derive(Debug, Clone)]
pub struct MeasureModel {
    base: GaussianBase,
    kind: MeasureKind,
    /// `ln E_base[exp(−p)]`; zero for plain Gaussians.
    log_perturbation_mass: f64,
}

impl MeasureModel {
    pub fn gaussian(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        Ok(Self { base: GaussianBase::new(mean, cov)?, kind: MeasureKind::Gaussian, log_perturbation_mass: 0.0 })
    }

    pub fn standard_normal(dim: usize) -> Result<Self> {
        Self::gaussian(DVector::zeros(dim), DMatrix::identity(dim, dim))
    }

    pub fn perturbed(mean: DVector<f64>, cov: DMatrix<f64>, perturbation: Perturbation) -> Result<Self> {
        let base = GaussianBase::new(mean, cov)?;
        if perturbation.dim != base.mean.len() {
            return Err(Error::InvalidModel(format!(
                "perturbation dimension {} does not match measure dimension {}",
                perturbation.dim,
                base.mean.len()
            )));
        }
        let log_perturbation_mass = estimator::base_log_mass(&base, &perturbation)?;
        Ok(Self { base, kind: MeasureKind::PerturbedGaussian(perturbation), log_perturbation_mass })
    }

    pub fn dim(&self) -> usize {
        self.base.mean.len()
    }

    pub fn base(&self) -> &GaussianBase {
        &self.base
    }

    pub fn kind(&self) -> &MeasureKind {
        &self.kind
    }

    pub fn is_gaussian(&self) -> bool {
        matches!(self.kind, MeasureKind::Gaussian)
    }

    pub fn perturbation(&self) -> Option<&Perturbation> {
        match &self.kind {
            MeasureKind::Gaussian => None,
            MeasureKind::PerturbedGaussian(p) => Some(p),
        }
    }

    pub(crate) fn perturbation_at(&self, x: &[f64]) -> f64 {
        self.perturbation().map_or(0.0, |p| p.eval(x))
    }

    /// `ln ∫ exp(−p) dN(m, C)`; zero for plain Gaussians.
    pub fn log_perturbation_mass(&self) -> f64 {
        self.log_perturbation_mass
    }

    /// `−½(x−m)ᵀC⁻¹(x−m) − p(x)`.
    pub fn log_density_unnormalized(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::Domain(format!("point has length {}, expected {}", x.len(), self.dim())));
        }
        ensure_finite("x", x)?;
        Ok(self.log_density_unchecked(x))
    }

    pub(crate) fn log_density_unchecked(&self, x: &[f64]) -> f64 {
        let d = DVector::from_column_slice(x) - &self.base.mean;
        -0.5 * linalg::quad_form(&self.base.precision, &d) - self.perturbation_at(x)
    }

    /// Logarithm of the normalizing constant of [`Self::log_density_unnormalized`].
    pub fn log_normalizer(&self) -> f64 {
        let n = self.dim() as f64;
        0.5 * n * (2.0 * std::f64::consts::PI).ln() + 0.5 * self.base.log_det + self.log_perturbation_mass
    }

    /// Normalized log density.
    pub fn log_density(&self, x: &[f64]) -> Result<f64> {
        Ok(self.log_density_unnormalized(x)? - self.log_normalizer())
    }

    /// Hessian of `−ln density` at `x`.
    pub fn curvature(&self, x: &[f64]) -> DMatrix<f64> {
        match self.perturbation() {
            None => self.base.precision.clone(),
            Some(p) => &self.base.precision + p.hessian(x),
        }
    }

    /// Point `c` with `μ` invariant under `x ↦ 2c − x`, when one is known.
    pub fn symmetry_center(&self) -> Option<DVector<f64>> {
        match &self.kind {
            MeasureKind::Gaussian => Some(self.base.mean.clone()),
            // p is even in every coordinate, so only a centred base keeps the symmetry.
            MeasureKind::PerturbedGaussian(_) => {
                if self.base.mean.iter().all(|&m| m == 0.0) {
                    Some(self.base.mean.clone())
                } else {
                    None
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quartic_1d(lambda: f64) -> MeasureModel {
        MeasureModel::perturbed(DVector::from_element(1, 0.0), DMatrix::identity(1, 1), Perturbation::quartic(1, lambda).unwrap())
            .unwrap()
    }

    #[test]
    fn log_density_examples() {
        let g = MeasureModel::standard_normal(1).unwrap();
        assert_eq!(g.log_density_unnormalized(&[0.0]).unwrap(), 0.0);
        assert_eq!(g.log_density_unnormalized(&[2.0]).unwrap(), -2.0);
        let q = quartic_1d(1.0);
        assert_eq!(q.log_density_unnormalized(&[1.0]).unwrap(), -1.5);
    }

    #[test]
    fn non_finite_point_is_domain_error() {
        let g = MeasureModel::standard_normal(1).unwrap();
        assert!(matches!(g.log_density_unnormalized(&[f64::NAN]), Err(Error::Domain(_))));
    }

    #[test]
    fn rejects_odd_and_negative_terms() {
        let odd = Perturbation::new(1, vec![Monomial { coeff: 1.0, powers: vec![3] }]);
        assert!(odd.is_err());
        let neg = Perturbation::new(1, vec![Monomial { coeff: -0.1, powers: vec![4] }]);
        assert!(neg.is_err());
    }

    #[test]
    fn rejects_non_pd_covariance() {
        let cov = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        let err = MeasureModel::gaussian(DVector::zeros(2), cov).unwrap_err();
        assert!(err.to_string().contains("positive definite"));
    }

    #[test]
    fn perturbation_hessian_matches_finite_differences() {
        let p = Perturbation::new(
            2,
            vec![
                Monomial { coeff: 0.3, powers: vec![4, 0] },
                Monomial { coeff: 0.7, powers: vec![2, 2] },
                Monomial { coeff: 0.2, powers: vec![0, 6] },
            ],
        )
        .unwrap();
        let x = [0.4, -0.9];
        let h = p.hessian(&x);
        let eps = 1e-4;
        for i in 0..2 {
            for j in 0..2 {
                let f = |di: f64, dj: f64| {
                    let mut y = x;
                    y[i] += di;
                    y[j] += dj;
                    p.eval(&y)
                };
                let fd = (f(eps, eps) - f(eps, -eps) - f(-eps, eps) + f(-eps, -eps)) / (4.0 * eps * eps);
                assert!((fd - h[(i, j)]).abs() < 1e-5, "({i},{j}): {fd} vs {}", h[(i, j)]);
            }
        }
    }

    #[test]
    fn symmetry_center_only_for_centred_perturbations() {
        assert!(quartic_1d(0.1).symmetry_center().is_some());
        let shifted = MeasureModel::perturbed(
            DVector::from_element(1, 0.5),
            DMatrix::identity(1, 1),
            Perturbation::quartic(1, 0.1).unwrap(),
        )
        .unwrap();
        assert!(shifted.symmetry_center().is_none());
    }
}
