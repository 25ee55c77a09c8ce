#![allow(dead_code)]

use frg_flow::measure::{EstimatorConfig, MeasureModel, Perturbation};
use frg_flow::{Problem, RegulatorFamily, Schedule};
use nalgebra::{DMatrix, DVector};

/// Closed forms for `μ = N(m, C)` regulated by `R_k` around `w`.
pub struct GaussOracle {
    pub m: DVector<f64>,
    pub c: DMatrix<f64>,
    pub w: DVector<f64>,
    pub r0: DMatrix<f64>,
    pub schedule: Schedule,
}

impl GaussOracle {
    pub fn new(m: DVector<f64>, c: DMatrix<f64>, w: DVector<f64>, r0: DMatrix<f64>) -> Self {
        Self { m, c, w, r0, schedule: Schedule::Linear }
    }

    pub fn std_1d(w: f64) -> Self {
        Self::new(DVector::zeros(1), DMatrix::identity(1, 1), DVector::from_element(1, w), DMatrix::identity(1, 1))
    }

    pub fn problem(&self, nodes: usize) -> Problem {
        self.problem_with(EstimatorConfig::quadrature(nodes))
    }

    pub fn problem_with(&self, cfg: EstimatorConfig) -> Problem {
        Problem::new(
            MeasureModel::gaussian(self.m.clone(), self.c.clone()).unwrap(),
            RegulatorFamily::new(self.r0.clone(), self.schedule, self.w.clone()).unwrap(),
            cfg,
        )
        .unwrap()
    }

    fn r(&self, k: f64) -> f64 {
        match self.schedule {
            Schedule::Linear => k,
            Schedule::Quadratic => k * k,
            Schedule::Expm1 => k.exp() - 1.0,
        }
    }

    pub fn rk(&self, k: f64) -> DMatrix<f64> {
        &self.r0 * self.r(k).powi(2)
    }

    fn cinv(&self) -> DMatrix<f64> {
        self.c.clone().try_inverse().unwrap()
    }

    pub fn p(&self, k: f64) -> DMatrix<f64> {
        self.cinv() + self.rk(k)
    }

    pub fn m_k(&self, k: f64) -> DVector<f64> {
        let b = self.cinv() * &self.m + self.rk(k) * &self.w;
        self.p(k).try_inverse().unwrap() * b
    }

    pub fn vstar(&self, k: f64, y: &DVector<f64>) -> f64 {
        let d = y - self.m_k(k);
        0.5 * d.dot(&(self.p(k) * &d))
    }

    pub fn phi(&self, k: f64, y: &DVector<f64>) -> DVector<f64> {
        self.p(k) * (y - self.m_k(k))
    }

    pub fn gamma(&self, k: f64, y: &DVector<f64>) -> f64 {
        let d = y - &self.w;
        self.vstar(k, y) - 0.5 * d.dot(&(self.rk(k) * &d))
    }

    /// `N_k = exp(−½(w−m)ᵀ(C + R_k⁻¹)⁻¹(w−m)) / √det(I + C R_k)`, written via `P`.
    pub fn normalizer(&self, k: f64) -> f64 {
        let rk = self.rk(k);
        let cinv = self.cinv();
        let p = self.p(k);
        let b = &cinv * &self.m + &rk * &self.w;
        let expo = 0.5 * b.dot(&(p.clone().try_inverse().unwrap() * &b))
            - 0.5 * self.m.dot(&(&cinv * &self.m))
            - 0.5 * self.w.dot(&(&rk * &self.w));
        expo.exp() / (p.determinant() * self.c.determinant()).sqrt()
    }

    pub fn cov_k(&self, k: f64) -> DMatrix<f64> {
        self.p(k).try_inverse().unwrap()
    }
}

pub fn quartic_1d(lambda: f64, w: f64) -> Problem {
    quartic_1d_with(lambda, w, EstimatorConfig::quadrature(128))
}

pub fn quartic_1d_with(lambda: f64, w: f64, cfg: EstimatorConfig) -> Problem {
    Problem::new(
        MeasureModel::perturbed(DVector::zeros(1), DMatrix::identity(1, 1), Perturbation::quartic(1, lambda).unwrap()).unwrap(),
        RegulatorFamily::identity(1, DVector::from_element(1, w)).unwrap(),
        cfg,
    )
    .unwrap()
}

pub fn v1(x: f64) -> DVector<f64> {
    DVector::from_element(1, x)
}

/// `(ln Z(φ), x-grid)` for `Z(φ) = ∫ exp(φx − x²/2 − λx⁴ − ½r²(x−w)²) dx` by the trapezoid rule.
pub struct GridCgf {
    xs: Vec<f64>,
    log_base: Vec<f64>,
    h: f64,
}

impl GridCgf {
    pub fn new(lambda: f64, r2: f64, w: f64) -> Self {
        let n = 20_000;
        let (lo, hi) = (-10.0, 10.0);
        let h = (hi - lo) / n as f64;
        let xs: Vec<f64> = (0..=n).map(|i| lo + i as f64 * h).collect();
        let log_base = xs.iter().map(|x| -0.5 * x * x - lambda * x.powi(4) - 0.5 * r2 * (x - w).powi(2)).collect();
        Self { xs, log_base, h }
    }

    pub fn log_z(&self, phi: f64) -> f64 {
        let vals: Vec<f64> = self.xs.iter().zip(&self.log_base).map(|(x, b)| b + phi * x).collect();
        let max = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let n = vals.len();
        let s: f64 = vals.iter().enumerate().map(|(i, v)| if i == 0 || i == n - 1 { 0.5 } else { 1.0 } * (v - max).exp()).sum();
        max + (s * self.h).ln()
    }
}

/// Random SPD matrix from a seeded generator.
pub fn random_spd(n: usize, seed: u64, shift: f64) -> DMatrix<f64> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    &a * a.transpose() + DMatrix::identity(n, n) * shift
}

pub fn random_vec(n: usize, seed: u64, scale: f64) -> DVector<f64> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    DVector::from_fn(n, |_, _| rng.random_range(-scale..scale))
}
