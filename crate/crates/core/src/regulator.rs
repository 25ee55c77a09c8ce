//! Regulator families `k ↦ R_k = r(k)² R0` anchored at a base point `w`.
//!
//! `Q_k(x) = (x−w)ᵀR_k(x−w)` suppresses fluctuations away from `w`; its
//! `k`-derivative `Q'_k` is realized by an eigenframe `{v_a}` of `dR_k/dk`
//! with `Σ_a (v_a·u)² = uᵀ(dR_k/dk)u`. For this separable shape the scaled
//! forms `J_k = R_k / r(k)²` equal `R0` for every `k > 0`.

use nalgebra::{DMatrix, DVector};

use crate::error::{ensure_finite, Error, Result};
use crate::linalg;
use crate::measure::{Estimator, LogQuadratic};
use crate::onsager::BallSampler;

/// Scale schedule `r(k)` with `r(0) = 0`, strictly increasing, unbounded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Schedule {
    /// `r(k) = k`
    #[default]
    Linear,
    /// `r(k) = k²`
    Quadratic,
    /// `r(k) = e^k − 1`
    Expm1,
}

impl Schedule {
    pub fn r(self, k: f64) -> f64 {
        match self {
            Schedule::Linear => k,
            Schedule::Quadratic => k * k,
            Schedule::Expm1 => k.exp_m1(),
        }
    }

    pub fn r_dot(self, k: f64) -> f64 {
        match self {
            Schedule::Linear => 1.0,
            Schedule::Quadratic => 2.0 * k,
            Schedule::Expm1 => k.exp(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Schedule::Linear => "linear",
            Schedule::Quadratic => "quadratic",
            Schedule::Expm1 => "expm1",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "linear" => Some(Schedule::Linear),
            "quadratic" => Some(Schedule::Quadratic),
            "expm1" => Some(Schedule::Expm1),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RegulatorFamily {
    r0: DMatrix<f64>,
    schedule: Schedule,
    w: DVector<f64>,
}

impl RegulatorFamily {
    pub fn new(r0: DMatrix<f64>, schedule: Schedule, w: DVector<f64>) -> Result<Self> {
        let n = w.len();
        if r0.nrows() != n || r0.ncols() != n {
            return Err(Error::InvalidModel(format!("R0 is {}x{} but w has length {n}", r0.nrows(), r0.ncols())));
        }
        ensure_finite("w", w.as_slice()).map_err(|e| Error::InvalidModel(e.to_string()))?;
        ensure_finite("R0", r0.as_slice()).map_err(|e| Error::InvalidModel(e.to_string()))?;
        linalg::check_symmetric(&r0, "R0")?;
        if !linalg::is_psd(&r0) {
            return Err(Error::InvalidModel(format!(
                "R0 is not positive semidefinite (smallest eigenvalue {:e})",
                linalg::min_eigenvalue(&r0)
            )));
        }
        let r0 = 0.5 * (&r0 + r0.transpose());
        Ok(Self { r0, schedule, w })
    }

    /// `R0 = I`, linear schedule.
    pub fn identity(dim: usize, w: DVector<f64>) -> Result<Self> {
        Self::new(DMatrix::identity(dim, dim), Schedule::Linear, w)
    }

    pub fn dim(&self) -> usize {
        self.w.len()
    }

    pub fn r0(&self) -> &DMatrix<f64> {
        &self.r0
    }

    pub fn w(&self) -> &DVector<f64> {
        &self.w
    }

    pub fn schedule(&self) -> Schedule {
        self.schedule
    }

    pub fn scale(&self, k: f64) -> f64 {
        self.schedule.r(k)
    }

    /// `R_k`.
    pub fn matrix(&self, k: f64) -> DMatrix<f64> {
        let r = self.schedule.r(k);
        &self.r0 * (r * r)
    }

    /// `dR_k/dk = 2 r(k) ṙ(k) R0`.
    pub fn derivative_matrix(&self, k: f64) -> DMatrix<f64> {
        &self.r0 * (2.0 * self.schedule.r(k) * self.schedule.r_dot(k))
    }

    /// `J_k = R_k / r(k)²` for `k > 0`; identical to `R0` up to rounding.
    pub fn scaled_metric(&self, k: f64) -> Result<DMatrix<f64>> {
        let r = self.schedule.r(k);
        if !(r > 0.0) {
            return Err(Error::Precondition(format!("J_k needs r(k) > 0, got r({k}) = {r}")));
        }
        Ok(self.matrix(k) / (r * r))
    }

    /// The limit metric `J = lim J_k`.
    pub fn limit_metric(&self) -> &DMatrix<f64> {
        &self.r0
    }

    fn check_args(&self, k: f64, x: &[f64]) -> Result<DVector<f64>> {
        if !(k >= 0.0) || !k.is_finite() {
            return Err(Error::Precondition(format!("flow parameter must be finite and nonnegative, got {k}")));
        }
        if x.len() != self.dim() {
            return Err(Error::Domain(format!("point has length {}, expected {}", x.len(), self.dim())));
        }
        ensure_finite("x", x)?;
        Ok(DVector::from_column_slice(x) - &self.w)
    }

    /// `Q_k(x) = (x−w)ᵀR_k(x−w)`.
    pub fn q(&self, k: f64, x: &[f64]) -> Result<f64> {
        let d = self.check_args(k, x)?;
        let r = self.schedule.r(k);
        Ok((r * r * linalg::quad_form(&self.r0, &d)).max(0.0))
    }

    /// `Q'_k(x) = (x−w)ᵀ(dR_k/dk)(x−w)`.
    pub fn q_prime(&self, k: f64, x: &[f64]) -> Result<f64> {
        let d = self.check_args(k, x)?;
        let s = 2.0 * self.schedule.r(k) * self.schedule.r_dot(k);
        Ok((s * linalg::quad_form(&self.r0, &d)).max(0.0))
    }

    /// Log-weight `−½ Q_k`.
    pub fn weight(&self, k: f64) -> LogQuadratic {
        quadratic_around(&self.matrix(k), &self.w, 1.0)
    }

    /// Eigenframe of `dR_k/dk`: vectors `√λ_a e_a` for each positive eigenvalue.
    pub fn omega_frame(&self, k: f64) -> OmegaFrame {
        let d = self.derivative_matrix(k);
        let (values, vectors) = linalg::sorted_eigen(&d);
        let top = values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        assert!(values.iter().all(|&l| l >= -1e-12 * top.max(1.0)), "dR_k/dk must be PSD for a valid schedule");
        let vectors = values
            .iter()
            .enumerate()
            .filter(|(_, &l)| l > 1e-14 * top && l > 0.0)
            .map(|(i, &l)| vectors.column(i) * l.sqrt())
            .collect();
        OmegaFrame { k, vectors }
    }

    /// Verifies `∫ exp[Q'_k/(2R) − Q_k/2] dμ < ∞` for some `R ∈ {1, 2, 4, …}`, returning that `R`.
    ///
    /// The Gaussian part of the integrand must have positive definite precision
    /// `C⁻¹ + R_k − (dR_k/dk)/R`; the nonnegative perturbation can only help.
    pub fn check_integrability(&self, est: &Estimator, k: f64) -> Result<f64> {
        let rk = self.matrix(k);
        let dk = self.derivative_matrix(k);
        let precision = est.model().base().precision();
        let mut last = String::new();
        for e in 0..=40 {
            let big_r = 2f64.powi(e);
            let a = &rk - &dk / big_r;
            if linalg::cholesky_lower(&(precision + &a), "integrand precision").is_err() {
                last = format!("Gaussian part not integrable for R = {big_r}");
                continue;
            }
            let lw = quadratic_around(&a, &self.w, 1.0);
            match est.weighted(&lw) {
                Ok(cloud) if cloud.log_mass().is_finite() => return Ok(big_r),
                Ok(_) => last = format!("integral not finite for R = {big_r}"),
                Err(e) => last = e.to_string(),
            }
        }
        Err(Error::Integrability(format!("no R in 1..2^40 makes exp[Q'_{k}/(2R) - Q_{k}/2] integrable ({last})")))
    }
}

/// Log-weight `−(s/2)(x−w)ᵀM(x−w)` in [`LogQuadratic`] form.
pub(crate) fn quadratic_around(m: &DMatrix<f64>, w: &DVector<f64>, s: f64) -> LogQuadratic {
    let mw = m * w;
    LogQuadratic { a: m * s, b: &mw * s, c: -0.5 * s * w.dot(&mw) }
}

/// Real frame `{v_a}` with `Σ_a v_a v_aᵀ = dR_k/dk`.
#[derive(Debug, Clone)]
pub struct OmegaFrame {
    pub k: f64,
    pub vectors: Vec<DVector<f64>>,
}

impl OmegaFrame {
    /// `Σ_a v_a v_aᵀ`.
    pub fn reconstruct(&self, dim: usize) -> DMatrix<f64> {
        self.vectors.iter().fold(DMatrix::zeros(dim, dim), |acc, v| acc + v * v.transpose())
    }

    /// `Σ_a (v_a·u)²`.
    pub fn sum_of_squares(&self, u: &DVector<f64>) -> f64 {
        self.vectors.iter().map(|v| v.dot(u).powi(2)).sum()
    }

    /// `Σ_a v_aᵀ S v_a`, the frame sum of the quadratic form `S`.
    pub fn trace_against(&self, s: &DMatrix<f64>) -> f64 {
        self.vectors.iter().map(|v| linalg::quad_form(s, v)).sum()
    }
}

/// Ball probabilities along an increasing metric sequence and at its limit.
#[derive(Debug, Clone)]
pub struct BallLimitReport {
    /// `(probability, stderr)` for each `J_n`.
    pub sequence: Vec<(f64, f64)>,
    /// `(probability, stderr)` for the limit metric.
    pub limit: (f64, f64),
    /// `|last − limit|` within four standard errors.
    pub converged: bool,
}

/// Measures of `{x : (x−h)ᵀJ_n(x−h) ≤ ε²}` along `J_1 ≤ J_2 ≤ … ≤ J`.
///
/// All balls are counted on one shared sample, so the sequence is exactly
/// nonincreasing whenever the metrics are increasing.
pub fn ball_measure_limit_check(
    sampler: &BallSampler,
    metrics: &[DMatrix<f64>],
    limit: &DMatrix<f64>,
    center: &DVector<f64>,
    eps: f64,
) -> Result<BallLimitReport> {
    if metrics.is_empty() {
        return Err(Error::Precondition("metric sequence is empty".into()));
    }
    for (i, m) in metrics.iter().enumerate() {
        linalg::check_symmetric(m, &format!("J_{}", i + 1)).map_err(|e| Error::Precondition(e.to_string()))?;
        if !linalg::is_psd(m) {
            return Err(Error::Precondition(format!("J_{} is not PSD", i + 1)));
        }
        let next = metrics.get(i + 1).unwrap_or(limit);
        if !linalg::is_psd(&(next - m)) {
            return Err(Error::Precondition(format!("metric sequence is not increasing at index {}", i + 1)));
        }
    }
    let sequence: Vec<(f64, f64)> =
        metrics.iter().map(|m| sampler.plain_ball(m, center, eps).map(|b| (b.probability, b.stderr))).collect::<Result<_>>()?;
    for (i, pair) in sequence.windows(2).enumerate() {
        if pair[1].0 > pair[0].0 {
            return Err(Error::Consistency(format!(
                "ball probability increased from {} to {} at index {}",
                pair[0].0,
                pair[1].0,
                i + 2
            )));
        }
    }
    let lim = sampler.plain_ball(limit, center, eps)?;
    let last = sequence.last().unwrap();
    let tol = 4.0 * lim.stderr.max(last.1).max(1.0 / sampler.len() as f64);
    Ok(BallLimitReport { converged: (last.0 - lim.probability).abs() <= tol, sequence, limit: (lim.probability, lim.stderr) })
}
