use std::borrow::Cow;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use super::gauss_hermite::GaussHermite;
use super::{GaussianBase, MeasureModel, Perturbation};
use crate::error::{Error, Result};
use crate::linalg;
use crate::rng;

pub const DEFAULT_NODES_PER_DIM: usize = 64;
pub const DEFAULT_DIM_SWITCH: usize = 3;

/// Tensor nodes whose weight is below `max_weight · e^{-PRUNE}` are dropped.
const PRUNE_LOG: f64 = 100.0;
/// Largest exponent accepted before declaring an overflow.
const MAX_EXPONENT: f64 = 700.0;
const MIN_ACCEPTANCE: f64 = 1e-4;
const ACCEPTANCE_PROBE: usize = 100_000;

#[derive(Debug, Clone, PartialEq)]
pub enum EstimatorMode {
    Quadrature { nodes_per_dim: usize },
    MonteCarlo { samples: usize, seed: u64, streams: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorConfig {
    pub mode: EstimatorMode,
    /// Largest dimension for which tensor quadrature is accepted.
    pub dim_switch: usize,
}

impl EstimatorConfig {
    pub fn quadrature(nodes_per_dim: usize) -> Self {
        Self { mode: EstimatorMode::Quadrature { nodes_per_dim }, dim_switch: DEFAULT_DIM_SWITCH }
    }

    pub fn monte_carlo(samples: usize, seed: u64, streams: usize) -> Self {
        Self { mode: EstimatorMode::MonteCarlo { samples, seed, streams }, dim_switch: DEFAULT_DIM_SWITCH }
    }

    pub fn with_dim_switch(mut self, dim_switch: usize) -> Self {
        self.dim_switch = dim_switch;
        self
    }

    pub fn is_monte_carlo(&self) -> bool {
        matches!(self.mode, EstimatorMode::MonteCarlo { .. })
    }

    fn validate(&self, dim: usize) -> Result<()> {
        match self.mode {
            EstimatorMode::Quadrature { nodes_per_dim } => {
                if nodes_per_dim == 0 {
                    return Err(Error::Config("quadrature needs at least one node per dimension".into()));
                }
                if dim > self.dim_switch {
                    return Err(Error::Config(format!(
                        "quadrature requested in dimension {dim}, above the limit {}; use monte_carlo",
                        self.dim_switch
                    )));
                }
            }
            EstimatorMode::MonteCarlo { samples, streams, .. } => {
                if samples == 0 || streams == 0 {
                    return Err(Error::Config("monte_carlo needs positive samples and streams".into()));
                }
            }
        }
        Ok(())
    }
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self::quadrature(DEFAULT_NODES_PER_DIM)
    }
}

/// A value with its Monte Carlo standard error (zero for quadrature).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
}

/// Log-weight `−½ xᵀAx + b·x + c`.
///
/// Regulator factors, linear tilts and their shifted variants are all of this
/// form, and quadrature absorbs them into the Gaussian reference exactly.
#[derive(Debug, Clone)]
pub struct LogQuadratic {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub c: f64,
}

impl LogQuadratic {
    pub fn zero(dim: usize) -> Self {
        Self { a: DMatrix::zeros(dim, dim), b: DVector::zeros(dim), c: 0.0 }
    }

    /// Adds the linear tilt `φ·x`.
    pub fn tilted(&self, phi: &DVector<f64>) -> Self {
        Self { a: self.a.clone(), b: &self.b + phi, c: self.c }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let v = DVector::from_column_slice(x);
        -0.5 * linalg::quad_form(&self.a, &v) + self.b.dot(&v) + self.c
    }
}

/// Nodes of a tensor Gauss-Hermite rule in standard-normal coordinates.
#[derive(Debug, Clone)]
struct TensorRule {
    points: Vec<f64>,
    log_weights: Vec<f64>,
}

impl TensorRule {
    fn new(dim: usize, nodes_per_dim: usize) -> Self {
        let rule = GaussHermite::new(nodes_per_dim);
        let log_w: Vec<f64> = rule.weights.iter().map(|w| w.ln()).collect();
        let max_log = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max) * dim as f64;
        let m = rule.len();
        let total = m.pow(dim as u32);
        let mut points = Vec::new();
        let mut log_weights = Vec::new();
        let mut idx = vec![0usize; dim];
        for _ in 0..total {
            let lw: f64 = idx.iter().map(|&i| log_w[i]).sum();
            if lw >= max_log - PRUNE_LOG {
                points.extend(idx.iter().map(|&i| rule.nodes[i]));
                log_weights.push(lw);
            }
            for i in idx.iter_mut() {
                *i += 1;
                if *i < m {
                    break;
                }
                *i = 0;
            }
        }
        Self { points, log_weights }
    }
}

#[derive(Debug)]
enum Backend {
    Quadrature(TensorRule),
    MonteCarlo(Vec<f64>),
}

/// Expectation engine for one `(model, config)` pair.
///
/// In Monte Carlo mode the base sample is drawn once at construction and
/// reused by every weighted integral, so tilted expectations share common
/// random numbers.
#[derive(Debug)]
pub struct Estimator {
    model: MeasureModel,
    config: EstimatorConfig,
    backend: Backend,
}

impl Estimator {
    pub fn new(model: MeasureModel, config: EstimatorConfig) -> Result<Self> {
        config.validate(model.dim())?;
        let backend = match config.mode {
            EstimatorMode::Quadrature { nodes_per_dim } => Backend::Quadrature(TensorRule::new(model.dim(), nodes_per_dim)),
            EstimatorMode::MonteCarlo { samples, seed, streams } => {
                Backend::MonteCarlo(sample_flat(&model, samples, seed, streams)?)
            }
        };
        Ok(Self { model, config, backend })
    }

    pub fn model(&self) -> &MeasureModel {
        &self.model
    }

    pub fn config(&self) -> &EstimatorConfig {
        &self.config
    }

    pub fn is_monte_carlo(&self) -> bool {
        self.config.is_monte_carlo()
    }

    /// The Monte Carlo base sample (row-major, `dim` values per point).
    pub fn samples(&self) -> Option<&[f64]> {
        match &self.backend {
            Backend::MonteCarlo(s) => Some(s),
            Backend::Quadrature(_) => None,
        }
    }

    /// `∫ f(x) exp[weight_log(x)] dμ(x)`.
    pub fn expect<F, W>(&self, f: F, weight_log: W) -> Result<Estimate>
    where
        F: Fn(&[f64]) -> f64,
        W: Fn(&[f64]) -> f64,
    {
        let dim = self.model.dim();
        let cloud = match &self.backend {
            Backend::Quadrature(rule) => {
                let base = self.model.base();
                let shift = base.mean().clone();
                let points = map_nodes(&rule.points, dim, &shift, base.cholesky());
                let offset = -self.model.log_perturbation_mass();
                let mut log_w = Vec::with_capacity(rule.log_weights.len());
                for (i, lw) in rule.log_weights.iter().enumerate() {
                    let x = &points[i * dim..(i + 1) * dim];
                    let extra = weight_log(x);
                    if extra.is_nan() || extra == f64::INFINITY {
                        return Err(Error::Evaluation { reason: format!("weight exponent is {extra}"), point: x.to_vec() });
                    }
                    log_w.push(lw + offset - self.model.perturbation_at(x) + extra);
                }
                WeightedCloud { dim, points: Cow::Owned(points), log_w, mc_samples: None }
            }
            Backend::MonteCarlo(samples) => {
                let n = samples.len() / dim;
                let ln_n = (n as f64).ln();
                let mut log_w = Vec::with_capacity(n);
                for x in samples.chunks_exact(dim) {
                    let extra = weight_log(x);
                    if extra.is_nan() || extra == f64::INFINITY {
                        return Err(Error::Evaluation { reason: format!("weight exponent is {extra}"), point: x.to_vec() });
                    }
                    log_w.push(extra - ln_n);
                }
                WeightedCloud { dim, points: Cow::Borrowed(samples), log_w, mc_samples: Some(n) }
            }
        };
        cloud.integral(f)
    }

    /// The measure `exp[−½xᵀAx + b·x + c] μ(dx)` as a weighted point cloud.
    ///
    /// Quadrature places the tensor rule on the Gaussian `N(P⁻¹h, P⁻¹)` with
    /// `P = C⁻¹ + A`, `h = C⁻¹m + b`, so Gaussian models are integrated exactly
    /// however strong the regulator or tilt.
    pub fn weighted(&self, weight: &LogQuadratic) -> Result<WeightedCloud<'_>> {
        let dim = self.model.dim();
        match &self.backend {
            Backend::Quadrature(rule) => {
                let base = self.model.base();
                let p = base.precision() + &weight.a;
                let p = 0.5 * (&p + p.transpose());
                let u = linalg::cholesky_lower(&p, "reference precision").map_err(|_| Error::Evaluation {
                    reason: "log-weight is not integrable against the Gaussian reference".into(),
                    point: vec![],
                })?;
                let h = base.precision() * base.mean() + &weight.b;
                let centre = u.transpose().solve_upper_triangular(&u.solve_lower_triangular(&h).unwrap()).unwrap();
                // x = centre + U^{-T} t has covariance P^{-1}.
                let ut_inv = u.transpose().solve_upper_triangular(&DMatrix::identity(dim, dim)).unwrap();
                let points = map_nodes(&rule.points, dim, &centre, &ut_inv);
                let log_det_p = linalg::log_det_from_cholesky(&u);
                let k = 0.5 * h.dot(&centre) - 0.5 * linalg::quad_form(base.precision(), base.mean()) + weight.c
                    - 0.5 * log_det_p
                    - 0.5 * base.log_det()
                    - self.model.log_perturbation_mass();
                let log_w = rule
                    .log_weights
                    .iter()
                    .enumerate()
                    .map(|(i, lw)| k + lw - self.model.perturbation_at(&points[i * dim..(i + 1) * dim]))
                    .collect();
                Ok(WeightedCloud { dim, points: Cow::Owned(points), log_w, mc_samples: None })
            }
            Backend::MonteCarlo(samples) => {
                let n = samples.len() / dim;
                let ln_n = (n as f64).ln();
                let log_w = samples.chunks_exact(dim).map(|x| weight.eval(x) - ln_n).collect();
                Ok(WeightedCloud { dim, points: Cow::Borrowed(samples), log_w, mc_samples: Some(n) })
            }
        }
    }
}

fn map_nodes(std_points: &[f64], dim: usize, shift: &DVector<f64>, factor: &DMatrix<f64>) -> Vec<f64> {
    let mut out = Vec::with_capacity(std_points.len());
    for t in std_points.chunks_exact(dim) {
        for i in 0..dim {
            let mut v = shift[i];
            for (j, tj) in t.iter().enumerate() {
                v += factor[(i, j)] * tj;
            }
            out.push(v);
        }
    }
    out
}

/// A weighted point set standing for a finite measure.
///
/// Quadrature clouds carry rule weights; Monte Carlo clouds carry importance
/// weights divided by the sample count. Either way `Σ exp(log_w)` estimates the
/// total mass.
#[derive(Debug, Clone)]
pub struct WeightedCloud<'a> {
    dim: usize,
    points: Cow<'a, [f64]>,
    log_w: Vec<f64>,
    mc_samples: Option<usize>,
}

impl WeightedCloud<'_> {
    pub fn len(&self) -> usize {
        self.log_w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_w.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn is_monte_carlo(&self) -> bool {
        self.mc_samples.is_some()
    }

    pub fn log_mass(&self) -> f64 {
        linalg::log_sum_exp(&self.log_w)
    }

    /// Standard error of [`Self::log_mass`] (delta method).
    pub fn log_mass_stderr(&self) -> f64 {
        let Some(n) = self.mc_samples else { return 0.0 };
        let p = self.normalized_weights();
        // Per-sample weights are n·p_i times the mass; relative sd of their mean.
        let nf = n as f64;
        let second: f64 = p.iter().map(|pi| (nf * pi) * (nf * pi)).sum::<f64>() / nf;
        ((second - 1.0).max(0.0) / nf).sqrt()
    }

    /// Weights normalized to sum to one.
    pub fn normalized_weights(&self) -> Vec<f64> {
        let lse = self.log_mass();
        self.log_w.iter().map(|lw| (lw - lse).exp()).collect()
    }

    /// Kish effective sample size of the normalized weights.
    pub fn effective_sample_size(&self) -> f64 {
        let p = self.normalized_weights();
        1.0 / p.iter().map(|x| x * x).sum::<f64>()
    }

    /// `∫ f dν` for the cloud's (unnormalized) measure `ν`.
    pub fn integral<F: Fn(&[f64]) -> f64>(&self, f: F) -> Result<Estimate> {
        let (max_i, max) =
            self.log_w
                .iter()
                .copied()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |acc, (i, v)| if v > acc.1 { (i, v) } else { acc });
        if max > MAX_EXPONENT {
            return Err(Error::Evaluation {
                reason: format!("weight exponent {max:e} overflows"),
                point: self.point(max_i).to_vec(),
            });
        }
        if max == f64::NEG_INFINITY {
            return Ok(Estimate { value: 0.0, stderr: 0.0 });
        }
        let scale = max.exp();
        let terms: Vec<f64> = self.log_w.iter().enumerate().map(|(i, lw)| f(self.point(i)) * (lw - max).exp()).collect();
        let sum: f64 = terms.iter().sum();
        let value = scale * sum;
        let stderr = match self.mc_samples {
            None => 0.0,
            Some(n) => {
                // terms_i · n is the per-sample contribution in units of `scale`.
                let nf = n as f64;
                let mean = sum;
                let var = terms.iter().map(|t| (t * nf - mean).powi(2)).sum::<f64>() / (nf - 1.0).max(1.0);
                scale * (var / nf).sqrt()
            }
        };
        if !value.is_finite() {
            return Err(Error::Evaluation { reason: "integral is not finite".into(), point: self.point(max_i).to_vec() });
        }
        Ok(Estimate { value, stderr })
    }

    /// `∫ f dν / ν(ℝⁿ)`; the standard error uses the self-normalized delta method.
    pub fn expect_normalized<F: Fn(&[f64]) -> f64>(&self, f: F) -> Estimate {
        let p = self.normalized_weights();
        let vals: Vec<f64> = (0..self.len()).map(|i| f(self.point(i))).collect();
        let value: f64 = p.iter().zip(&vals).map(|(pi, v)| pi * v).sum();
        let stderr = if self.mc_samples.is_some() {
            p.iter().zip(&vals).map(|(pi, v)| (pi * (v - value)).powi(2)).sum::<f64>().sqrt()
        } else {
            0.0
        };
        Estimate { value, stderr }
    }

    /// Mean of the normalized measure.
    pub fn mean(&self) -> DVector<f64> {
        let p = self.normalized_weights();
        let mut m = DVector::zeros(self.dim);
        for (i, pi) in p.iter().enumerate() {
            for (d, x) in self.point(i).iter().enumerate() {
                m[d] += pi * x;
            }
        }
        m
    }

    /// Componentwise standard error of [`Self::mean`] (zero for quadrature).
    pub fn mean_stderr(&self) -> DVector<f64> {
        if self.mc_samples.is_none() {
            return DVector::zeros(self.dim);
        }
        let p = self.normalized_weights();
        let m = self.mean();
        let mut v = DVector::zeros(self.dim);
        for (i, pi) in p.iter().enumerate() {
            for (d, x) in self.point(i).iter().enumerate() {
                v[d] += (pi * (x - m[d])).powi(2);
            }
        }
        v.map(f64::sqrt)
    }

    /// Mean and covariance of the normalized measure (two-pass).
    pub fn mean_and_covariance(&self) -> (DVector<f64>, DMatrix<f64>) {
        let p = self.normalized_weights();
        let m = self.mean();
        let mut c = DMatrix::zeros(self.dim, self.dim);
        let mut d = vec![0.0; self.dim];
        for (i, pi) in p.iter().enumerate() {
            for (k, x) in self.point(i).iter().enumerate() {
                d[k] = x - m[k];
            }
            for a in 0..self.dim {
                for b in a..self.dim {
                    c[(a, b)] += pi * d[a] * d[b];
                }
            }
        }
        for a in 0..self.dim {
            for b in 0..a {
                c[(a, b)] = c[(b, a)];
            }
        }
        (m, c)
    }
}

/// `ln E_{N(m,C)}[exp(−p)]`, by tensor quadrature in low dimension.
pub(super) fn base_log_mass(base: &GaussianBase, p: &Perturbation) -> Result<f64> {
    let dim = base.mean().len();
    let values: Vec<f64> = if dim <= DEFAULT_DIM_SWITCH {
        let nodes = if dim == 1 { 256 } else { 96 };
        let rule = TensorRule::new(dim, nodes);
        let points = map_nodes(&rule.points, dim, base.mean(), base.cholesky());
        rule.log_weights.iter().enumerate().map(|(i, lw)| lw - p.eval(&points[i * dim..(i + 1) * dim])).collect()
    } else {
        const N: usize = 1 << 18;
        let pts = gaussian_flat(base, N, 0x005e_ed0f_ba5e, 16);
        pts.chunks_exact(dim).map(|x| -p.eval(x) - (N as f64).ln()).collect()
    };
    let v = linalg::log_sum_exp(&values);
    if !v.is_finite() {
        return Err(Error::InvalidModel("perturbation leaves no mass under the Gaussian base".into()));
    }
    Ok(v)
}

fn gaussian_flat(base: &GaussianBase, count: usize, seed: u64, streams: usize) -> Vec<f64> {
    let dim = base.mean().len();
    rng::par_streams(seed, streams, count, |rng, n, _| {
        let mut out = Vec::with_capacity(n * dim);
        let mut z = vec![0.0; dim];
        for _ in 0..n {
            for zi in z.iter_mut() {
                *zi = rng.sample(StandardNormal);
            }
            push_affine(&mut out, base, &z);
        }
        out
    })
}

fn push_affine(out: &mut Vec<f64>, base: &GaussianBase, z: &[f64]) {
    let l = base.cholesky();
    for i in 0..z.len() {
        let mut v = base.mean()[i];
        for (j, zj) in z.iter().enumerate().take(i + 1) {
            v += l[(i, j)] * zj;
        }
        out.push(v);
    }
}

pub(crate) fn sample_flat(model: &MeasureModel, count: usize, seed: u64, streams: usize) -> Result<Vec<f64>> {
    let base = model.base();
    let Some(p) = model.perturbation() else {
        return Ok(gaussian_flat(base, count, seed, streams));
    };
    let dim = model.dim();
    rng::try_par_streams(seed, streams, count, |rng, n, s| {
        let mut out = Vec::with_capacity(n * dim);
        let mut z = vec![0.0; dim];
        let mut x = Vec::with_capacity(dim);
        let mut attempts = 0usize;
        let mut accepted = 0usize;
        while accepted < n {
            for zi in z.iter_mut() {
                *zi = rng.sample(StandardNormal);
            }
            x.clear();
            push_affine(&mut x, base, &z);
            attempts += 1;
            // Envelope constant 1 since p ≥ 0.
            let u: f64 = rng.random();
            if u.ln() < -p.eval(&x) {
                out.extend_from_slice(&x);
                accepted += 1;
            }
            if attempts >= ACCEPTANCE_PROBE && (accepted as f64) < MIN_ACCEPTANCE * attempts as f64 {
                return Err(Error::Sampler(format!(
                    "rejection acceptance rate {:.2e} below {MIN_ACCEPTANCE:e} on stream {s}; \
                     reparameterize the base Gaussian closer to the perturbed density",
                    accepted as f64 / attempts as f64
                )));
            }
        }
        Ok(out)
    })
}

/// `count` i.i.d. draws from `μ`, reproducible for a given Monte Carlo seed and stream count.
pub fn sample(model: &MeasureModel, cfg: &EstimatorConfig, count: usize) -> Result<Vec<DVector<f64>>> {
    let EstimatorMode::MonteCarlo { seed, streams, .. } = cfg.mode else {
        return Err(Error::Config("sampling requires monte_carlo mode".into()));
    };
    if count == 0 || streams == 0 {
        return Err(Error::Config("count and streams must be positive".into()));
    }
    let flat = sample_flat(model, count, seed, streams)?;
    Ok(flat.chunks_exact(model.dim()).map(DVector::from_column_slice).collect())
}

/// One-shot `∫ f exp[weight_log] dμ`; builds a fresh [`Estimator`].
pub fn expect<F, W>(model: &MeasureModel, cfg: &EstimatorConfig, f: F, weight_log: W) -> Result<Estimate>
where
    F: Fn(&[f64]) -> f64,
    W: Fn(&[f64]) -> f64,
{
    Estimator::new(model.clone(), cfg.clone())?.expect(f, weight_log)
}
