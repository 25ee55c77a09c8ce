//! Small-ball probabilities, Onsager-Machlup estimates, the radial measures
//! `ν_k`, the admissibility ratio and the `k → ∞` boundary check.
//!
//! All ball counts for one `(model, seed)` use a single shared sample, so
//! comparisons across radii, centers and metrics are coupled: a larger ball
//! can never receive fewer hits.

use std::f64::consts::PI;
use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::conjugate::{mean_match, Problem, SolveOptions};
use crate::error::{ensure_finite, Error, Result};
use crate::linalg;
use crate::measure::{sample_flat, Estimate, EstimatorConfig, EstimatorMode, MeasureModel};
use crate::regulator::quadratic_around;
use crate::rng;

/// Plain Monte Carlo is trusted once a ball holds this many sample points.
pub const PLAIN_HIT_THRESHOLD: u64 = 1000;
/// Hits required at each radius used in an Onsager-Machlup fit.
pub const MIN_FIT_HITS: u64 = 100;
pub const DEFAULT_FIT_WINDOW: usize = 4;
/// Offset separating the importance-sampling substreams from the base sample.
const IS_STREAM_OFFSET: u64 = 1 << 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BallMethod {
    Plain,
    Importance,
}

#[derive(Debug, Clone)]
pub struct SmallBallEstimate {
    pub center: DVector<f64>,
    pub radius: f64,
    pub metric: DMatrix<f64>,
    pub probability: f64,
    pub stderr: f64,
    pub samples: usize,
    /// Sample points that landed in the ball.
    pub hits: u64,
    pub method: BallMethod,
    /// Set when no sample hit the ball; `stderr` is then the bound `3/samples`.
    pub low_confidence: bool,
}

/// A shared sample from `μ`, with antithetic pairs `(x, 2c − x)` when `μ` is
/// symmetric about `c`.
#[derive(Debug)]
pub struct BallSampler {
    model: MeasureModel,
    points: Vec<f64>,
    antithetic: bool,
    seed: u64,
    streams: usize,
    proposal_normals: OnceLock<Vec<f64>>,
}

impl BallSampler {
    pub fn new(model: MeasureModel, cfg: &EstimatorConfig) -> Result<Self> {
        let EstimatorMode::MonteCarlo { samples, seed, streams } = cfg.mode else {
            return Err(Error::Config("ball probabilities require monte_carlo mode".into()));
        };
        if samples < 2 || streams == 0 {
            return Err(Error::Config("ball sampler needs at least 2 samples and one stream".into()));
        }
        let dim = model.dim();
        let (points, antithetic) = match model.symmetry_center() {
            Some(c) => {
                let half = sample_flat(&model, samples.div_ceil(2), seed, streams)?;
                let mut pts = Vec::with_capacity(half.len() * 2);
                for x in half.chunks_exact(dim) {
                    pts.extend_from_slice(x);
                    pts.extend(x.iter().zip(c.iter()).map(|(xi, ci)| 2.0 * ci - xi));
                }
                (pts, true)
            }
            None => (sample_flat(&model, samples, seed, streams)?, false),
        };
        Ok(Self { model, points, antithetic, seed, streams, proposal_normals: OnceLock::new() })
    }

    pub fn model(&self) -> &MeasureModel {
        &self.model
    }

    pub fn dim(&self) -> usize {
        self.model.dim()
    }

    pub fn len(&self) -> usize {
        self.points.len() / self.dim()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn is_antithetic(&self) -> bool {
        self.antithetic
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> {
        self.points.chunks_exact(self.dim())
    }

    fn group(&self) -> usize {
        if self.antithetic {
            2
        } else {
            1
        }
    }

    /// Mean of `f` over the sample with a standard error that respects pairing.
    pub fn mean_of<F: Fn(&[f64]) -> f64 + Sync>(&self, f: F) -> Estimate {
        let dim = self.dim();
        let g = self.group();
        let (sum, sum_sq, groups) = self
            .points
            .par_chunks(dim * g * 4096)
            .map(|block| {
                let mut acc = (0.0, 0.0, 0usize);
                for grp in block.chunks_exact(dim * g) {
                    let v: f64 = grp.chunks_exact(dim).map(&f).sum::<f64>() / g as f64;
                    acc.0 += v;
                    acc.1 += v * v;
                    acc.2 += 1;
                }
                acc
            })
            .collect::<Vec<_>>()
            .into_iter()
            .fold((0.0, 0.0, 0usize), |a, b| (a.0 + b.0, a.1 + b.1, a.2 + b.2));
        let m = groups as f64;
        let value = sum / m;
        let var = ((sum_sq - m * value * value) / (m - 1.0).max(1.0)).max(0.0);
        Estimate { value, stderr: (var / m).sqrt() }
    }

    fn check_ball(&self, metric: &DMatrix<f64>, center: &DVector<f64>, radius: f64) -> Result<()> {
        let n = self.dim();
        if metric.nrows() != n || metric.ncols() != n || center.len() != n {
            return Err(Error::Precondition(format!("ball metric and center must have dimension {n}")));
        }
        ensure_finite("center", center.as_slice())?;
        if !(radius > 0.0) {
            return Err(Error::Precondition(format!("radius must be positive, got {radius}")));
        }
        Ok(())
    }

    /// `(hits, Σ_pairs hits²)` for the ball.
    fn count(&self, metric: &DMatrix<f64>, center: &DVector<f64>, radius: f64) -> (u64, u64) {
        let dim = self.dim();
        let g = self.group();
        let r2 = radius * radius;
        let inside = |x: &[f64]| in_ball(metric, center, r2, x);
        self.points
            .par_chunks(dim * g * 4096)
            .map(|block| {
                let mut acc = (0u64, 0u64);
                for grp in block.chunks_exact(dim * g) {
                    let h = grp.chunks_exact(dim).filter(|x| inside(x)).count() as u64;
                    acc.0 += h;
                    acc.1 += h * h;
                }
                acc
            })
            .reduce(|| (0, 0), |a, b| (a.0 + b.0, a.1 + b.1))
    }

    /// Fraction of the shared sample inside `{x : (x−c)ᵀJ(x−c) ≤ radius²}`.
    pub fn plain_ball(&self, metric: &DMatrix<f64>, center: &DVector<f64>, radius: f64) -> Result<SmallBallEstimate> {
        self.check_ball(metric, center, radius)?;
        let (hits, sq) = self.count(metric, center, radius);
        let n = self.len();
        let nf = n as f64;
        let p = hits as f64 / nf;
        let stderr = if hits == 0 {
            3.0 / nf
        } else if self.antithetic {
            let m = nf / 2.0;
            let var = ((sq as f64 / 4.0 - m * p * p) / (m - 1.0).max(1.0)).max(0.0);
            (var / m).sqrt()
        } else {
            (p * (1.0 - p) / nf).sqrt()
        };
        Ok(SmallBallEstimate {
            center: center.clone(),
            radius,
            metric: metric.clone(),
            probability: p,
            stderr,
            samples: n,
            hits,
            method: BallMethod::Plain,
            low_confidence: hits == 0,
        })
    }

    fn normals(&self) -> &[f64] {
        self.proposal_normals.get_or_init(|| {
            let dim = self.dim();
            let seed = self.seed;
            rng::par_streams(seed, self.streams, self.len(), |_, n, s| {
                let mut r = rng::stream_rng(seed, IS_STREAM_OFFSET + s as u64);
                (0..n * dim).map(|_| r.sample::<f64, _>(StandardNormal)).collect()
            })
        })
    }

    /// Importance sampling from `N(c, (H(c) + J/s²)⁻¹)` with `H` the curvature
    /// of `−ln μ` at `c`; the weights use the normalized density of `μ`.
    pub fn importance_ball(&self, metric: &DMatrix<f64>, center: &DVector<f64>, radius: f64) -> Result<SmallBallEstimate> {
        self.check_ball(metric, center, radius)?;
        let dim = self.dim();
        let scaled = metric / (radius * radius);
        let local = self.model.curvature(center.as_slice()) + &scaled;
        let precision = if linalg::cholesky_lower(&local, "proposal precision").is_ok() {
            local
        } else {
            self.model.base().precision() + &scaled
        };
        let cov = linalg::spd_inverse(&precision).ok_or_else(|| Error::Evaluation {
            reason: "proposal precision is singular".into(),
            point: center.as_slice().to_vec(),
        })?;
        let l = linalg::cholesky_lower(&cov, "proposal covariance")?;
        let log_q0 = -0.5 * dim as f64 * (2.0 * PI).ln() - 0.5 * linalg::log_det_from_cholesky(&l);
        let log_norm = self.model.log_normalizer();
        let r2 = radius * radius;
        let model = &self.model;
        let (sum, sum_sq, hits) = self
            .normals()
            .par_chunks(dim * 4096)
            .map(|block| {
                let mut acc = (0.0, 0.0, 0u64);
                let mut x = vec![0.0; dim];
                for z in block.chunks_exact(dim) {
                    for i in 0..dim {
                        x[i] = center[i] + (0..=i).map(|j| l[(i, j)] * z[j]).sum::<f64>();
                    }
                    if !in_ball(metric, center, r2, &x) {
                        continue;
                    }
                    let log_q = log_q0 - 0.5 * z.iter().map(|v| v * v).sum::<f64>();
                    let w = (model.log_density_unchecked(&x) - log_norm - log_q).exp();
                    acc.0 += w;
                    acc.1 += w * w;
                    acc.2 += 1;
                }
                acc
            })
            .collect::<Vec<_>>()
            .into_iter()
            .fold((0.0, 0.0, 0u64), |a, b| (a.0 + b.0, a.1 + b.1, a.2 + b.2));
        let nf = self.len() as f64;
        let p = sum / nf;
        let var = ((sum_sq - nf * p * p) / (nf - 1.0)).max(0.0);
        Ok(SmallBallEstimate {
            center: center.clone(),
            radius,
            metric: metric.clone(),
            probability: p.min(1.0),
            stderr: if hits == 0 { 3.0 / nf } else { (var / nf).sqrt() },
            samples: self.len(),
            hits,
            method: BallMethod::Importance,
            low_confidence: hits == 0,
        })
    }

    /// Plain counting when the ball holds at least [`PLAIN_HIT_THRESHOLD`]
    /// sample points, importance sampling otherwise.
    pub fn small_ball(&self, metric: &DMatrix<f64>, center: &DVector<f64>, radius: f64) -> Result<SmallBallEstimate> {
        let plain = self.plain_ball(metric, center, radius)?;
        if plain.hits >= PLAIN_HIT_THRESHOLD {
            return Ok(plain);
        }
        self.importance_ball(metric, center, radius)
    }
}

fn in_ball(metric: &DMatrix<f64>, center: &DVector<f64>, r2: f64, x: &[f64]) -> bool {
    let n = x.len();
    let mut q = 0.0;
    for i in 0..n {
        let di = x[i] - center[i];
        let mut row = 0.0;
        for j in 0..n {
            row += metric[(i, j)] * (x[j] - center[j]);
        }
        q += di * row;
    }
    q <= r2
}

/// `ln μ(K_s(a)) / μ(K_s(b))`, keeping the cases the ratio leaves undefined.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LogRatio {
    Finite {
        value: f64,
        stderr: f64,
    },
    PlusInfinity,
    MinusInfinity,
    /// Both balls carry zero mass.
    Undefined,
}

impl LogRatio {
    fn from_balls(a: &SmallBallEstimate, b: &SmallBallEstimate) -> Self {
        match (a.probability > 0.0, b.probability > 0.0) {
            (true, true) => LogRatio::Finite {
                value: (a.probability / b.probability).ln(),
                stderr: (a.stderr / a.probability).hypot(b.stderr / b.probability),
            },
            (true, false) => LogRatio::PlusInfinity,
            (false, true) => LogRatio::MinusInfinity,
            (false, false) => LogRatio::Undefined,
        }
    }

    pub fn finite(&self) -> Option<(f64, f64)> {
        match *self {
            LogRatio::Finite { value, stderr } => Some((value, stderr)),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct OmEstimate {
    pub a: DVector<f64>,
    pub b: DVector<f64>,
    pub radii: Vec<f64>,
    pub log_ratios: Vec<LogRatio>,
    pub hits: Vec<(u64, u64)>,
    /// Intercept of the fit against `s²`, or the common non-finite outcome.
    pub value: LogRatio,
    /// Indices of the radii used by the fit.
    pub fit_indices: Vec<usize>,
    /// Root-mean-square weighted fit residual.
    pub fit_residual: f64,
    /// Fitted slope in `s²`.
    pub slope: f64,
}

impl OmEstimate {
    pub fn extrapolated(&self) -> Option<f64> {
        self.value.finite().map(|v| v.0)
    }

    pub fn stderr(&self) -> Option<f64> {
        self.value.finite().map(|v| v.1)
    }
}

/// Onsager-Machlup estimate `F(a, b) = lim_{s→0} ln μ(K_s(a))/μ(K_s(b))` in the metric `J`.
///
/// The log-ratio is fitted linearly in `s²` over the smallest `window` radii
/// whose balls both hold at least [`MIN_FIT_HITS`] points; the intercept is the estimate.
pub fn om_estimate(
    sampler: &BallSampler,
    metric: &DMatrix<f64>,
    a: &DVector<f64>,
    b: &DVector<f64>,
    radii: &[f64],
    window: usize,
) -> Result<OmEstimate> {
    let metrics = vec![metric.clone(); radii.len()];
    om_with_metrics(sampler, &metrics, a, b, radii, window)
}

/// The joint limit `F̄(a, b)` along the diagonal `k_i = 1/s_i²`, with metric
/// `J_{k_i}` at radius `s_i`.
pub fn om_joint_diagonal(
    problem: &Problem,
    sampler: &BallSampler,
    a: &DVector<f64>,
    b: &DVector<f64>,
    radii: &[f64],
    window: usize,
) -> Result<OmEstimate> {
    let metrics = radii.iter().map(|s| problem.family().scaled_metric(1.0 / (s * s))).collect::<Result<Vec<_>>>()?;
    om_with_metrics(sampler, &metrics, a, b, radii, window)
}

fn om_with_metrics(
    sampler: &BallSampler,
    metrics: &[DMatrix<f64>],
    a: &DVector<f64>,
    b: &DVector<f64>,
    radii: &[f64],
    window: usize,
) -> Result<OmEstimate> {
    if radii.is_empty() || radii.windows(2).any(|w| !(w[1] < w[0])) || radii.iter().any(|s| !(*s > 0.0)) {
        return Err(Error::Precondition("radius grid must be positive and strictly decreasing".into()));
    }
    if window < 2 {
        return Err(Error::Precondition("fit window needs at least two radii".into()));
    }
    for (i, m) in metrics.iter().enumerate() {
        if !linalg::is_psd(m) {
            return Err(Error::Precondition(format!("ball metric {i} is not PSD")));
        }
    }
    let mut log_ratios = Vec::with_capacity(radii.len());
    let mut hits = Vec::with_capacity(radii.len());
    for (s, m) in radii.iter().zip(metrics) {
        let (ba, bb) = if a == b {
            let ba = sampler.small_ball(m, a, *s)?;
            (ba.clone(), ba)
        } else {
            (sampler.small_ball(m, a, *s)?, sampler.small_ball(m, b, *s)?)
        };
        log_ratios.push(LogRatio::from_balls(&ba, &bb));
        hits.push((ba.hits, bb.hits));
    }
    let usable: Vec<usize> = (0..radii.len())
        .filter(|&i| hits[i].0 >= MIN_FIT_HITS && hits[i].1 >= MIN_FIT_HITS && log_ratios[i].finite().is_some())
        .collect();
    let base = OmEstimate {
        a: a.clone(),
        b: b.clone(),
        radii: radii.to_vec(),
        log_ratios: log_ratios.clone(),
        hits: hits.clone(),
        value: LogRatio::Undefined,
        fit_indices: vec![],
        fit_residual: 0.0,
        slope: 0.0,
    };
    if usable.len() < 2 {
        let common = log_ratios[0];
        if !matches!(common, LogRatio::Finite { .. }) && log_ratios.iter().all(|r| *r == common) {
            return Ok(OmEstimate { value: common, ..base });
        }
        return Err(Error::InsufficientHits(format!(
            "only {} radii have at least {MIN_FIT_HITS} hits in both balls; use more samples or importance sampling",
            usable.len()
        )));
    }
    let fit_indices: Vec<usize> = usable[usable.len().saturating_sub(window)..].to_vec();
    let pts: Vec<(f64, f64, f64)> = fit_indices
        .iter()
        .map(|&i| {
            let (v, se) = log_ratios[i].finite().unwrap();
            (radii[i] * radii[i], v, se)
        })
        .collect();
    let fit = weighted_line(&pts);
    Ok(OmEstimate {
        value: LogRatio::Finite { value: fit.intercept, stderr: fit.intercept_stderr },
        fit_indices,
        fit_residual: fit.rms_residual,
        slope: fit.slope,
        ..base
    })
}

struct LineFit {
    intercept: f64,
    slope: f64,
    intercept_stderr: f64,
    rms_residual: f64,
}

/// Weighted least squares `v ≈ c0 + c1·u` with weights `1/se²` (uniform when any `se` is zero).
fn weighted_line(pts: &[(f64, f64, f64)]) -> LineFit {
    let uniform = pts.iter().any(|p| !(p.2 > 0.0));
    let w = |p: &(f64, f64, f64)| if uniform { 1.0 } else { 1.0 / (p.2 * p.2) };
    let (mut s0, mut s1, mut s2, mut t0, mut t1) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for p in pts {
        let wi = w(p);
        s0 += wi;
        s1 += wi * p.0;
        s2 += wi * p.0 * p.0;
        t0 += wi * p.1;
        t1 += wi * p.0 * p.1;
    }
    let det = s0 * s2 - s1 * s1;
    let (intercept, slope, var0) = if det.abs() > 1e-300 {
        ((s2 * t0 - s1 * t1) / det, (s0 * t1 - s1 * t0) / det, s2 / det)
    } else {
        (t0 / s0, 0.0, 1.0 / s0)
    };
    let rss: f64 = pts.iter().map(|p| w(p) * (p.1 - intercept - slope * p.0).powi(2)).sum();
    let rms_residual = (rss / pts.len() as f64).sqrt();
    let intercept_stderr = if uniform { 0.0 } else { var0.sqrt() };
    LineFit { intercept, slope, intercept_stderr, rms_residual }
}

/// The radial measure `ν_k` built from `J`-ball probabilities around `w`.
#[derive(Debug, Clone)]
pub struct NuProfile {
    pub k: f64,
    pub r: f64,
    pub normalizer: f64,
    pub s: Vec<f64>,
    pub density: Vec<f64>,
    /// `ν_k([0, ∞))` by the layer-cake identity.
    pub total_mass: Estimate,
    /// Trapezoid integral of the density over the supplied grid.
    pub grid_mass: f64,
    distances: Vec<f64>,
    antithetic: bool,
}

impl NuProfile {
    /// `ν_k([ε, ∞)) = E[exp(−r² max(d, ε)²/2)] / N_k` with `d` the `J`-distance to `w`.
    pub fn mass_tail(&self, eps: f64) -> Estimate {
        let r2 = self.r * self.r;
        let vals: Vec<f64> = self.distances.iter().map(|d| (-0.5 * r2 * d.max(eps).powi(2)).exp() / self.normalizer).collect();
        grouped_mean(&vals, if self.antithetic { 2 } else { 1 })
    }
}

fn grouped_mean(vals: &[f64], g: usize) -> Estimate {
    let groups: Vec<f64> = vals.chunks_exact(g).map(|c| c.iter().sum::<f64>() / g as f64).collect();
    let m = groups.len() as f64;
    let mean = groups.iter().sum::<f64>() / m;
    let var = groups.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0).max(1.0);
    Estimate { value: mean, stderr: (var / m).sqrt() }
}

/// Evaluates `s ↦ (r²/N_k) μ(K_s(w)) s exp(−r²s²/2)` on `s_grid`, the balls
/// taken in the limit metric `J = R0`, and checks that `ν_k` has unit mass.
pub fn nu_k_profile(problem: &Problem, sampler: &BallSampler, k: f64, s_grid: &[f64]) -> Result<NuProfile> {
    if !(k > 0.0) {
        return Err(Error::Precondition(format!("nu_k needs k > 0, got {k}")));
    }
    if sampler.dim() != problem.dim() {
        return Err(Error::Precondition("sampler and problem dimensions differ".into()));
    }
    let fam = problem.family();
    let r = fam.scale(k);
    let j = fam.limit_metric();
    let w = fam.w();
    let normalizer = problem.normalizer(k)?;
    let mut distances: Vec<f64> =
        sampler.points().map(|x| linalg::quad_form(j, &(DVector::from_column_slice(x) - w)).max(0.0).sqrt()).collect();
    let r2 = r * r;
    let vals: Vec<f64> = distances.iter().map(|d| (-0.5 * r2 * d * d).exp() / normalizer.value).collect();
    let g = if sampler.is_antithetic() { 2 } else { 1 };
    let mut total_mass = grouped_mean(&vals, g);
    total_mass.stderr = total_mass.stderr.hypot(total_mass.value * normalizer.stderr / normalizer.value);

    let mut sorted = distances.clone();
    sorted.sort_by(f64::total_cmp);
    let nf = sorted.len() as f64;
    let density: Vec<f64> = s_grid
        .iter()
        .map(|&s| {
            let frac = sorted.partition_point(|d| *d <= s) as f64 / nf;
            r2 / normalizer.value * frac * s * (-0.5 * r2 * s * s).exp()
        })
        .collect();
    let grid_mass = s_grid.windows(2).zip(density.windows(2)).map(|(s, d)| 0.5 * (s[1] - s[0]) * (d[0] + d[1])).sum();
    let tol = 5.0 * total_mass.stderr + 1e-12;
    if (total_mass.value - 1.0).abs() > tol {
        return Err(Error::Consistency(format!(
            "nu_k total mass {} differs from 1 by more than {tol:e} at k = {k}",
            total_mass.value
        )));
    }
    distances.shrink_to_fit();
    Ok(NuProfile {
        k,
        r,
        normalizer: normalizer.value,
        s: s_grid.to_vec(),
        density,
        total_mass,
        grid_mass,
        distances,
        antithetic: sampler.is_antithetic(),
    })
}

#[derive(Debug, Clone)]
pub struct Admissibility {
    pub k: f64,
    /// `inf_φ ∫exp(φ·z − ½zᵀR_k z) dμ_{−y} / ∫exp(−½zᵀR_k z) dμ_{−y}`.
    pub inf_ratio: f64,
    pub phi: DVector<f64>,
    /// False when the minimization failed; `inf_ratio` is then an upper bound.
    pub converged: bool,
    /// Logarithm of the minimized integral, `ln inf_φ ∫exp(φ·z − ½zᵀR_k z) dμ_{−y}`.
    pub log_inf: f64,
}

/// The admissibility ratio at `(k, y)`, minimized over linear tilts by Newton steps.
///
/// With `z = x − y` the objective is `ln ∫ exp(φ·x − ½(x−y)ᵀR_k(x−y)) dμ − φ·y`,
/// a mean-matching problem for a regulator centered at `y`.
pub fn admissibility_ratio(problem: &Problem, k: f64, y: &DVector<f64>, opts: SolveOptions) -> Result<Admissibility> {
    if !(k > 0.0) {
        return Err(Error::Precondition(format!("admissibility ratio needs k > 0, got {k}")));
    }
    if y.len() != problem.dim() {
        return Err(Error::Domain(format!("y has length {}, expected {}", y.len(), problem.dim())));
    }
    ensure_finite("y", y.as_slice())?;
    let base = quadratic_around(&problem.family().matrix(k), y, 1.0);
    let est = problem.estimator();
    let at_zero = est.weighted(&base)?.log_mass();
    let out = mean_match(est, &base, y, None, opts);
    if !out.eval.log_mass.is_finite() {
        if let Some(err) = out.failure {
            return Err(err);
        }
    }
    let log_inf = out.eval.log_mass - out.phi.dot(y);
    Ok(Admissibility {
        k,
        inf_ratio: (log_inf - at_zero).min(0.0).exp(),
        phi: out.phi,
        converged: out.failure.is_none(),
        log_inf,
    })
}

#[derive(Debug, Clone)]
pub struct BoundaryReport {
    pub y: DVector<f64>,
    pub gammas: Vec<(f64, f64)>,
    /// Extrapolation of `Γ_k(y)` to `1/r(k)² = 0`.
    pub gamma_limit: f64,
    pub om: OmEstimate,
    pub om_value: f64,
    pub om_stderr: f64,
    pub gap: f64,
    pub admissibility: Vec<Admissibility>,
}

/// Compares `lim_{k→∞} Γ_k(y)` with the Onsager-Machlup value `F̄(w, y)` in the metric `R0`.
///
/// The limit is a quadratic fit of `Γ_k(y)` against `u = 1/r(k)²` over the
/// largest four grid values. The admissibility ratio must be nondecreasing along the grid.
pub fn boundary_check(
    problem: &Problem,
    sampler: &BallSampler,
    y: &DVector<f64>,
    k_grid: &[f64],
    radii: &[f64],
    window: usize,
    opts: SolveOptions,
) -> Result<BoundaryReport> {
    if k_grid.len() < 2 || k_grid.windows(2).any(|w| !(w[1] > w[0])) || !(k_grid[0] > 0.0) {
        return Err(Error::Precondition("boundary check needs an increasing grid of positive k".into()));
    }
    let admissibility = k_grid.iter().map(|&k| admissibility_ratio(problem, k, y, opts)).collect::<Result<Vec<_>>>()?;
    let slack = if problem.estimator().is_monte_carlo() { 1e-6 } else { 1e-9 };
    if let Some(w) = admissibility.windows(2).find(|w| w[1].inf_ratio < w[0].inf_ratio - slack) {
        return Err(Error::Precondition(format!(
            "admissibility ratio decreases from {} at k = {} to {} at k = {}",
            w[0].inf_ratio, w[0].k, w[1].inf_ratio, w[1].k
        )));
    }
    let mut gammas = Vec::with_capacity(k_grid.len());
    let mut warm: Option<DVector<f64>> = None;
    for &k in k_grid {
        let c = problem.conjugate(k, y, warm.as_ref(), opts)?;
        gammas.push((k, c.gamma));
        warm = Some(c.tilt.phi);
    }
    let fam = problem.family();
    let tail: Vec<(f64, f64)> =
        gammas[gammas.len().saturating_sub(4)..].iter().map(|&(k, g)| (1.0 / fam.scale(k).powi(2), g)).collect();
    let gamma_limit = polynomial_intercept(&tail, if tail.len() >= 3 { 2 } else { 1 });
    let om = om_estimate(sampler, fam.limit_metric(), fam.w(), y, radii, window)?;
    let (om_value, om_stderr) =
        om.value.finite().ok_or_else(|| Error::InsufficientHits(format!("Onsager-Machlup value is {:?}", om.value)))?;
    Ok(BoundaryReport {
        y: y.clone(),
        gammas,
        gamma_limit,
        gap: (gamma_limit - om_value).abs(),
        om,
        om_value,
        om_stderr,
        admissibility,
    })
}

/// Least-squares polynomial of the given degree through `(u, v)`; returns the value at `u = 0`.
fn polynomial_intercept(pts: &[(f64, f64)], degree: usize) -> f64 {
    let cols = degree + 1;
    let x = DMatrix::from_fn(pts.len(), cols, |i, j| pts[i].0.powi(j as i32));
    let v = DVector::from_iterator(pts.len(), pts.iter().map(|p| p.1));
    let svd = x.svd(true, true);
    svd.solve(&v, 1e-14).map(|c| c[0]).unwrap_or(f64::NAN)
}

#[derive(Debug, Clone, Copy)]
pub struct SymmetryDiagnostic {
    /// Smallest `min(ρ(x), ρ(2y − x))/ρ(x)` over sample points in the ball.
    pub level: f64,
    pub hits: usize,
}

/// Empirical approximate-symmetry level of `μ_{−y}` inside the `J`-ball of radius `eps` around `y`.
pub fn symmetry_diagnostic(
    sampler: &BallSampler,
    y: &DVector<f64>,
    metric: &DMatrix<f64>,
    eps: f64,
) -> Result<SymmetryDiagnostic> {
    sampler.check_ball(metric, y, eps)?;
    let model = sampler.model();
    let r2 = eps * eps;
    let mut level = 1.0f64;
    let mut hits = 0;
    let mut mirror = vec![0.0; sampler.dim()];
    for x in sampler.points() {
        if !in_ball(metric, y, r2, x) {
            continue;
        }
        hits += 1;
        for (i, m) in mirror.iter_mut().enumerate() {
            *m = 2.0 * y[i] - x[i];
        }
        let ratio = (model.log_density_unchecked(&mirror) - model.log_density_unchecked(x)).min(0.0).exp();
        level = level.min(ratio);
    }
    Ok(SymmetryDiagnostic { level, hits })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_fit_recovers_exact_line() {
        let pts = [(0.01, 0.5 - 0.01 / 6.0, 0.01), (0.04, 0.5 - 0.04 / 6.0, 0.01), (0.09, 0.5 - 0.09 / 6.0, 0.02)];
        let f = weighted_line(&pts);
        assert!((f.intercept - 0.5).abs() < 1e-12);
        assert!((f.slope + 1.0 / 6.0).abs() < 1e-10);
        assert!(f.rms_residual < 1e-12);
    }

    #[test]
    fn quadratic_intercept_is_exact_for_quadratics() {
        let pts: Vec<(f64, f64)> = [0.1, 0.2, 0.3, 0.5].iter().map(|&u| (u, 1.0 - 2.0 * u + 3.0 * u * u)).collect();
        assert!((polynomial_intercept(&pts, 2) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn antithetic_samples_are_mirrored() {
        let s = BallSampler::new(MeasureModel::standard_normal(2).unwrap(), &EstimatorConfig::monte_carlo(10, 4, 2)).unwrap();
        assert!(s.is_antithetic());
        let pts: Vec<&[f64]> = s.points().collect();
        for pair in pts.chunks(2) {
            assert_eq!(pair[0][0], -pair[1][0]);
            assert_eq!(pair[0][1], -pair[1][1]);
        }
    }

    #[test]
    fn sampler_requires_monte_carlo() {
        let err = BallSampler::new(MeasureModel::standard_normal(1).unwrap(), &EstimatorConfig::quadrature(8)).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }
}
