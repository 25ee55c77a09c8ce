//! Regulated cumulant generating functions and their convex conjugates.
//!
//! In `ℝⁿ` the optimal tilt is always linear, so `V_k*(y)` is computed by
//! mean matching: find `φ` with `E_{μ_k^φ}[x] = y`, then
//! `V_k*(y) = φ·y − V_k(φ)`.

use std::collections::HashMap;
use std::sync::Mutex;

use nalgebra::{DMatrix, DVector};

use crate::error::{ensure_finite, Error, NewtonStep, Result};
use crate::linalg;
use crate::measure::{Estimate, Estimator, EstimatorConfig, LogQuadratic, MeasureModel};
use crate::regulator::RegulatorFamily;

pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ITER: usize = 100;
const ARMIJO_C: f64 = 1e-4;
const MIN_STEP: f64 = 1e-12;
const DIVERGENCE_NORM: f64 = 1e6;
const CONDITION_FLOOR: f64 = 1e-12;
/// Stalls within this multiple of the tolerance are attributed to rounding.
const ROUNDING_SLACK: f64 = 1e3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    /// Target for `‖mean − y‖`, scaled by `max(1, ‖y‖)`.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self { tol: DEFAULT_TOL, max_iter: DEFAULT_MAX_ITER }
    }
}

/// The tilted measure `μ_k^φ ∝ exp(φ·x) μ_k` and its first two moments.
#[derive(Debug, Clone)]
pub struct TiltedState {
    pub k: f64,
    pub phi: DVector<f64>,
    /// `V_k(φ) = ln ∫ exp(φ·x) dμ_k`.
    pub log_z: f64,
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    /// Componentwise standard error of `mean` (zero for quadrature).
    pub mean_stderr: DVector<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub trace: Vec<NewtonStep>,
}

#[derive(Debug, Clone)]
pub struct ConjugateResult {
    pub k: f64,
    pub y: DVector<f64>,
    /// `V_k*(y)`.
    pub value: f64,
    /// `Γ_k(y) = V_k*(y) − ½ Q_k(y)`.
    pub gamma: f64,
    pub tilt: TiltedState,
}

impl ConjugateResult {
    /// `y·φ − V_k(φ)`, a lower bound on `V_k*(y)` for any `φ`.
    pub fn lower_bound(problem: &Problem, k: f64, y: &DVector<f64>, phi: &DVector<f64>) -> Result<f64> {
        Ok(y.dot(phi) - problem.v(k, phi)?)
    }
}

#[derive(Debug, Clone)]
pub struct NormalizerDerivative {
    pub k: f64,
    pub analytic: f64,
    pub fd: f64,
    pub residual: f64,
    pub stderr: f64,
    pub tolerance: f64,
}

impl NormalizerDerivative {
    pub fn passed(&self) -> bool {
        self.residual <= self.tolerance
    }
}

#[derive(Debug, Clone)]
pub struct MonotonicityRow {
    pub k: f64,
    pub vstar: f64,
    /// `V_k*(y) − ln N_k`.
    pub f: f64,
}

#[derive(Debug, Clone)]
pub struct MonotonicityReport {
    pub rows: Vec<MonotonicityRow>,
    /// Largest decrease of `f` between consecutive grid points.
    pub worst_drop: f64,
    pub tolerance: f64,
}

impl MonotonicityReport {
    pub fn passed(&self) -> bool {
        self.worst_drop <= self.tolerance
    }
}

/// A measure, a regulator family and an estimator, with cached normalizers.
#[derive(Debug)]
pub struct Problem {
    est: Estimator,
    family: RegulatorFamily,
    normalizers: Mutex<HashMap<u64, (f64, f64)>>,
}

impl Problem {
    pub fn new(model: MeasureModel, family: RegulatorFamily, cfg: EstimatorConfig) -> Result<Self> {
        Self::from_estimator(Estimator::new(model, cfg)?, family)
    }

    pub fn from_estimator(est: Estimator, family: RegulatorFamily) -> Result<Self> {
        if est.model().dim() != family.dim() {
            return Err(Error::InvalidModel(format!(
                "measure has dimension {} but the regulator has dimension {}",
                est.model().dim(),
                family.dim()
            )));
        }
        Ok(Self { est, family, normalizers: Mutex::new(HashMap::new()) })
    }

    pub fn model(&self) -> &MeasureModel {
        self.est.model()
    }

    pub fn family(&self) -> &RegulatorFamily {
        &self.family
    }

    pub fn estimator(&self) -> &Estimator {
        &self.est
    }

    pub fn dim(&self) -> usize {
        self.family.dim()
    }

    fn check_k(k: f64) -> Result<()> {
        if !(k >= 0.0) || !k.is_finite() {
            return Err(Error::Precondition(format!("flow parameter must be finite and nonnegative, got {k}")));
        }
        Ok(())
    }

    fn check_vec(&self, name: &str, v: &DVector<f64>) -> Result<()> {
        if v.len() != self.dim() {
            return Err(Error::Domain(format!("{name} has length {}, expected {}", v.len(), self.dim())));
        }
        ensure_finite(name, v.as_slice())
    }

    /// Returns the `R` of the integrability check at `k`.
    pub fn check_integrability(&self, k: f64) -> Result<f64> {
        Self::check_k(k)?;
        self.family.check_integrability(&self.est, k)
    }

    /// `(ln N_k, stderr)`, cached per `k`.
    pub fn log_normalizer(&self, k: f64) -> Result<(f64, f64)> {
        Self::check_k(k)?;
        if k == 0.0 || self.family.scale(k) == 0.0 {
            return Ok((0.0, 0.0));
        }
        if let Some(v) = self.normalizers.lock().unwrap().get(&k.to_bits()) {
            return Ok(*v);
        }
        let cloud = self.est.weighted(&self.family.weight(k))?;
        let v = (cloud.log_mass(), cloud.log_mass_stderr());
        if !v.0.is_finite() {
            return Err(Error::Evaluation { reason: format!("N_k is not positive at k = {k}"), point: vec![] });
        }
        self.normalizers.lock().unwrap().insert(k.to_bits(), v);
        Ok(v)
    }

    /// `N_k = ∫ exp(−½Q_k) dμ`.
    pub fn normalizer(&self, k: f64) -> Result<Estimate> {
        let (ln, se) = self.log_normalizer(k)?;
        let value = ln.exp();
        Ok(Estimate { value, stderr: value * se })
    }

    /// `V_k(φ) = ln ∫ exp(φ·x) dμ_k`.
    pub fn v(&self, k: f64, phi: &DVector<f64>) -> Result<f64> {
        self.check_vec("phi", phi)?;
        let (ln_n, _) = self.log_normalizer(k)?;
        let lm = self.est.weighted(&self.family.weight(k).tilted(phi))?.log_mass();
        if !lm.is_finite() {
            return Err(Error::Evaluation { reason: "V_k is not finite".into(), point: phi.as_slice().to_vec() });
        }
        Ok(lm - ln_n)
    }

    pub fn tilted_state(&self, k: f64, phi: &DVector<f64>) -> Result<TiltedState> {
        self.check_vec("phi", phi)?;
        let (ln_n, _) = self.log_normalizer(k)?;
        let e = evaluate(&self.est, &self.family.weight(k), phi)?;
        Ok(TiltedState {
            k,
            phi: phi.clone(),
            log_z: e.log_mass - ln_n,
            mean: e.mean,
            cov: e.cov,
            mean_stderr: e.mean_stderr,
            converged: true,
            iterations: 0,
            trace: vec![],
        })
    }

    /// Analytic `N_k' = −½ ∫ Q'_k exp(−½Q_k) dμ` against a central difference in `k`.
    pub fn normalizer_derivative_check(&self, k: f64) -> Result<NormalizerDerivative> {
        if !(k > 0.0) {
            return Err(Error::Precondition(format!("normalizer derivative check needs k > 0, got {k}")));
        }
        self.check_integrability(k)?;
        let fam = &self.family;
        let cloud = self.est.weighted(&fam.weight(k))?;
        let integral = cloud.integral(|x| fam.q_prime(k, x).unwrap_or(f64::NAN))?;
        let analytic = -0.5 * integral.value;
        let h = fd_step(k);
        let fd = if k > h {
            (self.normalizer(k + h)?.value - self.normalizer(k - h)?.value) / (2.0 * h)
        } else {
            let n0 = self.normalizer(k)?.value;
            let n1 = self.normalizer(k + h)?.value;
            let n2 = self.normalizer(k + 2.0 * h)?.value;
            (-3.0 * n0 + 4.0 * n1 - n2) / (2.0 * h)
        };
        let stderr = 0.5 * integral.stderr;
        let residual = (analytic - fd).abs();
        Ok(NormalizerDerivative { k, analytic, fd, residual, stderr, tolerance: (1e-6f64).max(5.0 * stderr) })
    }

    /// Newton mean matching for `E_{μ_k^φ}[x] = y`, started from `init` (or `φ = 0`).
    pub fn solve_tilt(&self, k: f64, y: &DVector<f64>, init: Option<&DVector<f64>>, opts: SolveOptions) -> Result<TiltedState> {
        self.check_vec("y", y)?;
        let (ln_n, _) = self.log_normalizer(k)?;
        let base = self.family.weight(k);
        let out = mean_match(&self.est, &base, y, init, opts);
        if let Some(err) = out.failure {
            return Err(err);
        }
        let e = out.eval;
        Ok(TiltedState {
            k,
            phi: out.phi,
            log_z: e.log_mass - ln_n,
            mean: e.mean,
            cov: e.cov,
            mean_stderr: e.mean_stderr,
            converged: true,
            iterations: out.iterations,
            trace: out.trace,
        })
    }

    /// `V_k*(y)` and `Γ_k(y)`.
    pub fn conjugate(
        &self,
        k: f64,
        y: &DVector<f64>,
        init: Option<&DVector<f64>>,
        opts: SolveOptions,
    ) -> Result<ConjugateResult> {
        let tilt = self.solve_tilt(k, y, init, opts)?;
        let value = tilt.phi.dot(y) - tilt.log_z;
        let gamma = value - 0.5 * self.family.q(k, y.as_slice())?;
        Ok(ConjugateResult { k, y: y.clone(), value, gamma, tilt })
    }

    /// Tabulates `f_y(k) = V_k*(y) − ln N_k` along an increasing grid.
    pub fn conjugate_monotonicity_check(
        &self,
        y: &DVector<f64>,
        k_grid: &[f64],
        opts: SolveOptions,
    ) -> Result<MonotonicityReport> {
        if k_grid.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::Precondition("k grid must be nondecreasing".into()));
        }
        let mut rows = Vec::with_capacity(k_grid.len());
        let mut warm: Option<DVector<f64>> = None;
        for &k in k_grid {
            let c = self.conjugate(k, y, warm.as_ref(), opts)?;
            let (ln_n, _) = self.log_normalizer(k)?;
            rows.push(MonotonicityRow { k, vstar: c.value, f: c.value - ln_n });
            warm = Some(c.tilt.phi);
        }
        let worst_drop = rows.windows(2).map(|w| w[0].f - w[1].f).fold(0.0, f64::max);
        Ok(MonotonicityReport { rows, worst_drop, tolerance: 1e-6 })
    }
}

/// Finite-difference step in `k` used by flow and derivative checks.
pub fn fd_step(k: f64) -> f64 {
    1e-4 * (1.0 + k)
}

#[derive(Debug, Clone)]
pub(crate) struct Eval {
    pub log_mass: f64,
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    pub mean_stderr: DVector<f64>,
}

pub(crate) fn evaluate(est: &Estimator, base: &LogQuadratic, phi: &DVector<f64>) -> Result<Eval> {
    let cloud = est.weighted(&base.tilted(phi))?;
    let log_mass = cloud.log_mass();
    if !log_mass.is_finite() {
        return Err(Error::Evaluation { reason: format!("tilted mass is {log_mass}"), point: phi.as_slice().to_vec() });
    }
    let (mean, cov) = cloud.mean_and_covariance();
    Ok(Eval { log_mass, mean, cov, mean_stderr: cloud.mean_stderr() })
}

#[derive(Debug)]
pub(crate) struct MeanMatch {
    pub phi: DVector<f64>,
    pub eval: Eval,
    pub iterations: usize,
    pub trace: Vec<NewtonStep>,
    /// Set when the iteration failed; `phi` and `eval` then hold the best iterate.
    pub failure: Option<Error>,
}

/// Minimizes `φ ↦ ln ∫ exp(base + φ·x) dμ − φ·y` by damped Newton steps.
///
/// The gradient is the tilted mean minus `y` and the Hessian the tilted
/// covariance. A step is accepted under the Armijo condition or when it
/// shrinks the residual, which keeps progress once objective differences
/// fall below rounding.
pub(crate) fn mean_match(
    est: &Estimator,
    base: &LogQuadratic,
    y: &DVector<f64>,
    init: Option<&DVector<f64>>,
    opts: SolveOptions,
) -> MeanMatch {
    let dim = y.len();
    let zero = DVector::zeros(dim);
    let tol = opts.tol * y.norm().max(1.0);
    let (mut phi, mut cur) = match init.map(|p| (p.clone(), evaluate(est, base, p))) {
        Some((p, Ok(e))) => (p, e),
        _ => match evaluate(est, base, &zero) {
            Ok(e) => (zero.clone(), e),
            Err(err) => {
                return MeanMatch {
                    phi: zero,
                    eval: Eval {
                        log_mass: f64::NAN,
                        mean: DVector::from_element(dim, f64::NAN),
                        cov: DMatrix::from_element(dim, dim, f64::NAN),
                        mean_stderr: DVector::zeros(dim),
                    },
                    iterations: 0,
                    trace: vec![],
                    failure: Some(err),
                }
            }
        },
    };
    let objective = |e: &Eval, p: &DVector<f64>| e.log_mass - p.dot(y);
    let mut trace = Vec::new();
    let mut it = 0;
    let failure = loop {
        let r = &cur.mean - y;
        let res = r.norm();
        if res <= tol {
            break None;
        }
        if it >= opts.max_iter {
            break Some(Error::NonConvergence { iterations: it, last_residual: res, trace: trace.clone() });
        }
        let (values, _) = linalg::sorted_eigen(&cur.cov);
        let (hi, lo) = (values[0], values[dim - 1]);
        if !(lo > CONDITION_FLOOR * hi) {
            break Some(Error::IllConditioned { ratio: if hi > 0.0 { lo / hi } else { 0.0 } });
        }
        let Some(chol) = cur.cov.clone().cholesky() else {
            break Some(Error::IllConditioned { ratio: lo / hi });
        };
        let delta = -chol.solve(&r);
        let f0 = objective(&cur, &phi);
        let slope = r.dot(&delta);
        let mut t = 1.0;
        let accepted = loop {
            let trial = &phi + &delta * t;
            if let Ok(e) = evaluate(est, base, &trial) {
                let armijo = objective(&e, &trial) <= f0 + ARMIJO_C * t * slope;
                let shrinks = (&e.mean - y).norm() <= (1.0 - ARMIJO_C * t) * res;
                if armijo || shrinks {
                    break Some((trial, e));
                }
            }
            t *= 0.5;
            if t < MIN_STEP {
                break None;
            }
        };
        it += 1;
        let Some((next_phi, next)) = accepted else {
            if res <= ROUNDING_SLACK * tol {
                break None;
            }
            break Some(Error::NonConvergence { iterations: it, last_residual: res, trace: trace.clone() });
        };
        trace.push(NewtonStep { iteration: it, residual: res, step_fraction: t, phi_norm: next_phi.norm() });
        phi = next_phi;
        cur = next;
        if phi.norm() > DIVERGENCE_NORM {
            let residual = (&cur.mean - y).norm();
            break Some(Error::OutsideDomain { phi_norm: phi.norm(), residual });
        }
    };
    MeanMatch { phi, eval: cur, iterations: it, trace, failure }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::Perturbation;
    use crate::regulator::Schedule;

    fn std_problem(w: f64) -> Problem {
        Problem::new(
            MeasureModel::standard_normal(1).unwrap(),
            RegulatorFamily::identity(1, DVector::from_element(1, w)).unwrap(),
            EstimatorConfig::quadrature(32),
        )
        .unwrap()
    }

    fn v1(x: f64) -> DVector<f64> {
        DVector::from_element(1, x)
    }

    #[test]
    fn v_examples() {
        let p = std_problem(0.0);
        assert!((p.v(0.0, &v1(1.0)).unwrap() - 0.5).abs() < 1e-13);
        assert!((p.v(1.0, &v1(1.0)).unwrap() - 0.25).abs() < 1e-13);
        assert!(p.v(1.7, &v1(0.0)).unwrap().abs() < 1e-13);
    }

    #[test]
    fn normalizer_examples() {
        let p = std_problem(0.0);
        assert_eq!(p.normalizer(0.0).unwrap().value, 1.0);
        assert!((p.normalizer(1.0).unwrap().value - 0.5f64.sqrt()).abs() < 1e-13);
        let p2 = Problem::new(
            MeasureModel::standard_normal(2).unwrap(),
            RegulatorFamily::identity(2, DVector::zeros(2)).unwrap(),
            EstimatorConfig::quadrature(16),
        )
        .unwrap();
        assert!((p2.normalizer(1.0).unwrap().value - 0.5).abs() < 1e-13);
    }

    #[test]
    fn normalizer_derivative_examples() {
        let p = std_problem(0.0);
        let d = p.normalizer_derivative_check(1.0).unwrap();
        assert!((d.analytic + 2f64.powf(-1.5)).abs() < 1e-12);
        assert!(d.passed(), "{d:?}");
        let near_zero = p.normalizer_derivative_check(1e-9).unwrap();
        assert!(near_zero.analytic.abs() < 1e-8);
    }

    #[test]
    fn conjugate_examples() {
        let p = std_problem(0.0);
        let c = p.conjugate(0.0, &v1(1.0), None, SolveOptions::default()).unwrap();
        assert!((c.value - 0.5).abs() < 1e-12 && (c.gamma - 0.5).abs() < 1e-12);
        let c = p.conjugate(2.0, &v1(1.0), None, SolveOptions::default()).unwrap();
        assert!((c.value - 2.5).abs() < 1e-12 && (c.gamma - 0.5).abs() < 1e-12);
        let q = std_problem(1.0);
        let c = q.conjugate(50.0, &v1(0.0), None, SolveOptions::default()).unwrap();
        assert!((c.gamma + 0.5).abs() < 1e-3, "{}", c.gamma);
    }

    #[test]
    fn symmetric_target_needs_no_tilt() {
        let model =
            MeasureModel::perturbed(DVector::zeros(1), DMatrix::identity(1, 1), Perturbation::quartic(1, 0.2).unwrap()).unwrap();
        let p = Problem::new(model, RegulatorFamily::identity(1, v1(0.0)).unwrap(), EstimatorConfig::quadrature(64)).unwrap();
        let t = p.solve_tilt(1.0, &v1(0.0), None, SolveOptions::default()).unwrap();
        assert_eq!(t.iterations, 0);
        assert_eq!(t.phi[0], 0.0);
    }

    #[test]
    fn fenchel_young_equality_at_solution() {
        let fam = RegulatorFamily::new(DMatrix::identity(1, 1), Schedule::Quadratic, v1(0.4)).unwrap();
        let model = MeasureModel::perturbed(v1(0.1), DMatrix::identity(1, 1), Perturbation::quartic(1, 0.1).unwrap()).unwrap();
        let p = Problem::new(model, fam, EstimatorConfig::quadrature(64)).unwrap();
        let y = v1(-0.7);
        let c = p.conjugate(1.2, &y, None, SolveOptions::default()).unwrap();
        let lb = ConjugateResult::lower_bound(&p, 1.2, &y, &c.tilt.phi).unwrap();
        assert!((c.value - lb).abs() < 1e-12);
        for d in [-1.0, -0.1, 0.05, 0.7] {
            let lb = ConjugateResult::lower_bound(&p, 1.2, &y, &(&c.tilt.phi + v1(d))).unwrap();
            assert!(lb <= c.value + 1e-12);
        }
    }

    #[test]
    fn far_target_is_outside_domain_or_nonconvergent() {
        let p = Problem::new(
            MeasureModel::standard_normal(1).unwrap(),
            RegulatorFamily::identity(1, v1(0.0)).unwrap(),
            EstimatorConfig::monte_carlo(1000, 1, 2),
        )
        .unwrap();
        // A finite sample cannot produce a tilted mean beyond its largest point.
        let err = p.solve_tilt(0.0, &v1(100.0), None, SolveOptions::default()).unwrap_err();
        assert!(
            matches!(err, Error::OutsideDomain { .. } | Error::NonConvergence { .. } | Error::IllConditioned { .. }),
            "{err}"
        );
    }

    #[test]
    fn non_convergence_carries_trace() {
        let model = MeasureModel::perturbed(v1(0.0), DMatrix::identity(1, 1), Perturbation::quartic(1, 0.5).unwrap()).unwrap();
        let p = Problem::new(model, RegulatorFamily::identity(1, v1(0.0)).unwrap(), EstimatorConfig::quadrature(64)).unwrap();
        let err = p.solve_tilt(0.0, &v1(1.5), None, SolveOptions { tol: 1e-10, max_iter: 1 }).unwrap_err();
        match err {
            Error::NonConvergence { iterations, trace, .. } => {
                assert_eq!(iterations, 1);
                assert_eq!(trace.len(), 1);
            }
            other => panic!("{other}"),
        }
    }

    #[test]
    fn monotonicity_table_for_gaussian() {
        let p = std_problem(0.0);
        let grid = [0.0, 0.5, 1.0, 2.0, 4.0];
        let rep = p.conjugate_monotonicity_check(&v1(0.8), &grid, SolveOptions::default()).unwrap();
        assert!(rep.passed());
        for row in &rep.rows {
            let expected = 0.5 * (1.0 + row.k * row.k) * 0.64 + 0.5 * (1.0 + row.k * row.k).ln();
            assert!((row.f - expected).abs() < 1e-11);
        }
    }
}
