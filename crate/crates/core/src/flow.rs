//! Wetterich's equation along a grid of flow parameters.
//!
//! `dΓ_k(y)/dk = ½ Tr[(dR_k/dk) Cov_{μ_k^φ}] − ½ E_{μ_k}[Q'_k]`, where the
//! trace uses the tilted measure matching `y` and the subtraction the
//! untilted `μ_k`.

use nalgebra::{DMatrix, DVector};

use crate::conjugate::{ConjugateResult, Problem, SolveOptions, TiltedState};
use crate::error::{Error, Result};
use crate::linalg;

#[derive(Debug, Clone)]
pub struct WetterichTerms {
    pub rhs: f64,
    /// `½ Tr[(dR_k/dk) Cov]` over the tilted measure.
    pub trace: f64,
    /// `½ E_{μ_k}[Q'_k]`.
    pub subtract: f64,
    /// Combined standard error of `rhs` (zero for quadrature).
    pub stderr: f64,
    pub tilt: TiltedState,
}

#[derive(Debug, Clone)]
pub struct FlowGrid {
    pub k_values: Vec<f64>,
    pub y: DVector<f64>,
    /// Step coefficient: the difference step at `k` is `fd_coeff · (1 + k)`.
    pub fd_coeff: f64,
}

impl FlowGrid {
    pub fn new(k_values: Vec<f64>, y: DVector<f64>) -> Result<Self> {
        let g = Self { k_values, y, fd_coeff: 1e-4 };
        g.validate()?;
        Ok(g)
    }

    /// `points` equally spaced values in `[kmin, kmax]`.
    pub fn linspace(kmin: f64, kmax: f64, points: usize, y: DVector<f64>) -> Result<Self> {
        if !(kmax > kmin) {
            return Err(Error::Config("kmax must exceed kmin".into()));
        }
        if points < 2 {
            return Err(Error::Config("flow grid needs at least two points".into()));
        }
        let step = (kmax - kmin) / (points - 1) as f64;
        Self::new((0..points).map(|i| kmin + i as f64 * step).collect(), y)
    }

    pub fn step(&self, k: f64) -> f64 {
        self.fd_coeff * (1.0 + k)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k_values.is_empty() {
            return Err(Error::Config("flow grid is empty".into()));
        }
        if self.k_values.iter().any(|k| !(k.is_finite() && *k >= 0.0)) {
            return Err(Error::Config("flow grid values must be finite and nonnegative".into()));
        }
        if !(self.fd_coeff > 0.0) {
            return Err(Error::Config("finite-difference step must be positive".into()));
        }
        let mut min_gap = f64::INFINITY;
        for w in self.k_values.windows(2) {
            if !(w[1] > w[0]) {
                return Err(Error::Config(format!("flow grid is not strictly increasing at k = {}", w[1])));
            }
            min_gap = min_gap.min(w[1] - w[0]);
        }
        let max_step = self.step(*self.k_values.last().unwrap());
        if max_step >= 0.5 * min_gap {
            return Err(Error::Config(format!(
                "finite-difference step {max_step:e} is not below half the smallest grid gap {min_gap:e}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct FlowRecord {
    pub k: f64,
    pub gamma: f64,
    /// Finite-difference `dΓ/dk`.
    pub lhs: f64,
    pub rhs: f64,
    pub residual: f64,
    pub trace: f64,
    pub subtract: f64,
    pub rhs_stderr: f64,
    pub iterations: usize,
    pub phi: DVector<f64>,
}

#[derive(Debug)]
pub struct FlowRun {
    pub records: Vec<FlowRecord>,
    /// The first grid point that failed, with its error.
    pub failure: Option<(f64, Error)>,
}

impl FlowRun {
    pub fn max_residual(&self) -> f64 {
        self.records.iter().map(|r| r.residual).fold(0.0, f64::max)
    }
}

/// Right-hand side of Wetterich's equation at `(k, y)`.
pub fn wetterich_rhs(
    problem: &Problem,
    k: f64,
    y: &DVector<f64>,
    init: Option<&DVector<f64>>,
    opts: SolveOptions,
) -> Result<WetterichTerms> {
    let tilt = problem.solve_tilt(k, y, init, opts)?;
    wetterich_terms(problem, k, tilt)
}

fn wetterich_terms(problem: &Problem, k: f64, tilt: TiltedState) -> Result<WetterichTerms> {
    let fam = problem.family();
    let est = problem.estimator();
    let frame = fam.omega_frame(k);
    let base = fam.weight(k);

    let tilted = est.weighted(&base.tilted(&tilt.phi))?;
    let mean = tilt.mean.clone();
    let trace = tilted.expect_normalized(|x| {
        let u = DVector::from_column_slice(x) - &mean;
        0.5 * frame.sum_of_squares(&u)
    });

    let regulated = est.weighted(&base)?;
    let subtract = regulated.expect_normalized(|x| 0.5 * fam.q_prime(k, x).unwrap_or(f64::NAN));
    if !subtract.value.is_finite() {
        return Err(Error::Evaluation { reason: "E[Q'_k] is not finite".into(), point: vec![] });
    }
    Ok(WetterichTerms {
        rhs: trace.value - subtract.value,
        trace: trace.value,
        subtract: subtract.value,
        stderr: trace.stderr.hypot(subtract.stderr),
        tilt,
    })
}

fn gamma_at(problem: &Problem, k: f64, y: &DVector<f64>, warm: &DVector<f64>, opts: SolveOptions) -> Result<f64> {
    Ok(problem.conjugate(k, y, Some(warm), opts)?.gamma)
}

fn record_at(problem: &Problem, grid: &FlowGrid, k: f64, warm: Option<&DVector<f64>>, opts: SolveOptions) -> Result<FlowRecord> {
    problem.check_integrability(k)?;
    let y = &grid.y;
    let c: ConjugateResult = problem.conjugate(k, y, warm, opts)?;
    let h = grid.step(k);
    let phi = c.tilt.phi.clone();
    let lhs = if k > h {
        (gamma_at(problem, k + h, y, &phi, opts)? - gamma_at(problem, k - h, y, &phi, opts)?) / (2.0 * h)
    } else {
        let g1 = gamma_at(problem, k + h, y, &phi, opts)?;
        let g2 = gamma_at(problem, k + 2.0 * h, y, &phi, opts)?;
        (-3.0 * c.gamma + 4.0 * g1 - g2) / (2.0 * h)
    };
    let iterations = c.tilt.iterations;
    let terms = wetterich_terms(problem, k, c.tilt)?;
    Ok(FlowRecord {
        k,
        gamma: c.gamma,
        lhs,
        rhs: terms.rhs,
        residual: (lhs - terms.rhs).abs(),
        trace: terms.trace,
        subtract: terms.subtract,
        rhs_stderr: terms.stderr,
        iterations,
        phi,
    })
}

/// Evaluates `Γ_k(y)`, its difference quotient and Wetterich's right-hand
/// side along the grid, warm-starting each tilt from the previous one.
///
/// On failure the records computed so far are returned with the offending `k`.
pub fn run_flow(problem: &Problem, grid: &FlowGrid, opts: SolveOptions) -> Result<FlowRun> {
    grid.validate()?;
    if grid.y.len() != problem.dim() {
        return Err(Error::Config(format!("y has length {}, expected {}", grid.y.len(), problem.dim())));
    }
    let mut records: Vec<FlowRecord> = Vec::with_capacity(grid.k_values.len());
    for &k in &grid.k_values {
        let warm = records.last().map(|r| r.phi.clone());
        match record_at(problem, grid, k, warm.as_ref(), opts) {
            Ok(r) => records.push(r),
            Err(e) => return Ok(FlowRun { records, failure: Some((k, e)) }),
        }
    }
    Ok(FlowRun { records, failure: None })
}

#[derive(Debug, Clone, Copy)]
pub struct IntegratedFlow {
    pub gamma_end_direct: f64,
    pub gamma_end_integrated: f64,
    pub gap: f64,
}

/// Compares `Γ` at the last grid point with `Γ` at the first plus the
/// trapezoid integral of the right-hand side.
pub fn integrated_flow_check(records: &[FlowRecord]) -> Result<IntegratedFlow> {
    if records.len() < 3 {
        return Err(Error::Precondition(format!("integration needs at least 3 records, got {}", records.len())));
    }
    let integral: f64 = records.windows(2).map(|w| 0.5 * (w[1].k - w[0].k) * (w[0].rhs + w[1].rhs)).sum();
    let direct = records.last().unwrap().gamma;
    let integrated = records[0].gamma + integral;
    Ok(IntegratedFlow { gamma_end_direct: direct, gamma_end_integrated: integrated, gap: (direct - integrated).abs() })
}

#[derive(Debug, Clone)]
pub struct PropagatorReport {
    pub cov_tilted: DMatrix<f64>,
    pub hessian_gamma: DMatrix<f64>,
    /// `(D²Γ_k(y) + R_k)⁻¹`.
    pub inverse_sum: DMatrix<f64>,
    /// Relative Frobenius distance between the two matrices.
    pub deviation: f64,
    pub condition: f64,
}

/// Compares the tilted covariance with `(D²Γ_k(y) + R_k)⁻¹`, the Hessian
/// taken by Richardson-extrapolated central differences in `y`.
pub fn propagator_identity_experiment(
    problem: &Problem,
    k: f64,
    y: &DVector<f64>,
    opts: SolveOptions,
) -> Result<PropagatorReport> {
    if problem.estimator().is_monte_carlo() {
        return Err(Error::Precondition("the propagator experiment needs quadrature mode".into()));
    }
    let n = problem.dim();
    let center = problem.conjugate(k, y, None, opts)?;
    let warm = center.tilt.phi.clone();
    let gamma = |p: &DVector<f64>| -> Result<f64> { Ok(problem.conjugate(k, p, Some(&warm), opts)?.gamma) };
    let hess_at = |h: f64| -> Result<DMatrix<f64>> {
        let mut m = DMatrix::zeros(n, n);
        let e = |i: usize| {
            let mut v = DVector::zeros(n);
            v[i] = h;
            v
        };
        for i in 0..n {
            let (ei, g0) = (e(i), center.gamma);
            m[(i, i)] = (gamma(&(y + &ei))? - 2.0 * g0 + gamma(&(y - &ei))?) / (h * h);
            for j in 0..i {
                let ej = e(j);
                let v = (gamma(&(y + &ei + &ej))? - gamma(&(y + &ei - &ej))? - gamma(&(y - &ei + &ej))?
                    + gamma(&(y - &ei - &ej))?)
                    / (4.0 * h * h);
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        Ok(m)
    };
    let h = 1e-2;
    let coarse = hess_at(h)?;
    let fine = hess_at(0.5 * h)?;
    let hessian = (&fine * 4.0 - coarse) / 3.0;
    let sum = &hessian + problem.family().matrix(k);
    let sum = 0.5 * (&sum + sum.transpose());
    let (values, _) = linalg::sorted_eigen(&sum);
    let condition = if values[n - 1] > 0.0 { values[0] / values[n - 1] } else { f64::INFINITY };
    let Some(inverse_sum) = linalg::spd_inverse(&sum) else {
        return Err(Error::IllConditioned { ratio: 1.0 / condition });
    };
    let cov = center.tilt.cov;
    let deviation = (&cov - &inverse_sum).norm() / cov.norm();
    Ok(PropagatorReport { cov_tilted: cov, hessian_gamma: hessian, inverse_sum, deviation, condition })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::{EstimatorConfig, MeasureModel};
    use crate::regulator::RegulatorFamily;

    fn problem(w: f64) -> Problem {
        Problem::new(
            MeasureModel::standard_normal(1).unwrap(),
            RegulatorFamily::identity(1, DVector::from_element(1, w)).unwrap(),
            EstimatorConfig::quadrature(32),
        )
        .unwrap()
    }

    #[test]
    fn centered_gaussian_terms_cancel() {
        let p = problem(0.0);
        let t = wetterich_rhs(&p, 1.0, &DVector::from_element(1, 0.7), None, SolveOptions::default()).unwrap();
        assert!((t.trace - 0.5).abs() < 1e-13);
        assert!((t.subtract - 0.5).abs() < 1e-13);
        assert!(t.rhs.abs() < 1e-13);
    }

    #[test]
    fn grid_validation() {
        let y = DVector::zeros(1);
        assert!(
            matches!(FlowGrid::linspace(2.0, 1.0, 5, y.clone()), Err(Error::Config(m)) if m.contains("kmax must exceed kmin"))
        );
        assert!(FlowGrid::new(vec![0.1, 0.1, 0.2], y.clone()).is_err());
        assert!(FlowGrid::new(vec![1.0, 1.0001], y).is_err());
    }

    #[test]
    fn integration_needs_three_records() {
        assert!(integrated_flow_check(&[]).is_err());
    }

    #[test]
    fn propagator_rejects_monte_carlo() {
        let p = Problem::new(
            MeasureModel::standard_normal(1).unwrap(),
            RegulatorFamily::identity(1, DVector::zeros(1)).unwrap(),
            EstimatorConfig::monte_carlo(1000, 1, 1),
        )
        .unwrap();
        let err = propagator_identity_experiment(&p, 1.0, &DVector::zeros(1), SolveOptions::default()).unwrap_err();
        assert!(matches!(err, Error::Precondition(_)));
    }

    #[test]
    fn flow_from_zero_uses_one_sided_difference() {
        let p = problem(1.0);
        let grid = FlowGrid::new(vec![0.0, 0.5, 1.0], DVector::zeros(1)).unwrap();
        let run = run_flow(&p, &grid, SolveOptions::default()).unwrap();
        assert!(run.failure.is_none());
        // dΓ/dk = −k/(1+k²)² vanishes at 0.
        assert!(run.records[0].lhs.abs() < 1e-7);
        assert!(run.max_residual() < 1e-7);
    }
}
