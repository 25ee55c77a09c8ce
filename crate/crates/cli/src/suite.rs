//! The twelve acceptance criteria, runnable from `frg-flow check` and the `acceptance` test target.

use std::time::{Duration, Instant};

use frg_flow::conjugate::ConjugateResult;
use frg_flow::flow::{propagator_identity_experiment, run_flow};
use frg_flow::measure::{EstimatorConfig, MeasureModel, Perturbation};
use frg_flow::onsager::{admissibility_ratio, boundary_check, nu_k_profile};
use frg_flow::regulator::ball_measure_limit_check;
use frg_flow::{BallSampler, FlowGrid, Problem, RegulatorFamily, Schedule, SolveOptions};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde_json::{json, Value};

use crate::oracle::{standard_admissibility, standard_normalizer_derivative, GaussCase};
use crate::report::without_timestamp;
use crate::CliError;

pub const CRITERIA: u32 = 12;

#[derive(Debug, Clone)]
pub struct CriterionResult {
    pub id: u32,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub elapsed: Duration,
}

impl CriterionResult {
    pub fn line(&self) -> String {
        format!(
            "{} criterion {:>2} {}: {} ({:.1} s)",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.detail,
            self.elapsed.as_secs_f64()
        )
    }

    /// Report record; the elapsed time is left out so records stay reproducible.
    pub fn to_json(&self) -> Value {
        json!({"id": self.id, "name": self.name, "passed": self.passed, "detail": self.detail})
    }
}

type Outcome = Result<Checks, CliError>;
type ArgsFor<'a> = Box<dyn Fn(u32) -> Vec<String> + 'a>;

/// Accumulates named pass/fail checks and a short summary.
#[derive(Default)]
struct Checks {
    failures: Vec<String>,
    notes: Vec<String>,
}

impl Checks {
    fn check(&mut self, ok: bool, what: impl FnOnce() -> String) {
        if !ok {
            self.failures.push(what());
        }
    }

    fn note(&mut self, s: impl Into<String>) {
        self.notes.push(s.into());
    }

    fn detail(&self) -> String {
        let mut parts = self.notes.clone();
        if !self.failures.is_empty() {
            let shown: Vec<&str> = self.failures.iter().take(3).map(String::as_str).collect();
            parts.push(format!("{} failed check(s): {}", self.failures.len(), shown.join("; ")));
        }
        parts.join(", ")
    }
}

struct Criterion {
    id: u32,
    name: &'static str,
    run: fn() -> Outcome,
}

const ALL: [Criterion; 12] = [
    Criterion { id: 1, name: "gaussian conjugate oracle", run: c01_gaussian_conjugate },
    Criterion { id: 2, name: "normalizer derivative", run: c02_normalizer_derivative },
    Criterion { id: 3, name: "constant flow", run: c03_constant_flow },
    Criterion { id: 4, name: "flow equation residual", run: c04_flow_residual },
    Criterion { id: 5, name: "monotonicity of f_y", run: c05_monotonicity },
    Criterion { id: 6, name: "onsager-machlup boundary", run: c06_boundary },
    Criterion { id: 7, name: "nu_k concentration", run: c07_nu_k },
    Criterion { id: 8, name: "monotone ball-measure limit", run: c08_ball_limit },
    Criterion { id: 9, name: "admissibility", run: c09_admissibility },
    Criterion { id: 10, name: "fenchel-young properties", run: c10_fenchel_young },
    Criterion { id: 11, name: "propagator identity", run: c11_propagator },
    Criterion { id: 12, name: "determinism", run: c12_determinism },
];

/// Runs the selected criteria (all when `only` is `None`), calling `on_result` after each.
pub fn run_suite(only: Option<&[u32]>, on_result: &mut dyn FnMut(&CriterionResult)) -> Vec<CriterionResult> {
    let mut results = vec![];
    for c in ALL.iter().filter(|c| only.is_none_or(|ids| ids.contains(&c.id))) {
        let start = Instant::now();
        let (passed, detail) = match (c.run)() {
            Ok(checks) => (checks.failures.is_empty(), checks.detail()),
            Err(e) => (false, format!("error: {e}")),
        };
        let r = CriterionResult { id: c.id, name: c.name, passed, detail, elapsed: start.elapsed() };
        on_result(&r);
        results.push(r);
    }
    results
}

fn opts() -> SolveOptions {
    SolveOptions::default()
}

fn v1(x: f64) -> DVector<f64> {
    DVector::from_element(1, x)
}

/// Non-centred Gaussian cases in one, two and three dimensions.
fn gaussian_cases() -> Vec<GaussCase> {
    vec![
        GaussCase::standard_1d(1.0),
        GaussCase::new(&[0.3], &[2.0], &[-0.5], &[1.5], Schedule::Linear),
        GaussCase::new(&[0.2, -0.4], &[1.2, 0.3, 0.3, 0.8], &[1.0, 0.5], &[1.0, 0.2, 0.2, 0.6], Schedule::Quadratic),
        GaussCase::new(
            &[0.1, 0.0, -0.3],
            &[1.5, 0.2, 0.1, 0.2, 1.0, -0.3, 0.1, -0.3, 0.9],
            &[0.5, -1.0, 0.2],
            &[0.8, 0.1, 0.0, 0.1, 1.2, 0.2, 0.0, 0.2, 0.5],
            Schedule::Expm1,
        ),
    ]
}

fn quartic(dim: usize, lambda: f64, w: &[f64], cfg: EstimatorConfig) -> frg_flow::Result<Problem> {
    Problem::new(
        MeasureModel::perturbed(DVector::zeros(dim), DMatrix::identity(dim, dim), Perturbation::quartic(dim, lambda)?)?,
        RegulatorFamily::identity(dim, DVector::from_row_slice(w))?,
        cfg,
    )
}

fn c01_gaussian_conjugate() -> Outcome {
    let mut ch = Checks::default();
    let mut worst = 0.0f64;
    let mut slowest = 0.0f64;
    for (i, g) in gaussian_cases().iter().enumerate() {
        let start = Instant::now();
        let n = g.dim();
        let p = g.problem(EstimatorConfig::quadrature(16))?;
        let targets = [DVector::from_element(n, 0.75), DVector::from_fn(n, |j, _| -0.6 + 0.5 * j as f64)];
        for k in [0.0, 0.5, 1.0, 2.0] {
            for y in &targets {
                let c = p.conjugate(k, y, None, opts())?;
                let exact = g.vstar(k, y);
                let rel = (c.value - exact).abs() / exact.abs();
                worst = worst.max(rel);
                ch.check(rel <= 1e-8, || format!("case {i} k {k}: {} vs {exact}", c.value));
            }
        }
        let secs = start.elapsed().as_secs_f64();
        slowest = slowest.max(secs);
        ch.check(secs < 5.0, || format!("case {i} took {secs:.1} s"));
    }
    ch.note(format!("max relative error {worst:.1e}, slowest case {slowest:.2} s"));
    Ok(ch)
}

fn c02_normalizer_derivative() -> Outcome {
    let mut ch = Checks::default();
    let mut worst = 0.0f64;
    let std = GaussCase::standard_1d(0.0).problem(EstimatorConfig::quadrature(32))?;
    let d1 = std.normalizer_derivative_check(1.0)?;
    let closed = standard_normalizer_derivative(1.0);
    ch.check((d1.analytic - closed).abs() <= 1e-8, || format!("N_1' = {} vs closed form {closed}", d1.analytic));
    let shifted = GaussCase::standard_1d(1.0).problem(EstimatorConfig::quadrature(32))?;
    let quart = quartic(1, 0.1, &[0.3], EstimatorConfig::quadrature(256))?;
    for (name, p) in [("gaussian", &std), ("shifted gaussian", &shifted), ("quartic", &quart)] {
        for k in [0.5, 1.0, 2.0] {
            let d = p.normalizer_derivative_check(k)?;
            worst = worst.max(d.residual);
            ch.check(d.residual <= 1e-6, || format!("{name} k {k}: |analytic − fd| = {:e}", d.residual));
        }
    }
    ch.note(format!("N_1' = {:.10} (closed form {closed:.10}), max |analytic − fd| {worst:.1e}", d1.analytic));
    Ok(ch)
}

fn c03_constant_flow() -> Outcome {
    let mut ch = Checks::default();
    let g = GaussCase::new(&[0.3, -0.2], &[1.2, 0.3, 0.3, 0.8], &[0.3, -0.2], &[1.0, 0.1, 0.1, 2.0], Schedule::Linear);
    let p = g.problem(EstimatorConfig::quadrature(16))?;
    let y = DVector::from_vec(vec![0.9, 0.4]);
    let run = run_flow(&p, &FlowGrid::linspace(0.1, 3.0, 30, y)?, opts())?;
    ch.check(run.failure.is_none(), || format!("flow stopped: {:?}", run.failure));
    let gammas: Vec<f64> = run.records.iter().map(|r| r.gamma).collect();
    let spread = gammas.iter().copied().fold(f64::NEG_INFINITY, f64::max) - gammas.iter().copied().fold(f64::INFINITY, f64::min);
    let max_rhs = run.records.iter().map(|r| r.rhs.abs()).fold(0.0, f64::max);
    ch.check(run.records.len() == 30, || format!("{} of 30 points", run.records.len()));
    ch.check(spread <= 1e-8, || format!("Γ spread {spread:e}"));
    ch.check(max_rhs <= 1e-8, || format!("max |rhs| {max_rhs:e}"));
    ch.note(format!("Γ spread {spread:.1e}, max |rhs| {max_rhs:.1e}"));
    Ok(ch)
}

fn c04_flow_residual() -> Outcome {
    let mut ch = Checks::default();
    let start = Instant::now();
    let mut gauss_worst = 0.0f64;
    let gaussian = [(GaussCase::standard_1d(1.0), v1(0.0)), (gaussian_cases()[2].clone(), DVector::from_vec(vec![0.4, -0.1]))];
    for (g, y) in &gaussian {
        let p = g.problem(EstimatorConfig::quadrature(32))?;
        let run = run_flow(&p, &FlowGrid::linspace(0.1, 3.0, 30, y.clone())?, opts())?;
        ch.check(run.failure.is_none(), || format!("gaussian flow stopped: {:?}", run.failure));
        gauss_worst = gauss_worst.max(run.max_residual());
    }
    ch.check(gauss_worst <= 1e-6, || format!("gaussian residual {gauss_worst:e}"));
    let q = quartic(1, 0.1, &[0.0], EstimatorConfig::quadrature(128))?;
    let run = run_flow(&q, &FlowGrid::linspace(0.1, 3.0, 30, v1(0.2))?, opts())?;
    ch.check(run.failure.is_none(), || format!("quartic flow stopped: {:?}", run.failure));
    let quart = run.max_residual();
    ch.check(quart <= 1e-3, || format!("quartic residual {quart:e}"));
    let secs = start.elapsed().as_secs_f64();
    ch.check(secs < 60.0, || format!("took {secs:.1} s"));
    ch.note(format!("gaussian max residual {gauss_worst:.1e}, quartic max residual {quart:.1e}"));
    Ok(ch)
}

fn c05_monotonicity() -> Outcome {
    let mut ch = Checks::default();
    let grids: [Vec<f64>; 2] = [(0..=12).map(|i| 0.25 * i as f64).collect(), vec![0.0, 0.01, 0.1, 1.0, 2.0, 4.0]];
    let mut problems: Vec<(String, Problem, DVector<f64>)> = vec![];
    for (i, g) in gaussian_cases().into_iter().enumerate() {
        let y = DVector::from_fn(g.dim(), |j, _| 0.7 - 0.4 * j as f64);
        problems.push((format!("gaussian {i}"), g.problem(EstimatorConfig::quadrature(16))?, y));
    }
    problems.push(("quartic 1d".into(), quartic(1, 0.1, &[0.0], EstimatorConfig::quadrature(128))?, v1(0.4)));
    problems.push(("quartic 1d shifted".into(), quartic(1, 0.3, &[0.8], EstimatorConfig::quadrature(128))?, v1(-0.5)));
    problems.push((
        "quartic 2d".into(),
        quartic(2, 0.1, &[0.5, -0.2], EstimatorConfig::quadrature(48))?,
        DVector::from_vec(vec![0.3, 0.2]),
    ));
    let mut worst = 0.0f64;
    let mut count = 0;
    for (name, p, y) in &problems {
        for grid in &grids {
            let rep = p.conjugate_monotonicity_check(y, grid, opts())?;
            worst = worst.max(rep.worst_drop);
            count += 1;
            ch.check(rep.passed(), || format!("{name}: drop {:e}", rep.worst_drop));
        }
    }
    ch.note(format!("{count} grids, worst drop {worst:.1e}"));
    Ok(ch)
}

fn c06_boundary() -> Outcome {
    let mut ch = Checks::default();
    let start = Instant::now();
    let p = GaussCase::standard_1d(1.0).problem(EstimatorConfig::quadrature(32))?;
    let sampler = BallSampler::new(MeasureModel::standard_normal(1)?, &EstimatorConfig::monte_carlo(10_000_000, 2026, 16))?;
    let ks: Vec<f64> = (1..=10).map(|i| 4.0 * i as f64).collect();
    let rep = boundary_check(&p, &sampler, &v1(0.0), &ks, &[0.4, 0.3, 0.2, 0.1, 0.05], 4, opts())?;
    ch.check((rep.gamma_limit + 0.5).abs() <= 0.03, || format!("Γ limit {}", rep.gamma_limit));
    ch.check((rep.om_value + 0.5).abs() <= 0.03, || format!("OM {}", rep.om_value));
    ch.check(rep.gap <= 0.05, || format!("gap {}", rep.gap));
    let secs = start.elapsed().as_secs_f64();
    ch.check(secs < 120.0, || format!("took {secs:.1} s"));
    ch.note(format!("Γ limit {:.6}, OM {:.4} ± {:.4}, gap {:.4}", rep.gamma_limit, rep.om_value, rep.om_stderr, rep.gap));
    Ok(ch)
}

fn c07_nu_k() -> Outcome {
    let mut ch = Checks::default();
    let p = GaussCase::standard_1d(0.0).problem(EstimatorConfig::quadrature(32))?;
    let sampler = BallSampler::new(MeasureModel::standard_normal(1)?, &EstimatorConfig::monte_carlo(1_000_000, 14, 8))?;
    let grid: Vec<f64> = (0..=4000).map(|i| i as f64 * 0.002).collect();
    let mut tails = vec![];
    for k in [1.0, 2.0, 4.0, 8.0] {
        let prof = nu_k_profile(&p, &sampler, k, &grid)?;
        let m = prof.total_mass;
        ch.check((m.value - 1.0).abs() <= 5.0 * m.stderr + 1e-12, || format!("k {k}: mass {} ± {}", m.value, m.stderr));
        tails.push(prof.mass_tail(0.5).value);
    }
    ch.check(tails.windows(2).all(|w| w[1] < w[0]), || format!("tails not decreasing: {tails:?}"));
    ch.check(tails[3] < 0.01, || format!("massTail(0.5) at k = 8 is {}", tails[3]));
    let shown: Vec<String> = tails.iter().map(|t| format!("{t:.2e}")).collect();
    ch.note(format!("massTail(0.5) over k = 1,2,4,8: {}", shown.join(", ")));
    Ok(ch)
}

fn c08_ball_limit() -> Outcome {
    let mut ch = Checks::default();
    let sampler = BallSampler::new(MeasureModel::standard_normal(2)?, &EstimatorConfig::monte_carlo(400_000, 17, 8))?;
    // J_n = (1 − 1/n) I along n = 1, 2, 4, …, 2^14.
    let metrics: Vec<DMatrix<f64>> = (0..=14).map(|e| DMatrix::identity(2, 2) * (1.0 - 1.0 / 2f64.powi(e))).collect();
    let rep = ball_measure_limit_check(&sampler, &metrics, &DMatrix::identity(2, 2), &DVector::from_vec(vec![0.3, 0.1]), 0.5)?;
    ch.check(rep.sequence.windows(2).all(|w| w[1].0 <= w[0].0), || "sequence increased".into());
    ch.check(rep.converged, || format!("last {:?} vs limit {:?}", rep.sequence.last(), rep.limit));
    let last = rep.sequence.last().map_or(f64::NAN, |s| s.0);
    ch.note(format!("J_n ball {last:.5} vs J ball {:.5} ± {:.5}", rep.limit.0, rep.limit.1));
    Ok(ch)
}

fn c09_admissibility() -> Outcome {
    let mut ch = Checks::default();
    let ks = [1.0, 2.0, 4.0, 8.0];
    let sym = quartic(1, 0.2, &[0.7], EstimatorConfig::quadrature(64))?;
    for k in ks {
        let a = admissibility_ratio(&sym, k, &v1(0.0), opts())?;
        ch.check(a.inf_ratio == 1.0 && a.phi.iter().all(|&x| x == 0.0), || {
            format!("symmetric k {k}: ratio {} phi {:?}", a.inf_ratio, a.phi.as_slice())
        });
    }
    let g = GaussCase::standard_1d(0.0).problem(EstimatorConfig::quadrature(32))?;
    let mut ratios = vec![];
    for k in ks {
        let a = admissibility_ratio(&g, k, &v1(1.0), opts())?;
        let exact = standard_admissibility(k, 1.0);
        ch.check((a.inf_ratio - exact).abs() <= 1e-10, || format!("gaussian k {k}: {} vs {exact}", a.inf_ratio));
        ratios.push(a.inf_ratio);
    }
    ch.check(ratios.windows(2).all(|w| w[1] > w[0]) && ratios[3] <= 1.0, || format!("ratios {ratios:?}"));
    let shown: Vec<String> = ratios.iter().map(|r| format!("{r:.6}")).collect();
    ch.note(format!("symmetric ratio exactly 1, gaussian ratios {}", shown.join(", ")));
    Ok(ch)
}

fn c10_fenchel_young() -> Outcome {
    let mut ch = Checks::default();
    let mut models: Vec<Problem> =
        gaussian_cases().iter().map(|g| g.problem(EstimatorConfig::quadrature(16))).collect::<frg_flow::Result<_>>()?;
    models.push(quartic(1, 0.1, &[0.0], EstimatorConfig::quadrature(128))?);
    models.push(quartic(1, 0.2, &[0.5], EstimatorConfig::quadrature(128))?);
    models.push(quartic(2, 0.1, &[0.5, -0.2], EstimatorConfig::quadrature(48))?);
    let mut rng = frg_flow::rng::stream_rng(20_261_015, 0);
    let (mut worst_grad, mut worst_hess, mut worst_eq) = (0.0f64, 0.0f64, 0.0f64);
    let probes = 100;
    for probe in 0..probes {
        let p = &models[probe % models.len()];
        let n = p.dim();
        let k: f64 = rng.random_range(0.0..2.0);
        let y = DVector::from_fn(n, |_, _| rng.random_range(-1.5..1.5));
        let c = p.conjugate(k, &y, None, opts())?;
        for _ in 0..10 {
            let phi = DVector::from_fn(n, |_, _| rng.random_range(-3.0..3.0));
            let lb = ConjugateResult::lower_bound(p, k, &y, &phi)?;
            ch.check(lb <= c.value + 1e-12 * (1.0 + c.value.abs()), || format!("probe {probe}: bound {lb} > {}", c.value));
        }
        let at = ConjugateResult::lower_bound(p, k, &y, &c.tilt.phi)?;
        let eq = (at - c.value).abs();
        worst_eq = worst_eq.max(eq);
        let tol = opts().tol * (1.0 + c.value.abs());
        ch.check(eq <= tol, || format!("probe {probe}: equality gap {eq:e}"));

        let phi = &c.tilt.phi;
        let st = p.tilted_state(k, phi)?;
        let v0 = p.v(k, phi)?;
        let unit = |i: usize, h: f64| {
            let mut e = DVector::zeros(n);
            e[i] = h;
            e
        };
        let scale_g = st.mean.amax().max(1.0);
        let scale_h = st.cov.amax();
        for i in 0..n {
            let h = 1e-4;
            let g = (p.v(k, &(phi + unit(i, h)))? - p.v(k, &(phi - unit(i, h)))?) / (2.0 * h);
            let rel = (g - st.mean[i]).abs() / scale_g;
            worst_grad = worst_grad.max(rel);
            ch.check(rel <= 1e-5, || format!("probe {probe}: gradient {i} {g} vs {}", st.mean[i]));
            let h = 1e-3;
            for j in 0..n {
                let hij = if i == j {
                    (p.v(k, &(phi + unit(i, h)))? - 2.0 * v0 + p.v(k, &(phi - unit(i, h)))?) / (h * h)
                } else {
                    let (ei, ej) = (unit(i, h), unit(j, h));
                    (p.v(k, &(phi + &ei + &ej))? - p.v(k, &(phi + &ei - &ej))? - p.v(k, &(phi - &ei + &ej))?
                        + p.v(k, &(phi - &ei - &ej))?)
                        / (4.0 * h * h)
                };
                let rel = (hij - st.cov[(i, j)]).abs() / scale_h;
                worst_hess = worst_hess.max(rel);
                ch.check(rel <= 1e-4, || format!("probe {probe}: hessian ({i},{j}) {hij} vs {}", st.cov[(i, j)]));
            }
        }
    }
    ch.note(format!(
        "{probes} probes over {} models, equality gap {worst_eq:.1e}, gradient {worst_grad:.1e}, hessian {worst_hess:.1e}",
        models.len()
    ));
    Ok(ch)
}

fn c11_propagator() -> Outcome {
    let mut ch = Checks::default();
    let cases = [
        (GaussCase::standard_1d(0.5), 1.0, v1(0.2)),
        (
            GaussCase::new(&[0.1, 0.4], &[1.0, 0.2, 0.2, 0.6], &[1.0, 0.0], &[1.0, 0.0, 0.0, 0.0], Schedule::Linear),
            1.5,
            DVector::from_vec(vec![0.3, 0.2]),
        ),
        (gaussian_cases()[3].clone(), 0.7, DVector::from_vec(vec![0.2, 0.1, -0.1])),
    ];
    let mut worst = 0.0f64;
    for (i, (g, k, y)) in cases.iter().enumerate() {
        let p = g.problem(EstimatorConfig::quadrature(16))?;
        let rep = propagator_identity_experiment(&p, *k, y, opts())?;
        worst = worst.max(rep.deviation);
        ch.check(rep.deviation <= 1e-8, || format!("gaussian case {i}: deviation {:e}", rep.deviation));
    }
    let q = quartic(1, 0.1, &[0.0], EstimatorConfig::quadrature(128))?;
    let rep = propagator_identity_experiment(&q, 1.0, &v1(0.2), opts())?;
    ch.note(format!("gaussian max deviation {worst:.1e}, quartic deviation {:.1e} (reported)", rep.deviation));
    Ok(ch)
}

const DETERMINISM_CONFIG: &str = r#"schema_version = 1

[measure]
kind = "perturbed"
mean = [0.0]
covariance = [[1.0]]
monomials = [{ coeff = 0.1, powers = [4] }]

[regulator]
r0 = [[1.0]]
schedule = "linear"
w = [0.5]

[estimator]
mode = "monte_carlo"
samples = 20000
seed = 11
streams = 4

[onsager]
samples = 200000
seed = 5
streams = 4
radii = [0.4, 0.3, 0.2, 0.1]

[output]
dir = "reports"
"#;

fn c12_determinism() -> Outcome {
    let mut ch = Checks::default();
    let dir = tempfile::tempdir().map_err(CliError::io(std::env::temp_dir()))?;
    let cfg = dir.path().join("mc.toml");
    std::fs::write(&cfg, DETERMINISM_CONFIG).map_err(CliError::io(&cfg))?;
    let cfg = cfg.to_string_lossy().into_owned();
    let art = |name: &str| dir.path().join(name).to_string_lossy().into_owned();
    let commands: Vec<(&str, ArgsFor<'_>)> = vec![
        ("conjugate", Box::new(|_| vec!["--k".into(), "1.5".into(), "--y".into(), "-0.3".into()])),
        (
            "flow",
            Box::new(|run| {
                let mut a: Vec<String> =
                    ["--y", "0.2", "--kmin", "0.5", "--kmax", "2.0", "--points", "6"].map(String::from).to_vec();
                a.extend(["--csv".into(), art(&format!("flow{run}.csv")), "--svg".into(), art(&format!("flow{run}.svg"))]);
                a
            }),
        ),
        (
            "om",
            Box::new(|run| {
                let mut a: Vec<String> = ["--a", "0.0", "--b", "0.8"].map(String::from).to_vec();
                a.extend(["--svg".into(), art(&format!("om{run}.svg"))]);
                a
            }),
        ),
        (
            "boundary",
            Box::new(|run| {
                let mut a: Vec<String> = ["--y", "0.5", "--kmax", "20", "--points", "5"].map(String::from).to_vec();
                a.extend(["--svg".into(), art(&format!("boundary{run}.svg"))]);
                a
            }),
        ),
    ];
    for (name, extra) in &commands {
        for run in 0..2 {
            let mut args = vec!["frg-flow".to_string(), name.to_string(), "--config".into(), cfg.clone()];
            args.extend(extra(run));
            let (mut out, mut err) = (Vec::new(), Vec::new());
            let code = crate::dispatch(&args, &mut out, &mut err);
            ch.check(code == 0, || format!("{name} run {run} exited {code}: {}", String::from_utf8_lossy(&err).trim()));
        }
        let path = dir.path().join("reports").join(format!("{name}.jsonl"));
        let text = std::fs::read_to_string(&path).unwrap_or_default();
        let lines: Vec<&str> = text.lines().collect();
        ch.check(lines.len() == 2, || format!("{name}: {} report lines", lines.len()));
        if lines.len() == 2 {
            let strip = |l: &str| without_timestamp(l).map_err(|e| CliError::Property(format!("{name} report: {e}")));
            ch.check(strip(lines[0])? == strip(lines[1])?, || format!("{name} records differ between runs"));
        }
    }
    for (a, b) in
        [("flow0.csv", "flow1.csv"), ("flow0.svg", "flow1.svg"), ("om0.svg", "om1.svg"), ("boundary0.svg", "boundary1.svg")]
    {
        let read = |n: &str| std::fs::read(dir.path().join(n)).ok();
        ch.check(read(a).is_some() && read(a) == read(b), || format!("{a} and {b} missing or different"));
    }
    ch.note("conjugate, flow, om and boundary reports and artifacts byte-identical across reruns");
    Ok(ch)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn selection_runs_only_requested_criteria() {
        let mut seen = vec![];
        let r = run_suite(Some(&[3, 9]), &mut |r| seen.push(r.id));
        assert_eq!(seen, vec![3, 9]);
        assert!(r.iter().all(|r| r.passed), "{:?}", r.iter().map(|r| r.line()).collect::<Vec<_>>());
    }

    #[test]
    fn ids_are_sequential() {
        assert!(ALL.iter().enumerate().all(|(i, c)| c.id == i as u32 + 1));
    }
}
