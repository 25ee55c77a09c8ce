//! Subcommand implementations.

use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use frg_flow::flow::{run_flow, FlowRun};
use frg_flow::onsager::{boundary_check, om_estimate, BoundaryReport, LogRatio, OmEstimate};
use frg_flow::{BallSampler, FlowGrid};
use nalgebra::DVector;
use serde_json::{json, Value};

use crate::config::{self, LoadedConfig, ModeName};
use crate::report::{num, nums, Inputs, Provenance, Report};
use crate::svg::{self, Chart, Series};
use crate::{parse_list, suite, CliError, Command, EXIT_FAILURE, EXIT_OK};

pub fn run(cmd: Command, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32, CliError> {
    match cmd {
        Command::Conjugate { config, k, y } => conjugate(&config, k, &y, out),
        Command::Flow { config, y, kmin, kmax, points, csv, svg } => {
            flow(&config, &y, kmin, kmax, points, csv.as_deref(), svg.as_deref(), out, err)
        }
        Command::Om { config, a, b, radii, svg } => om(&config, &a, &b, radii.as_deref(), svg.as_deref(), out),
        Command::Boundary { config, y, kmax, points, svg } => boundary(&config, &y, kmax, points, svg.as_deref(), out),
        Command::Check { config, only } => check(config.as_deref(), only.as_deref(), out),
    }
}

fn emit(out: &mut dyn Write, text: &str) -> Result<(), CliError> {
    writeln!(out, "{text}").map_err(CliError::io("<stdout>"))
}

fn vector(name: &str, text: &str, dim: usize) -> Result<DVector<f64>, CliError> {
    let v = parse_list(name, text)?;
    if v.len() != dim {
        return Err(CliError::Usage(format!("--{name} has {} entries but the model has dimension {dim}", v.len())));
    }
    Ok(DVector::from_vec(v))
}

fn estimator_seed(cfg: &LoadedConfig) -> Option<u64> {
    (cfg.config.estimator.mode == ModeName::MonteCarlo).then_some(cfg.config.estimator.seed)
}

fn write_report(
    cfg: &LoadedConfig,
    command: &str,
    args: Value,
    records: Vec<Value>,
    ball_seed: Option<u64>,
) -> Result<PathBuf, CliError> {
    let report = Report {
        command: command.to_string(),
        inputs: Inputs { config_hash: cfg.hash.clone(), args },
        records,
        provenance: Provenance::new(estimator_seed(cfg), ball_seed),
    };
    report.append_to(&cfg.report_dir())
}

fn conjugate(path: &Path, k: f64, y: &str, out: &mut dyn Write) -> Result<i32, CliError> {
    let cfg = config::load(path)?;
    let problem = cfg.config.problem()?;
    let y = vector("y", y, problem.dim())?;
    let c = problem.conjugate(k, &y, None, cfg.config.solve_options())?;
    let record = json!({
        "k": num(k),
        "y": nums(y.as_slice()),
        "vstar": num(c.value),
        "gamma": num(c.gamma),
        "phi": nums(c.tilt.phi.as_slice()),
        "iterations": c.tilt.iterations,
        "converged": c.tilt.converged,
    });
    emit(out, &record.to_string())?;
    write_report(&cfg, "conjugate", json!({"k": num(k), "y": nums(y.as_slice())}), vec![record], None)?;
    Ok(EXIT_OK)
}

fn flow_csv(run: &FlowRun) -> String {
    let mut s = String::from("k,gamma,lhs,rhs,residual,trace,subtract\n");
    for r in &run.records {
        let _ = writeln!(s, "{},{},{},{},{},{},{}", r.k, r.gamma, r.lhs, r.rhs, r.residual, r.trace, r.subtract);
    }
    s
}

#[allow(clippy::too_many_arguments)]
fn flow(
    path: &Path,
    y: &str,
    kmin: f64,
    kmax: f64,
    points: usize,
    csv: Option<&Path>,
    svg_path: Option<&Path>,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Result<i32, CliError> {
    let cfg = config::load(path)?;
    let problem = cfg.config.problem()?;
    let y = vector("y", y, problem.dim())?;
    let grid = FlowGrid::linspace(kmin, kmax, points, y.clone())?;
    let run = run_flow(&problem, &grid, cfg.config.solve_options())?;

    let csv_path = csv.map(Path::to_path_buf).unwrap_or_else(|| cfg.report_dir().join("flow.csv"));
    if let Some(dir) = csv_path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(CliError::io(dir))?;
    }
    std::fs::write(&csv_path, flow_csv(&run)).map_err(CliError::io(&csv_path))?;
    if let Some(p) = svg_path {
        let chart = Chart {
            title: "effective average action along the flow".into(),
            x_label: "k".into(),
            y_label: "value".into(),
            series: vec![
                Series::new("Γ_k(y)", run.records.iter().map(|r| (r.k, r.gamma)).collect()),
                Series::new("|lhs − rhs|", run.records.iter().map(|r| (r.k, r.residual)).collect()),
            ],
        };
        if !run.records.is_empty() {
            svg::render_to(&chart, p)?;
        }
    }

    let records: Vec<Value> = run
        .records
        .iter()
        .map(|r| {
            json!({
                "k": num(r.k), "gamma": num(r.gamma), "lhs": num(r.lhs), "rhs": num(r.rhs),
                "residual": num(r.residual), "trace": num(r.trace), "subtract": num(r.subtract),
                "rhs_stderr": num(r.rhs_stderr), "iterations": r.iterations,
            })
        })
        .collect();
    let failure = run.failure.as_ref().map(|(k, e)| json!({"k": num(*k), "error": e.to_string()}));
    let args = json!({
        "y": nums(y.as_slice()), "kmin": num(kmin), "kmax": num(kmax), "points": points,
        "failure": failure,
    });
    write_report(&cfg, "flow", args, records, None)?;
    emit(
        out,
        &format!(
            "flow: {} of {} points, max residual {:e}, csv {}",
            run.records.len(),
            points,
            run.max_residual(),
            csv_path.display()
        ),
    )?;
    match &run.failure {
        Some((k, e)) => {
            let _ = writeln!(err, "flow stopped at k = {k}: {e}");
            Ok(EXIT_FAILURE)
        }
        None => Ok(EXIT_OK),
    }
}

fn log_ratio_json(r: &LogRatio) -> Value {
    match *r {
        LogRatio::Finite { value, stderr } => json!({"value": num(value), "stderr": num(stderr)}),
        LogRatio::PlusInfinity => json!("+inf"),
        LogRatio::MinusInfinity => json!("-inf"),
        LogRatio::Undefined => json!("undefined"),
    }
}

fn om_json(om: &OmEstimate) -> Value {
    json!({
        "a": nums(om.a.as_slice()),
        "b": nums(om.b.as_slice()),
        "radii": nums(&om.radii),
        "log_ratios": om.log_ratios.iter().map(log_ratio_json).collect::<Vec<_>>(),
        "hits": om.hits.iter().map(|h| json!([h.0, h.1])).collect::<Vec<_>>(),
        "value": log_ratio_json(&om.value),
        "fit_indices": om.fit_indices,
        "fit_residual": num(om.fit_residual),
        "slope": num(om.slope),
    })
}

fn om_chart(om: &OmEstimate) -> Chart {
    let data: Vec<(f64, f64)> =
        om.radii.iter().zip(&om.log_ratios).filter_map(|(s, r)| r.finite().map(|v| (s * s, v.0))).collect();
    let mut series = vec![Series::new("log ratio", data)];
    if let Some(c) = om.extrapolated() {
        let umax = om.fit_indices.iter().map(|&i| om.radii[i] * om.radii[i]).fold(0.0, f64::max);
        series.push(Series::new("fit", vec![(0.0, c), (umax, c + om.slope * umax)]));
    }
    Chart { title: "small-ball log ratio".into(), x_label: "s²".into(), y_label: "ln μ(a)/μ(b)".into(), series }
}

fn om(path: &Path, a: &str, b: &str, radii: Option<&str>, svg_path: Option<&Path>, out: &mut dyn Write) -> Result<i32, CliError> {
    let cfg = config::load(path)?;
    let c = &cfg.config;
    let model = c.model()?;
    let family = c.family()?;
    let a = vector("a", a, model.dim())?;
    let b = vector("b", b, model.dim())?;
    let radii = match radii {
        Some(r) => parse_list("radii", r)?,
        None => c.onsager.radii.clone(),
    };
    let sampler = BallSampler::new(model, &c.ball_config())?;
    let om = om_estimate(&sampler, family.r0(), &a, &b, &radii, c.onsager.window)?;
    if let Some(p) = svg_path {
        svg::render_to(&om_chart(&om), p)?;
    }
    let record = om_json(&om);
    emit(out, &record.to_string())?;
    let args = json!({"a": nums(a.as_slice()), "b": nums(b.as_slice()), "radii": nums(&radii)});
    write_report(&cfg, "om", args, vec![record], Some(c.onsager.seed))?;
    Ok(EXIT_OK)
}

fn boundary_json(rep: &BoundaryReport) -> Value {
    json!({
        "y": nums(rep.y.as_slice()),
        "gammas": rep.gammas.iter().map(|(k, g)| json!({"k": num(*k), "gamma": num(*g)})).collect::<Vec<_>>(),
        "gamma_limit": num(rep.gamma_limit),
        "om_value": num(rep.om_value),
        "om_stderr": num(rep.om_stderr),
        "gap": num(rep.gap),
        "om": om_json(&rep.om),
        "admissibility": rep
            .admissibility
            .iter()
            .map(|a| json!({"k": num(a.k), "inf_ratio": num(a.inf_ratio), "converged": a.converged}))
            .collect::<Vec<_>>(),
    })
}

fn boundary(
    path: &Path,
    y: &str,
    kmax: f64,
    points: usize,
    svg_path: Option<&Path>,
    out: &mut dyn Write,
) -> Result<i32, CliError> {
    let cfg = config::load(path)?;
    let c = &cfg.config;
    if points < 2 {
        return Err(CliError::Usage("--points must be at least 2".into()));
    }
    if !(kmax > 0.0) || !kmax.is_finite() {
        return Err(CliError::Usage("--kmax must be positive and finite".into()));
    }
    let problem = c.problem()?;
    let y = vector("y", y, problem.dim())?;
    let grid: Vec<f64> = (1..=points).map(|i| kmax * i as f64 / points as f64).collect();
    let sampler = BallSampler::new(c.model()?, &c.ball_config())?;
    let rep = boundary_check(&problem, &sampler, &y, &grid, &c.onsager.radii, c.onsager.window, c.solve_options())?;
    if let Some(p) = svg_path {
        let chart = Chart {
            title: "Γ_k(y) against the Onsager-Machlup value".into(),
            x_label: "k".into(),
            y_label: "value".into(),
            series: vec![
                Series::new("Γ_k(y)", rep.gammas.clone()),
                Series::new("OM estimate", vec![(grid[0], rep.om_value), (kmax, rep.om_value)]),
            ],
        };
        svg::render_to(&chart, p)?;
    }
    let record = boundary_json(&rep);
    emit(out, &record.to_string())?;
    let args = json!({"y": nums(y.as_slice()), "kmax": num(kmax), "points": points});
    write_report(&cfg, "boundary", args, vec![record], Some(c.onsager.seed))?;
    Ok(EXIT_OK)
}

fn check(path: Option<&Path>, only: Option<&str>, out: &mut dyn Write) -> Result<i32, CliError> {
    let cfg = path.map(config::load).transpose()?;
    let ids: Option<Vec<u32>> = only
        .map(|s| {
            s.split(',')
                .map(|t| t.trim().parse::<u32>().ok().filter(|i| (1..=suite::CRITERIA).contains(i)))
                .collect::<Option<Vec<_>>>()
                .ok_or_else(|| CliError::Usage(format!("--only expects criterion numbers 1..={}, got {s:?}", suite::CRITERIA)))
        })
        .transpose()?;
    let results = suite::run_suite(ids.as_deref(), &mut |r| {
        let _ = writeln!(out, "{}", r.line());
    });
    let failed = results.iter().filter(|r| !r.passed).count();
    emit(out, &format!("{} of {} criteria passed", results.len() - failed, results.len()))?;
    if let Some(cfg) = &cfg {
        let records = results.iter().map(|r| r.to_json()).collect();
        write_report(cfg, "check", json!({"only": ids}), records, None)?;
    }
    Ok(if failed == 0 { EXIT_OK } else { EXIT_FAILURE })
}
