use std::path::{Path, PathBuf};

use frg_flow_cli::{config, dispatch, report::without_timestamp, svg, EXIT_FAILURE, EXIT_OK, EXIT_USAGE};
use serde_json::Value;

fn run(args: &[&str]) -> (i32, String, String) {
    let mut argv = vec!["frg-flow"];
    argv.extend_from_slice(args);
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let code = dispatch(argv, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

const STD: &str = r#"schema_version = 1
[measure]
kind = "gaussian"
mean = [0.0]
covariance = [[1.0]]
[regulator]
r0 = [[1.0]]
w = [1.0]
[estimator]
nodes_per_dim = 32
[onsager]
samples = 400000
radii = [0.4, 0.3, 0.2, 0.1]
[output]
dir = "out"
"#;

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("run.toml");
    std::fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

fn repo_config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

#[test]
fn missing_config_exits_2_with_path() {
    let (code, _, err) = run(&["conjugate", "--config", "/nonexistent/cfg.toml", "--k", "1", "--y", "0"]);
    assert_eq!(code, EXIT_USAGE);
    assert!(err.contains("/nonexistent/cfg.toml"), "{err}");
}

#[test]
fn reversed_flow_grid_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), STD);
    let (code, _, err) = run(&["flow", "--config", &cfg, "--y", "0", "--kmin", "2", "--kmax", "1", "--points", "5"]);
    assert_eq!(code, EXIT_USAGE);
    assert!(err.contains("kmax must exceed kmin"), "{err}");
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(run(&["nonsense"]).0, EXIT_USAGE);
    assert_eq!(run(&["conjugate", "--k", "1"]).0, EXIT_USAGE);
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), STD);
    let (code, _, err) = run(&["conjugate", "--config", &cfg, "--k", "1", "--y", "0,1"]);
    assert_eq!(code, EXIT_USAGE);
    assert!(err.contains("dimension 1"), "{err}");
    let bad = write_config(dir.path(), &STD.replace("w = [1.0]", "w = [1.0]\nextra = 1"));
    let (code, _, err) = run(&["conjugate", "--config", &bad, "--k", "1", "--y", "0"]);
    assert_eq!(code, EXIT_USAGE);
    assert!(err.contains("extra"), "{err}");
    assert_eq!(run(&["--help"]).0, EXIT_OK);
}

#[test]
fn conjugate_prints_closed_form_record() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), STD);
    let (code, out, _) = run(&["conjugate", "--config", &cfg, "--k", "1", "--y", "-0.5"]);
    assert_eq!(code, EXIT_OK);
    let v: Value = serde_json::from_str(out.trim()).unwrap();
    // μ_1 = N(1/2, 1/2): V*(y) = (y − 1/2)², Γ = V* − ½(y − 1)².
    let vstar = v["vstar"].as_f64().unwrap();
    assert!((vstar - 1.0).abs() < 1e-10, "{v}");
    assert!((v["gamma"].as_f64().unwrap() - (1.0 - 0.5 * 2.25)).abs() < 1e-10);
    assert!((v["phi"][0].as_f64().unwrap() + 2.0).abs() < 1e-10);
    assert_eq!(v["converged"], Value::Bool(true));
    let report = std::fs::read_to_string(dir.path().join("out/conjugate.jsonl")).unwrap();
    let line: Value = serde_json::from_str(report.trim()).unwrap();
    assert_eq!(line["command"], "conjugate");
    assert_eq!(line["inputs"]["config_hash"].as_str().unwrap().len(), 64);
    assert_eq!(line["records"][0], v);
    assert!(line["provenance"]["timestamp"].as_u64().is_some());
}

#[test]
fn flow_writes_csv_svg_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), STD);
    let svg_path = dir.path().join("plots/flow.svg");
    let (code, out, err) = run(&[
        "flow",
        "--config",
        &cfg,
        "--y",
        "0",
        "--kmin",
        "0.2",
        "--kmax",
        "2",
        "--points",
        "10",
        "--svg",
        svg_path.to_str().unwrap(),
    ]);
    assert_eq!(code, EXIT_OK, "{err}");
    assert!(out.contains("max residual"));
    let csv = std::fs::read_to_string(dir.path().join("out/flow.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("k,gamma,lhs,rhs,residual,trace,subtract"));
    let rows: Vec<Vec<f64>> = lines.map(|l| l.split(',').map(|x| x.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 10);
    for r in &rows {
        let k = r[0];
        assert!((r[1] + 0.5 * k * k / (1.0 + k * k)).abs() < 1e-10);
        assert!(r[4] <= 1e-6);
    }
    // Γ_k(0) decreases toward the OM value −½.
    assert!(rows.windows(2).all(|w| w[1][1] < w[0][1]));
    let svg_text = std::fs::read_to_string(svg_path).unwrap();
    assert_eq!(svg_text.matches("<polyline").count(), 2);
}

#[test]
fn om_and_boundary_records() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), STD);
    let (code, out, err) =
        run(&["om", "--config", &cfg, "--a", "0", "--b", "1", "--svg", dir.path().join("om.svg").to_str().unwrap()]);
    assert_eq!(code, EXIT_OK, "{err}");
    let v: Value = serde_json::from_str(out.trim()).unwrap();
    assert!((v["value"]["value"].as_f64().unwrap() - 0.5).abs() < 0.05, "{v}");
    assert!(dir.path().join("om.svg").exists());

    let (code, out, err) = run(&["boundary", "--config", &cfg, "--y", "0", "--kmax", "40", "--points", "10"]);
    assert_eq!(code, EXIT_OK, "{err}");
    let v: Value = serde_json::from_str(out.trim()).unwrap();
    assert!((v["gamma_limit"].as_f64().unwrap() + 0.5).abs() < 1e-6);
    assert!(v["gap"].as_f64().unwrap() < 0.05);
    assert_eq!(v["gammas"].as_array().unwrap().len(), 10);
}

#[test]
fn om_with_disjoint_balls_reports_undefined() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &STD.replace("samples = 400000", "samples = 1000"));
    let (code, out, err) = run(&["om", "--config", &cfg, "--a", "40", "--b", "-40", "--radii", "0.2,0.1"]);
    assert_eq!(code, EXIT_OK, "{err}");
    let v: Value = serde_json::from_str(out.trim()).unwrap();
    assert_eq!(v["value"], "undefined");
}

#[test]
fn repeated_runs_append_identical_records() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        &STD.replace("[estimator]\nnodes_per_dim = 32", "[estimator]\nmode = \"monte_carlo\"\nsamples = 20000\nseed = 4"),
    );
    for _ in 0..2 {
        assert_eq!(run(&["conjugate", "--config", &cfg, "--k", "0.5", "--y", "0.3"]).0, EXIT_OK);
    }
    let text = std::fs::read_to_string(dir.path().join("out/conjugate.jsonl")).unwrap();
    let lines: Vec<String> = text.lines().map(|l| without_timestamp(l).unwrap()).collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0], lines[1]);
    assert!(lines[0].contains("\"seed\":4"));
}

#[test]
fn check_subset_passes_and_reports() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), STD);
    let (code, out, _) = run(&["check", "--config", &cfg, "--only", "1,3"]);
    assert_eq!(code, EXIT_OK, "{out}");
    assert_eq!(out.lines().filter(|l| l.starts_with("PASS")).count(), 2);
    assert!(dir.path().join("out/check.jsonl").exists());
    assert_eq!(run(&["check", "--only", "13"]).0, EXIT_USAGE);
}

#[test]
fn failing_flow_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    // A target far outside the support of a tightly regulated measure stalls the tilt solve.
    let cfg = write_config(dir.path(), &STD.replace("[[1.0]]\nw", "[[1.0]]\nschedule = \"expm1\"\nw"));
    let (code, _, err) = run(&["flow", "--config", &cfg, "--y", "1e7", "--kmin", "0.5", "--kmax", "30", "--points", "3"]);
    assert_eq!(code, EXIT_FAILURE, "{err}");
}

#[test]
fn shipped_configs_round_trip() {
    for name in ["gaussian.toml", "quartic_mc.toml", "gaussian_2d.toml"] {
        let loaded = config::load(&repo_config(name)).unwrap();
        let echoed = config::parse(&loaded.config.to_toml()).unwrap();
        assert_eq!(loaded.config, echoed, "{name}");
        assert_eq!(loaded.hash, echoed.hash());
    }
}

#[test]
fn render_svg_examples() {
    let one = svg::Chart {
        title: "x".into(),
        x_label: "k".into(),
        y_label: "v".into(),
        series: vec![svg::Series::new("a", vec![(0.0, 0.0), (1.0, 1.0)])],
    };
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("a.svg");
    svg::render_to(&one, &p).unwrap();
    assert_eq!(std::fs::read_to_string(&p).unwrap().matches("<polyline").count(), 1);
    assert!(svg::render_to(&one, Path::new("/proc/forbidden/a.svg")).is_err());
}
