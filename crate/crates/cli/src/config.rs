//! TOML run configuration.

use std::path::{Path, PathBuf};

use frg_flow::measure::{EstimatorConfig, Monomial};
use frg_flow::{MeasureModel, Perturbation, Problem, RegulatorFamily, Schedule, SolveOptions};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub measure: MeasureSection,
    pub regulator: RegulatorSection,
    #[serde(default)]
    pub estimator: EstimatorSection,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub onsager: OnsagerSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeasureKindName {
    Gaussian,
    Perturbed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonomialSpec {
    pub coeff: f64,
    pub powers: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasureSection {
    pub kind: MeasureKindName,
    pub mean: Vec<f64>,
    pub covariance: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub monomials: Vec<MonomialSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleName {
    Linear,
    Quadratic,
    Expm1,
}

impl From<ScheduleName> for Schedule {
    fn from(s: ScheduleName) -> Self {
        match s {
            ScheduleName::Linear => Schedule::Linear,
            ScheduleName::Quadratic => Schedule::Quadratic,
            ScheduleName::Expm1 => Schedule::Expm1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegulatorSection {
    pub r0: Vec<Vec<f64>>,
    #[serde(default = "default_schedule")]
    pub schedule: ScheduleName,
    pub w: Vec<f64>,
}

fn default_schedule() -> ScheduleName {
    ScheduleName::Linear
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeName {
    Quadrature,
    MonteCarlo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EstimatorSection {
    pub mode: ModeName,
    pub nodes_per_dim: usize,
    pub samples: usize,
    pub seed: u64,
    pub streams: usize,
    pub dim_switch: usize,
}

impl Default for EstimatorSection {
    fn default() -> Self {
        Self {
            mode: ModeName::Quadrature,
            nodes_per_dim: frg_flow::measure::DEFAULT_NODES_PER_DIM,
            samples: 100_000,
            seed: 1,
            streams: 8,
            dim_switch: frg_flow::measure::DEFAULT_DIM_SWITCH,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverSection {
    fn default() -> Self {
        let d = SolveOptions::default();
        Self { tol: d.tol, max_iter: d.max_iter }
    }
}

/// Settings for the small-ball sampler used by `om` and `boundary`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OnsagerSection {
    pub samples: usize,
    pub seed: u64,
    pub streams: usize,
    pub window: usize,
    pub radii: Vec<f64>,
}

impl Default for OnsagerSection {
    fn default() -> Self {
        Self {
            samples: 1_000_000,
            seed: 7,
            streams: 16,
            window: frg_flow::onsager::DEFAULT_FIT_WINDOW,
            radii: vec![0.4, 0.3, 0.2, 0.1, 0.05],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    /// Report directory, relative to the config file.
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: PathBuf::from(".") }
    }
}

/// A parsed configuration with the location it was read from.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: RunConfig,
    pub path: PathBuf,
    pub hash: String,
}

impl LoadedConfig {
    pub fn report_dir(&self) -> PathBuf {
        let base = self.path.parent().unwrap_or(Path::new("."));
        base.join(&self.config.output.dir)
    }
}

pub fn load(path: &Path) -> Result<LoadedConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read config file {}: {e}", path.display())))?;
    let config = parse(&text).map_err(|e| match e {
        CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
        other => other,
    })?;
    let hash = config.hash();
    Ok(LoadedConfig { config, path: path.to_path_buf(), hash })
}

pub fn parse(text: &str) -> Result<RunConfig, CliError> {
    let config: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
    config.validate()?;
    Ok(config)
}

fn matrix(name: &str, rows: &[Vec<f64>], n: usize) -> Result<DMatrix<f64>, CliError> {
    if rows.len() != n {
        return Err(CliError::Config(format!("{name} has {} rows, expected {n}", rows.len())));
    }
    for (i, row) in rows.iter().enumerate() {
        if row.len() != n {
            return Err(CliError::Config(format!("{name} row {i} has {} entries, expected {n}", row.len())));
        }
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

fn config_err(section: &str) -> impl Fn(frg_flow::Error) -> CliError + '_ {
    move |e| CliError::Config(format!("[{section}] {e}"))
}

impl RunConfig {
    pub fn dim(&self) -> usize {
        self.measure.mean.len()
    }

    /// Checks everything that can be checked without building an estimator.
    pub fn validate(&self) -> Result<(), CliError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(CliError::Config(format!(
                "unsupported schema_version {}; this build reads version {SCHEMA_VERSION}",
                self.schema_version
            )));
        }
        let n = self.dim();
        if n == 0 {
            return Err(CliError::Config("measure.mean is empty".into()));
        }
        match (self.measure.kind, self.measure.monomials.is_empty()) {
            (MeasureKindName::Gaussian, false) => {
                return Err(CliError::Config("measure.monomials given for a gaussian measure".into()))
            }
            (MeasureKindName::Perturbed, true) => {
                return Err(CliError::Config("measure.kind = \"perturbed\" needs at least one measure.monomials entry".into()))
            }
            _ => {}
        }
        if self.regulator.w.len() != n {
            return Err(CliError::Config(format!("regulator.w has {} entries, expected {n}", self.regulator.w.len())));
        }
        self.model()?;
        self.family()?;
        self.estimator_config()?;
        if !(self.solver.tol > 0.0) || self.solver.max_iter == 0 {
            return Err(CliError::Config("solver.tol and solver.max_iter must be positive".into()));
        }
        let o = &self.onsager;
        if o.samples < 2 || o.streams == 0 || o.window < 2 {
            return Err(CliError::Config("onsager.samples must be >= 2, onsager.streams >= 1, onsager.window >= 2".into()));
        }
        Ok(())
    }

    pub fn model(&self) -> Result<MeasureModel, CliError> {
        let n = self.dim();
        let mean = DVector::from_vec(self.measure.mean.clone());
        let cov = matrix("measure.covariance", &self.measure.covariance, n)?;
        let err = config_err("measure");
        match self.measure.kind {
            MeasureKindName::Gaussian => MeasureModel::gaussian(mean, cov).map_err(err),
            MeasureKindName::Perturbed => {
                let terms =
                    self.measure.monomials.iter().map(|m| Monomial { coeff: m.coeff, powers: m.powers.clone() }).collect();
                let p = Perturbation::new(n, terms).map_err(&err)?;
                MeasureModel::perturbed(mean, cov, p).map_err(err)
            }
        }
    }

    pub fn family(&self) -> Result<RegulatorFamily, CliError> {
        let n = self.dim();
        let r0 = matrix("regulator.r0", &self.regulator.r0, n)?;
        RegulatorFamily::new(r0, self.regulator.schedule.into(), DVector::from_vec(self.regulator.w.clone()))
            .map_err(config_err("regulator"))
    }

    pub fn estimator_config(&self) -> Result<EstimatorConfig, CliError> {
        let e = &self.estimator;
        let cfg = match e.mode {
            ModeName::Quadrature => {
                if e.nodes_per_dim == 0 {
                    return Err(CliError::Config("estimator.nodes_per_dim must be positive".into()));
                }
                if self.dim() > e.dim_switch {
                    return Err(CliError::Config(format!(
                        "estimator.mode = \"quadrature\" in dimension {} exceeds estimator.dim_switch = {}",
                        self.dim(),
                        e.dim_switch
                    )));
                }
                EstimatorConfig::quadrature(e.nodes_per_dim)
            }
            ModeName::MonteCarlo => {
                if e.samples == 0 || e.streams == 0 {
                    return Err(CliError::Config("estimator.samples and estimator.streams must be positive".into()));
                }
                EstimatorConfig::monte_carlo(e.samples, e.seed, e.streams)
            }
        };
        Ok(cfg.with_dim_switch(e.dim_switch))
    }

    pub fn ball_config(&self) -> EstimatorConfig {
        let o = &self.onsager;
        EstimatorConfig::monte_carlo(o.samples, o.seed, o.streams)
    }

    pub fn solve_options(&self) -> SolveOptions {
        SolveOptions { tol: self.solver.tol, max_iter: self.solver.max_iter }
    }

    pub fn problem(&self) -> Result<Problem, CliError> {
        Problem::new(self.model()?, self.family()?, self.estimator_config()?).map_err(CliError::from)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    /// SHA-256 of the canonical JSON form, so formatting and comments do not matter.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("configuration serializes");
        hex::encode(Sha256::digest(&canonical))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const GAUSS: &str = r#"
schema_version = 1

[measure]
kind = "gaussian"
mean = [0.0]
covariance = [[1.0]]

[regulator]
r0 = [[1.0]]
w = [1.0]
"#;

    #[test]
    fn defaults_fill_optional_sections() {
        let c = parse(GAUSS).unwrap();
        assert_eq!(c.estimator.mode, ModeName::Quadrature);
        assert_eq!(c.regulator.schedule, ScheduleName::Linear);
        assert_eq!(c.onsager.window, 4);
    }

    #[test]
    fn unknown_keys_are_named() {
        let err = parse(&GAUSS.replace("w = [1.0]", "w = [1.0]\nweight = 2")).unwrap_err();
        assert!(err.to_string().contains("weight"), "{err}");
    }

    #[test]
    fn bad_shapes_name_the_entry() {
        let err = parse(&GAUSS.replace("r0 = [[1.0]]", "r0 = [[1.0, 0.0]]")).unwrap_err();
        assert!(err.to_string().contains("regulator.r0 row 0"), "{err}");
        let err = parse(&GAUSS.replace("schema_version = 1", "schema_version = 2")).unwrap_err();
        assert!(err.to_string().contains("schema_version"), "{err}");
        let err = parse(&GAUSS.replace("r0 = [[1.0]]", "r0 = [[-1.0]]")).unwrap_err();
        assert!(err.to_string().contains("[regulator]"), "{err}");
    }

    #[test]
    fn round_trip() {
        let c = parse(GAUSS).unwrap();
        let again = parse(&c.to_toml()).unwrap();
        assert_eq!(c, again);
        assert_eq!(c.hash(), again.hash());
    }
}
