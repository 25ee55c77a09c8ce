//! Append-only JSON-lines reports.

use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use serde_json::Value;

use crate::CliError;

pub const GIT_DESCRIBE: &str = env!("FRGFLOW_GIT_DESCRIBE");

#[derive(Debug, Clone, Serialize)]
pub struct Inputs {
    pub config_hash: String,
    pub args: Value,
}

#[derive(Debug, Clone, Serialize)]
pub struct Provenance {
    /// Estimator seed in Monte Carlo mode.
    pub seed: Option<u64>,
    /// Small-ball sampler seed, for commands that use one.
    pub ball_seed: Option<u64>,
    pub git_describe: String,
    pub timestamp: u64,
}

impl Provenance {
    pub fn new(seed: Option<u64>, ball_seed: Option<u64>) -> Self {
        let timestamp = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        Self { seed, ball_seed, git_describe: GIT_DESCRIBE.to_string(), timestamp }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub command: String,
    pub inputs: Inputs,
    pub records: Vec<Value>,
    pub provenance: Provenance,
}

impl Report {
    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }

    /// Appends one line to `<dir>/<command>.jsonl` and returns that path.
    pub fn append_to(&self, dir: &Path) -> Result<PathBuf, CliError> {
        std::fs::create_dir_all(dir).map_err(CliError::io(dir))?;
        let path = dir.join(format!("{}.jsonl", self.command));
        let mut f = OpenOptions::new().create(true).append(true).open(&path).map_err(CliError::io(&path))?;
        writeln!(f, "{}", self.to_line()).map_err(CliError::io(&path))?;
        Ok(path)
    }
}

/// A report line with `provenance.timestamp` removed, for reproducibility comparisons.
pub fn without_timestamp(line: &str) -> Result<String, serde_json::Error> {
    let mut v: Value = serde_json::from_str(line)?;
    if let Some(p) = v.get_mut("provenance").and_then(Value::as_object_mut) {
        p.remove("timestamp");
    }
    serde_json::to_string(&v)
}

/// JSON number or `null` for non-finite values.
pub fn num(x: f64) -> Value {
    serde_json::Number::from_f64(x).map(Value::Number).unwrap_or(Value::Null)
}

pub fn nums(xs: &[f64]) -> Value {
    Value::Array(xs.iter().map(|&x| num(x)).collect())
}
