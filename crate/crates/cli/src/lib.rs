//! Command-line front end for `frg_flow`: TOML configuration, JSON-lines
//! reports, CSV flow tables, SVG plots and the bundled acceptance suite.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod oracle;
pub mod report;
pub mod suite;
pub mod svg;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use thiserror::Error;

pub use config::{LoadedConfig, RunConfig};
pub use suite::{run_suite, CriterionResult};

/// Exit status for a successful run.
pub const EXIT_OK: i32 = 0;
/// Exit status when a checked property fails or a computation errors.
pub const EXIT_FAILURE: i32 = 1;
/// Exit status for unusable input: bad flags, bad configuration, bad domain.
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("{0}")]
    Library(#[from] frg_flow::Error),
    #[error("io error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("property failure: {0}")]
    Property(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        use frg_flow::Error as E;
        match self {
            CliError::Usage(_) | CliError::Config(_) => EXIT_USAGE,
            CliError::Library(E::Config(_) | E::InvalidModel(_) | E::Domain(_) | E::Precondition(_)) => EXIT_USAGE,
            _ => EXIT_FAILURE,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> CliError {
        let path = path.into();
        move |source| CliError::Io { path, source }
    }
}

#[derive(Debug, Parser)]
#[command(name = "frg-flow", version, about = "Regulated conjugates, Wetterich flow and Onsager-Machlup checks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve V_k*(y) and Γ_k(y) at one point.
    Conjugate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, allow_hyphen_values = true)]
        k: f64,
        /// Comma-separated target point.
        #[arg(long, allow_hyphen_values = true)]
        y: String,
    },
    /// Run the flow along an evenly spaced k grid and compare dΓ/dk with the Wetterich right side.
    Flow {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, allow_hyphen_values = true)]
        y: String,
        #[arg(long, allow_hyphen_values = true)]
        kmin: f64,
        #[arg(long, allow_hyphen_values = true)]
        kmax: f64,
        #[arg(long)]
        points: usize,
        /// CSV output path (default `<output.dir>/flow.csv`).
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long)]
        svg: Option<PathBuf>,
    },
    /// Estimate the Onsager-Machlup value F(a, b) from small-ball ratios.
    Om {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, allow_hyphen_values = true)]
        a: String,
        #[arg(long, allow_hyphen_values = true)]
        b: String,
        /// Comma-separated radii, strictly decreasing (default from `[onsager]`).
        #[arg(long)]
        radii: Option<String>,
        #[arg(long)]
        svg: Option<PathBuf>,
    },
    /// Compare lim Γ_k(y) with F(w, y) on the grid k_i = kmax·i/points.
    Boundary {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, allow_hyphen_values = true)]
        y: String,
        #[arg(long, allow_hyphen_values = true)]
        kmax: f64,
        #[arg(long)]
        points: usize,
        #[arg(long)]
        svg: Option<PathBuf>,
    },
    /// Run the acceptance suite.
    Check {
        /// Optional config; when given it is validated and its output dir receives `check.jsonl`.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Comma-separated criterion numbers to run.
        #[arg(long)]
        only: Option<String>,
    },
}

/// Parses `args` (including the program name) and runs the command.
pub fn dispatch<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            if code == EXIT_OK {
                let _ = write!(out, "{text}");
            } else {
                let _ = write!(err, "{text}");
            }
            return code;
        }
    };
    match commands::run(cli.command, out, err) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

/// Caps the global rayon pool at `FRGFLOW_THREADS` when that variable is set.
pub fn init_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var("FRGFLOW_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Config(format!("FRGFLOW_THREADS must be a positive integer, got {raw:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Config(format!("cannot size thread pool: {e}")))
}

/// Parses a comma-separated list of floats.
pub fn parse_list(name: &str, text: &str) -> Result<Vec<f64>, CliError> {
    let values = text
        .split(',')
        .map(|s| s.trim())
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<f64>().map_err(|_| CliError::Usage(format!("--{name}: cannot parse {s:?} as a number"))))
        .collect::<Result<Vec<_>, _>>()?;
    if values.is_empty() {
        return Err(CliError::Usage(format!("--{name} is empty")));
    }
    if let Some(v) = values.iter().find(|v| !v.is_finite()) {
        return Err(CliError::Usage(format!("--{name}: non-finite entry {v}")));
    }
    Ok(values)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lists_accept_negatives_and_spaces() {
        assert_eq!(parse_list("y", "-0.5, 1,2e-1").unwrap(), vec![-0.5, 1.0, 0.2]);
        assert!(parse_list("y", "").is_err());
        assert!(parse_list("y", "1,x").is_err());
        assert!(parse_list("y", "inf").is_err());
    }

    #[test]
    fn library_errors_map_to_exit_codes() {
        let cfg: CliError = frg_flow::Error::Config("kmax must exceed kmin".into()).into();
        assert_eq!(cfg.exit_code(), EXIT_USAGE);
        let nc: CliError = frg_flow::Error::Consistency("x".into()).into();
        assert_eq!(nc.exit_code(), EXIT_FAILURE);
    }
}
