use thiserror::Error;

/// One Newton iteration of a tilt solve.
#[derive(Debug, Clone, PartialEq)]
pub struct NewtonStep {
    pub iteration: usize,
    /// `‖mean − target‖` before the step.
    pub residual: f64,
    /// Accepted line-search fraction.
    pub step_fraction: f64,
    pub phi_norm: f64,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite input: {0}")]
    Domain(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("evaluation overflow: {reason} at x = {point:?}")]
    Evaluation { reason: String, point: Vec<f64> },

    #[error("sampler error: {0}")]
    Sampler(String),

    #[error("tilt solve did not converge after {iterations} iterations (last residual {last_residual:e})")]
    NonConvergence { iterations: usize, last_residual: f64, trace: Vec<NewtonStep> },

    #[error("tilted covariance is ill-conditioned (eigenvalue ratio {ratio:e})")]
    IllConditioned { ratio: f64 },

    #[error("target lies outside the numeric interior of the mean domain (|phi| = {phi_norm:e}, residual {residual:e})")]
    OutsideDomain { phi_norm: f64, residual: f64 },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("consistency failure: {0}")]
    Consistency(String),

    #[error("insufficient ball hits: {0}")]
    InsufficientHits(String),

    #[error("regulator integrability check failed: {0}")]
    Integrability(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn ensure_finite(what: &str, values: &[f64]) -> Result<()> {
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::Domain(format!("{what}[{i}] = {}", values[i])));
    }
    Ok(())
}
