use thiserror::Error;

use crate::consistency::NodeGains;

/// Errors raised by the game engine.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid scenario configuration. `path` names the offending field.
    #[error("invalid configuration at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    Dimension { expected: usize, actual: usize },

    /// A Riccati solution left the representable range while integrating
    /// backward; no feedback equilibrium exists on the full horizon.
    #[error("finite escape in Riccati solution at t = {time} (max |entry| = {magnitude:e})")]
    FiniteEscape { time: f64, magnitude: f64 },

    /// The consistency optimizer hit its iteration budget without meeting the
    /// gradient tolerance. Carries the best gains found.
    #[error("consistency optimizer did not converge at t = {time} after {iterations} iterations (theta = {theta:e})")]
    IterationLimit {
        time: f64,
        iterations: usize,
        theta: f64,
        best: Box<NodeGains>,
    },

    #[error("interaction mismatch: {0}")]
    ModeMismatch(String),

    #[error("time {time} outside [0, {horizon}]")]
    OutOfRange { time: f64, horizon: f64 },

    #[error("player {0} has no visibility constraint")]
    Unconstrained(String),

    #[error("trajectory does not match the time grid: {0}")]
    GridMismatch(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }

    /// True for failures of the numerics (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::FiniteEscape { .. } | Error::IterationLimit { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
