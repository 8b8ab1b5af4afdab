use thiserror::Error;

/// Errors raised by the numerical routines and the experiment runner.
#[derive(Debug, Error)]
pub enum Error {
    #[error("state spaces differ: {left} vs {right} states")]
    MismatchedSpace { left: usize, right: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error(
        "negative probability {value:e} at t={t}, state {state}; reduce the time step (n_steps)"
    )]
    StepSize { t: f64, state: usize, value: f64 },

    #[error("fixed-point iteration did not converge after {} iterations (last distance {:e})", .distances.len(), .distances.last().copied().unwrap_or(f64::NAN))]
    NonConvergence { distances: Vec<f64> },

    #[error("outer loop oscillates between two flows (2-cycle) after {} iterations", .gaps.len())]
    Oscillation { gaps: Vec<f64> },

    #[error("rate {rate} exceeds thinning majorant {bound} at t={t}, state {state}; refine the time grid")]
    MajorantViolated {
        t: f64,
        state: usize,
        rate: f64,
        bound: f64,
    },

    #[error("jump {from}->{to} at t={t} is inactive in the reference Q-matrix")]
    InactiveJump { from: usize, to: usize, t: f64 },

    #[error("non-finite value in backward solve at node {node}, state {state}")]
    Overflow { node: usize, state: usize },

    #[error("non-positive value function {value:e} at node {node}, state {state}")]
    NonPositive { node: usize, state: usize, value: f64 },

    #[error("balanced decomposition undefined: zero denominator with numerator {numerator:e}")]
    Unbalanced { numerator: f64 },

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }

    pub(crate) fn invalid(message: impl Into<String>) -> Self {
        Error::InvalidParameter(message.into())
    }
}
