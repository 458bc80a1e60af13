use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// State/mesh/profile dimensions do not line up.
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// An input failed validation before any computation started.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// An iterative solver ran out of iterations.
    #[error("{method} did not converge after {iterations} iterations (residual {residual:.3e})")]
    NonConvergence {
        method: &'static str,
        iterations: usize,
        residual: f64,
    },

    /// Unknown model identifier.
    #[error("unknown model id: {0}")]
    UnknownModel(String),

    /// External policy protocol failure (timeout, malformed reply, I/O).
    #[error("policy protocol error: {0}")]
    Protocol(String),

    /// Configuration file problems.
    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
