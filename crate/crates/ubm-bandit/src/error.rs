//! Crate-wide error type.

use thiserror::Error;

/// Convenience alias used throughout the crate.
pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors surfaced by bandit construction, fitting, evaluation, and I/O.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument violated a documented precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A vector or matrix dimension did not match the expected size.
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// An offline-evaluation propensity denominator was zero: the logged data
    /// never displays this arm in the given candidate group, so its reward
    /// cannot be reweighted.
    #[error("zero propensity for arm {arm} in group [{group}]")]
    ZeroPropensity { group: String, arm: u64 },

    /// A file or stream had contents that could not be parsed.
    #[error("parse error: {0}")]
    Parse(String),

    /// An experiment configuration failed validation; every violation is
    /// listed, one per line.
    #[error("invalid configuration:\n{}", .0.join("\n"))]
    Config(Vec<String>),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Shorthand for [`Error::InvalidArgument`] with a formatted message.
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
