use std::time::Duration;

use thiserror::Error;

/// Errors raised anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    /// Arguments outside an operation's domain: shape mismatches, invalid
    /// parameters, out-of-range indices.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("zero has no multiplicative inverse")]
    ZeroInverse,

    /// Gaussian elimination found no pivot in `column`.
    #[error("matrix is singular (no pivot in column {column})")]
    Singular { column: usize },

    /// Two received packets disagree about the same linear combination.
    #[error("integrity error: {0}")]
    Integrity(String),

    /// Operation called in a state that does not permit it.
    #[error("state error: {0}")]
    State(String),

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("timed out after {0:?}")]
    Timeout(Duration),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}
