//! Error type shared across the crate.

use thiserror::Error;

/// Errors raised by model construction, solvers and ingestion.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("unsupported operation: {0}")]
    Unsupported(String),
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("assumption violated: {0}")]
    Assumption(String),
    #[error("degenerate data: {0}")]
    Degenerate(String),
    #[error("fit did not converge: {0}")]
    NonConvergence(String),
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
