//! Crate-wide error type and exit-code mapping for the CLI.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("index out of range: {0}")]
    IndexOutOfRange(String),
    #[error("conflicting signs for pair (user {user}, item {item})")]
    ConflictingSigns { user: usize, item: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("matrix is not symmetric: {0}")]
    NotSymmetric(String),
    #[error("eigendecomposition failed: {0}")]
    EigenFailed(String),
    #[error("empty result: {0}")]
    Empty(String),
    #[error("training diverged: {0}")]
    Diverged(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("config error: {0}")]
    Config(String),
}

impl Error {
    /// Stable CLI exit code: 1 input error, 2 empty result, 3 numeric failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Empty(_) => 2,
            Error::Diverged(_) | Error::Numeric(_) | Error::EigenFailed(_) => 3,
            _ => 1,
        }
    }
}
