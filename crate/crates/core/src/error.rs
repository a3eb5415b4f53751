use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the solvers, builders and file readers.
#[derive(Debug, Error)]
pub enum Error {
    /// Row `row` (0-based) of the system matrix is identically zero.
    #[error("row {row} of the system matrix is zero")]
    ZeroRow { row: usize },

    #[error("dimension mismatch in {context}: expected {expected}, got {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    /// Input exceeds a desk-scale cap of an oracle or dense routine.
    #[error("{context}: size {size} exceeds the cap of {cap}")]
    Size {
        context: &'static str,
        size: usize,
        cap: usize,
    },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid parameter: {0}")]
    Param(String),

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn dims(context: &'static str, expected: usize, found: usize) -> Self {
        Error::DimensionMismatch {
            context,
            expected,
            found,
        }
    }
}
