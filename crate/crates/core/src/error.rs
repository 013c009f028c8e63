use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the library and the command-line front end.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: {what} (expected {expected}, got {got})")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("{path}: line {line}, column {column}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        column: String,
        message: String,
    },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("cannot allocate design matrix: {required_bytes} bytes required")]
    Resource { required_bytes: usize },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code used by the CLI: 2 input, 3 numerical, 4 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidInput(_) | Error::DimensionMismatch { .. } | Error::Parse { .. } => 2,
            Error::Numerical(_) | Error::Resource { .. } => 3,
            Error::Io { .. } => 4,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
