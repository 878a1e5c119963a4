use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read or write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("design error: {0}")]
    Design(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("fit did not converge: {0}")]
    NonConvergence(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Coarse category used for CLI exit codes and messages.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Io { .. } => "I/O",
            Error::Parse { .. } | Error::Validation(_) | Error::InvalidArgument(_) => "validation",
            Error::Design(_) => "design",
            Error::Numerical(_) | Error::NonConvergence(_) => "non-convergence",
            Error::Serde(_) => "I/O",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
