//! Error type shared across the crate.

use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Caller violated a precondition (bad shapes, bad config values, ...).
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// NaN/Inf or solver divergence.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// Underlying I/O failure, with the path that triggered it.
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// File exists but its contents are not what we expect.
    #[error("{}: {message}", path.display())]
    Format { path: PathBuf, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        // io::ErrorKind::InvalidData is how stream readers signal malformed
        // contents; everything else is a plain I/O failure.
        let path = path.into();
        if source.kind() == std::io::ErrorKind::InvalidData {
            Error::Format {
                path,
                message: source.to_string(),
            }
        } else {
            Error::Io { path, source }
        }
    }

    /// Process exit code for the CLI: 2 bad input, 3 numerical, 4 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidArgument(_) => 2,
            Error::Numerical(_) => 3,
            Error::Io { .. } | Error::Format { .. } => 4,
        }
    }
}

pub(crate) fn format_err(msg: impl Into<String>) -> std::io::Error {
    std::io::Error::new(std::io::ErrorKind::InvalidData, msg.into())
}
