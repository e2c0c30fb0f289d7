use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by every fallible operation in the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// Malformed file contents or structured document.
    #[error("format error: {0}")]
    Format(String),
    /// A value outside the domain an operation accepts.
    #[error("domain error: {0}")]
    Domain(String),
    /// Inputs whose dimensions do not agree.
    #[error("shape error: {0}")]
    Shape(String),
    /// A graph edge naming a node that does not exist.
    #[error("reference error: {0}")]
    Reference(String),
    #[error("I/O error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
