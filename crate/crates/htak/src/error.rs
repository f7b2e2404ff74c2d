use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by dataset ingestion and kernel construction.
#[derive(Debug, Error)]
pub enum Error {
    #[error("missing required file: {path}")]
    MissingFile { path: PathBuf },

    #[error("{file}:{line}: {message}")]
    Format {
        file: String,
        line: usize,
        message: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Raised when every graph in a collection is edgeless, so no finite
    /// inter-vertex distance exists and no embedding dimension can be chosen.
    #[error("no finite eccentricity: every graph in the collection is edgeless")]
    NoFiniteEccentricity,
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(file: &str, line: usize, message: impl Into<String>) -> Self {
        Error::Format {
            file: file.to_string(),
            line,
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
