use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the simulator.
#[derive(Debug, Error)]
pub enum Error {
    /// A configuration or argument value is invalid (bad shapes, out-of-range
    /// hyperparameters, inconsistent settings).
    #[error("configuration error: {0}")]
    Config(String),

    /// A data invariant was violated at run time, e.g. a WSM batch containing a
    /// label the client's class weights say is absent.
    #[error("invariant violation: {0}")]
    Invariant(String),

    /// A metric was requested where it is undefined (empty batch, single client).
    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    /// Malformed input file. `location` is a byte offset or a line number.
    #[error("parse error in {path}: {location}: {message}")]
    Parse {
        path: PathBuf,
        location: String,
        message: String,
    },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse_at_byte(path: impl Into<PathBuf>, offset: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            location: format!("byte {offset}"),
            message: msg.into(),
        }
    }

    pub(crate) fn parse_at_line(path: impl Into<PathBuf>, line: u64, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            location: format!("line {line}"),
            message: msg.into(),
        }
    }
}
