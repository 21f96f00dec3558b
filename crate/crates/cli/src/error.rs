use std::path::{Path, PathBuf};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Core(fedwsm::Error),
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }

    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    /// 2 for configuration errors, 3 for I/O and data-file errors, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Io { .. } | CliError::Core(fedwsm::Error::Io { .. } | fedwsm::Error::Parse { .. }) => 3,
            CliError::Core(fedwsm::Error::Config(_)) => 2,
            CliError::Core(_) => 1,
        }
    }

    /// The message without the error-kind prefix.
    pub fn message(&self) -> String {
        match self {
            CliError::Config(m) => m.clone(),
            other => other.to_string(),
        }
    }
}

impl From<fedwsm::Error> for CliError {
    fn from(e: fedwsm::Error) -> Self {
        match e {
            fedwsm::Error::Config(m) => CliError::Config(m),
            other => CliError::Core(other),
        }
    }
}
