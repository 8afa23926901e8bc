use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("value outside domain: {0}")]
    Domain(String),

    #[error("invalid data: {0}")]
    Data(String),

    #[error("contract violated: {0}")]
    Contract(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("training diverged at epoch {epoch}: {reason}")]
    Training { epoch: usize, reason: String },

    #[error("cannot estimate {param}: {reason}")]
    Estimation { param: &'static str, reason: String },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("checkpoint version mismatch: file has version {found}, this build reads version {expected}")]
    Version { found: u32, expected: u32 },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Contract(_) | Error::Version { .. } => 2,
            Error::Data(_) | Error::Schema(_) | Error::Dimension(_) | Error::Domain(_) => 3,
            Error::Training { .. } | Error::Estimation { .. } | Error::Numerical(_) => 4,
            Error::Io { .. } => 1,
        }
    }
}
