use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("non-finite value produced by {0}")]
    NonFinite(String),

    #[error("integration became unstable: {0}")]
    Instability(String),

    #[error("unsupported system: {0}")]
    Unsupported(String),

    #[error("training diverged: {0}")]
    Divergence(String),

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("invalid configuration key `{key}`: {msg}")]
    Config { key: String, msg: String },

    #[error("failed to parse {}: {msg}", file.display())]
    Parse { file: PathBuf, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Divergence(_) | Error::NonFinite(_) | Error::Instability(_) => 2,
            Error::Contract(_) | Error::Dimension(_) | Error::Config { .. } => 3,
            _ => 1,
        }
    }

    pub(crate) fn parse(file: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        Error::Parse {
            file: file.into(),
            msg: msg.into(),
        }
    }
}
