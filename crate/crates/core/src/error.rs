use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, FpmError>;

#[derive(Debug, Error)]
pub enum FpmError {
    #[error("size mismatch: {0}")]
    Size(String),

    #[error("index out of range: {0}")]
    Range(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("spectral tile out of band: {0}")]
    OutOfBand(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Data { path: PathBuf, message: String },
}

impl FpmError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        FpmError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn data(path: impl Into<PathBuf>, message: impl ToString) -> Self {
        FpmError::Data {
            path: path.into(),
            message: message.to_string(),
        }
    }
}
