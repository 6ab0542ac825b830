use thiserror::Error;

use crate::checkpoint::CheckpointError;
use crate::config::ConfigError;
use crate::xyz::XyzError;

#[derive(Debug, Error)]
pub enum LkmError {
    #[error(transparent)]
    Core(#[from] lkm_core::Error),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Xyz(#[from] XyzError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("table csv line {line}: {message}")]
    Table { line: usize, message: String },
    #[error("{0}")]
    Invalid(String),
}

impl LkmError {
    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}

pub type Result<T, E = LkmError> = std::result::Result<T, E>;
