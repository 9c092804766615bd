use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = NnError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("layer {index} ({kind}): {msg}")]
    Layer { index: usize, kind: &'static str, msg: String },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("backward called without a cached forward pass")]
    MissingCache,

    #[error("invalid architecture: {0}")]
    Architecture(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("checkpoint format: {0}")]
    Format(String),
}
