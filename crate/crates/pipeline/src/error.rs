use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = PipelineError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Ct(#[from] ctkit::CtError),

    #[error(transparent)]
    Nn(#[from] ctkit_nn::NnError),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {msg}")]
    Manifest { path: PathBuf, msg: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(
        "end-to-end network needs {dense_params} dense parameters ({bytes} bytes at 4 bytes each), \
         above the limit of {limit}; raise the limit or shrink the architecture"
    )]
    MemoryGuard { dense_params: u128, bytes: u128, limit: u128 },

    #[error("training diverged at epoch {epoch}, batch {batch}: loss is {loss}")]
    Diverged { epoch: usize, batch: usize, loss: f64 },

    #[error("missing model: {0}")]
    MissingModel(String),
}

impl PipelineError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        PipelineError::Io { path: path.into(), source }
    }
}
