use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = CtError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum CtError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unphysical input: {0}")]
    Unphysical(String),

    #[error(
        "system matrix would have {rows}x{cols} = {cells} cells, above the limit of {limit}; \
         use the matrix-free forward_project/back_project instead"
    )]
    SizeGuard { rows: usize, cols: usize, cells: u128, limit: u128 },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {msg}")]
    Format { path: PathBuf, msg: String },
}

impl CtError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CtError::Io { path: path.into(), source }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        CtError::Format { path: path.into(), msg: msg.into() }
    }
}
