use std::path::PathBuf;

use crate::codec::EncodeConflict;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid index: {0}")]
    InvalidIndex(String),

    #[error("{} conflicting link(s) while encoding", .0.len())]
    Conflict(Vec<EncodeConflict>),

    #[error("corrupt tagging: {0}")]
    CorruptTagging(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite value in {tensor}")]
    Numeric { tensor: String },

    #[error("cannot align mention {mention:?}: {reason}")]
    Alignment { mention: String, reason: String },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("schema mismatch: {0}")]
    Schema(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
