use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, MiclError>;

#[derive(Debug, Error)]
pub enum MiclError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("record {record}: {message}")]
    Schema { record: String, message: String },

    #[error("{count} malformed record(s) in {path}:\n{report}")]
    MalformedDataset {
        path: PathBuf,
        count: usize,
        report: String,
    },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("sample {id} is not augmentable with {strategy}: {reason}")]
    NotAugmentable {
        id: String,
        strategy: String,
        reason: String,
    },

    #[error("token id {id} outside vocabulary of size {vocab}")]
    TokenOutOfVocab { id: u32, vocab: usize },

    #[error("edge ({0}, {1}) references a node outside 0..{2}")]
    EdgeOutOfRange(usize, usize, usize),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("serialization: {0}")]
    Json(#[from] serde_json::Error),
}

impl MiclError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        MiclError::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(self, MiclError::Numerical(_))
    }
}
