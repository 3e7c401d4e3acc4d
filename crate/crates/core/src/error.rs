use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("non-finite value produced by {op}")]
    NonFinite { op: &'static str },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("missing file: {}", .0.display())]
    MissingFile(PathBuf),

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}:{line}: {msg}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("ragged feature rows: line {line} has {found} columns, expected {expected}")]
    RaggedFeatures {
        line: usize,
        expected: usize,
        found: usize,
    },

    #[error("label out of range: line {line} has label {value}")]
    LabelOutOfRange { line: usize, value: i64 },

    #[error("node ids are not 0-based contiguous: id {id} but only {n} nodes")]
    NonContiguousIds { id: i64, n: usize },

    #[error("class {class} has {available} nodes, {required} required")]
    ClassTooSmall {
        class: usize,
        available: usize,
        required: usize,
    },

    #[error("graph is complete: no non-edge left to insert")]
    GraphComplete,

    #[error("prompt variant mismatch: expected {expected}, got {found}")]
    VariantMismatch {
        expected: &'static str,
        found: String,
    },

    #[error("spiking variant requires a spiking config")]
    MissingSpikingConfig,

    #[error("encoder must be frozen before downstream tuning")]
    EncoderNotFrozen,

    #[error("encoder is frozen")]
    EncoderFrozen,

    #[error("encoder parameters changed during tuning (checksum {before} -> {after})")]
    FreezeViolation { before: String, after: String },

    #[error("graph has no edges")]
    EmptyEdgeSet,

    #[error("non-finite training loss at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("no records to report")]
    NoRecords,

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
