//! Error types shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("missing file: {0}")]
    MissingFile(String),

    #[error("schema violation in {file} line {line}: {message}")]
    Schema {
        file: String,
        line: usize,
        message: String,
    },

    #[error("ragged trace: example {id} has {got} of {expected} checkpoints")]
    RaggedTrace {
        id: String,
        got: usize,
        expected: usize,
    },

    #[error("label out of range for example {id}: {label} >= {num_classes} classes")]
    LabelOutOfRange {
        id: String,
        label: usize,
        num_classes: usize,
    },

    #[error("checksum mismatch: bundle contents do not match meta.json")]
    ChecksumMismatch,

    #[error("invalid {what}: {message}")]
    Invalid { what: String, message: String },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("training diverged (non-finite loss) at step {step}")]
    Diverged { step: usize },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("undefined: {0}")]
    Undefined(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("json error in {path}: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub fn invalid(what: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Invalid {
            what: what.into(),
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
