use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Error, Debug)]
pub enum Error {
    #[error("validation error: {0}")]
    Validation(String),

    #[error("format error at {location}: {message}")]
    Format { location: String, message: String },

    #[error("duplicate sample id {0:?}")]
    DuplicateId(String),

    #[error("unknown sample id {0:?}")]
    UnknownId(String),

    #[error("no ground-truth label for sample {0:?}; a human oracle is required")]
    OracleUnavailable(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("label set does not match the current display (missing: {missing:?}, unexpected: {unexpected:?})")]
    LabelMismatch {
        missing: Vec<String>,
        unexpected: Vec<String>,
    },

    #[error("session already finished")]
    Finished,

    #[error("unlabeled pool exhausted")]
    Exhausted,

    #[error("failed to load {path}: {message}")]
    Load { path: PathBuf, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::Validation(msg.into())
}
