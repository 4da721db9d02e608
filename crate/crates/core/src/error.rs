use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A scene, mask, selection or job file does not follow its schema.
    #[error("format error: {0}")]
    Format(String),

    #[error("I/O error at byte offset {offset}: {source}")]
    Truncated { offset: u64, source: io::Error },

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("degenerate selection: {0}")]
    DegenerateSelection(String),

    #[error("no first hits under mask")]
    NoFirstHits,

    #[error("mask provider `{provider}` failed: {message}")]
    Provider { provider: String, message: String },

    #[error("image codec error: {0}")]
    Image(#[from] image::ImageError),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn argument(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }

    pub(crate) fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }
}
