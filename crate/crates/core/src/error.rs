use std::io;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("argument error: {0}")]
    Argument(String),

    #[error("index error: {index} out of range for length {len}")]
    Index { index: usize, len: usize },

    #[error("invalid UTF-8 at byte offset {offset}")]
    Encoding { offset: usize },

    #[error("corpus error: {0}")]
    Corpus(String),

    #[error("example rejected: {0}")]
    ExampleRejected(String),

    #[error("format error at line {line}: {message}")]
    Format { line: usize, message: String },

    #[error("schedule error: {0}")]
    Schedule(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("determinism error: loss evaluated to {first} then {second}")]
    Determinism { first: f64, second: f64 },

    #[error("degenerate vector: {0}")]
    DegenerateVector(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },

    #[error("JSON error at line {line}: {source}")]
    Json {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub fn io(path: impl AsRef<std::path::Path>, source: io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    pub(crate) fn format(line: usize, message: impl Into<String>) -> Self {
        Error::Format {
            line,
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
