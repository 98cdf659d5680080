use std::path::PathBuf;

/// Errors produced anywhere in the engine.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("duplicate document id {0}")]
    DuplicateDoc(String),

    #[error("unknown document id {0}")]
    UnknownDoc(String),

    #[error("{0}")]
    InvalidConfig(String),

    #[error("{op}: shape mismatch {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("no negative candidate for query {0}")]
    NoNegative(String),

    #[error("schema mismatch: {0}")]
    Schema(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            line,
            msg: msg.into(),
        }
    }

    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape {
            op,
            detail: detail.into(),
        }
    }
}
