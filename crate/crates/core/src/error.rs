use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{file}:{line}: {msg}")]
    Parse {
        file: String,
        line: usize,
        msg: String,
    },

    #[error("{file}: {msg}")]
    Invalid { file: String, msg: String },

    #[error("{op}: shape mismatch {lhs:?} vs {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: (usize, usize),
        rhs: (usize, usize),
    },

    #[error("{op}: produced a non-finite value")]
    NonFinite { op: &'static str },

    #[error("{op}: {msg}")]
    Domain { op: &'static str, msg: String },

    #[error("config: {0}")]
    Config(String),

    #[error("{0}")]
    Invariant(String),

    /// A failure inside the condensation loop at restart `k`, epoch `t`.
    #[error("restart {k}, epoch {t}: {source}")]
    Epoch {
        k: usize,
        t: usize,
        #[source]
        source: Box<Error>,
    },

    /// A failure while matching one class.
    #[error("class {class}: {source}")]
    Class {
        class: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(file: impl Into<String>, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            file: file.into(),
            line,
            msg: msg.into(),
        }
    }

    pub(crate) fn invalid(file: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Invalid {
            file: file.into(),
            msg: msg.into(),
        }
    }
}
