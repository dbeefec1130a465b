use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {source_name} at line {line}: {message}")]
    Parse {
        source_name: String,
        line: usize,
        message: String,
    },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("gateway error: {0}")]
    Gateway(String),

    #[error("backend returned an empty response")]
    EmptyResponse,

    #[error("no parseable JSON object in model output")]
    StructuredParse { raw: String },

    #[error("invalid cluster count: k={k} with n={n} items")]
    InvalidK { k: usize, n: usize },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("retrieval error: {0}")]
    Retrieval(String),

    #[error("undefined ratio: {0}")]
    UndefinedRatio(String),

    #[error("index format error: {0}")]
    Format(String),

    #[error("internal error: {0}")]
    Internal(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
