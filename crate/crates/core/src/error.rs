use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: parse error at byte {byte}: {message}")]
    Parse {
        path: String,
        byte: usize,
        message: String,
    },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("attribute error for sample `{id}`: {message}")]
    Attribute { id: String, message: String },

    #[error("missing prediction for sample `{0}`")]
    MissingPrediction(String),

    #[error("empty group: {0}")]
    EmptyGroup(String),

    #[error("{0}")]
    Statistics(String),

    #[error("cannot access {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for this failure class: 2 usage/configuration,
    /// 3 validation, 4 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Io { .. } => 4,
            _ => 3,
        }
    }
}
