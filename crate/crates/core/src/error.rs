use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, IfaaError>;

#[derive(Debug, Error)]
pub enum IfaaError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: row {row}, column '{column}': {message}")]
    Parse {
        path: PathBuf,
        row: usize,
        column: String,
        message: String,
    },

    #[error("duplicate {kind} id '{id}'")]
    DuplicateId { kind: &'static str, id: String },

    #[error("column '{0}' not found")]
    MissingColumn(String),

    #[error("invalid value for `{field}`: {message}")]
    InvalidConfig { field: String, message: String },

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    /// Phase 1 left no covariate-independent taxon to serve as a reference.
    #[error("set B is empty: {0}")]
    EmptySetB(String),

    #[error("serialization: {0}")]
    Serialization(String),
}

impl IfaaError {
    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        IfaaError::InvalidConfig {
            field: field.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        IfaaError::Io {
            path: path.into(),
            source,
        }
    }
}

impl From<serde_json::Error> for IfaaError {
    fn from(e: serde_json::Error) -> Self {
        IfaaError::Serialization(e.to_string())
    }
}
