use std::path::PathBuf;

use thiserror::Error;

/// Maximum number of record violations reported by a failed validation.
pub const MAX_VIOLATIONS: usize = 20;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub record_id: String,
    pub field: String,
    pub message: String,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "record {}: field {}: {}", self.record_id, self.field, self.message)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed file {path}: {message}")]
    Malformed { path: PathBuf, message: String },

    #[error("codebook error: {0}")]
    Codebook(String),

    #[error("validation failed with {} violation(s): {}", .0.len(), format_violations(.0))]
    Validation(Vec<Violation>),

    #[error("synthesis error: {0}")]
    Synthesis(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("scenario error: {0}")]
    Scenario(String),

    #[error("lever extraction requires the transparent model (got {0})")]
    LeverScope(String),

    #[error("unknown model family {0:?}")]
    UnknownFamily(String),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

fn format_violations(v: &[Violation]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn malformed(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Malformed { path: path.into(), message: message.into() }
    }
}
