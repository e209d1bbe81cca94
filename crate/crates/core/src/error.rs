use thiserror::Error;

use crate::model::ReviewDecision;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ModelError {
    #[error("invalid {type_name}: {reason}")]
    Invalid {
        type_name: &'static str,
        reason: String,
    },
    #[error("review already decided as {0:?}")]
    AlreadyDecided(ReviewDecision),
}

impl ModelError {
    pub(crate) fn invalid(type_name: &'static str, reason: impl Into<String>) -> Self {
        Self::Invalid {
            type_name,
            reason: reason.into(),
        }
    }
}

#[derive(Debug, Error)]
pub enum RecordError {
    #[error("line {line}: {source}")]
    Json {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("line {line}: unsupported schema_version {found} (expected {expected})")]
    SchemaVersion { line: usize, found: u64, expected: u32 },
    #[error("line {line}: {source}")]
    Model {
        line: usize,
        #[source]
        source: ModelError,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
