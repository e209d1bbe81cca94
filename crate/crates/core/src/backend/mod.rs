//! Completion backends.
//!
//! A [`Backend`] answers one stateless system+user prompt pair. Nothing
//! about a previous call is visible to the next: there is no message
//! history in [`CompletionRequest`] and no conversation handle to pass.
//! Per-run accounting (transient-error budget, call log) lives in
//! [`Session`], never in the backend.

use std::fmt;
use std::time::Duration;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use thiserror::Error;

mod fault;
mod live;
mod scripted;
mod session;

pub use fault::FaultInjector;
pub use live::{LiveBackend, LiveConfig};
pub use scripted::{Matcher, Reply, ScriptError, ScriptRule, ScriptedBackend};
pub use session::{role_tag_of, CallLog, CallRecord, RetryPolicy, Session};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub system_prompt: String,
    pub user_prompt: String,
    pub model_name: String,
    pub call_tag: String,
}

impl CompletionRequest {
    pub fn validate(&self) -> Result<(), BackendError> {
        if self.system_prompt.trim().is_empty() || self.user_prompt.trim().is_empty() {
            return Err(BackendError::malformed(format!(
                "{}: system and user prompts must both be non-empty",
                self.call_tag
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompletionResponse {
    pub text: String,
    #[serde(with = "duration_ms")]
    pub latency: Duration,
    pub backend_id: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum BackendErrorKind {
    Gateway,
    Timeout,
    Auth,
    Malformed,
    Other,
}

impl fmt::Display for BackendErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Gateway => "GATEWAY",
            Self::Timeout => "TIMEOUT",
            Self::Auth => "AUTH",
            Self::Malformed => "MALFORMED",
            Self::Other => "OTHER",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
#[error("{kind}: {detail}")]
pub struct BackendError {
    pub kind: BackendErrorKind,
    pub detail: String,
    pub retryable: bool,
}

impl BackendError {
    /// Builds an error with the retry flag implied by its kind: only
    /// GATEWAY and TIMEOUT are transient.
    pub fn new(kind: BackendErrorKind, detail: impl Into<String>) -> Self {
        Self {
            kind,
            detail: detail.into(),
            retryable: matches!(kind, BackendErrorKind::Gateway | BackendErrorKind::Timeout),
        }
    }

    pub fn gateway(detail: impl Into<String>) -> Self {
        Self::new(BackendErrorKind::Gateway, detail)
    }

    pub fn timeout(detail: impl Into<String>) -> Self {
        Self::new(BackendErrorKind::Timeout, detail)
    }

    pub fn auth(detail: impl Into<String>) -> Self {
        Self::new(BackendErrorKind::Auth, detail)
    }

    pub fn malformed(detail: impl Into<String>) -> Self {
        Self::new(BackendErrorKind::Malformed, detail)
    }

    pub fn other(detail: impl Into<String>) -> Self {
        Self::new(BackendErrorKind::Other, detail)
    }

    /// Errors that draw down a run's transient-failure budget.
    pub fn counts_against_budget(&self) -> bool {
        matches!(self.kind, BackendErrorKind::Gateway | BackendErrorKind::Timeout)
    }
}

#[async_trait]
pub trait Backend: Send + Sync {
    fn id(&self) -> &str;

    async fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, BackendError>;
}

pub(crate) mod duration_ms {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(d.as_millis() as u64)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        Ok(Duration::from_millis(u64::deserialize(d)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gateway_is_always_retryable() {
        assert!(BackendError::gateway("502").retryable);
        assert!(BackendError::timeout("t").retryable);
        assert!(!BackendError::auth("401").retryable);
        assert!(!BackendError::malformed("x").retryable);
        assert!(!BackendError::other("x").retryable);
    }

    #[test]
    fn empty_prompts_are_malformed() {
        let req = CompletionRequest {
            system_prompt: "sys".into(),
            user_prompt: " ".into(),
            model_name: "m".into(),
            call_tag: "t".into(),
        };
        assert_eq!(req.validate().unwrap_err().kind, BackendErrorKind::Malformed);
    }
}
