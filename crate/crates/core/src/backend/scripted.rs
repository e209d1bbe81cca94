use std::fmt;
use std::sync::Arc;
use std::time::Duration;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Backend, BackendError, BackendErrorKind, CompletionRequest, CompletionResponse};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Matcher {
    Any,
    TagContains(String),
    PromptContains(String),
    All(Vec<Matcher>),
}

impl Matcher {
    pub fn matches(&self, request: &CompletionRequest) -> bool {
        match self {
            Matcher::Any => true,
            Matcher::TagContains(s) => request.call_tag.contains(s.as_str()),
            Matcher::PromptContains(s) => {
                request.user_prompt.contains(s.as_str()) || request.system_prompt.contains(s.as_str())
            }
            Matcher::All(ms) => ms.iter().all(|m| m.matches(request)),
        }
    }
}

type ReplyFn = dyn Fn(&CompletionRequest) -> Result<String, BackendError> + Send + Sync;

#[derive(Clone)]
pub enum Reply {
    Text(String),
    Error(BackendError),
    /// Computed from the request alone.
    With(Arc<ReplyFn>),
}

impl Reply {
    pub fn with<F>(f: F) -> Self
    where
        F: Fn(&CompletionRequest) -> Result<String, BackendError> + Send + Sync + 'static,
    {
        Reply::With(Arc::new(f))
    }
}

impl fmt::Debug for Reply {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Reply::Text(t) => f.debug_tuple("Text").field(t).finish(),
            Reply::Error(e) => f.debug_tuple("Error").field(e).finish(),
            Reply::With(_) => f.write_str("With(<fn>)"),
        }
    }
}

impl From<&str> for Reply {
    fn from(s: &str) -> Self {
        Reply::Text(s.to_string())
    }
}

impl From<String> for Reply {
    fn from(s: String) -> Self {
        Reply::Text(s)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ScriptError {
    #[error("script has no rules")]
    Empty,
    #[error("script rule {0}: needs a reply or an error, not both")]
    Reply(usize),
}

/// Serializable rule for scripts loaded from disk.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptRule {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tag_contains: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt_contains: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reply: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<BackendErrorKind>,
}

/// Deterministic backend answering from an ordered rule list.
///
/// The first rule whose matcher accepts the request wins. Replies depend
/// on the request only, so the same request sequence always yields the
/// same response sequence. A request no rule matches fails as MALFORMED.
#[derive(Debug, Clone)]
pub struct ScriptedBackend {
    id: String,
    rules: Vec<(Matcher, Reply)>,
}

impl ScriptedBackend {
    pub fn new(rules: Vec<(Matcher, Reply)>) -> Result<Self, ScriptError> {
        if rules.is_empty() {
            return Err(ScriptError::Empty);
        }
        Ok(Self {
            id: "scripted".to_string(),
            rules,
        })
    }

    pub fn builder() -> ScriptBuilder {
        ScriptBuilder::default()
    }

    pub fn from_rules(rules: &[ScriptRule]) -> Result<Self, ScriptError> {
        let mut compiled = Vec::with_capacity(rules.len());
        for (i, rule) in rules.iter().enumerate() {
            let mut ms = Vec::new();
            if let Some(t) = &rule.tag_contains {
                ms.push(Matcher::TagContains(t.clone()));
            }
            if let Some(p) = &rule.prompt_contains {
                ms.push(Matcher::PromptContains(p.clone()));
            }
            let matcher = match ms.len() {
                0 => Matcher::Any,
                1 => ms.pop().unwrap(),
                _ => Matcher::All(ms),
            };
            let reply = match (&rule.reply, rule.error) {
                (Some(text), None) => Reply::Text(text.clone()),
                (None, Some(kind)) => Reply::Error(BackendError::new(kind, "scripted fault")),
                _ => return Err(ScriptError::Reply(i + 1)),
            };
            compiled.push((matcher, reply));
        }
        Self::new(compiled)
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }
}

#[derive(Debug, Default)]
pub struct ScriptBuilder {
    rules: Vec<(Matcher, Reply)>,
}

impl ScriptBuilder {
    pub fn rule(mut self, matcher: Matcher, reply: impl Into<Reply>) -> Self {
        self.rules.push((matcher, reply.into()));
        self
    }

    pub fn on_tag(self, fragment: &str, reply: impl Into<Reply>) -> Self {
        self.rule(Matcher::TagContains(fragment.to_string()), reply)
    }

    pub fn on_prompt(self, fragment: &str, reply: impl Into<Reply>) -> Self {
        self.rule(Matcher::PromptContains(fragment.to_string()), reply)
    }

    pub fn any(self, reply: impl Into<Reply>) -> Self {
        self.rule(Matcher::Any, reply)
    }

    pub fn build(self) -> Result<ScriptedBackend, ScriptError> {
        ScriptedBackend::new(self.rules)
    }
}

#[async_trait]
impl Backend for ScriptedBackend {
    fn id(&self) -> &str {
        &self.id
    }

    async fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, BackendError> {
        let (_, reply) = self
            .rules
            .iter()
            .find(|(m, _)| m.matches(request))
            .ok_or_else(|| {
                BackendError::new(
                    BackendErrorKind::Malformed,
                    format!("no script rule matches call {:?}", request.call_tag),
                )
            })?;
        let text = match reply {
            Reply::Text(t) => t.clone(),
            Reply::Error(e) => return Err(e.clone()),
            Reply::With(f) => f(request)?,
        };
        Ok(CompletionResponse {
            text,
            latency: Duration::ZERO,
            backend_id: self.id.clone(),
        })
    }
}
