use std::time::{Duration, Instant};

use async_trait::async_trait;
use serde::Deserialize;
use serde_json::json;

use super::{Backend, BackendError, BackendErrorKind, CompletionRequest, CompletionResponse};

#[derive(Debug, Clone)]
pub struct LiveConfig {
    /// Base URL; `/chat/completions` is appended.
    pub endpoint: String,
    /// Read from the environment by the caller; never written anywhere.
    pub api_key: Option<String>,
    pub request_timeout: Duration,
    /// Log request and response bodies (credential redacted).
    pub verbose: bool,
}

/// Chat-completions client. Each call sends exactly one system and one
/// user message.
pub struct LiveBackend {
    client: reqwest::Client,
    config: LiveConfig,
    id: String,
}

impl LiveBackend {
    pub fn new(config: LiveConfig) -> Result<Self, BackendError> {
        let client = reqwest::Client::builder()
            .timeout(config.request_timeout)
            .build()
            .map_err(|e| BackendError::other(format!("building http client: {e}")))?;
        let id = format!("live:{}", config.endpoint);
        Ok(Self { client, config, id })
    }

    fn url(&self) -> String {
        format!("{}/chat/completions", self.config.endpoint.trim_end_matches('/'))
    }

    fn redact(&self, text: &str) -> String {
        match &self.config.api_key {
            Some(key) if !key.is_empty() => text.replace(key.as_str(), "[REDACTED]"),
            _ => text.to_string(),
        }
    }
}

/// Maps a non-success HTTP status onto the error taxonomy.
pub(crate) fn classify_status(status: u16, body: &str) -> BackendError {
    let detail = format!("HTTP {status}: {}", truncate(body, 500));
    match status {
        502..=504 => BackendError::gateway(detail),
        408 => BackendError::timeout(detail),
        401 | 403 => BackendError::auth(detail),
        _ => BackendError::other(detail),
    }
}

fn classify_transport(err: &reqwest::Error) -> BackendError {
    if err.is_timeout() {
        BackendError::timeout(err.to_string())
    } else if err.is_decode() {
        BackendError::malformed(err.to_string())
    } else {
        BackendError::other(err.to_string())
    }
}

fn truncate(s: &str, max: usize) -> &str {
    match s.char_indices().nth(max) {
        Some((i, _)) => &s[..i],
        None => s,
    }
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ChoiceMessage,
}

#[derive(Deserialize)]
struct ChoiceMessage {
    #[serde(default)]
    content: Option<String>,
}

#[async_trait]
impl Backend for LiveBackend {
    fn id(&self) -> &str {
        &self.id
    }

    async fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, BackendError> {
        let body = json!({
            "model": request.model_name,
            "messages": [
                {"role": "system", "content": request.system_prompt},
                {"role": "user", "content": request.user_prompt},
            ],
        });
        if self.config.verbose {
            tracing::debug!(
                target: "ttvr::wire",
                call_tag = %request.call_tag,
                body = %self.redact(&body.to_string()),
                "request"
            );
        }
        let started = Instant::now();
        let mut builder = self.client.post(self.url()).json(&body);
        if let Some(key) = &self.config.api_key {
            builder = builder.bearer_auth(key);
        }
        let response = builder.send().await.map_err(|e| classify_transport(&e))?;
        let status = response.status();
        let text = response.text().await.map_err(|e| classify_transport(&e))?;
        if self.config.verbose {
            tracing::debug!(
                target: "ttvr::wire",
                call_tag = %request.call_tag,
                status = status.as_u16(),
                body = %self.redact(&text),
                "response"
            );
        }
        if !status.is_success() {
            return Err(classify_status(status.as_u16(), &self.redact(&text)));
        }
        let parsed: ChatResponse = serde_json::from_str(&text).map_err(|e| {
            BackendError::new(BackendErrorKind::Malformed, format!("decoding completion: {e}"))
        })?;
        let choice = parsed
            .choices
            .into_iter()
            .next()
            .ok_or_else(|| BackendError::malformed("completion has no choices"))?;
        Ok(CompletionResponse {
            text: choice.message.content.unwrap_or_default(),
            latency: started.elapsed(),
            backend_id: self.id.clone(),
        })
    }
}
