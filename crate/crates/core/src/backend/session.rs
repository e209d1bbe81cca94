use std::sync::atomic::{AtomicU32, AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{Backend, BackendError, BackendErrorKind, CompletionRequest, CompletionResponse};

/// How a session treats transient failures.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    /// Extra attempts after a GATEWAY or TIMEOUT before the error is surfaced.
    pub retries: u32,
    pub backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            retries: 1,
            backoff: Duration::from_millis(500),
        }
    }
}

impl RetryPolicy {
    pub fn immediate() -> Self {
        Self {
            retries: 1,
            backoff: Duration::ZERO,
        }
    }
}

/// One attempt against the backend, as seen by the session.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallRecord {
    pub sequence: u64,
    /// Agent instantiation this attempt belongs to.
    pub instance: u64,
    pub attempt: u32,
    pub request: CompletionRequest,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<BackendErrorKind>,
}

impl CallRecord {
    pub fn role_tag(&self) -> &str {
        role_tag_of(&self.request.call_tag)
    }
}

/// Extracts the role part of a call tag (`verifier_a#3@stmt` -> `verifier_a`).
pub fn role_tag_of(call_tag: &str) -> &str {
    call_tag
        .split(['#', '@'])
        .next()
        .unwrap_or(call_tag)
}

#[derive(Debug, Default)]
struct CallLogInner {
    records: Mutex<Vec<CallRecord>>,
    next_instance: AtomicU64,
}

/// Append-only log of backend attempts, shareable between sessions so a
/// whole pipeline can be audited in one place.
#[derive(Debug, Clone, Default)]
pub struct CallLog {
    inner: Arc<CallLogInner>,
}

impl CallLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn new_instance(&self) -> u64 {
        self.inner.next_instance.fetch_add(1, Ordering::Relaxed) + 1
    }

    /// Number of agent instances created so far.
    pub fn instances(&self) -> u64 {
        self.inner.next_instance.load(Ordering::Relaxed)
    }

    fn push(&self, mut record: CallRecord) {
        let mut records = self.inner.records.lock().expect("call log poisoned");
        record.sequence = records.len() as u64 + 1;
        records.push(record);
    }

    pub fn records(&self) -> Vec<CallRecord> {
        self.inner.records.lock().expect("call log poisoned").clone()
    }

    pub fn len(&self) -> usize {
        self.inner.records.lock().expect("call log poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// First attempts whose role tag equals `role_tag`.
    pub fn count_role(&self, role_tag: &str) -> usize {
        self.inner
            .records
            .lock()
            .expect("call log poisoned")
            .iter()
            .filter(|r| r.attempt == 1 && r.role_tag() == role_tag)
            .count()
    }
}

/// Per-run view of a backend: transient-error accounting plus the call log.
///
/// The gateway counter starts at zero for every session and only grows.
pub struct Session {
    backend: Arc<dyn Backend>,
    policy: RetryPolicy,
    budget: u32,
    gateway_errors: AtomicU32,
    log: CallLog,
}

impl Session {
    pub fn new(backend: Arc<dyn Backend>, policy: RetryPolicy, budget: u32) -> Self {
        Self::with_log(backend, policy, budget, CallLog::new())
    }

    pub fn with_log(backend: Arc<dyn Backend>, policy: RetryPolicy, budget: u32, log: CallLog) -> Self {
        Self {
            backend,
            policy,
            budget,
            gateway_errors: AtomicU32::new(0),
            log,
        }
    }

    pub fn backend(&self) -> &Arc<dyn Backend> {
        &self.backend
    }

    pub fn log(&self) -> &CallLog {
        &self.log
    }

    pub fn budget(&self) -> u32 {
        self.budget
    }

    /// Cumulative GATEWAY and TIMEOUT errors observed in this session,
    /// including ones that a retry later recovered from.
    pub fn gateway_error_count(&self) -> u32 {
        self.gateway_errors.load(Ordering::SeqCst)
    }

    pub fn budget_exhausted(&self) -> bool {
        self.gateway_error_count() >= self.budget
    }

    pub fn new_instance(&self) -> u64 {
        self.log.new_instance()
    }

    /// Issues `request` for agent `instance`, retrying transient failures
    /// per the policy while budget remains.
    pub async fn complete(
        &self,
        instance: u64,
        request: &CompletionRequest,
    ) -> Result<CompletionResponse, BackendError> {
        request.validate()?;
        let mut attempt = 0;
        loop {
            attempt += 1;
            let result = self.backend.complete(request).await;
            self.log.push(CallRecord {
                sequence: 0,
                instance,
                attempt,
                request: request.clone(),
                response: result.as_ref().ok().map(|r| r.text.clone()),
                error: result.as_ref().err().map(|e| e.kind),
            });
            match result {
                Ok(response) => {
                    if response.text.is_empty() {
                        tracing::warn!(call_tag = %request.call_tag, "backend returned empty content");
                    }
                    return Ok(response);
                }
                Err(err) if err.counts_against_budget() => {
                    let seen = self.gateway_errors.fetch_add(1, Ordering::SeqCst) + 1;
                    tracing::warn!(
                        call_tag = %request.call_tag,
                        kind = %err.kind,
                        gateway_errors = seen,
                        budget = self.budget,
                        "transient backend error"
                    );
                    if seen >= self.budget || attempt > self.policy.retries {
                        return Err(err);
                    }
                    if !self.policy.backoff.is_zero() {
                        tokio::time::sleep(self.policy.backoff).await;
                    }
                }
                Err(err) => return Err(err),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{FaultInjector, ScriptedBackend};

    fn request(tag: &str) -> CompletionRequest {
        CompletionRequest {
            system_prompt: "s".into(),
            user_prompt: "u".into(),
            model_name: "m".into(),
            call_tag: tag.into(),
        }
    }

    fn echo() -> Arc<dyn Backend> {
        Arc::new(ScriptedBackend::builder().any("ok").build().unwrap())
    }

    #[tokio::test]
    async fn fresh_session_counts_zero() {
        let s = Session::new(echo(), RetryPolicy::immediate(), 5);
        assert_eq!(s.gateway_error_count(), 0);
        assert!(!s.budget_exhausted());
    }

    #[tokio::test]
    async fn one_retry_recovers_and_is_counted() {
        let backend = Arc::new(FaultInjector::new(echo()).gateway_on_calls(1..=1));
        let s = Session::new(backend, RetryPolicy::immediate(), 5);
        let instance = s.new_instance();
        let r = s.complete(instance, &request("prover_first#1")).await.unwrap();
        assert_eq!(r.text, "ok");
        assert_eq!(s.gateway_error_count(), 1);
        let log = s.log().records();
        assert_eq!(log.len(), 2);
        assert_eq!(log[1].attempt, 2);
        assert_eq!(log[0].instance, log[1].instance);
    }

    #[tokio::test]
    async fn surfaces_after_one_retry() {
        let backend = Arc::new(FaultInjector::new(echo()).gateway_on_calls(1..=3));
        let s = Session::new(backend, RetryPolicy::immediate(), 5);
        let err = s.complete(s.new_instance(), &request("x")).await.unwrap_err();
        assert_eq!(err.kind, BackendErrorKind::Gateway);
        assert_eq!(s.gateway_error_count(), 2);
        let err = s.complete(s.new_instance(), &request("x")).await;
        assert!(err.is_ok(), "third failure then success");
        assert_eq!(s.gateway_error_count(), 3);
    }

    #[tokio::test]
    async fn counter_is_monotone_and_stops_at_budget() {
        let backend = Arc::new(FaultInjector::new(echo()).gateway_on_calls(1..=100));
        let s = Session::new(backend, RetryPolicy::immediate(), 3);
        let mut last = 0;
        for _ in 0..5 {
            let _ = s.complete(s.new_instance(), &request("x")).await;
            let now = s.gateway_error_count();
            assert!(now >= last);
            last = now;
            if s.budget_exhausted() {
                break;
            }
        }
        assert_eq!(s.gateway_error_count(), 3);
    }

    #[tokio::test]
    async fn non_retryable_errors_are_not_counted_or_retried() {
        let backend = Arc::new(
            FaultInjector::new(echo()).fail_calls(1..=1, BackendError::auth("401")),
        );
        let s = Session::new(backend, RetryPolicy::immediate(), 5);
        let err = s.complete(s.new_instance(), &request("x")).await.unwrap_err();
        assert_eq!(err.kind, BackendErrorKind::Auth);
        assert_eq!(s.gateway_error_count(), 0);
        assert_eq!(s.log().len(), 1);
    }

    #[test]
    fn role_tag_parsing() {
        assert_eq!(role_tag_of("verifier_a#3@stmt-1"), "verifier_a");
        assert_eq!(role_tag_of("seeder@goal"), "seeder");
        assert_eq!(role_tag_of("refiner"), "refiner");
    }
}
