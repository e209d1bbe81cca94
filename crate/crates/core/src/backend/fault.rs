use std::collections::BTreeMap;
use std::ops::RangeInclusive;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use async_trait::async_trait;

use super::{Backend, BackendError, CompletionRequest, CompletionResponse};

/// Wraps a backend and fails chosen calls (1-based, counted across the
/// wrapper's lifetime) with a given error instead of forwarding them.
pub struct FaultInjector {
    inner: Arc<dyn Backend>,
    faults: BTreeMap<u64, BackendError>,
    calls: AtomicU64,
    id: String,
}

impl FaultInjector {
    pub fn new(inner: Arc<dyn Backend>) -> Self {
        let id = format!("fault({})", inner.id());
        Self {
            inner,
            faults: BTreeMap::new(),
            calls: AtomicU64::new(0),
            id,
        }
    }

    pub fn fail_calls(mut self, calls: RangeInclusive<u64>, error: BackendError) -> Self {
        for n in calls {
            self.faults.insert(n, error.clone());
        }
        self
    }

    pub fn gateway_on_calls(self, calls: RangeInclusive<u64>) -> Self {
        self.fail_calls(calls, BackendError::gateway("injected 502 bad gateway"))
    }

    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::SeqCst)
    }
}

#[async_trait]
impl Backend for FaultInjector {
    fn id(&self) -> &str {
        &self.id
    }

    async fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, BackendError> {
        let n = self.calls.fetch_add(1, Ordering::SeqCst) + 1;
        if let Some(err) = self.faults.get(&n) {
            return Err(err.clone());
        }
        self.inner.complete(request).await
    }
}
