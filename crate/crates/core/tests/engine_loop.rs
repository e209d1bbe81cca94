mod common;

use std::sync::Arc;

use common::*;
use ttvr_core::backend::{BackendError, FaultInjector};
use ttvr_core::engine::ProgressEvent;
use ttvr_core::{ProofStatus, RunConfig};

#[tokio::test]
async fn revise_prompt_carries_the_previous_rejection() {
    let engine = engine(loop_backend(Some(3)));
    let trace = engine.run_ttvr(&statement("t"), &RunConfig::default()).await.unwrap();
    assert_eq!(trace.difficulty_index, 3);
    trace.check_invariants().unwrap();
    let revise: Vec<_> = engine
        .call_log()
        .records()
        .into_iter()
        .filter(|r| r.request.call_tag.starts_with("prover_revise"))
        .collect();
    assert_eq!(revise.len(), 2);
    assert!(revise[0].request.user_prompt.contains("iteration 1 is not justified"));
    assert!(revise[1].request.user_prompt.contains("iteration 2 is not justified"));
    assert!(revise[1].request.user_prompt.contains("(attempt 2)"));
}

#[tokio::test]
async fn one_verifier_config_skips_the_second_verifier() {
    let engine = engine(loop_backend(Some(1)));
    let config = RunConfig::default().with_verifier_count(1).unwrap();
    engine.run_ttvr(&statement("t"), &config).await.unwrap();
    assert_eq!(engine.call_log().count_role("verifier_b"), 0);
}

#[tokio::test]
async fn non_transient_error_aborts_at_once() {
    let faulty = FaultInjector::new(Arc::new(loop_backend(Some(1))))
        .fail_calls(2..=2, BackendError::auth("bad key"));
    let trace = engine(faulty).run_ttvr(&statement("t"), &RunConfig::default()).await.unwrap();
    assert_eq!(trace.terminal, ProofStatus::Aborted);
    assert_eq!(trace.gateway_errors, 0);
    assert!(trace.error.is_some());
}

#[tokio::test]
async fn progress_events_end_with_the_terminal() {
    let (tx, mut rx) = tokio::sync::mpsc::unbounded_channel();
    let engine = engine(loop_backend(Some(2))).with_events(tx);
    engine.run_ttvr(&statement("t"), &RunConfig::default()).await.unwrap();
    drop(engine);
    let mut events = Vec::new();
    while let Some(e) = rx.recv().await {
        events.push(e);
    }
    let starts = events
        .iter()
        .filter(|e| matches!(e, ProgressEvent::IterationStart { .. }))
        .count();
    assert_eq!(starts, 2);
    assert!(matches!(
        events.last(),
        Some(ProgressEvent::Terminal { terminal: ProofStatus::ProvedUncertified, difficulty_index: 2, .. })
    ));
}

#[tokio::test]
async fn batch_keeps_input_order() {
    let engine = engine(loop_backend(Some(1)));
    let statements: Vec<_> = (0..6).map(|i| statement(&format!("s{i}"))).collect();
    let results = engine.run_batch(&statements, &RunConfig::default(), 3).await;
    let ids: Vec<_> = results.iter().map(|r| r.as_ref().unwrap().statement.id.clone()).collect();
    assert_eq!(ids, ["s0", "s1", "s2", "s3", "s4", "s5"]);
}
