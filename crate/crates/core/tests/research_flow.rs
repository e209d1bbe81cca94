mod common;

use common::*;
use ttvr_core::backend::{role_tag_of, BackendError, CompletionRequest, Matcher, Reply, ScriptedBackend};
use ttvr_core::research::{
    CandidateOrigin, ResearchGoal, ResearchOptions, ResearchPipeline, Resolution, NOT_SELECTED_REASON,
};

fn pipeline(backend: ScriptedBackend, options: ResearchOptions) -> ResearchPipeline {
    ResearchPipeline::new(engine(backend), options)
}

#[tokio::test]
async fn notation_reaches_every_prover_prompt() {
    let p = pipeline(graph::backend(), ResearchOptions::default());
    let goal = ResearchGoal::new(graph::GOAL, "graph theory").unwrap();
    let report = p.run_research(&goal).await.unwrap();
    assert!(report.notation.contains("colour of a vertex"));
    let records = p.engine().call_log().records();
    let provers: Vec<_> = records
        .iter()
        .filter(|r| r.request.call_tag.starts_with("prover"))
        .collect();
    assert!(!provers.is_empty());
    assert!(provers.iter().all(|r| r.request.user_prompt.contains("colour of a vertex")));
    let dropped: Vec<_> = report.candidates.iter().filter(|c| !c.kept).collect();
    assert_eq!(dropped.len(), 3);
    assert!(dropped.iter().all(|c| c.drop_reason.as_deref() != Some(NOT_SELECTED_REASON)));
}

#[tokio::test]
async fn predictor_runs_only_when_enabled() {
    let backend = ScriptedBackend::builder()
        .rule(
            Matcher::Any,
            Reply::with(|req: &CompletionRequest| {
                Ok(match role_tag_of(&req.call_tag) {
                    "predictor" => "CONJECTURES:\n1. Extra\n   Premise: G is a tree\n   Conclusion: G is bipartite\n".into(),
                    "refiner" => "CLASSIFICATION: PROVES\n".into(),
                    "context_preparer" => "NOTATION:\nnone\nKEEP: 1-15\n".into(),
                    "verifier_a" | "verifier_b" => "VERDICT: ACCEPT".into(),
                    _ => return graph::reply(req),
                })
            }),
        )
        .build()
        .unwrap();
    let options = ResearchOptions {
        use_predictor: true,
        ..ResearchOptions::default()
    };
    let p = pipeline(backend, options);
    let report = p
        .run_research(&ResearchGoal::new(graph::GOAL, "graph theory").unwrap())
        .await
        .unwrap();
    assert_eq!(p.engine().call_log().count_role("predictor"), 1);
    assert_eq!(report.candidates.len(), 15);
    assert!(report.candidates.iter().any(|c| c.origin == CandidateOrigin::Predictor));
    assert_eq!(report.count(Resolution::Proved), 15);
}

#[tokio::test]
async fn failing_preparer_keeps_every_candidate() {
    let backend = ScriptedBackend::builder()
        .rule(
            Matcher::Any,
            Reply::with(|req: &CompletionRequest| match role_tag_of(&req.call_tag) {
                "context_preparer" => Ok("I cannot decide.".into()),
                _ => graph::reply(req),
            }),
        )
        .build()
        .unwrap();
    let p = pipeline(backend, ResearchOptions::default());
    let report = p
        .run_research(&ResearchGoal::new(graph::GOAL, "").unwrap())
        .await
        .unwrap();
    assert_eq!(report.candidates.iter().filter(|c| c.kept).count(), 14);
    assert!(!report.warnings.is_empty());
    assert_eq!(report.settled.len(), 14);
}

#[tokio::test]
async fn refiner_failure_leaves_the_candidate_unsettled() {
    let backend = ScriptedBackend::builder()
        .rule(
            Matcher::Any,
            Reply::with(|req: &CompletionRequest| match role_tag_of(&req.call_tag) {
                "refiner" => Err(BackendError::auth("key revoked")),
                _ => graph::reply(req),
            }),
        )
        .build()
        .unwrap();
    let p = pipeline(backend, ResearchOptions::default());
    let report = p
        .run_research(&ResearchGoal::new(graph::GOAL, "").unwrap())
        .await
        .unwrap();
    assert_eq!(report.count(Resolution::Unsettled), 11);
    assert!(report
        .settled
        .iter()
        .filter(|s| s.trace.terminal == ttvr_core::ProofStatus::ProvedUncertified)
        .all(|s| s.note.is_some()));
}
