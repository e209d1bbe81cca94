//! Scripted fixtures shared by the integration tests.
#![allow(dead_code)]

use std::sync::Arc;

use ttvr_core::agents::Agents;
use ttvr_core::backend::{
    role_tag_of, Backend, BackendError, CompletionRequest, Reply, RetryPolicy, ScriptedBackend,
};
use ttvr_core::{Engine, StatementSource, TheoremStatement};

pub const QUOTE: &str = "then n^2 - 1 = 4k(k + 1)";

/// Iteration number in a `role#iteration@subject` tag.
pub fn iteration_of(tag: &str) -> Option<u32> {
    let rest = tag.split_once('#')?.1;
    rest.split('@').next()?.parse().ok()
}

pub fn subject_of(tag: &str) -> Option<&str> {
    tag.split_once('@').map(|(_, s)| s)
}

pub fn proof_text(iteration: u32) -> String {
    format!(
        "Step 1. Write n = 2k + 1 for an integer k.\n\
         Step 2. Squaring, then n^2 - 1 = 4k(k + 1) holds (attempt {iteration}).\n\
         Step 3. One of k and k + 1 is even, so 8 divides n^2 - 1."
    )
}

pub fn reject_text(note: &str) -> String {
    format!("VERDICT: REJECT\nPOSITION: Step 2 | \"{QUOTE}\"\nEVIDENCE: {note}")
}

pub fn statement(id: &str) -> TheoremStatement {
    TheoremStatement::user(
        id,
        vec!["n is an odd integer".into(), "n > 1".into()],
        "n^2 - 1 is divisible by 8",
    )
    .unwrap()
}

/// Prover and verifiers for one statement. Verifier A rejects every
/// iteration before `accept_at` and accepts from then on; `None` never
/// accepts. Verifier B always accepts.
pub fn loop_backend(accept_at: Option<u32>) -> ScriptedBackend {
    ScriptedBackend::builder()
        .rule(
            ttvr_core::backend::Matcher::Any,
            Reply::with(move |req: &CompletionRequest| {
                let i = iteration_of(&req.call_tag).unwrap_or(0);
                Ok(match role_tag_of(&req.call_tag) {
                    "prover_first" | "prover_revise" => proof_text(i),
                    "verifier_a" => match accept_at {
                        Some(k) if i >= k => "VERDICT: ACCEPT".into(),
                        _ => reject_text(&format!("the bound in iteration {i} is not justified")),
                    },
                    "verifier_b" => "VERDICT: ACCEPT".into(),
                    other => return Err(BackendError::malformed(format!("unexpected role {other}"))),
                })
            }),
        )
        .build()
        .unwrap()
}

pub fn engine(backend: impl Backend + 'static) -> Engine {
    engine_arc(Arc::new(backend))
}

pub fn engine_arc(backend: Arc<dyn Backend>) -> Engine {
    Engine::new(Agents::default(), backend).with_retry(RetryPolicy::immediate())
}

pub fn research_statement(id: &str, premises: &[&str], conclusion: &str) -> TheoremStatement {
    TheoremStatement::new(
        id,
        premises.iter().map(|p| p.to_string()).collect(),
        conclusion,
        StatementSource::ResearchMode,
    )
    .unwrap()
}

/// Graph-theory shaped research fixture: 14 reviewed conjectures, 11 kept,
/// 9 refuted and 2 never accepted.
pub mod graph {
    use super::*;

    pub const GOAL: &str = "edge weightings that separate adjacent vertex sums";
    pub const DISPROOF: &str = "Step 1. Take two disjoint triangles joined by one edge.\nStep 2. Its edges admit no labelling with the required property.\nStep 3. Hence the conjecture fails for this graph.";

    pub fn reviewer_output() -> String {
        let mut out = String::from("CONJECTURES:\n");
        for i in 1..=14 {
            out.push_str(&format!(
                "{i}. Conjecture {i}\n   Premise: G is a connected graph with at least {} vertices\n   Premise: G has no isolated edge\n   Conclusion: the edges of G admit a weighting from {{1, ..., {}}} that distinguishes adjacent vertices\n",
                i + 2,
                i + 1
            ));
        }
        out
    }

    pub fn preparer_output() -> &'static str {
        "NOTATION:\nFor an edge weighting w, the colour of a vertex v is the sum of w over the edges at v.\nKEEP: 1-11\nDROP: 12 | solution already known\nDROP: 13 | solution already known\nDROP: 14 | solved in 2024\n"
    }

    fn candidate_number(req: &CompletionRequest) -> Option<u32> {
        subject_of(&req.call_tag)?.strip_prefix("lit-")?.parse().ok()
    }

    /// Scripted answer of every role in the fixture.
    pub fn reply(req: &CompletionRequest) -> Result<String, BackendError> {
        let n = candidate_number(req).unwrap_or(0);
        Ok(match role_tag_of(&req.call_tag) {
            "seeder" => "DEFINITIONS:\nA k-weighting of G assigns a weight in {1, ..., k} to every edge.\nSTATEMENTS:\n1. The 1-2-3 statement\n   Premise: G is a graph without isolated edges\n   Conclusion: G admits a vertex-colouring 3-weighting\n".into(),
            "literature_reviewer" => reviewer_output(),
            "context_preparer" => preparer_output().into(),
            "prover_first" | "prover_revise" => DISPROOF.into(),
            "verifier_a" | "verifier_b" if n <= 9 => "VERDICT: ACCEPT".into(),
            "verifier_a" | "verifier_b" => "VERDICT: REJECT\nPOSITION: Step 2 | \"admit no labelling with the required property\"\nEVIDENCE: the case analysis omits weightings with repeated values".into(),
            "refiner" => format!(
                "CLASSIFICATION: DISPROVES\nINVERTED STATEMENT:\nPremise: G is the graph of two triangles joined by an edge\nConclusion: no weighting from {{1, ..., {}}} distinguishes the adjacent vertices of G\n",
                n + 1
            ),
            other => return Err(BackendError::malformed(format!("unexpected role {other}"))),
        })
    }

    pub fn backend() -> ScriptedBackend {
        ScriptedBackend::builder()
            .rule(ttvr_core::backend::Matcher::Any, Reply::with(reply))
            .build()
            .unwrap()
    }
}
