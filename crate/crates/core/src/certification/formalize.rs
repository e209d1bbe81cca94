use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{AgentError, AgentRole, Agents, Bindings, CallContext, TemplateError};
use crate::backend::{BackendError, Session};
use crate::model::{FormalArtifact, ProofAttempt, RunConfig, TheoremStatement};

pub const PREMISE_MARKER: &str = "-- PREMISE:";
pub const CONCLUSION_MARKER: &str = "-- CONCLUSION:";

/// Appended to the formalizer prompt when axiomatization is enabled.
pub const AXIOMATIZATION_INSTRUCTION: &str = "\
Any proof step that establishes a fact which can be found in the published literature or by a web search may be reduced to an `axiom` declaration instead of being proved. \
Give each such axiom a descriptive name and a comment naming the fact it stands for. \
Never axiomatize the statement itself or any step specific to this proof.";

static FENCED: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?s)```[ \t]*([A-Za-z0-9_+-]*)[^\n]*\n(.*?)```").unwrap());
static AXIOM: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?m)^\s*(?:@\[[^\]]*\]\s*)?(?:private\s+|protected\s+|noncomputable\s+)*axiom\s+\S").unwrap()
});

#[derive(Debug, Error)]
pub enum FormalizeError {
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error(transparent)]
    Backend(#[from] BackendError),
}

impl From<AgentError> for FormalizeError {
    fn from(e: AgentError) -> Self {
        match e {
            AgentError::Template(t) => Self::Template(t),
            AgentError::Backend(b) => Self::Backend(b),
        }
    }
}

/// Pulls the proof-assistant source out of a completion: the first
/// ```lean block, else the first fenced block, else the whole text.
pub fn extract_source(completion: &str) -> String {
    let blocks: Vec<_> = FENCED.captures_iter(completion).collect();
    let chosen = blocks
        .iter()
        .find(|c| c[1].eq_ignore_ascii_case("lean") || c[1].eq_ignore_ascii_case("lean4"))
        .or_else(|| blocks.first());
    match chosen {
        Some(c) => c[2].trim().to_string(),
        None => completion.trim().to_string(),
    }
}

pub fn count_axioms(source: &str) -> u32 {
    AXIOM.find_iter(source).count() as u32
}

/// Premises and conclusion the artifact declares in its marker comments.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeclaredInterface {
    pub premises: Vec<String>,
    pub conclusion: Option<String>,
}

pub fn declared_interface(source: &str) -> DeclaredInterface {
    let mut out = DeclaredInterface::default();
    for line in source.lines() {
        let line = line.trim_start();
        if let Some(p) = line.strip_prefix(PREMISE_MARKER) {
            out.premises.push(p.trim().to_string());
        } else if let Some(c) = line.strip_prefix(CONCLUSION_MARKER) {
            out.conclusion = Some(c.trim().to_string());
        }
    }
    out
}

/// One formalizer call. An empty answer is recorded in the artifact log
/// and leaves the checker outcome at NOT_RUN.
pub async fn formalize(
    agents: &Agents,
    statement: &TheoremStatement,
    accepted_proof: &ProofAttempt,
    config: &RunConfig,
    session: &Session,
) -> Result<FormalArtifact, FormalizeError> {
    let mut bindings = Bindings::new()
        .with("statement", statement.render())
        .with("proof", accepted_proof.body.clone());
    if config.axiomatize_searchable_steps {
        bindings.insert("axiomatization", AXIOMATIZATION_INSTRUCTION);
    }
    let out = agents
        .run(
            AgentRole::Formalizer,
            &bindings,
            &CallContext::subject(&statement.id),
            session,
        )
        .await?;
    let source = extract_source(&out.text);
    if source.is_empty() {
        tracing::warn!(statement_id = %statement.id, "formalizer returned no source");
        let mut artifact = FormalArtifact::unchecked("", 0);
        artifact.checker_log = "formalization failed: formalizer returned no source".into();
        return Ok(artifact);
    }
    let axioms = count_axioms(&source);
    Ok(FormalArtifact::unchecked(source, axioms))
}
