//! From an accepted proof to a validity decision.
//!
//! The formalizer turns the accepted proof into proof-assistant source, an
//! external checker compiles it, and a human confirms that the formal
//! premises and conclusion restate the original statement. A case is VALID
//! only when both gates pass; the human never judges the proof body.

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::agents::Agents;
use crate::backend::Session;
use crate::engine::RunTrace;
use crate::error::ModelError;
use crate::model::{
    CheckerOutcome, ConformanceDecision, FormalArtifact, ProofAttempt, ProofStatus, ReviewDecision,
    TheoremStatement,
};

mod checker;
mod formalize;
mod review;

pub use checker::{run_checker, CheckerConfig, CheckerError, DEFAULT_CHECKER_TIMEOUT};
pub use formalize::{
    count_axioms, declared_interface, extract_source, formalize, DeclaredInterface,
    FormalizeError, AXIOMATIZATION_INSTRUCTION, CONCLUSION_MARKER, PREMISE_MARKER,
};
pub use review::{render_review_screen, ReviewScreen};

/// Validity from the two gates. Nothing is final while either gate is
/// still open.
///
/// | checker \ review | CONFORMANT | NONCONFORMANT | PENDING |
/// |------------------|------------|---------------|---------|
/// | CERTIFIED        | VALID      | REJECTED      | PROVED_UNCERTIFIED |
/// | FAILED           | REJECTED   | REJECTED      | PROVED_UNCERTIFIED |
/// | NOT_RUN          | PROVED_UNCERTIFIED | PROVED_UNCERTIFIED | PROVED_UNCERTIFIED |
pub fn decide_validity(checker: CheckerOutcome, review: ReviewDecision) -> ProofStatus {
    use CheckerOutcome::*;
    use ReviewDecision::*;
    match (checker, review) {
        (NotRun, _) | (_, Pending) => ProofStatus::ProvedUncertified,
        (Certified, Conformant) => ProofStatus::Valid,
        (Certified, Nonconformant) | (Failed, _) => ProofStatus::Rejected,
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CertifyError {
    #[error(transparent)]
    Formalize(#[from] FormalizeError),
    #[error(transparent)]
    Checker(#[from] CheckerError),
}

/// Formalizes an accepted trace, runs the checker when one is configured,
/// and opens a pending case. Traces without an accepted proof yield `None`.
pub async fn certify_trace(
    agents: &Agents,
    session: &Session,
    trace: &RunTrace,
    checker: Option<&CheckerConfig>,
) -> Result<Option<CertificationCase>, CertifyError> {
    if trace.terminal != ProofStatus::ProvedUncertified {
        return Ok(None);
    }
    let Some(proof) = trace.accepted_proof() else {
        return Ok(None);
    };
    let mut artifact = formalize(agents, &trace.statement, proof, &trace.config, session).await?;
    match checker {
        Some(cfg) if !artifact.source_text.trim().is_empty() => {
            artifact = run_checker(&artifact, cfg).await?;
        }
        Some(_) => {}
        None => {
            if artifact.checker_log.is_empty() {
                artifact.checker_log = "no checker configured".into();
            }
        }
    }
    Ok(Some(CertificationCase::new(
        trace.run_id.clone(),
        trace.statement.clone(),
        proof.clone(),
        artifact,
    )))
}

/// Informal correctness annotation ("correct?" column of the reports).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum HumanAssessment {
    Yes,
    No,
    Unsure,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CertificationCase {
    pub case_id: String,
    /// Run that produced the accepted proof.
    pub run_id: String,
    pub statement: TheoremStatement,
    pub accepted_proof: ProofAttempt,
    pub artifact: FormalArtifact,
    pub review: ConformanceDecision,
    pub final_status: ProofStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub human_correct: Option<HumanAssessment>,
    pub updated_at: DateTime<Utc>,
}

impl CertificationCase {
    pub fn new(
        run_id: impl Into<String>,
        statement: TheoremStatement,
        accepted_proof: ProofAttempt,
        artifact: FormalArtifact,
    ) -> Self {
        let review = ConformanceDecision::pending();
        let final_status = decide_validity(artifact.checker_outcome, review.decision);
        Self {
            case_id: uuid::Uuid::new_v4().to_string(),
            run_id: run_id.into(),
            statement,
            accepted_proof,
            artifact,
            review,
            final_status,
            human_correct: None,
            updated_at: Utc::now(),
        }
    }

    pub fn decide_validity(&self) -> ProofStatus {
        decide_validity(self.artifact.checker_outcome, self.review.decision)
    }

    pub fn is_pending(&self) -> bool {
        self.review.decision == ReviewDecision::Pending
    }

    pub fn with_artifact(mut self, artifact: FormalArtifact) -> Self {
        self.artifact = artifact;
        self.final_status = self.decide_validity();
        self.updated_at = Utc::now();
        self
    }

    /// Records the informal "is the proof correct?" judgement.
    pub fn with_human_correct(mut self, assessment: HumanAssessment) -> Self {
        self.human_correct = Some(assessment);
        self.updated_at = Utc::now();
        self
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        self.statement.validate()?;
        self.accepted_proof.validate()?;
        self.artifact.validate()?;
        if self.final_status != self.decide_validity() {
            return Err(ModelError::Invalid {
                type_name: "CertificationCase",
                reason: format!(
                    "final status {} does not follow from ({:?}, {:?})",
                    self.final_status, self.artifact.checker_outcome, self.review.decision
                ),
            });
        }
        Ok(())
    }
}

/// Records the human conformance decision. A case is reviewed at most once.
pub fn submit_review(
    case: &CertificationCase,
    decision: ReviewDecision,
    reviewer: &str,
    notes: &str,
) -> Result<CertificationCase, ModelError> {
    let review = case.review.decide(decision, reviewer, notes)?;
    let mut next = case.clone();
    next.review = review;
    next.final_status = next.decide_validity();
    next.updated_at = Utc::now();
    Ok(next)
}
