//! Shared vocabulary of the prover/verifier protocol.
//!
//! Every type here is a plain value object. Invariants are checked by the
//! `validate` methods (and by [`validate_verdict`]) from field values alone,
//! so records read back from an archive can be re-checked without context.

use std::fmt;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::ModelError;

/// Number of prover/verifier iterations used for every reported experiment.
pub const DEFAULT_MAX_ITERATIONS: u32 = 15;
/// Cumulative transient API failures tolerated before a run is aborted.
pub const DEFAULT_GATEWAY_ERROR_BUDGET: u32 = 5;

/// Inclusive bounds on the number of words in a position quote.
pub const QUOTE_MIN_WORDS: usize = 3;
pub const QUOTE_MAX_WORDS: usize = 40;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum StatementSource {
    UserSupplied,
    ResearchMode,
}

/// A theorem statement: premises plus conclusion, in semi-formal natural language.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TheoremStatement {
    pub id: String,
    pub premises: Vec<String>,
    pub conclusion: String,
    pub source: StatementSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub goal_tag: Option<String>,
}

impl TheoremStatement {
    pub fn new(
        id: impl Into<String>,
        premises: Vec<String>,
        conclusion: impl Into<String>,
        source: StatementSource,
    ) -> Result<Self, ModelError> {
        let statement = Self {
            id: id.into(),
            premises,
            conclusion: conclusion.into(),
            source,
            goal_tag: None,
        };
        statement.validate()?;
        Ok(statement)
    }

    pub fn user(
        id: impl Into<String>,
        premises: Vec<String>,
        conclusion: impl Into<String>,
    ) -> Result<Self, ModelError> {
        Self::new(id, premises, conclusion, StatementSource::UserSupplied)
    }

    pub fn with_goal_tag(mut self, tag: impl Into<String>) -> Self {
        self.goal_tag = Some(tag.into());
        self
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.id.trim().is_empty() {
            return Err(ModelError::invalid("TheoremStatement", "id is empty"));
        }
        if self.conclusion.trim().is_empty() {
            return Err(ModelError::invalid("TheoremStatement", "conclusion is empty"));
        }
        if let Some(i) = self.premises.iter().position(|p| p.trim().is_empty()) {
            return Err(ModelError::invalid(
                "TheoremStatement",
                format!("premise {} is empty", i + 1),
            ));
        }
        Ok(())
    }

    /// Prompt-facing rendering: numbered premises followed by the conclusion.
    pub fn render(&self) -> String {
        let mut out = String::new();
        if self.premises.is_empty() {
            out.push_str("Premises: (none)\n");
        } else {
            out.push_str("Premises:\n");
            for (i, p) in self.premises.iter().enumerate() {
                out.push_str(&format!("{}. {}\n", i + 1, p));
            }
        }
        out.push_str("Conclusion: ");
        out.push_str(&self.conclusion);
        out
    }
}

/// Content digest over premises and conclusion.
///
/// Premise order is part of the encoding. The id, source and goal tag are
/// not, so the same statement harvested twice collapses to one fingerprint.
pub fn statement_fingerprint(statement: &TheoremStatement) -> Result<String, ModelError> {
    statement.validate()?;
    let mut hasher = Sha256::new();
    hasher.update(b"ttvr-statement/1\n");
    hasher.update(format!("premises:{}\n", statement.premises.len()).as_bytes());
    for premise in &statement.premises {
        hasher.update(format!("{}:", premise.len()).as_bytes());
        hasher.update(premise.as_bytes());
        hasher.update(b"\n");
    }
    hasher.update(format!("conclusion:{}:", statement.conclusion.len()).as_bytes());
    hasher.update(statement.conclusion.as_bytes());
    hasher.update(b"\n");
    Ok(format!("sha256:{}", hex::encode(hasher.finalize())))
}

/// A candidate proof produced by one prover call.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProofAttempt {
    pub iteration: u32,
    pub body: String,
    pub produced_by: String,
}

impl ProofAttempt {
    pub fn new(
        iteration: u32,
        body: impl Into<String>,
        produced_by: impl Into<String>,
    ) -> Result<Self, ModelError> {
        let attempt = Self {
            iteration,
            body: body.into(),
            produced_by: produced_by.into(),
        };
        attempt.validate()?;
        Ok(attempt)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.iteration == 0 {
            return Err(ModelError::invalid("ProofAttempt", "iteration must be >= 1"));
        }
        if self.body.trim().is_empty() {
            return Err(ModelError::invalid("ProofAttempt", "body is empty"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Decision {
    Accept,
    Reject,
}

impl fmt::Display for Decision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Decision::Accept => "ACCEPT",
            Decision::Reject => "REJECT",
        })
    }
}

/// Location of a flaw: a step label plus a verbatim excerpt of the proof.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProofPosition {
    pub step_label: String,
    pub quote: String,
}

impl ProofPosition {
    pub fn new(step_label: impl Into<String>, quote: impl Into<String>) -> Self {
        Self {
            step_label: step_label.into(),
            quote: quote.into(),
        }
    }
}

impl fmt::Display for ProofPosition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} | \"{}\"", self.step_label, self.quote)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerifierVerdict {
    pub decision: Decision,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub evidence: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub position: Option<ProofPosition>,
    pub verifier_index: u8,
}

impl VerifierVerdict {
    pub fn accept(verifier_index: u8) -> Self {
        Self {
            decision: Decision::Accept,
            evidence: None,
            position: None,
            verifier_index,
        }
    }

    pub fn reject(verifier_index: u8, evidence: impl Into<String>, position: ProofPosition) -> Self {
        Self {
            decision: Decision::Reject,
            evidence: Some(evidence.into()),
            position: Some(position),
            verifier_index,
        }
    }

    pub fn is_accept(&self) -> bool {
        self.decision == Decision::Accept
    }
}

/// One broken verdict invariant.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "violation")]
pub enum VerdictViolation {
    PositionRequired,
    EvidenceRequired,
    EvidenceNotAllowed,
    PositionNotAllowed,
    EmptyEvidence,
    EmptyStepLabel,
    QuoteNotFound,
    QuoteLength { words: usize },
    VerifierIndex { index: u8 },
}

impl fmt::Display for VerdictViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::PositionRequired => f.write_str("position required"),
            Self::EvidenceRequired => f.write_str("evidence required"),
            Self::EvidenceNotAllowed => f.write_str("evidence must be absent on accept"),
            Self::PositionNotAllowed => f.write_str("position must be absent on accept"),
            Self::EmptyEvidence => f.write_str("evidence is empty"),
            Self::EmptyStepLabel => f.write_str("step label is empty"),
            Self::QuoteNotFound => f.write_str("quote not found"),
            Self::QuoteLength { words } => write!(
                f,
                "quote has {words} words, expected {QUOTE_MIN_WORDS}-{QUOTE_MAX_WORDS}"
            ),
            Self::VerifierIndex { index } => write!(f, "verifier index {index} is not 1 or 2"),
        }
    }
}

/// Checks verdict and position invariants against the proof being judged.
///
/// Returns every violation found, never only the first.
pub fn validate_verdict(
    verdict: &VerifierVerdict,
    proof: &ProofAttempt,
) -> Result<(), Vec<VerdictViolation>> {
    let mut violations = Vec::new();
    if !(1..=2).contains(&verdict.verifier_index) {
        violations.push(VerdictViolation::VerifierIndex {
            index: verdict.verifier_index,
        });
    }
    match verdict.decision {
        Decision::Accept => {
            if verdict.evidence.is_some() {
                violations.push(VerdictViolation::EvidenceNotAllowed);
            }
            if verdict.position.is_some() {
                violations.push(VerdictViolation::PositionNotAllowed);
            }
        }
        Decision::Reject => {
            match &verdict.evidence {
                None => violations.push(VerdictViolation::EvidenceRequired),
                Some(e) if e.trim().is_empty() => violations.push(VerdictViolation::EmptyEvidence),
                Some(_) => {}
            }
            match &verdict.position {
                None => violations.push(VerdictViolation::PositionRequired),
                Some(pos) => {
                    if pos.step_label.trim().is_empty() {
                        violations.push(VerdictViolation::EmptyStepLabel);
                    }
                    let words = pos.quote.split_whitespace().count();
                    if !(QUOTE_MIN_WORDS..=QUOTE_MAX_WORDS).contains(&words) {
                        violations.push(VerdictViolation::QuoteLength { words });
                    }
                    if pos.quote.is_empty() || !proof.body.contains(&pos.quote) {
                        violations.push(VerdictViolation::QuoteNotFound);
                    }
                }
            }
        }
    }
    if violations.is_empty() {
        Ok(())
    } else {
        Err(violations)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum CheckerOutcome {
    Certified,
    Failed,
    NotRun,
}

/// Proof-assistant source and what the external checker said about it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FormalArtifact {
    pub source_text: String,
    pub checker_outcome: CheckerOutcome,
    pub checker_log: String,
    pub axiomatized_steps: u32,
}

impl FormalArtifact {
    pub fn unchecked(source_text: impl Into<String>, axiomatized_steps: u32) -> Self {
        Self {
            source_text: source_text.into(),
            checker_outcome: CheckerOutcome::NotRun,
            checker_log: String::new(),
            axiomatized_steps,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.checker_outcome == CheckerOutcome::Certified && self.checker_log.is_empty() {
            return Err(ModelError::invalid(
                "FormalArtifact",
                "certified artifact has an empty checker log",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ReviewDecision {
    Conformant,
    Nonconformant,
    Pending,
}

/// The human conformance gate. Moves out of `Pending` exactly once.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConformanceDecision {
    pub reviewer: String,
    pub decision: ReviewDecision,
    pub notes: String,
    pub timestamp: DateTime<Utc>,
}

impl ConformanceDecision {
    pub fn pending() -> Self {
        Self {
            reviewer: String::new(),
            decision: ReviewDecision::Pending,
            notes: String::new(),
            timestamp: Utc::now(),
        }
    }

    /// Records a final decision. Fails if one was already recorded or if
    /// `decision` is itself `Pending`.
    pub fn decide(
        &self,
        decision: ReviewDecision,
        reviewer: impl Into<String>,
        notes: impl Into<String>,
    ) -> Result<Self, ModelError> {
        if self.decision != ReviewDecision::Pending {
            return Err(ModelError::AlreadyDecided(self.decision));
        }
        if decision == ReviewDecision::Pending {
            return Err(ModelError::invalid(
                "ConformanceDecision",
                "a review can only move to CONFORMANT or NONCONFORMANT",
            ));
        }
        let reviewer = reviewer.into();
        if reviewer.trim().is_empty() {
            return Err(ModelError::invalid("ConformanceDecision", "reviewer is empty"));
        }
        Ok(Self {
            reviewer,
            decision,
            notes: notes.into(),
            timestamp: Utc::now(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunConfig {
    pub max_iterations: u32,
    pub gateway_error_budget: u32,
    pub verifier_count: u8,
    pub axiomatize_searchable_steps: bool,
    pub backend_profile: String,
}

impl Default for RunConfig {
    fn default() -> Self {
        default_run_config()
    }
}

pub fn default_run_config() -> RunConfig {
    RunConfig {
        max_iterations: DEFAULT_MAX_ITERATIONS,
        gateway_error_budget: DEFAULT_GATEWAY_ERROR_BUDGET,
        verifier_count: 2,
        axiomatize_searchable_steps: false,
        backend_profile: "default".to_string(),
    }
}

impl RunConfig {
    pub fn with_max_iterations(mut self, n: u32) -> Result<Self, ModelError> {
        self.max_iterations = n;
        self.validate()?;
        Ok(self)
    }

    pub fn with_gateway_error_budget(mut self, m: u32) -> Result<Self, ModelError> {
        self.gateway_error_budget = m;
        self.validate()?;
        Ok(self)
    }

    pub fn with_verifier_count(mut self, count: u8) -> Result<Self, ModelError> {
        self.verifier_count = count;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.max_iterations < 1 {
            return Err(ModelError::invalid("RunConfig", "max_iterations must be >= 1"));
        }
        if self.gateway_error_budget < 1 {
            return Err(ModelError::invalid("RunConfig", "gateway_error_budget must be >= 1"));
        }
        if !(1..=2).contains(&self.verifier_count) {
            return Err(ModelError::invalid("RunConfig", "verifier_count must be 1 or 2"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ProofStatus {
    /// Accepted by the verifiers, not yet through certification and review.
    ProvedUncertified,
    Valid,
    Rejected,
    Exhausted,
    Aborted,
}

impl ProofStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::ProvedUncertified => "PROVED_UNCERTIFIED",
            Self::Valid => "VALID",
            Self::Rejected => "REJECTED",
            Self::Exhausted => "EXHAUSTED",
            Self::Aborted => "ABORTED",
        }
    }
}

impl fmt::Display for ProofStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}
