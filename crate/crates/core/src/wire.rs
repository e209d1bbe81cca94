//! Request and response bodies of the HTTP service.

use serde::{Deserialize, Serialize};

use crate::certification::{CertificationCase, HumanAssessment, ReviewScreen};
use crate::engine::{ProgressEvent, RunTrace};
use crate::model::{
    CheckerOutcome, ProofAttempt, ProofStatus, ReviewDecision, TheoremStatement, VerifierVerdict,
};
use crate::report::{DifficultyRow, ReportFormat};
use crate::research::ResearchReport;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub version: String,
    pub backend: String,
    pub archive_path: String,
}

/// Machine-readable failure class; each maps to one CLI exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ErrorCode {
    BadRequest,
    Config,
    Backend,
    Locked,
    Conflict,
    NotFound,
    Internal,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: ErrorCode,
    pub message: String,
}

/// Per-request overrides of the configured loop constants.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunOverrides {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iterations: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gateway_error_budget: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verifier_count: Option<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub axiomatize_searchable_steps: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProveRequest {
    pub statements: Vec<TheoremStatement>,
    #[serde(default)]
    pub overrides: RunOverrides,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResearchRequest {
    pub guideline: String,
    #[serde(default)]
    pub field_tag: String,
    #[serde(default)]
    pub overrides: RunOverrides,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum JobKind {
    Prove,
    Research,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum JobState {
    Running,
    Succeeded,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JobCreated {
    pub job_id: String,
    pub batch_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProveOutcome {
    pub traces: Vec<RunTrace>,
    /// Certification cases opened for accepted proofs.
    pub cases: Vec<CertificationCase>,
    /// Statements that could not be run at all.
    #[serde(default)]
    pub errors: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum JobResult {
    Prove(ProveOutcome),
    Research {
        report: Box<ResearchReport>,
        cases: Vec<CertificationCase>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobStatus {
    pub job_id: String,
    pub batch_id: String,
    pub kind: JobKind,
    pub state: JobState,
    /// Events after the `since` cursor of the request.
    pub events: Vec<ProgressEvent>,
    /// Cursor to pass as `since` next time.
    pub next_event: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub result: Option<JobResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<ErrorBody>,
}

impl JobStatus {
    pub fn is_finished(&self) -> bool {
        self.state != JobState::Running
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PendingReview {
    pub case: CertificationCase,
    pub screen: ReviewScreen,
    /// Plain-text rendering of `screen`.
    pub rendered: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewSubmission {
    pub decision: ReviewDecision,
    pub reviewer: String,
    #[serde(default)]
    pub notes: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorrectnessSubmission {
    pub assessment: HumanAssessment,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub format: ReportFormat,
    pub document: String,
}

// Pure operations under /ops.

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FingerprintResponse {
    pub fingerprint: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidityRequest {
    pub checker: CheckerOutcome,
    pub review: ReviewDecision,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidityResponse {
    pub status: ProofStatus,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TextBody {
    pub text: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountResponse {
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseVerdictRequest {
    pub raw: String,
    pub proof: ProofAttempt,
    pub verifier_index: u8,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseVerdictResponse {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verdict: Option<VerifierVerdict>,
    /// Reason when the text is a MALFORMED_VERDICT.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub malformed: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderTableRequest {
    pub rows: Vec<DifficultyRow>,
    pub format: ReportFormat,
}
