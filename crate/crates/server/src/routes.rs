use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use ttvr_core::archive::{summarize_archive, ArchiveSummary, RecordKind};
use ttvr_core::certification::{decide_validity, render_review_screen, submit_review, CertificationCase, ReviewScreen};
use ttvr_core::config::Settings;
use ttvr_core::report::{difficulty_rows, render_difficulty_table, token_length, ReportError, ReportFormat};
use ttvr_core::wire::{
    CorrectnessSubmission, CountResponse, Document, ErrorCode, FingerprintResponse, Health, JobCreated, JobStatus,
    ParseVerdictRequest, ParseVerdictResponse, PendingReview, ProveRequest, RenderTableRequest, ResearchRequest,
    ReviewSubmission, TextBody, ValidityRequest, ValidityResponse,
};
use ttvr_core::{agents, statement_fingerprint, TheoremStatement};

use crate::error::ApiError;
use crate::jobs;
use crate::state::AppState;

type ApiResult<T> = Result<Json<T>, ApiError>;

pub(crate) fn router(state: AppState) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/config", get(config))
        .route("/prove", post(prove))
        .route("/research", post(research))
        .route("/jobs/{job_id}", get(job))
        .route("/reviews/pending", get(pending_reviews))
        .route("/reviews/{case_id}", post(review))
        .route("/cases/{case_id}/correctness", post(correctness))
        .route("/report", get(report))
        .route("/summary", get(summary))
        .route("/ops/fingerprint", post(fingerprint))
        .route("/ops/validity", post(validity))
        .route("/ops/token-length", post(count_tokens))
        .route("/ops/parse-verdict", post(parse_verdict))
        .route("/ops/render-table", post(render_table))
        .with_state(state)
}

async fn health(State(state): State<AppState>) -> Json<Health> {
    Json(Health {
        status: "ok".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        backend: state.backend().id().into(),
        archive_path: state.archive_path().display().to_string(),
    })
}

/// The effective settings. They hold the name of the key variable, never the key.
async fn config(State(state): State<AppState>) -> Json<Settings> {
    Json(state.settings().clone())
}

async fn prove(
    State(state): State<AppState>,
    Json(request): Json<ProveRequest>,
) -> Result<(StatusCode, Json<JobCreated>), ApiError> {
    Ok((StatusCode::ACCEPTED, Json(jobs::start_prove(&state, request)?)))
}

async fn research(
    State(state): State<AppState>,
    Json(request): Json<ResearchRequest>,
) -> Result<(StatusCode, Json<JobCreated>), ApiError> {
    Ok((StatusCode::ACCEPTED, Json(jobs::start_research(&state, request)?)))
}

#[derive(Debug, Deserialize)]
struct Since {
    #[serde(default)]
    since: usize,
}

async fn job(State(state): State<AppState>, Path(job_id): Path<String>, Query(q): Query<Since>) -> ApiResult<JobStatus> {
    let jobs = state.jobs();
    let job = jobs
        .get(&job_id)
        .ok_or_else(|| ApiError::not_found(format!("no job {job_id}")))?;
    let mut out = job.clone();
    out.events = job.events.iter().skip(q.since).cloned().collect();
    out.next_event = job.events.len();
    Ok(Json(out))
}

fn pending(case: CertificationCase) -> PendingReview {
    let screen = ReviewScreen::for_case(&case);
    let rendered = render_review_screen(&screen);
    PendingReview { case, screen, rendered }
}

async fn pending_reviews(State(state): State<AppState>) -> ApiResult<Vec<PendingReview>> {
    Ok(Json(state.scan()?.pending_reviews().into_iter().map(pending).collect()))
}

/// Looks up the latest version of a case while holding the writer, so two
/// reviewers cannot both decide the same case.
fn update_case(
    state: &AppState,
    case_id: &str,
    change: impl FnOnce(&CertificationCase) -> Result<CertificationCase, ApiError>,
) -> ApiResult<CertificationCase> {
    let mut archive = state.archive()?;
    let current = state
        .scan()?
        .cases()
        .remove(case_id)
        .ok_or_else(|| ApiError::not_found(format!("no certification case {case_id}")))?;
    let next = change(&current)?;
    archive.append(RecordKind::Certification, &next)?;
    Ok(Json(next))
}

async fn review(
    State(state): State<AppState>,
    Path(case_id): Path<String>,
    Json(body): Json<ReviewSubmission>,
) -> ApiResult<CertificationCase> {
    update_case(&state, &case_id, |case| {
        if !case.is_pending() {
            return Err(ApiError::new(
                ErrorCode::Conflict,
                format!("case {case_id} was already reviewed as {:?}", case.review.decision),
            ));
        }
        submit_review(case, body.decision, &body.reviewer, &body.notes)
            .map_err(|e| ApiError::bad_request(e.to_string()))
    })
}

async fn correctness(
    State(state): State<AppState>,
    Path(case_id): Path<String>,
    Json(body): Json<CorrectnessSubmission>,
) -> ApiResult<CertificationCase> {
    update_case(&state, &case_id, |case| Ok(case.clone().with_human_correct(body.assessment)))
}

#[derive(Debug, Deserialize)]
struct FormatQuery {
    format: Option<String>,
}

fn parse_format(q: FormatQuery) -> Result<ReportFormat, ApiError> {
    match q.format {
        None => Ok(ReportFormat::Table),
        Some(f) => f.parse().map_err(|e: String| ApiError::bad_request(e)),
    }
}

fn render(rows: &[ttvr_core::report::DifficultyRow], format: ReportFormat) -> ApiResult<Document> {
    let document = render_difficulty_table(rows, format).map_err(|e| match e {
        ReportError::Empty => ApiError::not_found("no runs to report"),
        other => ApiError::internal(other.to_string()),
    })?;
    Ok(Json(Document { format, document }))
}

async fn report(State(state): State<AppState>, Query(q): Query<FormatQuery>) -> ApiResult<Document> {
    let format = parse_format(q)?;
    render(&difficulty_rows(&state.scan()?), format)
}

async fn summary(State(state): State<AppState>) -> ApiResult<ArchiveSummary> {
    Ok(Json(summarize_archive(&state.scan()?)))
}

async fn fingerprint(Json(statement): Json<TheoremStatement>) -> ApiResult<FingerprintResponse> {
    let fingerprint = statement_fingerprint(&statement).map_err(|e| ApiError::bad_request(e.to_string()))?;
    Ok(Json(FingerprintResponse { fingerprint }))
}

async fn validity(Json(r): Json<ValidityRequest>) -> Json<ValidityResponse> {
    Json(ValidityResponse {
        status: decide_validity(r.checker, r.review),
    })
}

async fn count_tokens(Json(body): Json<TextBody>) -> Json<CountResponse> {
    Json(CountResponse {
        count: token_length(&body.text),
    })
}

async fn parse_verdict(Json(r): Json<ParseVerdictRequest>) -> ApiResult<ParseVerdictResponse> {
    r.proof.validate().map_err(|e| ApiError::bad_request(e.to_string()))?;
    Ok(Json(match agents::parse_verdict(&r.raw, &r.proof, r.verifier_index) {
        Ok(v) => ParseVerdictResponse {
            verdict: Some(v),
            malformed: None,
        },
        Err(e) => ParseVerdictResponse {
            verdict: None,
            malformed: Some(e.to_string()),
        },
    }))
}

async fn render_table(Json(r): Json<RenderTableRequest>) -> ApiResult<Document> {
    render(&r.rows, r.format)
}
