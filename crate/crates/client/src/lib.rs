//! Typed client for the prover/verifier service.
//!
//! Every method maps one endpoint. Failures the server reports come back as
//! [`ClientError::Api`] with the server's [`ErrorCode`], so callers can
//! pick an exit status without parsing messages.

use std::time::Duration;

use reqwest::{Method, RequestBuilder, Response};
use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;
use ttvr_core::archive::ArchiveSummary;
use ttvr_core::certification::{CertificationCase, HumanAssessment};
use ttvr_core::config::Settings;
use ttvr_core::engine::ProgressEvent;
use ttvr_core::report::{DifficultyRow, ReportFormat};
use ttvr_core::wire::{
    CorrectnessSubmission, CountResponse, Document, ErrorBody, ErrorCode, FingerprintResponse, Health, JobCreated,
    JobResult, JobStatus, ParseVerdictRequest, ParseVerdictResponse, PendingReview, ProveRequest,
    RenderTableRequest, ResearchRequest, ReviewSubmission, TextBody, ValidityRequest, ValidityResponse,
};
use ttvr_core::{CheckerOutcome, ProofStatus, ReviewDecision, TheoremStatement};

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("invalid server url {0:?}")]
    Url(String),
    #[error("cannot reach {url}: {source}")]
    Unreachable {
        url: String,
        #[source]
        source: reqwest::Error,
    },
    #[error("server answered {status}: {}", .body.message)]
    Api { status: u16, body: ErrorBody },
    #[error("unexpected response from {url}: {reason}")]
    Protocol { url: String, reason: String },
    #[error("job {job_id} failed: {}", .body.message)]
    JobFailed { job_id: String, body: ErrorBody },
}

impl ClientError {
    /// The server's failure class, if the server got to answer.
    pub fn code(&self) -> Option<ErrorCode> {
        match self {
            Self::Api { body, .. } | Self::JobFailed { body, .. } => Some(body.code),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Client {
    base: String,
    http: reqwest::Client,
    poll_interval: Duration,
}

impl Client {
    pub fn new(base_url: &str) -> Result<Self, ClientError> {
        let base = base_url.trim_end_matches('/').to_string();
        if !(base.starts_with("http://") || base.starts_with("https://")) {
            return Err(ClientError::Url(base_url.to_string()));
        }
        let http = reqwest::Client::builder()
            .build()
            .map_err(|source| ClientError::Unreachable {
                url: base.clone(),
                source,
            })?;
        Ok(Self {
            base,
            http,
            poll_interval: Duration::from_millis(200),
        })
    }

    pub fn with_poll_interval(mut self, interval: Duration) -> Self {
        self.poll_interval = interval;
        self
    }

    pub fn base_url(&self) -> &str {
        &self.base
    }

    fn request(&self, method: Method, path: &str) -> (String, RequestBuilder) {
        let url = format!("{}{path}", self.base);
        let builder = self.http.request(method, &url);
        (url, builder)
    }

    async fn send<T: DeserializeOwned>(url: String, builder: RequestBuilder) -> Result<T, ClientError> {
        let response = builder
            .send()
            .await
            .map_err(|source| ClientError::Unreachable { url: url.clone(), source })?;
        Self::decode(url, response).await
    }

    async fn decode<T: DeserializeOwned>(url: String, response: Response) -> Result<T, ClientError> {
        let status = response.status();
        let text = response.text().await.map_err(|e| ClientError::Protocol {
            url: url.clone(),
            reason: e.to_string(),
        })?;
        if !status.is_success() {
            // Framework-level rejections (bad JSON and the like) are plain text.
            let body = serde_json::from_str::<ErrorBody>(&text).unwrap_or_else(|_| ErrorBody {
                code: if status.is_client_error() {
                    ErrorCode::BadRequest
                } else {
                    ErrorCode::Internal
                },
                message: text.trim().to_string(),
            });
            return Err(ClientError::Api {
                status: status.as_u16(),
                body,
            });
        }
        serde_json::from_str(&text).map_err(|e| ClientError::Protocol {
            url,
            reason: e.to_string(),
        })
    }

    async fn get<T: DeserializeOwned>(&self, path: &str) -> Result<T, ClientError> {
        let (url, b) = self.request(Method::GET, path);
        Self::send(url, b).await
    }

    async fn post<B: Serialize + ?Sized, T: DeserializeOwned>(&self, path: &str, body: &B) -> Result<T, ClientError> {
        let (url, b) = self.request(Method::POST, path);
        Self::send(url, b.json(body)).await
    }

    pub async fn health(&self) -> Result<Health, ClientError> {
        self.get("/health").await
    }

    pub async fn config(&self) -> Result<Settings, ClientError> {
        self.get("/config").await
    }

    pub async fn prove(&self, request: &ProveRequest) -> Result<JobCreated, ClientError> {
        self.post("/prove", request).await
    }

    pub async fn research(&self, request: &ResearchRequest) -> Result<JobCreated, ClientError> {
        self.post("/research", request).await
    }

    pub async fn job(&self, job_id: &str, since: usize) -> Result<JobStatus, ClientError> {
        self.get(&format!("/jobs/{job_id}?since={since}")).await
    }

    /// Polls until the job finishes, handing each progress event to
    /// `on_event` once, in order.
    pub async fn wait_job(
        &self,
        job_id: &str,
        mut on_event: impl FnMut(&ProgressEvent),
    ) -> Result<JobResult, ClientError> {
        let mut since = 0;
        loop {
            let status = self.job(job_id, since).await?;
            status.events.iter().for_each(&mut on_event);
            since = status.next_event;
            if status.is_finished() {
                return match (status.result, status.error) {
                    (Some(result), _) => Ok(result),
                    (None, Some(body)) => Err(ClientError::JobFailed {
                        job_id: job_id.to_string(),
                        body,
                    }),
                    (None, None) => Err(ClientError::Protocol {
                        url: format!("{}/jobs/{job_id}", self.base),
                        reason: "finished job without result or error".into(),
                    }),
                };
            }
            tokio::time::sleep(self.poll_interval).await;
        }
    }

    pub async fn pending_reviews(&self) -> Result<Vec<PendingReview>, ClientError> {
        self.get("/reviews/pending").await
    }

    pub async fn submit_review(
        &self,
        case_id: &str,
        decision: ReviewDecision,
        reviewer: &str,
        notes: &str,
    ) -> Result<CertificationCase, ClientError> {
        let body = ReviewSubmission {
            decision,
            reviewer: reviewer.to_string(),
            notes: notes.to_string(),
        };
        self.post(&format!("/reviews/{case_id}"), &body).await
    }

    pub async fn set_correctness(
        &self,
        case_id: &str,
        assessment: HumanAssessment,
    ) -> Result<CertificationCase, ClientError> {
        self.post(
            &format!("/cases/{case_id}/correctness"),
            &CorrectnessSubmission { assessment },
        )
        .await
    }

    pub async fn report(&self, format: ReportFormat) -> Result<Document, ClientError> {
        let name = match format {
            ReportFormat::Csv => "csv",
            ReportFormat::Table => "table",
        };
        self.get(&format!("/report?format={name}")).await
    }

    pub async fn summary(&self) -> Result<ArchiveSummary, ClientError> {
        self.get("/summary").await
    }

    pub async fn fingerprint(&self, statement: &TheoremStatement) -> Result<String, ClientError> {
        let r: FingerprintResponse = self.post("/ops/fingerprint", statement).await?;
        Ok(r.fingerprint)
    }

    pub async fn decide_validity(
        &self,
        checker: CheckerOutcome,
        review: ReviewDecision,
    ) -> Result<ProofStatus, ClientError> {
        let r: ValidityResponse = self.post("/ops/validity", &ValidityRequest { checker, review }).await?;
        Ok(r.status)
    }

    pub async fn token_length(&self, text: &str) -> Result<usize, ClientError> {
        let r: CountResponse = self
            .post("/ops/token-length", &TextBody { text: text.to_string() })
            .await?;
        Ok(r.count)
    }

    pub async fn parse_verdict(&self, request: &ParseVerdictRequest) -> Result<ParseVerdictResponse, ClientError> {
        self.post("/ops/parse-verdict", request).await
    }

    pub async fn render_table(&self, rows: Vec<DifficultyRow>, format: ReportFormat) -> Result<String, ClientError> {
        let d: Document = self
            .post("/ops/render-table", &RenderTableRequest { rows, format })
            .await?;
        Ok(d.document)
    }
}
