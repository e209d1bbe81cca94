//! Service harness over a temporary archive and the mock script.
#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::de::DeserializeOwned;
use serde_json::{json, Value};
use tempfile::TempDir;
use ttvr_core::config::{BackendKind, Settings};
use ttvr_core::wire::{JobCreated, JobStatus};
use ttvr_server::AppState;

pub fn script_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/mock_script.toml")
}

pub fn mock_settings(dir: &Path) -> Settings {
    let mut s = Settings::default();
    s.backend.kind = BackendKind::Mock;
    s.backend.script = Some(script_path());
    s.backend.retry_backoff_ms = 0;
    s.archive_path = dir.join("archive.jsonl");
    s
}

pub struct Harness {
    pub url: String,
    pub http: reqwest::Client,
    pub dir: TempDir,
    server: tokio::task::JoinHandle<()>,
}

impl Harness {
    pub async fn start(configure: impl FnOnce(&mut Settings, &Path)) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let mut settings = mock_settings(dir.path());
        configure(&mut settings, dir.path());
        let state = AppState::new(settings).unwrap();
        Self::with_state(state, dir).await
    }

    pub async fn with_state(state: AppState, dir: TempDir) -> Self {
        let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
        let url = format!("http://{}", listener.local_addr().unwrap());
        let server = tokio::spawn(async move {
            ttvr_server::serve(listener, state).await.unwrap();
        });
        Self {
            url,
            http: reqwest::Client::new(),
            dir,
            server,
        }
    }

    pub fn archive(&self) -> PathBuf {
        self.dir.path().join("archive.jsonl")
    }

    pub async fn get(&self, path: &str) -> (u16, Value) {
        let r = self.http.get(format!("{}{path}", self.url)).send().await.unwrap();
        let status = r.status().as_u16();
        (status, r.json().await.unwrap_or(Value::Null))
    }

    pub async fn post(&self, path: &str, body: Value) -> (u16, Value) {
        let r = self
            .http
            .post(format!("{}{path}", self.url))
            .json(&body)
            .send()
            .await
            .unwrap();
        let status = r.status().as_u16();
        (status, r.json().await.unwrap_or(Value::Null))
    }

    pub async fn get_as<T: DeserializeOwned>(&self, path: &str) -> T {
        let (status, body) = self.get(path).await;
        assert_eq!(status, 200, "{path}: {body}");
        serde_json::from_value(body).unwrap()
    }

    /// Posts a job and polls it to completion.
    pub async fn run_job(&self, path: &str, body: Value) -> JobStatus {
        let (status, created) = self.post(path, body).await;
        assert_eq!(status, 202, "{created}");
        let created: JobCreated = serde_json::from_value(created).unwrap();
        for _ in 0..500 {
            let job: JobStatus = self.get_as(&format!("/jobs/{}", created.job_id)).await;
            if job.is_finished() {
                return job;
            }
            tokio::time::sleep(Duration::from_millis(10)).await;
        }
        panic!("job {} did not finish", created.job_id);
    }
}

impl Drop for Harness {
    fn drop(&mut self) {
        self.server.abort();
    }
}

pub fn statement(id: &str, conclusion: &str) -> Value {
    json!({
        "id": id,
        "premises": ["n is an odd integer"],
        "conclusion": conclusion,
        "source": "USER_SUPPLIED"
    })
}
