//! Runs the external proof checker in a throwaway directory.

use std::process::Stdio;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use tokio::process::Command;

use crate::model::{CheckerOutcome, FormalArtifact};

pub const DEFAULT_CHECKER_TIMEOUT: Duration = Duration::from_secs(300);

/// How to invoke the checker. `{source}` and `{sandbox}` in `args` are
/// replaced by the source file path and the sandbox directory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckerConfig {
    pub command: String,
    #[serde(default = "default_args")]
    pub args: Vec<String>,
    #[serde(default = "default_timeout", with = "crate::backend::duration_ms")]
    pub timeout: Duration,
    #[serde(default = "default_file_name")]
    pub file_name: String,
}

fn default_args() -> Vec<String> {
    vec!["{source}".into()]
}

fn default_timeout() -> Duration {
    DEFAULT_CHECKER_TIMEOUT
}

fn default_file_name() -> String {
    "Proof.lean".into()
}

impl CheckerConfig {
    pub fn new(command: impl Into<String>) -> Self {
        Self {
            command: command.into(),
            args: default_args(),
            timeout: DEFAULT_CHECKER_TIMEOUT,
            file_name: default_file_name(),
        }
    }

    pub fn with_args<I, S>(mut self, args: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.args = args.into_iter().map(Into::into).collect();
        self
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }
}

impl Default for CheckerConfig {
    fn default() -> Self {
        Self::new("lean")
    }
}

#[derive(Debug, Error)]
pub enum CheckerError {
    #[error("checker configuration: {0}")]
    Config(String),
    #[error("artifact has no source to check")]
    EmptySource,
    #[error("checker sandbox: {0}")]
    Io(#[from] std::io::Error),
}

/// A clean exit can still hide an unfinished proof.
fn output_reports_failure(output: &str) -> bool {
    output.lines().any(|l| l.contains("error:") || l.contains("declaration uses 'sorry'"))
}

/// Compiles the artifact and returns it with outcome and log filled in.
/// The log is never empty once the checker has been started.
pub async fn run_checker(
    artifact: &FormalArtifact,
    config: &CheckerConfig,
) -> Result<FormalArtifact, CheckerError> {
    if artifact.source_text.trim().is_empty() {
        return Err(CheckerError::EmptySource);
    }
    if config.command.trim().is_empty() {
        return Err(CheckerError::Config("checker command is empty".into()));
    }
    let sandbox = tempfile::tempdir()?;
    let source = sandbox.path().join(&config.file_name);
    tokio::fs::write(&source, &artifact.source_text).await?;

    let args: Vec<String> = config
        .args
        .iter()
        .map(|a| {
            a.replace("{source}", &source.to_string_lossy())
                .replace("{sandbox}", &sandbox.path().to_string_lossy())
        })
        .collect();
    let child = Command::new(&config.command)
        .args(&args)
        .current_dir(sandbox.path())
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .kill_on_drop(true)
        .spawn()
        .map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => {
                CheckerError::Config(format!("checker executable `{}` not found", config.command))
            }
            _ => CheckerError::Io(e),
        })?;

    let mut log = format!("$ {} {}\n", config.command, args.join(" "));
    let mut checked = artifact.clone();
    match tokio::time::timeout(config.timeout, child.wait_with_output()).await {
        Err(_) => {
            log.push_str(&format!(
                "checker timed out after {} ms; process killed\n",
                config.timeout.as_millis()
            ));
            checked.checker_outcome = CheckerOutcome::Failed;
        }
        Ok(result) => {
            let output = result?;
            let stdout = String::from_utf8_lossy(&output.stdout);
            let stderr = String::from_utf8_lossy(&output.stderr);
            log.push_str(&stdout);
            if !stderr.is_empty() {
                log.push_str("--- stderr ---\n");
                log.push_str(&stderr);
            }
            log.push_str(&format!("\nexit status: {}\n", output.status));
            let clean = output.status.success()
                && !output_reports_failure(&stdout)
                && !output_reports_failure(&stderr);
            checked.checker_outcome = if clean {
                CheckerOutcome::Certified
            } else {
                CheckerOutcome::Failed
            };
        }
    }
    checked.checker_log = log;
    Ok(checked)
}
