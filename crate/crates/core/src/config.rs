//! File configuration shared by the service and the command line.
//!
//! The API credential is never read from the file. The file names an
//! environment variable and the key is taken from it at startup.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{Agents, TemplateError, TemplateSet};
use crate::backend::{
    Backend, BackendError, LiveBackend, LiveConfig, RetryPolicy, ScriptError, ScriptRule, ScriptedBackend,
};
use crate::certification::CheckerConfig;
use crate::error::ModelError;
use crate::model::RunConfig;
use crate::research::ResearchOptions;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parsing {path}: {message}")]
    Parse { path: String, message: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error("mock script: {0}")]
    Script(#[from] ScriptError),
    #[error(transparent)]
    Backend(#[from] BackendError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Live,
    Mock,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendSection {
    pub kind: BackendKind,
    pub endpoint: String,
    pub model: String,
    /// Name of the environment variable holding the API key.
    pub api_key_env: String,
    pub request_timeout_secs: u64,
    /// Rule file for the mock backend.
    pub script: Option<PathBuf>,
    /// Log request and response bodies with the key redacted.
    pub verbose: bool,
    pub retry_backoff_ms: u64,
}

impl Default for BackendSection {
    fn default() -> Self {
        Self {
            kind: BackendKind::Live,
            endpoint: "https://api.openai.com/v1".into(),
            model: "gpt-5".into(),
            api_key_env: "OPENAI_API_KEY".into(),
            request_timeout_secs: 900,
            script: None,
            verbose: false,
            retry_backoff_ms: 500,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub max_iterations: u32,
    pub gateway_error_budget: u32,
    pub verifier_count: u8,
    pub axiomatize_searchable_steps: bool,
    pub parallelism: usize,
    /// Run the context preparer before default-mode batches too.
    pub prepare_context_in_default_mode: bool,
}

impl Default for RunSection {
    fn default() -> Self {
        let run = RunConfig::default();
        Self {
            max_iterations: run.max_iterations,
            gateway_error_budget: run.gateway_error_budget,
            verifier_count: run.verifier_count,
            axiomatize_searchable_steps: run.axiomatize_searchable_steps,
            parallelism: 4,
            prepare_context_in_default_mode: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CheckerSection {
    /// Leave unset to skip formal checking; cases then stay uncertified.
    pub command: Option<String>,
    pub args: Vec<String>,
    pub timeout_secs: u64,
}

impl Default for CheckerSection {
    fn default() -> Self {
        Self {
            command: None,
            args: vec!["{source}".into()],
            timeout_secs: 300,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ResearchSection {
    pub use_predictor: bool,
    pub include_seed_statements: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Settings {
    pub backend: BackendSection,
    pub run: RunSection,
    pub template_dir: Option<PathBuf>,
    pub checker: CheckerSection,
    pub archive_path: PathBuf,
    pub research: ResearchSection,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            backend: BackendSection::default(),
            run: RunSection::default(),
            template_dir: None,
            checker: CheckerSection::default(),
            archive_path: PathBuf::from("ttvr-archive.jsonl"),
            research: ResearchSection::default(),
        }
    }
}

#[derive(Debug, Deserialize)]
struct ScriptFile {
    #[serde(default)]
    rule: Vec<ScriptRule>,
}

impl Settings {
    pub fn from_toml(text: &str, origin: &str) -> Result<Self, ConfigError> {
        let settings: Self = toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: origin.to_string(),
            message: e.to_string(),
        })?;
        settings.validate()?;
        Ok(settings)
    }

    /// Reads a config file. Relative paths inside it resolve against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut s = Self::from_toml(&text, &path.display().to_string())?;
        if let Some(base) = path.parent() {
            s.resolve_relative(base);
        }
        Ok(s)
    }

    fn resolve_relative(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.archive_path);
        if let Some(d) = self.template_dir.as_mut() {
            fix(d);
        }
        if let Some(s) = self.backend.script.as_mut() {
            fix(s);
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.run_config()?;
        if self.run.parallelism == 0 {
            return Err(ConfigError::Invalid("run.parallelism must be at least 1".into()));
        }
        if self.backend.kind == BackendKind::Mock && self.backend.script.is_none() {
            return Err(ConfigError::Invalid("mock backend needs backend.script".into()));
        }
        if self.backend.kind == BackendKind::Live && self.backend.endpoint.trim().is_empty() {
            return Err(ConfigError::Invalid("backend.endpoint is empty".into()));
        }
        if self.backend.model.trim().is_empty() {
            return Err(ConfigError::Invalid("backend.model is empty".into()));
        }
        if self.checker.command.as_deref().is_some_and(|c| c.trim().is_empty()) {
            return Err(ConfigError::Invalid("checker.command is empty".into()));
        }
        Ok(())
    }

    pub fn run_config(&self) -> Result<RunConfig, ConfigError> {
        let mut run = RunConfig::default()
            .with_max_iterations(self.run.max_iterations)?
            .with_gateway_error_budget(self.run.gateway_error_budget)?
            .with_verifier_count(self.run.verifier_count)?;
        run.axiomatize_searchable_steps = self.run.axiomatize_searchable_steps;
        run.backend_profile = match self.backend.kind {
            BackendKind::Live => format!("live:{}", self.backend.model),
            BackendKind::Mock => "mock".into(),
        };
        run.validate()?;
        Ok(run)
    }

    pub fn retry_policy(&self) -> RetryPolicy {
        RetryPolicy {
            retries: 1,
            backoff: Duration::from_millis(self.backend.retry_backoff_ms),
        }
    }

    pub fn research_options(&self) -> Result<ResearchOptions, ConfigError> {
        Ok(ResearchOptions {
            run: self.run_config()?,
            parallelism: self.run.parallelism,
            use_predictor: self.research.use_predictor,
            include_seed_statements: self.research.include_seed_statements,
        })
    }

    pub fn checker_config(&self) -> Option<CheckerConfig> {
        self.checker.command.as_ref().map(|c| {
            CheckerConfig::new(c.clone())
                .with_args(self.checker.args.clone())
                .with_timeout(Duration::from_secs(self.checker.timeout_secs))
        })
    }

    pub fn templates(&self) -> Result<TemplateSet, ConfigError> {
        Ok(match &self.template_dir {
            Some(dir) => TemplateSet::load_dir(dir)?,
            None => TemplateSet::builtin(),
        })
    }

    pub fn agents(&self) -> Result<Agents, ConfigError> {
        Ok(Agents::new(Arc::new(self.templates()?), self.backend.model.clone()))
    }

    /// Builds the configured backend. For the live backend the key comes
    /// from the named environment variable; a missing key is allowed for
    /// endpoints that do not need one.
    pub fn build_backend(&self) -> Result<Arc<dyn Backend>, ConfigError> {
        match self.backend.kind {
            BackendKind::Mock => {
                let path = self.backend.script.as_ref().expect("validated");
                let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
                    path: path.display().to_string(),
                    source,
                })?;
                Ok(Arc::new(load_script(&text, &path.display().to_string())?))
            }
            BackendKind::Live => {
                let api_key = std::env::var(&self.backend.api_key_env).ok().filter(|k| !k.is_empty());
                if api_key.is_none() {
                    tracing::warn!(
                        env = %self.backend.api_key_env,
                        "no API key in the environment; requests go out unauthenticated"
                    );
                }
                Ok(Arc::new(LiveBackend::new(LiveConfig {
                    endpoint: self.backend.endpoint.clone(),
                    api_key,
                    request_timeout: Duration::from_secs(self.backend.request_timeout_secs),
                    verbose: self.backend.verbose,
                })?))
            }
        }
    }
}

/// Mock rule file: a TOML list of `[[rule]]` tables.
pub fn load_script(text: &str, origin: &str) -> Result<ScriptedBackend, ConfigError> {
    let file: ScriptFile = toml::from_str(text).map_err(|e| ConfigError::Parse {
        path: origin.to_string(),
        message: e.to_string(),
    })?;
    Ok(ScriptedBackend::from_rules(&file.rule)?.with_id("mock"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_run_constants() {
        let s = Settings::from_toml("", "inline").unwrap();
        let run = s.run_config().unwrap();
        assert_eq!(run.max_iterations, 15);
        assert_eq!(run.gateway_error_budget, 5);
        assert_eq!(run.verifier_count, 2);
        assert_eq!(s.backend.api_key_env, "OPENAI_API_KEY");
        assert!(s.checker_config().is_none());
    }

    #[test]
    fn full_file() {
        let text = r#"
archive_path = "runs/archive.jsonl"
[backend]
kind = "mock"
script = "script.toml"
model = "m"
[run]
max_iterations = 3
gateway_error_budget = 2
verifier_count = 1
parallelism = 2
[checker]
command = "lake"
args = ["env", "lean", "{source}"]
timeout_secs = 10
[research]
use_predictor = true
"#;
        let mut s = Settings::from_toml(text, "inline").unwrap();
        s.resolve_relative(Path::new("/etc/ttvr"));
        assert_eq!(s.archive_path, PathBuf::from("/etc/ttvr/runs/archive.jsonl"));
        assert_eq!(s.backend.script, Some(PathBuf::from("/etc/ttvr/script.toml")));
        assert_eq!(s.run_config().unwrap().max_iterations, 3);
        assert!(s.research_options().unwrap().use_predictor);
        assert_eq!(s.checker_config().unwrap().timeout, Duration::from_secs(10));
    }

    #[test]
    fn rejects_bad_values() {
        for bad in [
            "[run]\nmax_iterations = 0",
            "[run]\nverifier_count = 3",
            "[run]\nparallelism = 0",
            "[backend]\nkind = \"mock\"",
            "[backend]\napi_key = \"sk-not-here\"",
            "unknown = 1",
        ] {
            assert!(Settings::from_toml(bad, "inline").is_err(), "{bad}");
        }
    }

    #[test]
    fn script_file_parses() {
        let b = load_script(
            "[[rule]]\ntag_contains = \"verifier\"\nreply = \"VERDICT: ACCEPT\"\n[[rule]]\nerror = \"GATEWAY\"\n",
            "s",
        )
        .unwrap();
        assert_eq!(crate::backend::Backend::id(&b), "mock");
        assert!(load_script("", "s").is_err());
    }
}
