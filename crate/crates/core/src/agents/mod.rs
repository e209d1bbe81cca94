//! Role-prompted, single-use agents.
//!
//! An agent is a rendered (system, user) prompt pair sent in exactly one
//! backend request. Nothing survives the call: the next agent sees only
//! what its own bindings carry.

use std::fmt;
use std::sync::{Arc, LazyLock};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{BackendError, CompletionRequest, Session};

mod templates;
mod verdict;

pub use templates::{Bindings, PromptTemplate, TemplateError, TemplateSet, GEOMETRY_RULES};
pub use verdict::{format_verdict, parse_verdict, MalformedVerdict};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum AgentRole {
    ProverFirst,
    ProverRevise,
    VerifierA,
    VerifierB,
    Formalizer,
    LiteratureReviewer,
    ContextPreparer,
    Predictor,
    Refiner,
    Seeder,
}

impl AgentRole {
    pub const ALL: [AgentRole; 10] = [
        AgentRole::ProverFirst,
        AgentRole::ProverRevise,
        AgentRole::VerifierA,
        AgentRole::VerifierB,
        AgentRole::Formalizer,
        AgentRole::LiteratureReviewer,
        AgentRole::ContextPreparer,
        AgentRole::Predictor,
        AgentRole::Refiner,
        AgentRole::Seeder,
    ];

    /// Lowercase tag used in call tags and template file names.
    pub fn tag(self) -> &'static str {
        match self {
            AgentRole::ProverFirst => "prover_first",
            AgentRole::ProverRevise => "prover_revise",
            AgentRole::VerifierA => "verifier_a",
            AgentRole::VerifierB => "verifier_b",
            AgentRole::Formalizer => "formalizer",
            AgentRole::LiteratureReviewer => "literature_reviewer",
            AgentRole::ContextPreparer => "context_preparer",
            AgentRole::Predictor => "predictor",
            AgentRole::Refiner => "refiner",
            AgentRole::Seeder => "seeder",
        }
    }

    pub fn file_name(self) -> String {
        format!("{}.txt", self.tag())
    }

    pub fn required_placeholders(self) -> &'static [&'static str] {
        match self {
            AgentRole::ProverFirst => &["statement"],
            AgentRole::ProverRevise => &["statement", "prev_proof", "evidence", "position"],
            AgentRole::VerifierA | AgentRole::VerifierB => &["statement", "proof"],
            AgentRole::Formalizer => &["statement", "proof"],
            AgentRole::LiteratureReviewer => &["seeds"],
            AgentRole::ContextPreparer => &["candidates"],
            AgentRole::Predictor => &["seeds", "candidates"],
            AgentRole::Refiner => &["statement", "proof"],
            AgentRole::Seeder => &["goal"],
        }
    }

    fn optional_placeholders(self) -> &'static [&'static str] {
        match self {
            AgentRole::ProverFirst | AgentRole::ProverRevise => &[GEOMETRY_RULES],
            AgentRole::Formalizer => &["axiomatization"],
            AgentRole::LiteratureReviewer | AgentRole::ContextPreparer | AgentRole::Predictor => {
                &["goal"]
            }
            AgentRole::Seeder => &["field"],
            _ => &[],
        }
    }

    /// Every placeholder name a template for this role may use.
    pub fn placeholders(self) -> Vec<&'static str> {
        let mut v = self.required_placeholders().to_vec();
        v.extend_from_slice(self.optional_placeholders());
        v
    }

    pub fn is_verifier(self) -> bool {
        matches!(self, AgentRole::VerifierA | AgentRole::VerifierB)
    }

    pub fn is_prover(self) -> bool {
        matches!(self, AgentRole::ProverFirst | AgentRole::ProverRevise)
    }
}

impl fmt::Display for AgentRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

/// Where a call sits in a run; folded into the call tag as
/// `role#iteration@subject`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CallContext {
    pub iteration: Option<u32>,
    pub subject: Option<String>,
}

impl CallContext {
    pub fn iteration(iteration: u32, subject: &str) -> Self {
        Self {
            iteration: Some(iteration),
            subject: Some(subject.to_string()),
        }
    }

    pub fn subject(subject: &str) -> Self {
        Self {
            iteration: None,
            subject: Some(subject.to_string()),
        }
    }

    pub fn tag(&self, role: AgentRole) -> String {
        let mut tag = role.tag().to_string();
        if let Some(i) = self.iteration {
            tag.push_str(&format!("#{i}"));
        }
        if let Some(s) = &self.subject {
            tag.push('@');
            tag.push_str(s);
        }
        tag
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentOutput {
    pub role: AgentRole,
    pub text: String,
    pub call_tag: String,
    pub instance: u64,
    pub backend_id: String,
    #[serde(with = "crate::backend::duration_ms")]
    pub latency: Duration,
}

#[derive(Debug, Error)]
pub enum AgentError {
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error(transparent)]
    Backend(#[from] BackendError),
}

static BUILTIN: LazyLock<TemplateSet> = LazyLock::new(TemplateSet::builtin);

/// Renders with the built-in templates.
pub fn render_prompts(role: AgentRole, bindings: &Bindings) -> Result<(String, String), TemplateError> {
    BUILTIN.render(role, bindings)
}

/// Agent factory: templates plus the model every agent is sent to.
#[derive(Debug, Clone)]
pub struct Agents {
    templates: Arc<TemplateSet>,
    model_name: String,
}

impl Agents {
    pub fn new(templates: Arc<TemplateSet>, model_name: impl Into<String>) -> Self {
        Self {
            templates,
            model_name: model_name.into(),
        }
    }

    pub fn templates(&self) -> &Arc<TemplateSet> {
        &self.templates
    }

    pub fn model_name(&self) -> &str {
        &self.model_name
    }

    pub fn render_prompts(&self, role: AgentRole, bindings: &Bindings) -> Result<(String, String), TemplateError> {
        self.templates.render(role, bindings)
    }

    /// Instantiates one agent and issues its single request.
    pub async fn run(
        &self,
        role: AgentRole,
        bindings: &Bindings,
        context: &CallContext,
        session: &Session,
    ) -> Result<AgentOutput, AgentError> {
        let (system_prompt, user_prompt) = self.render_prompts(role, bindings)?;
        let request = CompletionRequest {
            system_prompt,
            user_prompt,
            model_name: self.model_name.clone(),
            call_tag: context.tag(role),
        };
        let instance = session.new_instance();
        let response = session.complete(instance, &request).await?;
        Ok(AgentOutput {
            role,
            text: response.text,
            call_tag: request.call_tag,
            instance,
            backend_id: response.backend_id,
            latency: response.latency,
        })
    }
}

impl Default for Agents {
    fn default() -> Self {
        Self::new(Arc::new(TemplateSet::builtin()), "gpt-5")
    }
}
