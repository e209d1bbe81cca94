//! Prompt templates with `{{placeholder}}` markers.
//!
//! One file per role, split into a system and a user part by
//! `=== system ===` / `=== user ===` header lines.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::AgentRole;

static PLACEHOLDER: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"\{\{\s*([A-Za-z0-9_]+)\s*\}\}").unwrap());

const SYSTEM_HEADER: &str = "=== system ===";
const USER_HEADER: &str = "=== user ===";

pub const GEOMETRY_RULES: &str = "geometry_rules";
const GEOMETRY_RULES_FILE: &str = "geometry_rules.txt";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TemplateError {
    #[error("{role}: missing binding for placeholder {{{{{name}}}}}")]
    MissingBinding { role: AgentRole, name: String },
    #[error("{file}: unknown placeholder {{{{{name}}}}}")]
    UnknownPlaceholder { file: String, name: String },
    #[error("{file}: required placeholder {{{{{name}}}}} does not appear in the template")]
    MissingPlaceholder { file: String, name: String },
    #[error("{file}: expected '{SYSTEM_HEADER}' and '{USER_HEADER}' sections")]
    Layout { file: String },
    #[error("{file}: {message}")]
    Io { file: String, message: String },
}

/// Placeholder map handed to a template.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bindings(BTreeMap<String, String>);

impl Bindings {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, name: &str, value: impl Into<String>) -> Self {
        self.0.insert(name.to_string(), value.into());
        self
    }

    pub fn insert(&mut self, name: &str, value: impl Into<String>) {
        self.0.insert(name.to_string(), value.into());
    }

    pub fn get(&self, name: &str) -> Option<&str> {
        self.0.get(name).map(String::as_str)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.0.contains_key(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.0.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub role: AgentRole,
    pub system_template: String,
    pub user_template: String,
}

impl PromptTemplate {
    pub fn parse(role: AgentRole, text: &str, file: &str) -> Result<Self, TemplateError> {
        let layout = || TemplateError::Layout { file: file.to_string() };
        let rest = text
            .trim_start()
            .strip_prefix(SYSTEM_HEADER)
            .ok_or_else(layout)?;
        let (system, user) = rest.split_once(USER_HEADER).ok_or_else(layout)?;
        let template = Self {
            role,
            system_template: system.trim().to_string(),
            user_template: user.trim().to_string(),
        };
        template.check(file)?;
        Ok(template)
    }

    fn check(&self, file: &str) -> Result<(), TemplateError> {
        let allowed = self.role.placeholders();
        let mut seen = Vec::new();
        for text in [&self.system_template, &self.user_template] {
            for cap in PLACEHOLDER.captures_iter(text) {
                let name = &cap[1];
                if !allowed.contains(&name) {
                    return Err(TemplateError::UnknownPlaceholder {
                        file: file.to_string(),
                        name: name.to_string(),
                    });
                }
                seen.push(name.to_string());
            }
        }
        for name in self.role.required_placeholders() {
            if !seen.iter().any(|s| s == name) {
                return Err(TemplateError::MissingPlaceholder {
                    file: file.to_string(),
                    name: name.to_string(),
                });
            }
        }
        // Revision inputs must reach the prover through the user prompt.
        if self.role == AgentRole::ProverRevise {
            for name in ["prev_proof", "evidence", "position"] {
                let in_user = PLACEHOLDER
                    .captures_iter(&self.user_template)
                    .any(|c| &c[1] == name);
                if !in_user {
                    return Err(TemplateError::MissingPlaceholder {
                        file: format!("{file} (user section)"),
                        name: name.to_string(),
                    });
                }
            }
        }
        Ok(())
    }

    /// Single-pass substitution: values are inserted verbatim and never
    /// re-scanned for markers. Optional placeholders render empty.
    pub fn render(&self, bindings: &Bindings) -> Result<(String, String), TemplateError> {
        for name in self.role.required_placeholders() {
            if !bindings.contains(name) {
                return Err(TemplateError::MissingBinding {
                    role: self.role,
                    name: name.to_string(),
                });
            }
        }
        let fill = |text: &str| {
            PLACEHOLDER
                .replace_all(text, |cap: &regex::Captures<'_>| {
                    bindings.get(&cap[1]).unwrap_or("").to_string()
                })
                .into_owned()
        };
        Ok((fill(&self.system_template), fill(&self.user_template)))
    }
}

/// All role templates plus the operator-supplied plane-geometry rules.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TemplateSet {
    templates: BTreeMap<AgentRole, PromptTemplate>,
    geometry_rules: String,
}

fn builtin_text(role: AgentRole) -> &'static str {
    match role {
        AgentRole::ProverFirst => include_str!("../../templates/prover_first.txt"),
        AgentRole::ProverRevise => include_str!("../../templates/prover_revise.txt"),
        AgentRole::VerifierA => include_str!("../../templates/verifier_a.txt"),
        AgentRole::VerifierB => include_str!("../../templates/verifier_b.txt"),
        AgentRole::Formalizer => include_str!("../../templates/formalizer.txt"),
        AgentRole::LiteratureReviewer => include_str!("../../templates/literature_reviewer.txt"),
        AgentRole::ContextPreparer => include_str!("../../templates/context_preparer.txt"),
        AgentRole::Predictor => include_str!("../../templates/predictor.txt"),
        AgentRole::Refiner => include_str!("../../templates/refiner.txt"),
        AgentRole::Seeder => include_str!("../../templates/seeder.txt"),
    }
}

impl TemplateSet {
    pub fn builtin() -> Self {
        let templates = AgentRole::ALL
            .iter()
            .map(|&role| {
                let t = PromptTemplate::parse(role, builtin_text(role), &role.file_name())
                    .expect("built-in templates are valid");
                (role, t)
            })
            .collect();
        Self {
            templates,
            geometry_rules: include_str!("../../templates/geometry_rules.txt").trim().to_string(),
        }
    }

    /// Loads `<role>.txt` files from `dir`; roles without a file keep the
    /// built-in template.
    pub fn load_dir(dir: &Path) -> Result<Self, TemplateError> {
        let mut set = Self::builtin();
        for role in AgentRole::ALL {
            let path = dir.join(role.file_name());
            if !path.exists() {
                continue;
            }
            let text = std::fs::read_to_string(&path).map_err(|e| TemplateError::Io {
                file: path.display().to_string(),
                message: e.to_string(),
            })?;
            let t = PromptTemplate::parse(role, &text, &path.display().to_string())?;
            set.templates.insert(role, t);
        }
        let geometry = dir.join(GEOMETRY_RULES_FILE);
        if geometry.exists() {
            set.geometry_rules = std::fs::read_to_string(&geometry)
                .map_err(|e| TemplateError::Io {
                    file: geometry.display().to_string(),
                    message: e.to_string(),
                })?
                .trim()
                .to_string();
        }
        Ok(set)
    }

    pub fn template(&self, role: AgentRole) -> &PromptTemplate {
        &self.templates[&role]
    }

    pub fn geometry_rules(&self) -> &str {
        &self.geometry_rules
    }

    pub fn with_geometry_rules(mut self, rules: impl Into<String>) -> Self {
        self.geometry_rules = rules.into();
        self
    }

    pub fn render(&self, role: AgentRole, bindings: &Bindings) -> Result<(String, String), TemplateError> {
        let template = self.template(role);
        if role.placeholders().contains(&GEOMETRY_RULES) && !bindings.contains(GEOMETRY_RULES) {
            let rules = if self.geometry_rules.is_empty() {
                "(none)".to_string()
            } else {
                self.geometry_rules.clone()
            };
            let b = bindings.clone().with(GEOMETRY_RULES, rules);
            return template.render(&b);
        }
        template.render(bindings)
    }

    /// Content digest of every template, for archive snapshots.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for t in self.templates.values() {
            h.update(t.role.tag().as_bytes());
            h.update([0]);
            h.update(t.system_template.as_bytes());
            h.update([0]);
            h.update(t.user_template.as_bytes());
            h.update([0]);
        }
        h.update(self.geometry_rules.as_bytes());
        format!("sha256:{}", hex::encode(h.finalize()))
    }

    /// Every template in the on-disk layout, keyed by file name.
    pub fn files(&self) -> BTreeMap<String, String> {
        let mut out: BTreeMap<String, String> = self
            .templates
            .values()
            .map(|t| {
                (
                    t.role.file_name(),
                    format!(
                        "{SYSTEM_HEADER}\n{}\n{USER_HEADER}\n{}\n",
                        t.system_template, t.user_template
                    ),
                )
            })
            .collect();
        out.insert(GEOMETRY_RULES_FILE.to_string(), format!("{}\n", self.geometry_rules));
        out
    }

    /// Writes every template to `dir` in the on-disk layout.
    pub fn write_dir(&self, dir: &Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        for (name, text) in self.files() {
            std::fs::write(dir.join(name), text)?;
        }
        Ok(())
    }
}

impl Default for TemplateSet {
    fn default() -> Self {
        Self::builtin()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtins_load() {
        let set = TemplateSet::builtin();
        for role in AgentRole::ALL {
            assert!(!set.template(role).system_template.is_empty(), "{role}");
        }
    }

    #[test]
    fn missing_binding_names_the_placeholder() {
        let set = TemplateSet::builtin();
        let err = set
            .render(AgentRole::ProverRevise, &Bindings::new().with("statement", "S"))
            .unwrap_err();
        assert!(err.to_string().contains("prev_proof") || err.to_string().contains("evidence")
            || err.to_string().contains("position"));
    }

    #[test]
    fn substitution_is_single_pass() {
        let set = TemplateSet::builtin();
        let (_, user) = set
            .render(
                AgentRole::ProverFirst,
                &Bindings::new().with("statement", "literal {{geometry_rules}} here"),
            )
            .unwrap();
        assert!(user.contains("literal {{geometry_rules}} here"));
    }

    #[test]
    fn unknown_placeholder_is_a_load_error() {
        let text = "=== system ===\nhi {{statement}}\n=== user ===\n{{statement}} {{bogus}}";
        assert_eq!(
            PromptTemplate::parse(AgentRole::ProverFirst, text, "f.txt").unwrap_err(),
            TemplateError::UnknownPlaceholder {
                file: "f.txt".into(),
                name: "bogus".into()
            }
        );
    }

    #[test]
    fn revise_template_must_carry_feedback_in_user_section() {
        let text = "=== system ===\n{{prev_proof}} {{evidence}} {{position}}\n=== user ===\n{{statement}}";
        assert!(matches!(
            PromptTemplate::parse(AgentRole::ProverRevise, text, "r.txt"),
            Err(TemplateError::MissingPlaceholder { .. })
        ));
    }

    #[test]
    fn layout_errors() {
        assert!(matches!(
            PromptTemplate::parse(AgentRole::Seeder, "just text {{goal}}", "s.txt"),
            Err(TemplateError::Layout { .. })
        ));
    }

    #[test]
    fn directory_round_trip_and_override() {
        let dir = tempfile::tempdir().unwrap();
        let set = TemplateSet::builtin();
        set.write_dir(dir.path()).unwrap();
        assert_eq!(TemplateSet::load_dir(dir.path()).unwrap(), set);

        std::fs::write(
            dir.path().join("seeder.txt"),
            "=== system ===\nS\n=== user ===\nGoal={{goal}}",
        )
        .unwrap();
        std::fs::write(dir.path().join("geometry_rules.txt"), "use barycentrics\n").unwrap();
        let custom = TemplateSet::load_dir(dir.path()).unwrap();
        assert_ne!(custom.digest(), set.digest());
        assert_eq!(custom.geometry_rules(), "use barycentrics");
        let (_, user) = custom
            .render(AgentRole::Seeder, &Bindings::new().with("goal", "g"))
            .unwrap();
        assert_eq!(user, "Goal=g");
    }
}
