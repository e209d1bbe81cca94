//! Research mode: from a one-sentence goal to settled conjectures.
//!
//! Stages run in a fixed order. The seeder expands the goal, the
//! literature reviewer harvests candidates, the optional predictor adds its
//! own, and the context preparer filters them and writes a notation
//! preamble. Every kept candidate then gets its own TTVR run, and each
//! accepted proof goes to the refiner, which decides whether the argument
//! proved the candidate or its negation. Pre and post agents are deployed
//! once per pipeline run.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::sync::LazyLock;

use futures::stream::{self, StreamExt};
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{AgentError, AgentRole, Bindings, CallContext, TemplateError};
use crate::backend::BackendError;
use crate::engine::{Engine, EngineError, RunTrace};
use crate::error::ModelError;
use crate::model::{
    statement_fingerprint, ProofStatus, RunConfig, StatementSource, TheoremStatement,
};

/// Reason attached to candidates the preparer neither kept nor dropped.
pub const NOT_SELECTED_REASON: &str = "not selected by the context preparer";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResearchGoal {
    pub guideline: String,
    #[serde(default)]
    pub field_tag: String,
}

impl ResearchGoal {
    pub fn new(guideline: impl Into<String>, field_tag: impl Into<String>) -> Result<Self, ModelError> {
        let goal = Self {
            guideline: guideline.into(),
            field_tag: field_tag.into(),
        };
        goal.validate()?;
        Ok(goal)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.guideline.trim().is_empty() {
            return Err(ModelError::invalid("ResearchGoal", "guideline is empty"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum CandidateOrigin {
    Seeder,
    LiteratureReviewer,
    Predictor,
    /// Supplied directly by the user in default mode.
    User,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConjectureCandidate {
    pub statement: TheoremStatement,
    pub origin: CandidateOrigin,
    pub kept: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drop_reason: Option<String>,
}

impl ConjectureCandidate {
    pub fn new(statement: TheoremStatement, origin: CandidateOrigin) -> Self {
        Self {
            statement,
            origin,
            kept: true,
            drop_reason: None,
        }
    }

    pub fn drop_with(&mut self, reason: impl Into<String>) {
        self.kept = false;
        self.drop_reason = Some(reason.into());
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        self.statement.validate()?;
        match (&self.kept, &self.drop_reason) {
            (false, None) => Err(ModelError::invalid(
                "ConjectureCandidate",
                "dropped candidate has no drop reason",
            )),
            (true, Some(_)) => Err(ModelError::invalid(
                "ConjectureCandidate",
                "kept candidate carries a drop reason",
            )),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Resolution {
    Proved,
    Refuted,
    Unsettled,
}

impl Resolution {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Proved => "PROVED",
            Self::Refuted => "REFUTED",
            Self::Unsettled => "UNSETTLED",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SettledConjecture {
    pub candidate: ConjectureCandidate,
    pub trace: RunTrace,
    pub resolution: Resolution,
    pub final_statement: TheoremStatement,
    /// Set when the refiner could not settle an accepted proof.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl SettledConjecture {
    pub fn check_invariants(&self) -> Result<(), String> {
        let candidate = statement_fingerprint(&self.candidate.statement).map_err(|e| e.to_string())?;
        let final_fp = statement_fingerprint(&self.final_statement).map_err(|e| e.to_string())?;
        match self.resolution {
            Resolution::Refuted if final_fp == candidate => {
                Err("refuted conjecture keeps the candidate statement".into())
            }
            Resolution::Proved | Resolution::Unsettled if final_fp != candidate => {
                Err(format!("{} conjecture changed its statement", self.resolution.as_str()))
            }
            Resolution::Unsettled
                if self.note.is_none()
                    && !matches!(self.trace.terminal, ProofStatus::Exhausted | ProofStatus::Aborted) =>
            {
                Err(format!("unsettled conjecture has terminal {}", self.trace.terminal))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Error)]
pub enum ResearchError {
    #[error(transparent)]
    Goal(ModelError),
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error("{stage} call failed: {source}")]
    Backend {
        stage: AgentRole,
        #[source]
        source: BackendError,
    },
    #[error("could not parse {stage} output: {reason}")]
    Parse { stage: AgentRole, reason: String },
    #[error("precondition: {0}")]
    Precondition(String),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

impl ResearchError {
    fn from_agent(stage: AgentRole, e: AgentError) -> Self {
        match e {
            AgentError::Template(t) => Self::Template(t),
            AgentError::Backend(source) => Self::Backend { stage, source },
        }
    }

    pub fn is_backend(&self) -> bool {
        matches!(self, Self::Backend { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedResults {
    pub raw: String,
    pub definitions: String,
    pub statements: Vec<TheoremStatement>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Harvest {
    pub raw: String,
    pub candidates: Vec<ConjectureCandidate>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreparedContext {
    pub raw: String,
    pub candidates: Vec<ConjectureCandidate>,
    pub notation: String,
    pub warnings: Vec<String>,
}

impl PreparedContext {
    pub fn kept(&self) -> impl Iterator<Item = &ConjectureCandidate> {
        self.candidates.iter().filter(|c| c.kept)
    }
}

/// Raw output and outcome of one pre or post stage, kept for audit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: AgentRole,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subject: Option<String>,
    pub raw_output: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResearchReport {
    pub goal: ResearchGoal,
    pub seeds: Option<SeedResults>,
    pub candidates: Vec<ConjectureCandidate>,
    pub notation: String,
    pub settled: Vec<SettledConjecture>,
    pub stages: Vec<StageRecord>,
    pub warnings: Vec<String>,
}

impl ResearchReport {
    pub fn count(&self, resolution: Resolution) -> usize {
        self.settled.iter().filter(|s| s.resolution == resolution).count()
    }

    /// True when some stage failed on a backend error.
    pub fn backend_failed(&self) -> bool {
        self.stages.iter().any(|s| s.error.as_deref().is_some_and(|e| e.contains("call failed")))
            || self.settled.iter().any(|s| s.trace.terminal == ProofStatus::Aborted)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResearchOptions {
    pub run: RunConfig,
    pub parallelism: usize,
    pub use_predictor: bool,
    /// Also send the seeder's own statements through the loop.
    pub include_seed_statements: bool,
}

impl Default for ResearchOptions {
    fn default() -> Self {
        Self {
            run: RunConfig::default(),
            parallelism: 4,
            use_predictor: false,
            include_seed_statements: false,
        }
    }
}

// ---------------------------------------------------------------- parsing

static ITEM_HEADER: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^\s*(?:[#*]+\s*)?(\d+)\s*[.)]\**\s*(.*)$").unwrap());
static CLASSIFICATION: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)classification\s*\**\s*:\s*[*`]*\s*(DISPROVES|PROVES)\b").unwrap()
});

fn strip_markup(line: &str) -> &str {
    line.trim()
        .trim_start_matches(|c: char| "-*#>`".contains(c) || c.is_whitespace())
        .trim_end_matches(|c: char| c == '*' || c == '`' || c.is_whitespace())
}

/// `Premise: x` or `**Conclusion:** y`, case-insensitive.
fn labelled<'a>(line: &'a str, label: &str) -> Option<&'a str> {
    let l = strip_markup(line);
    let head = l.get(..label.len())?;
    if !head.eq_ignore_ascii_case(label) {
        return None;
    }
    let rest = l[label.len()..].trim_start_matches(['s', 'S']);
    let rest = rest.trim_start_matches('*').trim_start();
    let rest = rest.strip_prefix(':')?;
    Some(rest.trim_start_matches('*').trim())
}

/// Index of the line after an all-caps section marker such as `STATEMENTS:`.
fn after_marker(lines: &[&str], marker: &str) -> Option<usize> {
    lines
        .iter()
        .position(|l| labelled(l, marker).is_some())
        .map(|i| i + 1)
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
struct ParsedItem {
    number: u32,
    title: String,
    premises: Vec<String>,
    conclusion: Option<String>,
}

enum Slot {
    Title,
    Premise,
    Conclusion,
}

fn push_continuation(target: &mut String, line: &str) {
    if !target.is_empty() {
        target.push(' ');
    }
    target.push_str(line.trim());
}

/// Reads `Premise:` and `Conclusion:` fields; other non-empty lines continue
/// the field above them.
fn read_fields(item: &mut ParsedItem, line: &str, slot: &mut Slot) {
    if line.trim().is_empty() {
        return;
    }
    if let Some(p) = labelled(line, "premise") {
        item.premises.push(p.to_string());
        *slot = Slot::Premise;
    } else if let Some(c) = labelled(line, "conclusion") {
        item.conclusion = Some(c.to_string());
        *slot = Slot::Conclusion;
    } else {
        match slot {
            Slot::Title => push_continuation(&mut item.title, strip_markup(line)),
            Slot::Premise => push_continuation(item.premises.last_mut().expect("premise slot"), line),
            Slot::Conclusion => push_continuation(item.conclusion.get_or_insert_with(String::new), line),
        }
    }
}

/// Parses an enumerated list of statements in the template's output contract.
fn parse_items(lines: &[&str]) -> Vec<ParsedItem> {
    let mut items = Vec::new();
    let mut current: Option<(ParsedItem, Slot)> = None;
    for line in lines {
        if labelled(line, "premise").is_none() && labelled(line, "conclusion").is_none() {
            if let Some(caps) = ITEM_HEADER.captures(line) {
                if let Some((item, _)) = current.take() {
                    items.push(item);
                }
                let item = ParsedItem {
                    number: caps[1].parse().unwrap_or(0),
                    title: strip_markup(&caps[2]).to_string(),
                    ..ParsedItem::default()
                };
                current = Some((item, Slot::Title));
                continue;
            }
        }
        if let Some((item, slot)) = current.as_mut() {
            read_fields(item, line, slot);
        }
    }
    if let Some((item, _)) = current {
        items.push(item);
    }
    items
}

/// Turns parsed items into statements; incomplete items become warnings.
fn items_to_statements(
    items: Vec<ParsedItem>,
    id_prefix: &str,
    goal: Option<&ResearchGoal>,
    warnings: &mut Vec<String>,
) -> Vec<TheoremStatement> {
    let mut out = Vec::new();
    for (i, item) in items.into_iter().enumerate() {
        let conclusion = item.conclusion.unwrap_or_default();
        let premises: Vec<String> = item
            .premises
            .into_iter()
            .filter(|p| !p.trim().is_empty())
            .collect();
        let id = format!("{id_prefix}{}", i + 1);
        match TheoremStatement::new(&id, premises, conclusion, StatementSource::ResearchMode) {
            Ok(s) => out.push(match goal {
                Some(g) => s.with_goal_tag(g.guideline.clone()),
                None => s,
            }),
            Err(e) => warnings.push(format!("item {} ({}) skipped: {e}", item.number, item.title)),
        }
    }
    out
}

/// Lists candidates in the numbered form the preparer and predictor read.
pub fn render_candidates(candidates: &[ConjectureCandidate]) -> String {
    let mut out = String::new();
    for (i, c) in candidates.iter().enumerate() {
        out.push_str(&format!("{}. [{}]\n", i + 1, c.statement.id));
        for p in &c.statement.premises {
            out.push_str(&format!("   Premise: {p}\n"));
        }
        out.push_str(&format!("   Conclusion: {}\n", c.statement.conclusion));
    }
    out
}

/// Seeder output: `DEFINITIONS:` block, then enumerated `STATEMENTS:`.
pub fn parse_seeds(raw: &str, goal: &ResearchGoal) -> Result<SeedResults, ResearchError> {
    let lines: Vec<&str> = raw.lines().collect();
    let parse_err = |reason: &str| ResearchError::Parse {
        stage: AgentRole::Seeder,
        reason: reason.to_string(),
    };
    let start = after_marker(&lines, "statements").ok_or_else(|| parse_err("no STATEMENTS: section"))?;
    let definitions = match after_marker(&lines[..start - 1], "definitions") {
        Some(d) => {
            let mut text = labelled(lines[d - 1], "definitions").unwrap_or("").to_string();
            for l in &lines[d..start - 1] {
                text.push('\n');
                text.push_str(l);
            }
            text.trim().to_string()
        }
        None => String::new(),
    };
    let mut warnings = Vec::new();
    let statements = items_to_statements(parse_items(&lines[start..]), "seed-", Some(goal), &mut warnings);
    for w in &warnings {
        tracing::warn!(stage = "seeder", "{w}");
    }
    if statements.is_empty() {
        return Err(parse_err("STATEMENTS: section holds no item with a conclusion"));
    }
    Ok(SeedResults {
        raw: raw.to_string(),
        definitions,
        statements,
    })
}

/// Reviewer or predictor output. Duplicates of `existing` or of earlier
/// items, by fingerprint, are discarded.
pub fn parse_candidates(
    raw: &str,
    origin: CandidateOrigin,
    goal: Option<&ResearchGoal>,
    existing: &[ConjectureCandidate],
) -> (Vec<ConjectureCandidate>, Vec<String>) {
    let mut warnings = Vec::new();
    if raw.trim().is_empty() {
        warnings.push("empty output, no candidates".to_string());
        return (Vec::new(), warnings);
    }
    let lines: Vec<&str> = raw.lines().collect();
    let start = after_marker(&lines, "conjectures").unwrap_or(0);
    let prefix = match origin {
        CandidateOrigin::Seeder => "seed-",
        CandidateOrigin::LiteratureReviewer => "lit-",
        CandidateOrigin::Predictor => "pred-",
        CandidateOrigin::User => "user-",
    };
    let statements = items_to_statements(parse_items(&lines[start..]), prefix, goal, &mut warnings);
    let mut seen: HashSet<String> = existing
        .iter()
        .filter_map(|c| statement_fingerprint(&c.statement).ok())
        .collect();
    let mut out = Vec::new();
    for s in statements {
        let fp = statement_fingerprint(&s).expect("validated statement");
        if seen.insert(fp) {
            out.push(ConjectureCandidate::new(s, origin));
        } else {
            warnings.push(format!("{} duplicates an earlier candidate", s.id));
        }
    }
    if out.is_empty() && warnings.is_empty() {
        warnings.push("no enumerated candidates found".to_string());
    }
    (out, warnings)
}

fn parse_numbers(list: &str) -> Result<BTreeSet<usize>, String> {
    let mut out = BTreeSet::new();
    for part in list.split([',', ' ', ';']).map(str::trim).filter(|p| !p.is_empty()) {
        let part = part.trim_start_matches('#');
        if part.eq_ignore_ascii_case("none") {
            continue;
        }
        if let Some((a, b)) = part.split_once('-') {
            let a: usize = a.trim().parse().map_err(|_| format!("bad range `{part}`"))?;
            let b: usize = b.trim().parse().map_err(|_| format!("bad range `{part}`"))?;
            out.extend(a..=b);
        } else {
            out.insert(part.parse().map_err(|_| format!("bad candidate number `{part}`"))?);
        }
    }
    Ok(out)
}

/// Applies a preparer answer (`NOTATION:`, `KEEP:`, `DROP: n | reason`).
pub fn apply_preparation(
    raw: &str,
    candidates: &[ConjectureCandidate],
) -> Result<PreparedContext, ResearchError> {
    let parse_err = |reason: String| ResearchError::Parse {
        stage: AgentRole::ContextPreparer,
        reason,
    };
    let mut notation = Vec::new();
    let mut in_notation = false;
    let mut keep: Option<BTreeSet<usize>> = None;
    let mut drops: BTreeMap<usize, String> = BTreeMap::new();
    for line in raw.lines() {
        if let Some(rest) = labelled(line, "keep") {
            in_notation = false;
            keep.get_or_insert_with(BTreeSet::new)
                .extend(parse_numbers(rest).map_err(parse_err)?);
        } else if let Some(rest) = labelled(line, "drop") {
            in_notation = false;
            let (n, reason) = rest.split_once('|').unwrap_or((rest, ""));
            let n: usize = n
                .trim()
                .trim_start_matches('#')
                .parse()
                .map_err(|_| parse_err(format!("bad DROP line `{}`", line.trim())))?;
            let reason = reason.trim();
            drops.insert(
                n,
                if reason.is_empty() {
                    "dropped by the context preparer".into()
                } else {
                    reason.to_string()
                },
            );
        } else if let Some(rest) = labelled(line, "notation") {
            in_notation = true;
            notation.push(rest.to_string());
        } else if in_notation {
            notation.push(line.to_string());
        }
    }
    if keep.is_none() && drops.is_empty() {
        return Err(parse_err("neither KEEP: nor DROP: lines found".into()));
    }
    let keep = keep.unwrap_or_default();
    let mut warnings = Vec::new();
    for n in keep.iter().chain(drops.keys()) {
        if *n == 0 || *n > candidates.len() {
            warnings.push(format!("preparer referenced unknown candidate {n}"));
        }
    }
    let candidates = candidates
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let n = i + 1;
            let mut c = c.clone();
            c.kept = true;
            c.drop_reason = None;
            if let Some(reason) = drops.get(&n) {
                c.drop_with(reason.clone());
            } else if !keep.contains(&n) {
                c.drop_with(NOT_SELECTED_REASON);
            }
            c
        })
        .collect();
    Ok(PreparedContext {
        raw: raw.to_string(),
        candidates,
        notation: notation.join("\n").trim().to_string(),
        warnings,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RefinerVerdict {
    Proves,
    Disproves(Option<TheoremStatement>),
}

/// Refiner answer: `CLASSIFICATION: PROVES|DISPROVES`, then for a disproof
/// an `INVERTED STATEMENT:` block with premise and conclusion fields.
pub fn parse_refiner(raw: &str, candidate_id: &str) -> Option<RefinerVerdict> {
    let caps = CLASSIFICATION.captures(raw)?;
    if caps[1].eq_ignore_ascii_case("proves") {
        return Some(RefinerVerdict::Proves);
    }
    let lines: Vec<&str> = raw.lines().collect();
    let inverted = lines
        .iter()
        .position(|l| strip_markup(l).to_ascii_lowercase().starts_with("inverted statement"))
        .and_then(|at| {
            let mut item = ParsedItem::default();
            let mut slot = Slot::Title;
            let head = strip_markup(lines[at]);
            let inline = head.split_once(':').map_or("", |(_, r)| r.trim());
            if !inline.is_empty() {
                read_fields(&mut item, inline, &mut slot);
            }
            for l in &lines[at + 1..] {
                read_fields(&mut item, l, &mut slot);
            }
            let conclusion = item.conclusion?;
            TheoremStatement::new(
                format!("{candidate_id}-inv"),
                item.premises,
                conclusion,
                StatementSource::ResearchMode,
            )
            .ok()
        });
    Some(RefinerVerdict::Disproves(inverted))
}

/// The negation of `premises ⇒ conclusion`, spelled out mechanically.
pub fn mechanical_inversion(statement: &TheoremStatement) -> TheoremStatement {
    let conclusion = if statement.premises.is_empty() {
        format!("It is not the case that {}", statement.conclusion)
    } else {
        format!(
            "It is not the case that whenever {}, then {}",
            statement.premises.join(" and "),
            statement.conclusion
        )
    };
    let mut inverted = TheoremStatement::new(
        format!("{}-inv", statement.id),
        Vec::new(),
        conclusion,
        StatementSource::ResearchMode,
    )
    .expect("non-empty conclusion");
    inverted.goal_tag = statement.goal_tag.clone();
    inverted
}

// ---------------------------------------------------------------- stages

/// Runs the research stages against one engine.
#[derive(Clone)]
pub struct ResearchPipeline {
    engine: Engine,
    options: ResearchOptions,
}

impl ResearchPipeline {
    pub fn new(engine: Engine, options: ResearchOptions) -> Self {
        Self { engine, options }
    }

    pub fn engine(&self) -> &Engine {
        &self.engine
    }

    pub fn options(&self) -> &ResearchOptions {
        &self.options
    }

    async fn call_once(
        &self,
        role: AgentRole,
        bindings: &Bindings,
        subject: Option<&str>,
    ) -> Result<String, ResearchError> {
        let session = self.engine.session(self.options.run.gateway_error_budget);
        let ctx = CallContext {
            iteration: None,
            subject: subject.map(str::to_string),
        };
        self.engine
            .agents()
            .run(role, bindings, &ctx, &session)
            .await
            .map(|out| out.text)
            .map_err(|e| ResearchError::from_agent(role, e))
    }

    pub async fn generate_seeds(&self, goal: &ResearchGoal) -> Result<SeedResults, ResearchError> {
        goal.validate().map_err(ResearchError::Goal)?;
        let bindings = Bindings::new()
            .with("goal", goal.guideline.clone())
            .with("field", goal.field_tag.clone());
        let raw = self.call_once(AgentRole::Seeder, &bindings, None).await?;
        parse_seeds(&raw, goal)
    }

    pub async fn review_literature(
        &self,
        goal: &ResearchGoal,
        seeds: &SeedResults,
    ) -> Result<Harvest, ResearchError> {
        if seeds.raw.trim().is_empty() {
            return Err(ResearchError::Precondition("seed results are empty".into()));
        }
        let bindings = Bindings::new()
            .with("goal", goal.guideline.clone())
            .with("seeds", seeds.raw.clone());
        let raw = self.call_once(AgentRole::LiteratureReviewer, &bindings, None).await?;
        let (candidates, warnings) =
            parse_candidates(&raw, CandidateOrigin::LiteratureReviewer, Some(goal), &[]);
        for w in &warnings {
            tracing::warn!(stage = "literature_reviewer", "{w}");
        }
        Ok(Harvest {
            raw,
            candidates,
            warnings,
        })
    }

    pub async fn predict(
        &self,
        goal: &ResearchGoal,
        seeds: &SeedResults,
        existing: &[ConjectureCandidate],
    ) -> Result<Harvest, ResearchError> {
        let bindings = Bindings::new()
            .with("goal", goal.guideline.clone())
            .with("seeds", seeds.raw.clone())
            .with("candidates", render_candidates(existing));
        let raw = self.call_once(AgentRole::Predictor, &bindings, None).await?;
        let (candidates, warnings) =
            parse_candidates(&raw, CandidateOrigin::Predictor, Some(goal), existing);
        Ok(Harvest {
            raw,
            candidates,
            warnings,
        })
    }

    pub async fn prepare_context(
        &self,
        goal: Option<&ResearchGoal>,
        candidates: &[ConjectureCandidate],
    ) -> Result<PreparedContext, ResearchError> {
        if candidates.is_empty() {
            return Err(ResearchError::Precondition("no candidates to prepare".into()));
        }
        let bindings = Bindings::new()
            .with("goal", goal.map(|g| g.guideline.clone()).unwrap_or_default())
            .with("candidates", render_candidates(candidates));
        let raw = self.call_once(AgentRole::ContextPreparer, &bindings, None).await?;
        apply_preparation(&raw, candidates)
    }

    /// Default-mode pre-processing: user statements go through the context
    /// preparer under their own ids.
    pub async fn prepare_statements(&self, statements: &[TheoremStatement]) -> Result<PreparedContext, ResearchError> {
        let candidates: Vec<_> = statements
            .iter()
            .map(|s| ConjectureCandidate::new(s.clone(), CandidateOrigin::User))
            .collect();
        self.prepare_context(None, &candidates).await
    }

    /// One refiner call for an accepted proof; unsettled traces need none.
    pub async fn refine(
        &self,
        candidate: &ConjectureCandidate,
        trace: RunTrace,
    ) -> Result<(SettledConjecture, Option<String>), ResearchError> {
        let unsettled = |trace: RunTrace, note: Option<String>| SettledConjecture {
            candidate: candidate.clone(),
            final_statement: candidate.statement.clone(),
            trace,
            resolution: Resolution::Unsettled,
            note,
        };
        match trace.terminal {
            ProofStatus::Exhausted | ProofStatus::Aborted => return Ok((unsettled(trace, None), None)),
            ProofStatus::ProvedUncertified | ProofStatus::Valid => {}
            ProofStatus::Rejected => {
                return Err(ResearchError::Precondition(format!(
                    "trace for {} ended REJECTED; only settled or unsettled loops can be refined",
                    candidate.statement.id
                )))
            }
        }
        let proof = trace
            .accepted_proof()
            .ok_or_else(|| ResearchError::Precondition("accepted trace without a proof".into()))?
            .body
            .clone();
        let bindings = Bindings::new()
            .with("statement", candidate.statement.render())
            .with("proof", proof);
        let id = candidate.statement.id.clone();
        let raw = match self.call_once(AgentRole::Refiner, &bindings, Some(&id)).await {
            Ok(raw) => raw,
            Err(e @ ResearchError::Backend { .. }) => {
                let note = format!("refiner failed: {e}");
                tracing::warn!(candidate = %id, "{note}");
                return Ok((unsettled(trace, Some(note)), None));
            }
            Err(e) => return Err(e),
        };
        let settled = match parse_refiner(&raw, &id) {
            Some(RefinerVerdict::Proves) => SettledConjecture {
                candidate: candidate.clone(),
                final_statement: candidate.statement.clone(),
                trace,
                resolution: Resolution::Proved,
                note: None,
            },
            Some(RefinerVerdict::Disproves(inverted)) => {
                let original = statement_fingerprint(&candidate.statement).expect("validated");
                let final_statement = match inverted {
                    Some(s) if statement_fingerprint(&s).ok().as_deref() != Some(original.as_str()) => {
                        let mut s = s;
                        s.goal_tag = candidate.statement.goal_tag.clone();
                        s
                    }
                    _ => mechanical_inversion(&candidate.statement),
                };
                SettledConjecture {
                    candidate: candidate.clone(),
                    final_statement,
                    trace,
                    resolution: Resolution::Refuted,
                    note: None,
                }
            }
            None => {
                let note = "refiner classification unparseable".to_string();
                tracing::warn!(candidate = %id, "{note}");
                unsettled(trace, Some(note))
            }
        };
        Ok((settled, Some(raw)))
    }

    /// Full pipeline. Stage failures are recorded and later stages run on
    /// whatever survived; only an invalid goal or a broken template set
    /// stops it outright.
    pub async fn run_research(&self, goal: &ResearchGoal) -> Result<ResearchReport, ResearchError> {
        goal.validate().map_err(ResearchError::Goal)?;
        let mut report = ResearchReport {
            goal: goal.clone(),
            seeds: None,
            candidates: Vec::new(),
            notation: String::new(),
            settled: Vec::new(),
            stages: Vec::new(),
            warnings: Vec::new(),
        };
        let stage_error = |report: &mut ResearchReport, stage: AgentRole, e: &ResearchError| {
            report.warnings.push(format!("{stage}: {e}"));
            report.stages.push(StageRecord {
                stage,
                subject: None,
                raw_output: String::new(),
                error: Some(e.to_string()),
                warnings: Vec::new(),
            });
        };

        let seeds = match self.generate_seeds(goal).await {
            Ok(s) => s,
            Err(e @ ResearchError::Template(_)) => return Err(e),
            Err(e) => {
                stage_error(&mut report, AgentRole::Seeder, &e);
                return Ok(report);
            }
        };
        report.stages.push(StageRecord {
            stage: AgentRole::Seeder,
            subject: None,
            raw_output: seeds.raw.clone(),
            error: None,
            warnings: Vec::new(),
        });

        let mut candidates = Vec::new();
        if self.options.include_seed_statements {
            candidates.extend(
                seeds
                    .statements
                    .iter()
                    .cloned()
                    .map(|s| ConjectureCandidate::new(s, CandidateOrigin::Seeder)),
            );
        }
        match self.review_literature(goal, &seeds).await {
            Ok(h) => {
                let (fresh, mut warnings) = dedup_against(h.candidates, &candidates);
                warnings.extend(h.warnings);
                candidates.extend(fresh);
                report.warnings.extend(warnings.iter().map(|w| format!("literature_reviewer: {w}")));
                report.stages.push(StageRecord {
                    stage: AgentRole::LiteratureReviewer,
                    subject: None,
                    raw_output: h.raw,
                    error: None,
                    warnings,
                });
            }
            Err(e @ ResearchError::Template(_)) => return Err(e),
            Err(e) => stage_error(&mut report, AgentRole::LiteratureReviewer, &e),
        }
        report.seeds = Some(seeds);

        if self.options.use_predictor {
            let seeds = report.seeds.as_ref().expect("seeds recorded");
            match self.predict(goal, seeds, &candidates).await {
                Ok(h) => {
                    candidates.extend(h.candidates);
                    report.warnings.extend(h.warnings.iter().map(|w| format!("predictor: {w}")));
                    report.stages.push(StageRecord {
                        stage: AgentRole::Predictor,
                        subject: None,
                        raw_output: h.raw,
                        error: None,
                        warnings: h.warnings,
                    });
                }
                Err(e @ ResearchError::Template(_)) => return Err(e),
                Err(e) => stage_error(&mut report, AgentRole::Predictor, &e),
            }
        }

        if candidates.is_empty() {
            tracing::warn!("research pipeline produced no candidates");
            report.warnings.push("no candidates to prove".into());
            return Ok(report);
        }
        match self.prepare_context(Some(goal), &candidates).await {
            Ok(p) => {
                report.warnings.extend(p.warnings.iter().map(|w| format!("context_preparer: {w}")));
                report.stages.push(StageRecord {
                    stage: AgentRole::ContextPreparer,
                    subject: None,
                    raw_output: p.raw,
                    error: None,
                    warnings: p.warnings,
                });
                report.candidates = p.candidates;
                report.notation = p.notation;
            }
            Err(e @ ResearchError::Template(_)) => return Err(e),
            Err(e) => {
                // Filtering failed: every candidate goes forward unfiltered.
                stage_error(&mut report, AgentRole::ContextPreparer, &e);
                report.candidates = candidates;
            }
        }

        let kept: Vec<ConjectureCandidate> = report.candidates.iter().filter(|c| c.kept).cloned().collect();
        if kept.is_empty() {
            tracing::warn!("context preparer kept no candidates");
            report.warnings.push("no candidates kept".into());
            return Ok(report);
        }
        let notation = (!report.notation.is_empty()).then(|| report.notation.clone());
        // Owned futures keep the whole pipeline future `Send` for spawned tasks.
        let outcomes: Vec<Result<(SettledConjecture, Option<String>), ResearchError>> = stream::iter(kept.clone())
            .map(|c| {
                let this = self.clone();
                let notation = notation.clone();
                async move {
                    let trace = this
                        .engine
                        .run_ttvr_with_notation(&c.statement, &this.options.run, notation.as_deref())
                        .await?;
                    this.refine(&c, trace).await
                }
            })
            .buffered(self.options.parallelism.max(1))
            .collect()
            .await;
        for (c, outcome) in kept.iter().zip(outcomes) {
            match outcome {
                Ok((settled, refiner_raw)) => {
                    if let Some(raw) = refiner_raw {
                        report.stages.push(StageRecord {
                            stage: AgentRole::Refiner,
                            subject: Some(c.statement.id.clone()),
                            raw_output: raw,
                            error: None,
                            warnings: settled.note.iter().cloned().collect(),
                        });
                    } else if let Some(note) = &settled.note {
                        report.stages.push(StageRecord {
                            stage: AgentRole::Refiner,
                            subject: Some(c.statement.id.clone()),
                            raw_output: String::new(),
                            error: Some(note.clone()),
                            warnings: Vec::new(),
                        });
                    }
                    report.settled.push(settled);
                }
                Err(e @ ResearchError::Template(_)) => return Err(e),
                Err(e) => report.warnings.push(format!("{}: {e}", c.statement.id)),
            }
        }
        Ok(report)
    }
}

fn dedup_against(
    fresh: Vec<ConjectureCandidate>,
    existing: &[ConjectureCandidate],
) -> (Vec<ConjectureCandidate>, Vec<String>) {
    let seen: HashSet<String> = existing
        .iter()
        .filter_map(|c| statement_fingerprint(&c.statement).ok())
        .collect();
    let mut warnings = Vec::new();
    let kept = fresh
        .into_iter()
        .filter(|c| {
            let dup = statement_fingerprint(&c.statement).is_ok_and(|fp| seen.contains(&fp));
            if dup {
                warnings.push(format!("{} duplicates a seed statement", c.statement.id));
            }
            !dup
        })
        .collect();
    (kept, warnings)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn goal() -> ResearchGoal {
        ResearchGoal::new("improve gradient descent in machine learning", "optimization").unwrap()
    }

    #[test]
    fn goal_must_be_non_empty() {
        assert!(ResearchGoal::new("  ", "x").is_err());
    }

    #[test]
    fn seeds_parse_definitions_and_statements() {
        let raw = "DEFINITIONS:\nA function is L-smooth if its gradient is L-Lipschitz.\n\nSTATEMENTS:\n1. Convergence\n   Premise: f is convex\n   Premise: f is L-smooth\n   Conclusion: gradient descent with step 1/L converges\n2. **Rate**\n   **Premise:** f is strongly convex\n   **Conclusion:** the rate is linear\n";
        let seeds = parse_seeds(raw, &goal()).unwrap();
        assert_eq!(seeds.definitions, "A function is L-smooth if its gradient is L-Lipschitz.");
        assert_eq!(seeds.statements.len(), 2);
        assert_eq!(seeds.statements[0].premises, vec!["f is convex", "f is L-smooth"]);
        assert_eq!(seeds.statements[1].conclusion, "the rate is linear");
        assert_eq!(seeds.statements[1].source, StatementSource::ResearchMode);
        assert_eq!(
            seeds.statements[0].goal_tag.as_deref(),
            Some("improve gradient descent in machine learning")
        );
    }

    #[test]
    fn unparseable_seeds_name_the_failure() {
        let err = parse_seeds("I cannot help with that.", &goal()).unwrap_err();
        assert!(err.to_string().contains("STATEMENTS"));
        let err = parse_seeds("STATEMENTS:\n1. no conclusion here", &goal()).unwrap_err();
        assert!(err.to_string().contains("seeder"));
    }

    #[test]
    fn candidates_dedup_and_continuations() {
        let raw = "CONJECTURES:\n1. A\n   Premise: G is a graph\n   Conclusion: G has a\n   proper colouring\n2. A again\n   Premise: G is a graph\n   Conclusion: G has a proper colouring\n3) B\n   Conclusion: every tree is bipartite\n";
        let (c, w) = parse_candidates(raw, CandidateOrigin::LiteratureReviewer, None, &[]);
        assert_eq!(c.len(), 2);
        assert_eq!(c[0].statement.conclusion, "G has a proper colouring");
        assert_eq!(c[1].statement.id, "lit-3");
        assert!(c.iter().all(|c| c.origin == CandidateOrigin::LiteratureReviewer && c.kept));
        assert_eq!(w.len(), 1);

        let (none, w) = parse_candidates("", CandidateOrigin::LiteratureReviewer, None, &[]);
        assert!(none.is_empty());
        assert_eq!(w.len(), 1);
    }

    fn candidates(n: usize) -> Vec<ConjectureCandidate> {
        (1..=n)
            .map(|i| {
                ConjectureCandidate::new(
                    TheoremStatement::new(format!("c{i}"), vec![], format!("claim {i}"), StatementSource::ResearchMode)
                        .unwrap(),
                    CandidateOrigin::LiteratureReviewer,
                )
            })
            .collect()
    }

    #[test]
    fn preparation_partitions_candidates() {
        let raw = "NOTATION:\nchi'(G) is the chromatic index.\nKEEP: 1-3, 5\nDROP: 4 | solved in 2024\n";
        let p = apply_preparation(raw, &candidates(6)).unwrap();
        assert_eq!(p.notation, "chi'(G) is the chromatic index.");
        let kept: Vec<_> = p.kept().map(|c| c.statement.id.as_str()).collect();
        assert_eq!(kept, vec!["c1", "c2", "c3", "c5"]);
        assert_eq!(p.candidates[3].drop_reason.as_deref(), Some("solved in 2024"));
        assert_eq!(p.candidates[5].drop_reason.as_deref(), Some(NOT_SELECTED_REASON));
        assert!(p.candidates.iter().all(|c| c.validate().is_ok()));

        let all = apply_preparation("KEEP: 1, 2", &candidates(2)).unwrap();
        assert!(all.candidates.iter().all(|c| c.drop_reason.is_none()));

        assert!(apply_preparation("nothing useful", &candidates(2)).is_err());
        assert!(apply_preparation("KEEP: one", &candidates(2)).is_err());
    }

    #[test]
    fn refiner_answers() {
        assert_eq!(parse_refiner("CLASSIFICATION: PROVES", "c1"), Some(RefinerVerdict::Proves));
        let raw = "**CLASSIFICATION:** DISPROVES\nINVERTED STATEMENT:\nPremise: G is a graph\nConclusion: G has no proper colouring";
        let Some(RefinerVerdict::Disproves(Some(s))) = parse_refiner(raw, "c1") else {
            panic!("expected an inverted statement");
        };
        assert_eq!(s.id, "c1-inv");
        assert_eq!(s.premises, vec!["G is a graph"]);
        assert_eq!(parse_refiner("CLASSIFICATION: DISPROVES", "c1"), Some(RefinerVerdict::Disproves(None)));
        assert_eq!(parse_refiner("it is fine", "c1"), None);
    }

    #[test]
    fn mechanical_inversion_changes_fingerprint() {
        let s = TheoremStatement::user("t", vec!["n odd".into()], "8 divides n^2 - 1").unwrap();
        let inv = mechanical_inversion(&s);
        assert_ne!(statement_fingerprint(&s).unwrap(), statement_fingerprint(&inv).unwrap());
        assert!(inv.conclusion.contains("n odd"));
    }

    proptest! {
        #[test]
        fn partition_is_total_and_disjoint(
            n in 1usize..20,
            keep in proptest::collection::btree_set(1usize..25, 0..20),
            drop in proptest::collection::btree_set(1usize..25, 0..5),
        ) {
            let mut raw = String::from("KEEP: ");
            raw.push_str(&keep.iter().map(ToString::to_string).collect::<Vec<_>>().join(", "));
            raw.push('\n');
            for d in &drop {
                raw.push_str(&format!("DROP: {d} | known\n"));
            }
            let p = apply_preparation(&raw, &candidates(n)).unwrap();
            prop_assert_eq!(p.candidates.len(), n);
            for (i, c) in p.candidates.iter().enumerate() {
                prop_assert!(c.validate().is_ok());
                let expect_kept = keep.contains(&(i + 1)) && !drop.contains(&(i + 1));
                prop_assert_eq!(c.kept, expect_kept);
            }
        }
    }
}
