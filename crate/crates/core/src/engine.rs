//! The prover/verifier revision loop.
//!
//! Iteration 1 asks a fresh prover for a proof. Every later iteration asks
//! a fresh reviser, handing it the previous proof together with the first
//! rejecting verifier's position and evidence. Verifier A judges every
//! proof; verifier B only sees proofs A accepted. The loop ends on the
//! first proof all configured verifiers accept, after `max_iterations`,
//! or once the run's transient-error budget is spent.

use std::sync::Arc;

use chrono::{DateTime, Utc};
use futures::stream::{self, StreamExt};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tokio::sync::mpsc::UnboundedSender;

use crate::agents::{
    parse_verdict, AgentError, AgentOutput, AgentRole, Agents, Bindings, CallContext, TemplateError,
};
use crate::backend::{Backend, BackendError, CallLog, RetryPolicy, Session};
use crate::error::ModelError;
use crate::model::{
    statement_fingerprint, Decision, ProofAttempt, ProofPosition, ProofStatus, RunConfig,
    TheoremStatement, VerifierVerdict,
};

/// Body recorded when a prover returns nothing.
pub const EMPTY_PROOF_PLACEHOLDER: &str = "(the prover returned no proof text)";
const EMPTY_PROOF_QUOTE: &str = "the prover returned no proof text";
pub const UNPARSEABLE_VERDICT_EVIDENCE: &str = "verifier output unparseable";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum IterationOutcome {
    Accepted,
    Rejected,
    Errored,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub index: u32,
    pub attempt: ProofAttempt,
    pub verdicts: Vec<VerifierVerdict>,
    pub outcome: IterationOutcome,
    /// Verifier re-queries caused by unparseable verdicts.
    #[serde(default)]
    pub malformed_requeries: u32,
}

impl IterationRecord {
    /// The verdict whose feedback goes to the next prover: the first
    /// rejection in verifier order.
    pub fn first_rejection(&self) -> Option<&VerifierVerdict> {
        self.verdicts.iter().find(|v| v.decision == Decision::Reject)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunTrace {
    pub run_id: String,
    pub statement: TheoremStatement,
    pub statement_fingerprint: String,
    pub config: RunConfig,
    pub iterations: Vec<IterationRecord>,
    pub terminal: ProofStatus,
    pub gateway_errors: u32,
    pub difficulty_index: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<BackendError>,
    pub started_at: DateTime<Utc>,
    pub finished_at: DateTime<Utc>,
}

impl RunTrace {
    pub fn accepted_proof(&self) -> Option<&ProofAttempt> {
        self.iterations
            .last()
            .filter(|it| it.outcome == IterationOutcome::Accepted)
            .map(|it| &it.attempt)
    }

    /// Checks the structural invariants of a finished trace.
    pub fn check_invariants(&self) -> Result<(), String> {
        if self.iterations.is_empty() && self.terminal != ProofStatus::Aborted {
            return Err("empty trace that was not aborted".into());
        }
        if self.difficulty_index as usize != self.iterations.len() {
            return Err("difficulty_index differs from iteration count".into());
        }
        for (i, it) in self.iterations.iter().enumerate() {
            if it.index as usize != i + 1 || it.attempt.iteration != it.index {
                return Err(format!("iteration {} is out of sequence", i + 1));
            }
            if it.verdicts.windows(2).any(|w| w[0].verifier_index >= w[1].verifier_index) {
                return Err(format!("iteration {}: verdicts out of order", it.index));
            }
            let all_accept = !it.verdicts.is_empty() && it.verdicts.iter().all(|v| v.is_accept());
            let full = it.verdicts.len() == usize::from(self.config.verifier_count);
            match it.outcome {
                IterationOutcome::Accepted if !(all_accept && full) => {
                    return Err(format!("iteration {}: accepted without all verdicts", it.index));
                }
                IterationOutcome::Rejected if it.first_rejection().is_none() => {
                    return Err(format!("iteration {}: rejected without a rejection", it.index));
                }
                _ => {}
            }
            if let Some(a) = it.verdicts.iter().position(|v| v.verifier_index == 1) {
                if !it.verdicts[a].is_accept() && it.verdicts.iter().any(|v| v.verifier_index == 2) {
                    return Err(format!("iteration {}: verifier B ran after A rejected", it.index));
                }
            }
        }
        let last = self.iterations.last().map(|it| it.outcome);
        match self.terminal {
            ProofStatus::ProvedUncertified if last != Some(IterationOutcome::Accepted) => {
                Err("proved without an accepted last iteration".into())
            }
            ProofStatus::Exhausted
                if self.difficulty_index != self.config.max_iterations
                    || last == Some(IterationOutcome::Accepted) =>
            {
                Err("exhausted before max_iterations".into())
            }
            _ if self.difficulty_index > self.config.max_iterations => {
                Err("more iterations than max_iterations".into())
            }
            _ => Ok(()),
        }
    }
}

pub fn difficulty_index(trace: &RunTrace) -> u32 {
    trace.iterations.len() as u32
}

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("invalid statement: {0}")]
    Statement(ModelError),
    #[error("invalid run config: {0}")]
    Config(ModelError),
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error("contract violation: {0}")]
    Contract(String),
}

/// Prompt bindings for the reviser after a rejected iteration.
pub fn revise_bindings(
    previous: &IterationRecord,
    statement: &TheoremStatement,
) -> Result<Bindings, EngineError> {
    revise_bindings_for(previous, &statement.render())
}

fn revise_bindings_for(previous: &IterationRecord, statement_text: &str) -> Result<Bindings, EngineError> {
    if previous.outcome != IterationOutcome::Rejected {
        return Err(EngineError::Contract(format!(
            "revise_bindings needs a rejected iteration, got {:?}",
            previous.outcome
        )));
    }
    let verdict = previous
        .first_rejection()
        .ok_or_else(|| EngineError::Contract("rejected iteration has no REJECT verdict".into()))?;
    let (Some(evidence), Some(position)) = (&verdict.evidence, &verdict.position) else {
        return Err(EngineError::Contract("rejection lacks evidence or position".into()));
    };
    Ok(Bindings::new()
        .with("statement", statement_text)
        .with("prev_proof", previous.attempt.body.clone())
        .with("evidence", evidence.clone())
        .with("position", position.to_string()))
}

/// Live progress, one value per loop milestone.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum ProgressEvent {
    IterationStart {
        statement_id: String,
        iteration: u32,
    },
    Verdict {
        statement_id: String,
        iteration: u32,
        verifier_index: u8,
        decision: Decision,
    },
    MalformedVerdict {
        statement_id: String,
        iteration: u32,
        verifier_index: u8,
        reason: String,
    },
    Terminal {
        statement_id: String,
        terminal: ProofStatus,
        difficulty_index: u32,
        gateway_errors: u32,
    },
}

enum Halt {
    Abort(BackendError),
    Template(TemplateError),
}

#[derive(Clone)]
pub struct Engine {
    agents: Agents,
    backend: Arc<dyn Backend>,
    retry: RetryPolicy,
    log: CallLog,
    events: Option<UnboundedSender<ProgressEvent>>,
}

impl Engine {
    pub fn new(agents: Agents, backend: Arc<dyn Backend>) -> Self {
        Self {
            agents,
            backend,
            retry: RetryPolicy::default(),
            log: CallLog::new(),
            events: None,
        }
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    /// Every session this engine opens appends to `log`.
    pub fn with_call_log(mut self, log: CallLog) -> Self {
        self.log = log;
        self
    }

    pub fn with_events(mut self, events: UnboundedSender<ProgressEvent>) -> Self {
        self.events = Some(events);
        self
    }

    pub fn agents(&self) -> &Agents {
        &self.agents
    }

    pub fn call_log(&self) -> &CallLog {
        &self.log
    }

    pub fn backend(&self) -> &Arc<dyn Backend> {
        &self.backend
    }

    /// A fresh session: zero gateway errors, shared call log.
    pub fn session(&self, budget: u32) -> Session {
        Session::with_log(self.backend.clone(), self.retry, budget, self.log.clone())
    }

    fn emit(&self, event: ProgressEvent) {
        tracing::info!(target: "ttvr::progress", event = %serde_json::to_string(&event).unwrap_or_default());
        if let Some(tx) = &self.events {
            let _ = tx.send(event);
        }
    }

    pub async fn run_ttvr(&self, statement: &TheoremStatement, config: &RunConfig) -> Result<RunTrace, EngineError> {
        self.run_ttvr_with_notation(statement, config, None).await
    }

    /// As [`Engine::run_ttvr`], with a notation preamble prepended to the
    /// statement in every prompt.
    pub async fn run_ttvr_with_notation(
        &self,
        statement: &TheoremStatement,
        config: &RunConfig,
        notation: Option<&str>,
    ) -> Result<RunTrace, EngineError> {
        let fingerprint = statement_fingerprint(statement).map_err(EngineError::Statement)?;
        config.validate().map_err(EngineError::Config)?;
        let session = self.session(config.gateway_error_budget);
        let statement_text = match notation.map(str::trim).filter(|n| !n.is_empty()) {
            Some(n) => format!("Notation:\n{n}\n\n{}", statement.render()),
            None => statement.render(),
        };
        let started_at = Utc::now();
        let mut iterations: Vec<IterationRecord> = Vec::new();
        let mut error = None;
        let mut terminal = ProofStatus::Exhausted;

        for index in 1..=config.max_iterations {
            self.emit(ProgressEvent::IterationStart {
                statement_id: statement.id.clone(),
                iteration: index,
            });
            let ctx = CallContext::iteration(index, &statement.id);
            let (role, bindings) = match iterations.last() {
                None => (
                    AgentRole::ProverFirst,
                    Bindings::new().with("statement", statement_text.clone()),
                ),
                Some(prev) => (AgentRole::ProverRevise, revise_bindings_for(prev, &statement_text)?),
            };
            let prover = match self.call(role, &bindings, &ctx, &session).await {
                Ok(out) => out,
                Err(Halt::Abort(e)) => {
                    error = Some(e);
                    terminal = ProofStatus::Aborted;
                    break;
                }
                Err(Halt::Template(t)) => return Err(t.into()),
            };
            let record = match self
                .judge(index, prover, &statement_text, &statement.id, config, &session)
                .await
            {
                Ok(r) => r,
                Err((partial, Halt::Abort(e))) => {
                    iterations.push(partial);
                    error = Some(e);
                    terminal = ProofStatus::Aborted;
                    break;
                }
                Err((_, Halt::Template(t))) => return Err(t.into()),
            };
            let accepted = record.outcome == IterationOutcome::Accepted;
            iterations.push(record);
            if accepted {
                terminal = ProofStatus::ProvedUncertified;
                break;
            }
        }

        let trace = RunTrace {
            run_id: uuid::Uuid::new_v4().to_string(),
            statement: statement.clone(),
            statement_fingerprint: fingerprint,
            config: config.clone(),
            difficulty_index: iterations.len() as u32,
            iterations,
            terminal,
            gateway_errors: session.gateway_error_count(),
            error,
            started_at,
            finished_at: Utc::now(),
        };
        self.emit(ProgressEvent::Terminal {
            statement_id: statement.id.clone(),
            terminal: trace.terminal,
            difficulty_index: trace.difficulty_index,
            gateway_errors: trace.gateway_errors,
        });
        Ok(trace)
    }

    /// Runs independent statements with at most `parallelism` in flight.
    /// Results keep the input order.
    pub async fn run_batch(
        &self,
        statements: &[TheoremStatement],
        config: &RunConfig,
        parallelism: usize,
    ) -> Vec<Result<RunTrace, EngineError>> {
        stream::iter(statements.to_vec())
            .map(|s| {
                let this = self.clone();
                let config = config.clone();
                async move { this.run_ttvr(&s, &config).await }
            })
            .buffered(parallelism.max(1))
            .collect()
            .await
    }

    /// Runs one agent, replacing it with a fresh instance after a
    /// transient failure until the session budget is spent.
    async fn call(
        &self,
        role: AgentRole,
        bindings: &Bindings,
        ctx: &CallContext,
        session: &Session,
    ) -> Result<AgentOutput, Halt> {
        loop {
            match self.agents.run(role, bindings, ctx, session).await {
                Ok(out) => return Ok(out),
                Err(AgentError::Template(t)) => return Err(Halt::Template(t)),
                Err(AgentError::Backend(e)) if e.retryable && !session.budget_exhausted() => {
                    tracing::warn!(role = %role, error = %e, "replacing agent after transient failure");
                }
                Err(AgentError::Backend(e)) => return Err(Halt::Abort(e)),
            }
        }
    }

    async fn judge(
        &self,
        index: u32,
        prover: AgentOutput,
        statement_text: &str,
        statement_id: &str,
        config: &RunConfig,
        session: &Session,
    ) -> Result<IterationRecord, (IterationRecord, Halt)> {
        let body = if prover.text.trim().is_empty() {
            EMPTY_PROOF_PLACEHOLDER.to_string()
        } else {
            prover.text.clone()
        };
        let attempt = ProofAttempt {
            iteration: index,
            body,
            produced_by: format!("{}/{}", prover.call_tag, prover.instance),
        };
        let mut record = IterationRecord {
            index,
            attempt,
            verdicts: Vec::new(),
            outcome: IterationOutcome::Rejected,
            malformed_requeries: 0,
        };
        if prover.text.trim().is_empty() {
            tracing::warn!(statement_id, iteration = index, "prover returned an empty proof");
            record.verdicts.push(VerifierVerdict::reject(
                1,
                "the prover returned an empty response",
                ProofPosition::new("whole proof", EMPTY_PROOF_QUOTE),
            ));
            return Ok(record);
        }

        let ctx = CallContext::iteration(index, statement_id);
        let verifiers = [(AgentRole::VerifierA, 1u8), (AgentRole::VerifierB, 2u8)];
        for &(role, verifier_index) in verifiers.iter().take(usize::from(config.verifier_count)) {
            let verdict = match self
                .verify(role, verifier_index, statement_text, &mut record, &ctx, session)
                .await
            {
                Ok(v) => v,
                Err(halt) => {
                    record.outcome = IterationOutcome::Errored;
                    return Err((record, halt));
                }
            };
            self.emit(ProgressEvent::Verdict {
                statement_id: statement_id.to_string(),
                iteration: index,
                verifier_index,
                decision: verdict.decision,
            });
            let accepted = verdict.is_accept();
            record.verdicts.push(verdict);
            if !accepted {
                return Ok(record);
            }
        }
        record.outcome = IterationOutcome::Accepted;
        Ok(record)
    }

    /// Queries a verifier; an unparseable answer earns exactly one fresh
    /// re-query before being turned into a synthetic rejection.
    async fn verify(
        &self,
        role: AgentRole,
        verifier_index: u8,
        statement_text: &str,
        record: &mut IterationRecord,
        ctx: &CallContext,
        session: &Session,
    ) -> Result<VerifierVerdict, Halt> {
        let bindings = Bindings::new()
            .with("statement", statement_text)
            .with("proof", record.attempt.body.clone());
        let mut last_reason = String::new();
        for attempt in 0..2 {
            if attempt > 0 {
                record.malformed_requeries += 1;
            }
            let out = self.call(role, &bindings, ctx, session).await?;
            match parse_verdict(&out.text, &record.attempt, verifier_index) {
                Ok(v) => return Ok(v),
                Err(m) => {
                    self.emit(ProgressEvent::MalformedVerdict {
                        statement_id: ctx.subject.clone().unwrap_or_default(),
                        iteration: record.index,
                        verifier_index,
                        reason: m.reason.clone(),
                    });
                    last_reason = m.reason;
                }
            }
        }
        Ok(synthetic_rejection(verifier_index, &record.attempt, &last_reason))
    }
}

/// Rejection used when a verifier's output could not be parsed twice.
/// Its quote is the proof's opening words, copied verbatim.
fn synthetic_rejection(verifier_index: u8, attempt: &ProofAttempt, reason: &str) -> VerifierVerdict {
    VerifierVerdict::reject(
        verifier_index,
        format!("{UNPARSEABLE_VERDICT_EVIDENCE} ({reason})"),
        ProofPosition::new("unparseable verdict", leading_words(&attempt.body, 12)),
    )
}

fn leading_words(text: &str, n: usize) -> String {
    let base = text.as_ptr() as usize;
    let mut words = text.split_whitespace();
    let Some(first) = words.next() else {
        return String::new();
    };
    let start = first.as_ptr() as usize - base;
    let mut end = start + first.len();
    for w in words.take(n.saturating_sub(1)) {
        end = w.as_ptr() as usize - base + w.len();
    }
    text[start..end].to_string()
}
