//! Background prove and research batches.
//!
//! Every batch archives the config and template snapshots before its first
//! call, so each stored result points back at the exact prompts used.

use futures::stream::{self, StreamExt};
use tokio::sync::mpsc;
use ttvr_core::archive::{ConfigSnapshot, RecordKind, ResearchEntry, TemplateSnapshot};
use ttvr_core::certification::{certify_trace, CertificationCase};
use ttvr_core::engine::ProgressEvent;
use ttvr_core::research::{ResearchGoal, ResearchPipeline, Resolution};
use ttvr_core::wire::{
    ErrorCode, JobCreated, JobKind, JobResult, JobState, JobStatus, ProveOutcome, ProveRequest, ResearchRequest,
    RunOverrides,
};
use ttvr_core::{Engine, ProofStatus, RunConfig, RunTrace, TheoremStatement};

use crate::error::ApiError;
use crate::state::AppState;

pub(crate) fn apply_overrides(mut run: RunConfig, o: &RunOverrides) -> Result<RunConfig, ApiError> {
    if let Some(n) = o.max_iterations {
        run.max_iterations = n;
    }
    if let Some(m) = o.gateway_error_budget {
        run.gateway_error_budget = m;
    }
    if let Some(v) = o.verifier_count {
        run.verifier_count = v;
    }
    if let Some(a) = o.axiomatize_searchable_steps {
        run.axiomatize_searchable_steps = a;
    }
    run.validate()
        .map_err(|e| ApiError::new(ErrorCode::Config, e.to_string()))?;
    Ok(run)
}

fn base_run(state: &AppState) -> Result<RunConfig, ApiError> {
    state
        .settings()
        .run_config()
        .map_err(|e| ApiError::new(ErrorCode::Config, e.to_string()))
}

fn snapshot(state: &AppState, batch_id: &str, run: &RunConfig) -> Result<(), ApiError> {
    let settings = state.settings();
    let config = ConfigSnapshot {
        batch_id: batch_id.to_string(),
        run: run.clone(),
        model: settings.backend.model.clone(),
        backend: state.backend().id().to_string(),
        extra: serde_json::to_value(settings).map_err(|e| ApiError::internal(e.to_string()))?,
    };
    let templates = state.agents().templates();
    let template = TemplateSnapshot {
        batch_id: batch_id.to_string(),
        digest: templates.digest(),
        files: templates.files(),
    };
    let mut archive = state.archive()?;
    archive.append(RecordKind::ConfigSnapshot, &config)?;
    archive.append(RecordKind::TemplateSnapshot, &template)?;
    Ok(())
}

fn register(state: &AppState, kind: JobKind) -> JobCreated {
    let created = JobCreated {
        job_id: uuid::Uuid::new_v4().to_string(),
        batch_id: uuid::Uuid::new_v4().to_string(),
    };
    state.jobs().insert(
        created.job_id.clone(),
        JobStatus {
            job_id: created.job_id.clone(),
            batch_id: created.batch_id.clone(),
            kind,
            state: JobState::Running,
            events: Vec::new(),
            next_event: 0,
            result: None,
            error: None,
        },
    );
    created
}

fn finish(state: &AppState, job_id: &str, outcome: Result<JobResult, ApiError>) {
    if let Some(job) = state.jobs().get_mut(job_id) {
        match outcome {
            Ok(result) => {
                job.state = JobState::Succeeded;
                job.result = Some(result);
            }
            Err(e) => {
                tracing::error!(job = job_id, error = %e, "job failed");
                job.state = JobState::Failed;
                job.error = Some(e.body());
            }
        }
    }
}

/// Engine whose progress events land in the job record. The returned
/// handle completes once every engine clone is dropped.
fn engine_for(state: &AppState, job_id: &str) -> (Engine, tokio::task::JoinHandle<()>) {
    let (tx, mut rx) = mpsc::unbounded_channel::<ProgressEvent>();
    let forward_state = state.clone();
    let job_id = job_id.to_string();
    let handle = tokio::spawn(async move {
        while let Some(event) = rx.recv().await {
            if let Some(job) = forward_state.jobs().get_mut(&job_id) {
                job.events.push(event);
            }
        }
    });
    (state.engine().with_events(tx), handle)
}

/// Archives a trace and, for an accepted one, opens its certification case.
async fn settle_trace(
    state: &AppState,
    engine: &Engine,
    trace: &RunTrace,
    cases: &mut Vec<CertificationCase>,
    errors: &mut Vec<String>,
) -> Result<(), ApiError> {
    state.archive()?.append(RecordKind::Trace, trace)?;
    if trace.terminal != ProofStatus::ProvedUncertified {
        return Ok(());
    }
    let session = engine.session(trace.config.gateway_error_budget);
    match certify_trace(engine.agents(), &session, trace, state.checker()).await {
        Ok(Some(case)) => {
            state.archive()?.append(RecordKind::Certification, &case)?;
            cases.push(case);
        }
        Ok(None) => {}
        Err(e) => errors.push(format!("{}: certification failed: {e}", trace.statement.id)),
    }
    Ok(())
}

pub(crate) fn start_prove(state: &AppState, request: ProveRequest) -> Result<JobCreated, ApiError> {
    if request.statements.is_empty() {
        return Err(ApiError::bad_request("no statements given"));
    }
    for s in &request.statements {
        s.validate()
            .map_err(|e| ApiError::bad_request(format!("statement {:?}: {e}", s.id)))?;
    }
    let run = apply_overrides(base_run(state)?, &request.overrides)?;
    let created = register(state, JobKind::Prove);
    if let Err(e) = snapshot(state, &created.batch_id, &run) {
        state.jobs().remove(&created.job_id);
        return Err(e);
    }
    let state = state.clone();
    let job_id = created.job_id.clone();
    tokio::spawn(async move {
        let (engine, forwarder) = engine_for(&state, &job_id);
        let outcome = run_prove(&state, &engine, request.statements, &run).await;
        drop(engine);
        let _ = forwarder.await;
        finish(&state, &job_id, outcome.map(JobResult::Prove));
    });
    Ok(created)
}

async fn run_prove(
    state: &AppState,
    engine: &Engine,
    statements: Vec<TheoremStatement>,
    run: &RunConfig,
) -> Result<ProveOutcome, ApiError> {
    let settings = state.settings();
    let mut errors = Vec::new();
    let (statements, notation) = if settings.run.prepare_context_in_default_mode {
        let options = settings
            .research_options()
            .map_err(|e| ApiError::new(ErrorCode::Config, e.to_string()))?;
        let pipeline = ResearchPipeline::new(engine.clone(), options);
        match pipeline.prepare_statements(&statements).await {
            Ok(prepared) => {
                for c in prepared.candidates.iter().filter(|c| !c.kept) {
                    errors.push(format!(
                        "{}: dropped by the context preparer: {}",
                        c.statement.id,
                        c.drop_reason.as_deref().unwrap_or("")
                    ));
                }
                let kept = prepared.kept().map(|c| c.statement.clone()).collect();
                (kept, Some(prepared.notation))
            }
            Err(e) => {
                tracing::warn!(error = %e, "context preparation failed; running every statement");
                (statements, None)
            }
        }
    } else {
        (statements, None)
    };

    let results: Vec<_> = stream::iter(statements.clone())
        .map(|s| {
            let (engine, run, notation) = (engine.clone(), run.clone(), notation.clone());
            async move { engine.run_ttvr_with_notation(&s, &run, notation.as_deref()).await }
        })
        .buffered(settings.run.parallelism.max(1))
        .collect()
        .await;

    let mut traces = Vec::new();
    let mut cases = Vec::new();
    for (statement, result) in statements.iter().zip(results) {
        match result {
            Ok(trace) => {
                settle_trace(state, engine, &trace, &mut cases, &mut errors).await?;
                traces.push(trace);
            }
            Err(e) => errors.push(format!("{}: {e}", statement.id)),
        }
    }
    Ok(ProveOutcome { traces, cases, errors })
}

pub(crate) fn start_research(state: &AppState, request: ResearchRequest) -> Result<JobCreated, ApiError> {
    let goal = ResearchGoal::new(request.guideline, request.field_tag)
        .map_err(|e| ApiError::bad_request(e.to_string()))?;
    let mut options = state
        .settings()
        .research_options()
        .map_err(|e| ApiError::new(ErrorCode::Config, e.to_string()))?;
    options.run = apply_overrides(options.run, &request.overrides)?;
    let created = register(state, JobKind::Research);
    if let Err(e) = snapshot(state, &created.batch_id, &options.run) {
        state.jobs().remove(&created.job_id);
        return Err(e);
    }
    let state = state.clone();
    let job_id = created.job_id.clone();
    let research_id = created.batch_id.clone();
    tokio::spawn(async move {
        let (engine, forwarder) = engine_for(&state, &job_id);
        let pipeline = ResearchPipeline::new(engine.clone(), options);
        let outcome = run_research(&state, &engine, &pipeline, &goal, &research_id).await;
        drop((engine, pipeline));
        let _ = forwarder.await;
        finish(&state, &job_id, outcome);
    });
    Ok(created)
}

async fn run_research(
    state: &AppState,
    engine: &Engine,
    pipeline: &ResearchPipeline,
    goal: &ResearchGoal,
    research_id: &str,
) -> Result<JobResult, ApiError> {
    let mut report = pipeline.run_research(goal).await.map_err(|e| {
        let code = if e.is_backend() { ErrorCode::Backend } else { ErrorCode::Internal };
        ApiError::new(code, e.to_string())
    })?;
    let mut errors = Vec::new();
    let mut cases = Vec::new();
    {
        let mut archive = state.archive()?;
        for record in &report.stages {
            archive.append(
                RecordKind::ResearchStage,
                &ResearchEntry::Stage {
                    research_id: research_id.to_string(),
                    goal: goal.clone(),
                    record: record.clone(),
                },
            )?;
        }
        archive.append(
            RecordKind::ResearchStage,
            &ResearchEntry::Candidates {
                research_id: research_id.to_string(),
                goal: goal.clone(),
                notation: report.notation.clone(),
                candidates: report.candidates.clone(),
            },
        )?;
    }
    for settled in &report.settled {
        // Only proofs of the conjecture as stated go to certification; a
        // refutation would need the inverted statement formalized instead.
        if settled.resolution == Resolution::Proved {
            settle_trace(state, engine, &settled.trace, &mut cases, &mut errors).await?;
        } else {
            state.archive()?.append(RecordKind::Trace, &settled.trace)?;
        }
        state.archive()?.append(
            RecordKind::ResearchStage,
            &ResearchEntry::Settled {
                research_id: research_id.to_string(),
                candidate_id: settled.candidate.statement.id.clone(),
                run_id: settled.trace.run_id.clone(),
                resolution: settled.resolution,
                final_statement: settled.final_statement.clone(),
                note: settled.note.clone(),
            },
        )?;
    }
    report.warnings.extend(errors);
    Ok(JobResult::Research {
        report: Box::new(report),
        cases,
    })
}
