//! `ttvr`: command line client of the prover/verifier service.
//!
//! With `--server URL` every command talks to a running service. Without
//! it the command starts the service in-process on a loopback port and
//! talks to that, so both paths share one code path.

mod exit;
mod research_out;
mod review;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ttvr_client::Client;
use ttvr_core::config::Settings;
use ttvr_core::engine::ProgressEvent;
use ttvr_core::record::parse_statements;
use ttvr_core::report::ReportFormat;
use ttvr_core::wire::{JobResult, ProveRequest, ResearchRequest, RunOverrides};
use ttvr_core::ProofStatus;
use ttvr_server::AppState;

use crate::exit::{CliError, EXIT_BACKEND, EXIT_CONFIG};

#[derive(Debug, Parser)]
#[command(name = "ttvr", version, about = "Prover/verifier revision loop for theorem proving")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Global {
    /// Configuration file (TOML).
    #[arg(long, global = true, env = "TTVR_CONFIG")]
    config: Option<PathBuf>,
    /// Use a running service instead of an in-process one.
    #[arg(long, global = true, env = "TTVR_SERVER")]
    server: Option<String>,
    /// Debug logging on stderr. Request bodies are logged with the key redacted.
    #[arg(short, long, global = true)]
    verbose: bool,
    /// No progress lines on stderr.
    #[arg(short, long, global = true)]
    quiet: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the HTTP service.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        listen: String,
    },
    /// Run the loop on every statement of a line-record file.
    Prove {
        statements: PathBuf,
        #[command(flatten)]
        overrides: OverrideArgs,
        /// Print the full result as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Generate, filter and settle conjectures from a one-sentence goal.
    Research {
        goal: String,
        #[arg(long, default_value = "")]
        field: String,
        /// Directory for every stage's raw output and the parsed records.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        overrides: OverrideArgs,
    },
    /// Decide pending conformance reviews one at a time.
    Review {
        #[arg(long, env = "USER", default_value = "reviewer")]
        reviewer: String,
    },
    /// Difficulty table of every statement in the archive.
    Report {
        #[arg(long, default_value = "table")]
        format: ReportFormat,
    },
    /// Archive statistics.
    Summarize {
        #[arg(long)]
        json: bool,
    },
}

#[derive(Debug, Args)]
struct OverrideArgs {
    /// Iteration cap N.
    #[arg(long)]
    max_iterations: Option<u32>,
    /// Transient error budget M.
    #[arg(long)]
    gateway_budget: Option<u32>,
    /// Number of sequential verifiers (1 or 2).
    #[arg(long)]
    verifiers: Option<u8>,
    /// Let the formalizer axiomatize steps found by search.
    #[arg(long)]
    axiomatize: bool,
}

impl OverrideArgs {
    fn into_overrides(self) -> RunOverrides {
        RunOverrides {
            max_iterations: self.max_iterations,
            gateway_error_budget: self.gateway_budget,
            verifier_count: self.verifiers,
            axiomatize_searchable_steps: self.axiomatize.then_some(true),
        }
    }
}

fn load_settings(path: Option<&PathBuf>) -> Result<Settings, CliError> {
    match path {
        Some(p) => Settings::load(p).map_err(|e| CliError::new(EXIT_CONFIG, e.to_string())),
        None => Ok(Settings::default()),
    }
}

fn start_state(cli: &Global) -> Result<AppState, CliError> {
    let mut settings = load_settings(cli.config.as_ref())?;
    settings.backend.verbose |= cli.verbose;
    AppState::new(settings).map_err(CliError::from)
}

/// Connects to `--server`, or starts the service on a loopback port.
async fn connect(cli: &Global) -> Result<Client, CliError> {
    if let Some(url) = &cli.server {
        return Client::new(url).map_err(|e| CliError::new(EXIT_CONFIG, e.to_string()));
    }
    let state = start_state(cli)?;
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0")
        .await
        .map_err(|e| CliError::other(format!("binding a loopback port: {e}")))?;
    let addr = listener
        .local_addr()
        .map_err(|e| CliError::other(e.to_string()))?;
    tokio::spawn(async move {
        if let Err(e) = ttvr_server::serve(listener, state).await {
            tracing::error!(error = %e, "embedded service stopped");
        }
    });
    Client::new(&format!("http://{addr}")).map_err(|e| CliError::other(e.to_string()))
}

fn progress(quiet: bool) -> impl FnMut(&ProgressEvent) {
    move |e| {
        if quiet {
            return;
        }
        match e {
            ProgressEvent::IterationStart { statement_id, iteration } => {
                eprintln!("[{statement_id}] iteration {iteration}");
            }
            ProgressEvent::Verdict {
                statement_id,
                iteration,
                verifier_index,
                decision,
            } => eprintln!("[{statement_id}] iteration {iteration}: verifier {verifier_index} {decision:?}"),
            ProgressEvent::MalformedVerdict {
                statement_id,
                verifier_index,
                reason,
                ..
            } => eprintln!("[{statement_id}] verifier {verifier_index} malformed: {reason}"),
            ProgressEvent::Terminal {
                statement_id,
                terminal,
                difficulty_index,
                gateway_errors,
            } => eprintln!("[{statement_id}] {terminal} after {difficulty_index} iteration(s), {gateway_errors} transient error(s)"),
        }
    }
}

async fn serve(cli: &Global, listen: &str) -> Result<(), CliError> {
    let state = start_state(cli)?;
    let listener = tokio::net::TcpListener::bind(listen)
        .await
        .map_err(|e| CliError::new(EXIT_CONFIG, format!("cannot listen on {listen}: {e}")))?;
    let addr = listener.local_addr().map_err(|e| CliError::other(e.to_string()))?;
    eprintln!("listening on http://{addr}");
    let shutdown = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    ttvr_server::serve_with_shutdown(listener, state, shutdown)
        .await
        .map_err(|e| CliError::other(e.to_string()))
}

async fn prove(cli: &Global, file: &PathBuf, overrides: RunOverrides, json: bool) -> Result<(), CliError> {
    let text = std::fs::read_to_string(file)
        .map_err(|e| CliError::new(EXIT_CONFIG, format!("reading {}: {e}", file.display())))?;
    let statements =
        parse_statements(&text).map_err(|e| CliError::new(EXIT_CONFIG, format!("{}: {e}", file.display())))?;
    let client = connect(cli).await?;
    let job = client.prove(&ProveRequest { statements, overrides }).await?;
    let result = client.wait_job(&job.job_id, progress(cli.quiet)).await?;
    let JobResult::Prove(outcome) = &result else {
        return Err(CliError::other("service returned a research result for a prove job"));
    };
    if json {
        println!("{}", serde_json::to_string_pretty(&result).map_err(|e| CliError::other(e.to_string()))?);
    } else {
        println!("batch {}", job.batch_id);
        for t in &outcome.traces {
            println!(
                "{:<20} {:<18} itn={:<3} transient_errors={}",
                t.statement.id, t.terminal, t.difficulty_index, t.gateway_errors
            );
        }
        for c in &outcome.cases {
            println!(
                "case {} for {}: checker {:?}, awaiting review",
                c.case_id, c.statement.id, c.artifact.checker_outcome
            );
        }
        for e in &outcome.errors {
            println!("error: {e}");
        }
    }
    if outcome.traces.iter().any(|t| t.terminal == ProofStatus::Aborted) {
        return Err(CliError::new(EXIT_BACKEND, "at least one run aborted on backend failures"));
    }
    Ok(())
}

async fn research(
    cli: &Global,
    goal: &str,
    field: &str,
    out: Option<&PathBuf>,
    overrides: RunOverrides,
) -> Result<(), CliError> {
    let client = connect(cli).await?;
    let request = ResearchRequest {
        guideline: goal.to_string(),
        field_tag: field.to_string(),
        overrides,
    };
    let job = client.research(&request).await?;
    let result = client.wait_job(&job.job_id, progress(cli.quiet)).await?;
    let JobResult::Research { report, cases } = result else {
        return Err(CliError::other("service returned a prove result for a research job"));
    };
    if let Some(dir) = out {
        research_out::write(dir, &report, &cases).map_err(|e| CliError::other(format!("{}: {e}", dir.display())))?;
    }
    println!("{}", research_out::overview(&report));
    if report.backend_failed() {
        return Err(CliError::new(EXIT_BACKEND, "a research stage failed on the backend"));
    }
    Ok(())
}

async fn summarize(cli: &Global, json: bool) -> Result<(), CliError> {
    let s = connect(cli).await?.summary().await?;
    if json {
        println!("{}", serde_json::to_string_pretty(&s).map_err(|e| CliError::other(e.to_string()))?);
        return Ok(());
    }
    println!("records          {}", s.records);
    println!("skipped records  {}", s.skipped_records);
    println!("traces           {}", s.traces);
    println!("solved           {} ({:.3})", s.solved, s.solved_fraction);
    println!("mean iterations  {:.2}", s.mean_difficulty);
    println!("pending reviews  {}", s.pending_reviews);
    for (label, counts) in [
        ("terminal", &s.by_terminal),
        ("resolution", &s.by_resolution),
        ("certification", &s.by_certification),
    ] {
        for (k, v) in counts {
            println!("{label:<16} {k} {v}");
        }
    }
    Ok(())
}

async fn run(cli: Cli) -> Result<(), CliError> {
    let g = &cli.global;
    match cli.command {
        Command::Serve { listen } => serve(g, &listen).await,
        Command::Prove {
            statements,
            overrides,
            json,
        } => prove(g, &statements, overrides.into_overrides(), json).await,
        Command::Research {
            goal,
            field,
            out,
            overrides,
        } => research(g, &goal, &field, out.as_ref(), overrides.into_overrides()).await,
        Command::Review { reviewer } => review::run(&connect(g).await?, &reviewer).await,
        Command::Report { format } => {
            let doc = connect(g).await?.report(format).await?;
            print!("{}", doc.document);
            Ok(())
        }
        Command::Summarize { json } => summarize(g, json).await,
    }
}

#[tokio::main]
async fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.global.verbose {
        tracing::Level::DEBUG
    } else {
        tracing::Level::WARN
    };
    tracing_subscriber::fmt()
        .with_max_level(level)
        .with_writer(std::io::stderr)
        .with_target(false)
        .init();
    match run(cli).await {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.exit)
        }
    }
}
