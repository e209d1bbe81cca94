//! Interactive conformance review.
//!
//! One pending case at a time: the statement's premises and conclusion
//! next to the ones the formal artifact declares. The reviewer answers
//! `c` (conformant), `n` (nonconformant), `s` (skip) or `q` (quit).

use tokio::io::{AsyncBufReadExt, AsyncWriteExt, BufReader, Lines, Stdin};
use ttvr_client::{Client, ClientError};
use ttvr_core::certification::HumanAssessment;
use ttvr_core::wire::ErrorCode;
use ttvr_core::ReviewDecision;

use crate::exit::CliError;

enum Choice {
    Decide(ReviewDecision),
    Skip,
    Quit,
}

fn parse_choice(line: &str) -> Option<Choice> {
    match line.trim().to_ascii_lowercase().as_str() {
        "c" | "conform" | "conformant" => Some(Choice::Decide(ReviewDecision::Conformant)),
        "n" | "nonconform" | "nonconformant" => Some(Choice::Decide(ReviewDecision::Nonconformant)),
        "s" | "skip" => Some(Choice::Skip),
        "q" | "quit" => Some(Choice::Quit),
        _ => None,
    }
}

fn parse_assessment(line: &str) -> Option<HumanAssessment> {
    match line.trim().to_ascii_lowercase().as_str() {
        "y" | "yes" => Some(HumanAssessment::Yes),
        "n" | "no" => Some(HumanAssessment::No),
        "u" | "?" | "unsure" => Some(HumanAssessment::Unsure),
        _ => None,
    }
}

async fn ask(lines: &mut Lines<BufReader<Stdin>>, prompt: &str) -> Result<Option<String>, CliError> {
    let mut out = tokio::io::stdout();
    let _ = out.write_all(prompt.as_bytes()).await;
    let _ = out.flush().await;
    lines.next_line().await.map_err(|e| CliError::other(e.to_string()))
}

pub async fn run(client: &Client, reviewer: &str) -> Result<(), CliError> {
    let pending = client.pending_reviews().await?;
    if pending.is_empty() {
        println!("no cases awaiting review");
        return Ok(());
    }
    let mut lines = BufReader::new(tokio::io::stdin()).lines();
    let (mut decided, mut skipped) = (0, 0);
    'cases: for (i, p) in pending.iter().enumerate() {
        println!("\ncase {} of {}", i + 1, pending.len());
        println!("{}", p.rendered);
        let choice = loop {
            let Some(line) = ask(&mut lines, "[c]onformant / [n]onconformant / [s]kip / [q]uit > ").await? else {
                break 'cases;
            };
            match parse_choice(&line) {
                Some(c) => break c,
                None => println!("answer c, n, s or q"),
            }
        };
        let decision = match choice {
            Choice::Quit => break,
            Choice::Skip => {
                skipped += 1;
                continue;
            }
            Choice::Decide(d) => d,
        };
        let notes = ask(&mut lines, "notes (optional) > ").await?.unwrap_or_default();
        match client
            .submit_review(&p.case.case_id, decision, reviewer, notes.trim())
            .await
        {
            Ok(case) => {
                decided += 1;
                println!("recorded: {}", case.final_status);
            }
            Err(e @ ClientError::Api { .. }) if e.code() == Some(ErrorCode::Conflict) => {
                println!("already decided elsewhere: {e}");
                continue;
            }
            Err(e) => return Err(e.into()),
        }
        let answer = ask(&mut lines, "is the proof correct? [y/n/u, empty to skip] > ")
            .await?
            .unwrap_or_default();
        if let Some(a) = parse_assessment(&answer) {
            client.set_correctness(&p.case.case_id, a).await?;
        }
    }
    println!("\n{decided} decided, {skipped} skipped, {} left", pending.len() - decided - skipped);
    Ok(())
}
