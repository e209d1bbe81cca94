//! Files written by `ttvr research --out DIR`.
//!
//! ```text
//! DIR/report.json          whole report, traces included
//! DIR/candidates.jsonl     every harvested conjecture, kept or dropped
//! DIR/settled.jsonl        one resolution per kept conjecture
//! DIR/cases.jsonl          certification cases opened for proofs
//! DIR/stages/NN-<role>[-<subject>].txt   raw agent output per stage
//! ```

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use ttvr_core::certification::CertificationCase;
use ttvr_core::record::to_lines;
use ttvr_core::research::{ResearchReport, Resolution};

fn file_safe(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

pub fn write(dir: &Path, report: &ResearchReport, cases: &[CertificationCase]) -> io::Result<()> {
    let stages = dir.join("stages");
    fs::create_dir_all(&stages)?;
    let json = |e: serde_json::Error| io::Error::new(io::ErrorKind::InvalidData, e);
    fs::write(
        dir.join("report.json"),
        serde_json::to_string_pretty(report).map_err(json)?,
    )?;
    fs::write(dir.join("candidates.jsonl"), to_lines(&report.candidates).map_err(json)?)?;
    fs::write(dir.join("settled.jsonl"), to_lines(&report.settled).map_err(json)?)?;
    fs::write(dir.join("cases.jsonl"), to_lines(cases).map_err(json)?)?;
    for (i, stage) in report.stages.iter().enumerate() {
        let mut name = format!("{:02}-{}", i + 1, stage.stage.tag());
        if let Some(subject) = &stage.subject {
            name.push('-');
            name.push_str(&file_safe(subject));
        }
        let mut text = stage.raw_output.clone();
        if let Some(error) = &stage.error {
            let _ = write!(text, "\n\n# error: {error}");
        }
        for w in &stage.warnings {
            let _ = write!(text, "\n# warning: {w}");
        }
        fs::write(stages.join(format!("{name}.txt")), text)?;
    }
    Ok(())
}

pub fn overview(report: &ResearchReport) -> String {
    let kept = report.candidates.iter().filter(|c| c.kept).count();
    let mut out = format!(
        "goal: {}\ncandidates: {} harvested, {} kept\nresolutions: {} proved, {} refuted, {} unsettled\n",
        report.goal.guideline,
        report.candidates.len(),
        kept,
        report.count(Resolution::Proved),
        report.count(Resolution::Refuted),
        report.count(Resolution::Unsettled),
    );
    for s in &report.settled {
        let _ = writeln!(
            out,
            "  {:<10} {:<9} itn={:<3} {}",
            s.candidate.statement.id,
            s.resolution.as_str(),
            s.trace.difficulty_index,
            s.final_statement.conclusion
        );
    }
    for w in &report.warnings {
        let _ = writeln!(out, "warning: {w}");
    }
    out
}
