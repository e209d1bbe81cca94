//! Append-only run archive.
//!
//! Proofs found by the loop cannot be regenerated on demand, so everything
//! is written down: traces, certification cases, research stages, and the
//! exact configuration and prompt templates in force for each batch. The
//! archive is one JSON-lines file. A single writer holds an exclusive lock
//! on it; any number of readers may scan it and see a consistent prefix.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::certification::CertificationCase;
use crate::engine::RunTrace;
use crate::model::{ProofStatus, RunConfig, TheoremStatement};
use crate::record;
use crate::research::{ConjectureCandidate, ResearchGoal, Resolution, StageRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum RecordKind {
    Trace,
    Certification,
    ResearchStage,
    ConfigSnapshot,
    TemplateSnapshot,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchiveRecord {
    pub sequence: u64,
    pub kind: RecordKind,
    pub written_at: DateTime<Utc>,
    pub payload: serde_json::Value,
}

impl ArchiveRecord {
    pub fn payload_as<T: DeserializeOwned>(&self) -> Result<T, serde_json::Error> {
        T::deserialize(&self.payload)
    }
}

#[derive(Debug, Error)]
pub enum ArchiveError {
    #[error("archive {} is locked by another writer", path.display())]
    Locked { path: PathBuf },
    #[error("archive io: {0}")]
    Io(#[from] std::io::Error),
    #[error("archive payload: {0}")]
    Json(#[from] serde_json::Error),
}

/// Snapshot of everything that shapes a batch's prompts and loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigSnapshot {
    pub batch_id: String,
    pub run: RunConfig,
    pub model: String,
    pub backend: String,
    #[serde(default)]
    pub extra: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TemplateSnapshot {
    pub batch_id: String,
    pub digest: String,
    /// File name to full template text.
    pub files: BTreeMap<String, String>,
}

/// One research-mode entry. Settled outcomes refer to their trace by run id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "entry", rename_all = "snake_case")]
pub enum ResearchEntry {
    Stage {
        research_id: String,
        goal: ResearchGoal,
        record: StageRecord,
    },
    Candidates {
        research_id: String,
        goal: ResearchGoal,
        notation: String,
        candidates: Vec<ConjectureCandidate>,
    },
    Settled {
        research_id: String,
        candidate_id: String,
        run_id: String,
        resolution: Resolution,
        final_statement: TheoremStatement,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        note: Option<String>,
    },
}

/// Exclusive appender. The lock is released when the writer is dropped.
#[derive(Debug)]
pub struct ArchiveWriter {
    file: File,
    path: PathBuf,
    next_sequence: u64,
    fsync: bool,
}

impl ArchiveWriter {
    /// Opens (creating if needed) and locks the archive. A second writer on
    /// the same file gets [`ArchiveError::Locked`].
    pub fn open(path: impl AsRef<Path>) -> Result<Self, ArchiveError> {
        let path = path.as_ref().to_path_buf();
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent)?;
        }
        let mut file = OpenOptions::new()
            .read(true)
            .append(true)
            .create(true)
            .open(&path)?;
        match file.try_lock() {
            Ok(()) => {}
            Err(std::fs::TryLockError::WouldBlock) => return Err(ArchiveError::Locked { path }),
            Err(std::fs::TryLockError::Error(e)) => return Err(e.into()),
        }
        let scan = scan_reader(BufReader::new(&file))?;
        let next_sequence = scan.records.last().map_or(1, |r| r.sequence + 1);
        if scan.skipped > 0 {
            tracing::warn!(path = %path.display(), skipped = scan.skipped, "archive holds unreadable lines");
        }
        // A crash can leave a partial last line; start the next record on a fresh one.
        let len = file.seek(SeekFrom::End(0))?;
        if len > 0 {
            let mut last = [0u8; 1];
            file.seek(SeekFrom::Start(len - 1))?;
            file.read_exact(&mut last)?;
            if last[0] != b'\n' {
                file.write_all(b"\n")?;
            }
        }
        Ok(Self {
            file,
            path,
            next_sequence,
            fsync: true,
        })
    }

    /// Skips the per-record fsync. Records still reach the OS on every append.
    pub fn without_fsync(mut self) -> Self {
        self.fsync = false;
        self
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn next_sequence(&self) -> u64 {
        self.next_sequence
    }

    /// Appends one record and returns its sequence number.
    pub fn append<T: Serialize>(&mut self, kind: RecordKind, payload: &T) -> Result<u64, ArchiveError> {
        let record = ArchiveRecord {
            sequence: self.next_sequence,
            kind,
            written_at: Utc::now(),
            payload: serde_json::to_value(payload)?,
        };
        self.append_record(&record)?;
        Ok(record.sequence)
    }

    fn append_record(&mut self, record: &ArchiveRecord) -> Result<(), ArchiveError> {
        let mut line = record::to_line(record)?;
        line.push('\n');
        self.file.write_all(line.as_bytes())?;
        if self.fsync {
            self.file.sync_data()?;
        }
        self.next_sequence += 1;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedLine {
    pub line: usize,
    pub reason: String,
}

/// Records readable from an archive plus what had to be skipped.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ArchiveScan {
    pub records: Vec<ArchiveRecord>,
    pub skipped: usize,
    pub skipped_lines: Vec<SkippedLine>,
}

impl ArchiveScan {
    pub fn of_kind(&self, kind: RecordKind) -> impl Iterator<Item = &ArchiveRecord> {
        self.records.iter().filter(move |r| r.kind == kind)
    }

    pub fn traces(&self) -> impl Iterator<Item = RunTrace> + '_ {
        self.of_kind(RecordKind::Trace).filter_map(|r| r.payload_as().ok())
    }

    pub fn research_entries(&self) -> impl Iterator<Item = ResearchEntry> + '_ {
        self.of_kind(RecordKind::ResearchStage).filter_map(|r| r.payload_as().ok())
    }

    /// Latest state of every certification case, keyed by case id.
    pub fn cases(&self) -> BTreeMap<String, CertificationCase> {
        let mut out = BTreeMap::new();
        for case in self
            .of_kind(RecordKind::Certification)
            .filter_map(|r| r.payload_as::<CertificationCase>().ok())
        {
            out.insert(case.case_id.clone(), case);
        }
        out
    }

    /// Cases still waiting for the conformance review, oldest first.
    pub fn pending_reviews(&self) -> Vec<CertificationCase> {
        let mut pending: Vec<_> = self.cases().into_values().filter(|c| c.is_pending()).collect();
        pending.sort_by_key(|c| c.updated_at);
        pending
    }

    pub fn trace(&self, run_id: &str) -> Option<RunTrace> {
        self.traces().filter(|t| t.run_id == run_id).last()
    }
}

fn scan_reader<R: BufRead>(reader: R) -> Result<ArchiveScan, ArchiveError> {
    let mut scan = ArchiveScan::default();
    let mut last_sequence = 0u64;
    for (i, line) in reader.split(b'\n').enumerate() {
        let line = line?;
        let number = i + 1;
        let skip = |scan: &mut ArchiveScan, reason: String| {
            scan.skipped += 1;
            scan.skipped_lines.push(SkippedLine { line: number, reason });
        };
        let Ok(text) = std::str::from_utf8(&line) else {
            skip(&mut scan, "not utf-8".into());
            continue;
        };
        if text.trim().is_empty() {
            continue;
        }
        match record::from_line::<ArchiveRecord>(text) {
            Ok(r) if r.sequence <= last_sequence => {
                skip(&mut scan, format!("sequence {} does not increase", r.sequence));
            }
            Ok(r) => {
                last_sequence = r.sequence;
                scan.records.push(r);
            }
            Err(e) => skip(&mut scan, e.to_string()),
        }
    }
    Ok(scan)
}

/// Reads an archive without locking it. A missing file reads as empty.
pub fn read_archive(path: impl AsRef<Path>) -> Result<ArchiveScan, ArchiveError> {
    match File::open(path.as_ref()) {
        Ok(f) => {
            let scan = scan_reader(BufReader::new(f))?;
            for s in &scan.skipped_lines {
                tracing::warn!(line = s.line, reason = %s.reason, "skipping archive line");
            }
            Ok(scan)
        }
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(ArchiveScan::default()),
        Err(e) => Err(e.into()),
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ArchiveSummary {
    pub records: usize,
    pub skipped_records: usize,
    pub traces: usize,
    pub by_terminal: BTreeMap<String, usize>,
    pub by_resolution: BTreeMap<String, usize>,
    pub by_certification: BTreeMap<String, usize>,
    pub pending_reviews: usize,
    /// Mean iteration count over all traces; 0 when there are none.
    pub mean_difficulty: f64,
    /// Traces that ended with an accepted proof.
    pub solved: usize,
    /// `solved / traces`; 0 when there are none.
    pub solved_fraction: f64,
}

/// Aggregates in one pass over the scan.
pub fn summarize_archive(scan: &ArchiveScan) -> ArchiveSummary {
    let mut s = ArchiveSummary {
        records: scan.records.len(),
        skipped_records: scan.skipped,
        ..ArchiveSummary::default()
    };
    let mut difficulty_total = 0u64;
    let mut cases: BTreeMap<String, CertificationCase> = BTreeMap::new();
    let mut corrupt_payloads = 0;
    for r in &scan.records {
        match r.kind {
            RecordKind::Trace => match r.payload_as::<RunTrace>() {
                Ok(t) => {
                    s.traces += 1;
                    difficulty_total += u64::from(t.difficulty_index);
                    *s.by_terminal.entry(t.terminal.to_string()).or_default() += 1;
                    if matches!(t.terminal, ProofStatus::ProvedUncertified | ProofStatus::Valid) {
                        s.solved += 1;
                    }
                }
                Err(_) => corrupt_payloads += 1,
            },
            RecordKind::Certification => match r.payload_as::<CertificationCase>() {
                Ok(c) => {
                    cases.insert(c.case_id.clone(), c);
                }
                Err(_) => corrupt_payloads += 1,
            },
            RecordKind::ResearchStage => match r.payload_as::<ResearchEntry>() {
                Ok(ResearchEntry::Settled { resolution, .. }) => {
                    *s.by_resolution.entry(resolution.as_str().to_string()).or_default() += 1;
                }
                Ok(_) => {}
                Err(_) => corrupt_payloads += 1,
            },
            RecordKind::ConfigSnapshot | RecordKind::TemplateSnapshot => {}
        }
    }
    if corrupt_payloads > 0 {
        tracing::warn!(corrupt_payloads, "archive records with unreadable payloads were skipped");
    }
    s.skipped_records += corrupt_payloads;
    for c in cases.values() {
        *s.by_certification.entry(c.final_status.to_string()).or_default() += 1;
        if c.is_pending() {
            s.pending_reviews += 1;
        }
    }
    if s.traces > 0 {
        s.mean_difficulty = difficulty_total as f64 / s.traces as f64;
        s.solved_fraction = s.solved as f64 / s.traces as f64;
    }
    s
}
