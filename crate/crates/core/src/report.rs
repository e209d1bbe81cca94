//! Difficulty tables and proof-length metrics.
//!
//! A row per item: iterations to settle it, whether it was open or closed,
//! whether it was settled by proof or refutation, a human correctness
//! judgement and the certification mark. An empty cell means "not known
//! yet", `NA` means "does not apply" and `?` means "unknown".

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::archive::{ArchiveScan, ResearchEntry};
use crate::certification::HumanAssessment;
use crate::model::ProofStatus;
use crate::research::Resolution;

/// Number of maximal runs of non-whitespace characters.
pub fn token_length(text: &str) -> usize {
    let mut count = 0;
    let mut in_token = false;
    for c in text.chars() {
        if c.is_whitespace() {
            in_token = false;
        } else if !in_token {
            in_token = true;
            count += 1;
        }
    }
    count
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("unrecognised cell `{0}`")]
pub struct CellParseError(pub String);

/// A cell value with a one-token textual form.
pub trait Mark: Sized + fmt::Display {
    fn from_mark(s: &str) -> Option<Self>;
}

macro_rules! marks {
    ($t:ty { $($variant:ident => $text:literal),* $(,)? }) => {
        impl fmt::Display for $t {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(match self { $(Self::$variant => $text),* })
            }
        }
        impl Mark for $t {
            fn from_mark(s: &str) -> Option<Self> {
                match s { $($text => Some(Self::$variant),)* _ => None }
            }
        }
    };
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OpenClosed {
    Open,
    Closed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Settlement {
    Proof,
    Refutation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Judgement {
    Yes,
    No,
}

/// `Y*` marks a certificate that relies on axiomatized steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Certified {
    Yes,
    WithAxioms,
}

marks!(OpenClosed { Open => "O", Closed => "C" });
marks!(Settlement { Proof => "P", Refutation => "R" });
marks!(Judgement { Yes => "Y", No => "N" });
marks!(Certified { Yes => "Y", WithAxioms => "Y*" });

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Iterations(pub u32);

impl fmt::Display for Iterations {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl Mark for Iterations {
    fn from_mark(s: &str) -> Option<Self> {
        s.parse().ok().filter(|n| *n > 0).map(Self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Cell<T> {
    Value(T),
    /// Pending: the test has not finished.
    #[default]
    Blank,
    NotApplicable,
    Unknown,
}

impl<T> Cell<T> {
    pub fn value(&self) -> Option<&T> {
        match self {
            Self::Value(v) => Some(v),
            _ => None,
        }
    }
}

impl<T: fmt::Display> fmt::Display for Cell<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Value(v) => v.fmt(f),
            other => f.write_str(other.special()),
        }
    }
}

impl<T> Cell<T> {
    fn special(&self) -> &'static str {
        match self {
            Self::Value(_) | Self::Blank => "",
            Self::NotApplicable => "NA",
            Self::Unknown => "?",
        }
    }
}

impl<T: Mark> FromStr for Cell<T> {
    type Err = CellParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "" => Ok(Self::Blank),
            "NA" => Ok(Self::NotApplicable),
            "?" => Ok(Self::Unknown),
            other => T::from_mark(other)
                .map(Self::Value)
                .ok_or_else(|| CellParseError(other.to_string())),
        }
    }
}

impl<T: fmt::Display> Serialize for Cell<T> {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de, T: Mark> Deserialize<'de> for Cell<T> {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DifficultyRow {
    pub item: String,
    pub itn: Cell<Iterations>,
    #[serde(default)]
    pub open_or_closed: Cell<OpenClosed>,
    #[serde(default)]
    pub proof_or_refutation: Cell<Settlement>,
    #[serde(default)]
    pub correct: Cell<Judgement>,
    #[serde(default)]
    pub certified: Cell<Certified>,
}

impl DifficultyRow {
    pub fn new(item: impl Into<String>, itn: Cell<Iterations>) -> Self {
        Self {
            item: item.into(),
            itn,
            open_or_closed: Cell::Blank,
            proof_or_refutation: Cell::Blank,
            correct: Cell::Blank,
            certified: Cell::Blank,
        }
    }

    /// An unsolved item: every column reads NA.
    pub fn unsolved(item: impl Into<String>) -> Self {
        Self {
            item: item.into(),
            itn: Cell::NotApplicable,
            open_or_closed: Cell::NotApplicable,
            proof_or_refutation: Cell::NotApplicable,
            correct: Cell::NotApplicable,
            certified: Cell::NotApplicable,
        }
    }

    fn cells(&self) -> [String; 6] {
        [
            self.item.clone(),
            self.itn.to_string(),
            self.open_or_closed.to_string(),
            self.proof_or_refutation.to_string(),
            self.correct.to_string(),
            self.certified.to_string(),
        ]
    }
}

pub const COLUMNS: [&str; 6] = ["item", "itn", "O/C", "P/R", "correct?", "certified?"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Csv,
    Table,
}

impl FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Self::Csv),
            "table" => Ok(Self::Table),
            other => Err(format!("unknown report format `{other}` (expected csv or table)")),
        }
    }
}

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("no rows to render")]
    Empty,
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

/// Renders rows deterministically. CSV has one line per item; the table
/// format puts items in columns, one line per measure.
pub fn render_difficulty_table(rows: &[DifficultyRow], format: ReportFormat) -> Result<String, ReportError> {
    if rows.is_empty() {
        return Err(ReportError::Empty);
    }
    match format {
        ReportFormat::Csv => {
            let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
            w.write_record(COLUMNS)?;
            for r in rows {
                w.write_record(r.cells())?;
            }
            let bytes = w.into_inner().map_err(|e| csv::Error::from(e.into_error()))?;
            Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
        }
        ReportFormat::Table => {
            let labels = ["item", "|itn|", "O/C", "P/R", "correct?", "certified?"];
            let grid: Vec<[String; 6]> = rows.iter().map(DifficultyRow::cells).collect();
            let label_width = labels.iter().map(|l| l.len()).max().unwrap_or(0);
            let widths: Vec<usize> = grid
                .iter()
                .map(|c| c.iter().map(|s| s.chars().count()).max().unwrap_or(0).max(1))
                .collect();
            let mut out = String::new();
            for (i, label) in labels.iter().enumerate() {
                let mut line = format!("{label:<label_width$} ||");
                for (cells, w) in grid.iter().zip(&widths) {
                    line.push_str(&format!(" {:>w$} |", cells[i]));
                }
                line.pop();
                out.push_str(line.trim_end());
                out.push('\n');
                if i == 0 {
                    out.push_str(&"-".repeat(label_width + 3 + widths.iter().map(|w| w + 3).sum::<usize>()));
                    out.push('\n');
                }
            }
            Ok(out)
        }
    }
}

/// Parses the CSV layout back into rows.
pub fn parse_difficulty_csv(text: &str) -> Result<Vec<DifficultyRow>, String> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let headers = reader.headers().map_err(|e| e.to_string())?.clone();
    if headers.iter().collect::<Vec<_>>() != COLUMNS {
        return Err(format!("expected header {}", COLUMNS.join(",")));
    }
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| e.to_string())?;
        let cell = |j: usize| rec.get(j).unwrap_or("");
        let err = |e: CellParseError| format!("row {}: {e}", i + 1);
        rows.push(DifficultyRow {
            item: cell(0).to_string(),
            itn: cell(1).parse().map_err(err)?,
            open_or_closed: cell(2).parse().map_err(err)?,
            proof_or_refutation: cell(3).parse().map_err(err)?,
            correct: cell(4).parse().map_err(err)?,
            certified: cell(5).parse().map_err(err)?,
        });
    }
    Ok(rows)
}

/// One row per statement id, in order of first appearance, from the latest
/// trace and certification state for that statement.
pub fn difficulty_rows(scan: &ArchiveScan) -> Vec<DifficultyRow> {
    let mut order: Vec<String> = Vec::new();
    let mut latest = BTreeMap::new();
    for t in scan.traces() {
        if !latest.contains_key(&t.statement.id) {
            order.push(t.statement.id.clone());
        }
        latest.insert(t.statement.id.clone(), t);
    }
    let mut resolutions = BTreeMap::new();
    for e in scan.research_entries() {
        if let ResearchEntry::Settled { run_id, resolution, .. } = e {
            resolutions.insert(run_id, resolution);
        }
    }
    let mut cases = BTreeMap::new();
    for c in scan.cases().into_values() {
        cases.insert(c.run_id.clone(), c);
    }

    order
        .into_iter()
        .map(|id| {
            let t = &latest[&id];
            let solved = matches!(
                t.terminal,
                ProofStatus::ProvedUncertified | ProofStatus::Valid | ProofStatus::Rejected
            );
            if !solved {
                return DifficultyRow::unsolved(id);
            }
            let mut row = DifficultyRow::new(id, Cell::Value(Iterations(t.difficulty_index)));
            row.proof_or_refutation = match resolutions.get(&t.run_id) {
                Some(Resolution::Refuted) => Cell::Value(Settlement::Refutation),
                Some(Resolution::Unsettled) => Cell::Unknown,
                Some(Resolution::Proved) | None => Cell::Value(Settlement::Proof),
            };
            if let Some(case) = cases.get(&t.run_id) {
                row.correct = match case.human_correct {
                    Some(HumanAssessment::Yes) => Cell::Value(Judgement::Yes),
                    Some(HumanAssessment::No) => Cell::Value(Judgement::No),
                    Some(HumanAssessment::Unsure) => Cell::Unknown,
                    None => Cell::Blank,
                };
                if case.final_status == ProofStatus::Valid {
                    row.certified = Cell::Value(if case.artifact.axiomatized_steps > 0 {
                        Certified::WithAxioms
                    } else {
                        Certified::Yes
                    });
                }
            }
            row
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use regex::Regex;

    #[test]
    fn token_length_examples() {
        assert_eq!(token_length(""), 0);
        assert_eq!(token_length("a  b\tc"), 3);
        assert_eq!(token_length("  lead and trail \n"), 3);
        assert_eq!(token_length("x\u{00a0}y"), 2);
    }

    proptest! {
        #[test]
        fn token_length_matches_regex_split(s in "[a-c \t\n\r\u{00a0}\u{2003}é]{0,64}") {
            let reference = Regex::new(r"\S+").unwrap().find_iter(&s).count();
            prop_assert_eq!(token_length(&s), reference);
        }
    }

    fn fixture() -> Vec<DifficultyRow> {
        let mut rows: Vec<DifficultyRow> = [9, 7, 3, 6, 5]
            .iter()
            .enumerate()
            .map(|(i, n)| {
                let mut r = DifficultyRow::new((i + 1).to_string(), Cell::Value(Iterations(*n)));
                r.correct = Cell::Value(Judgement::Yes);
                r
            })
            .collect();
        rows[2].certified = Cell::Value(Certified::Yes);
        rows.push(DifficultyRow::unsolved("6"));
        rows
    }

    #[test]
    fn csv_layout() {
        let csv = render_difficulty_table(&fixture(), ReportFormat::Csv).unwrap();
        assert_eq!(
            csv,
            "item,itn,O/C,P/R,correct?,certified?\n1,9,,,Y,\n2,7,,,Y,\n3,3,,,Y,Y\n4,6,,,Y,\n5,5,,,Y,\n6,NA,NA,NA,NA,NA\n"
        );
        assert_eq!(parse_difficulty_csv(&csv).unwrap(), fixture());
    }

    #[test]
    fn table_layout_is_transposed() {
        let t = render_difficulty_table(&fixture(), ReportFormat::Table).unwrap();
        let lines: Vec<&str> = t.lines().collect();
        assert_eq!(lines.len(), 7);
        assert!(lines[2].starts_with("|itn|"));
        assert!(lines[2].ends_with("NA"));
        assert!(lines[6].contains(" Y |"));
    }

    #[test]
    fn single_row_and_empty() {
        let one = vec![DifficultyRow::new("1", Cell::Unknown)];
        assert_eq!(
            render_difficulty_table(&one, ReportFormat::Csv).unwrap(),
            "item,itn,O/C,P/R,correct?,certified?\n1,?,,,,\n"
        );
        assert!(render_difficulty_table(&[], ReportFormat::Csv).is_err());
    }

    #[test]
    fn cells_parse_and_reject() {
        assert_eq!("Y*".parse::<Cell<Certified>>().unwrap(), Cell::Value(Certified::WithAxioms));
        assert_eq!(" ".parse::<Cell<Judgement>>().unwrap(), Cell::Blank);
        assert!("maybe".parse::<Cell<Judgement>>().is_err());
        assert!("0".parse::<Cell<Iterations>>().is_err());
        assert_eq!("csv".parse::<ReportFormat>().unwrap(), ReportFormat::Csv);
    }
}
