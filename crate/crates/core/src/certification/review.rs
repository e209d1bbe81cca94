//! What the reviewer sees: the original statement next to the premises and
//! conclusion the formal artifact declares. The proof body is left out on
//! purpose, since conformance is judged on the interface alone.

use serde::{Deserialize, Serialize};

use super::formalize::{declared_interface, DeclaredInterface};
use super::CertificationCase;
use crate::model::CheckerOutcome;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewScreen {
    pub case_id: String,
    pub statement_id: String,
    pub premises: Vec<String>,
    pub conclusion: String,
    pub declared: DeclaredInterface,
    pub checker_outcome: CheckerOutcome,
    pub axiomatized_steps: u32,
}

impl ReviewScreen {
    pub fn for_case(case: &CertificationCase) -> Self {
        Self {
            case_id: case.case_id.clone(),
            statement_id: case.statement.id.clone(),
            premises: case.statement.premises.clone(),
            conclusion: case.statement.conclusion.clone(),
            declared: declared_interface(&case.artifact.source_text),
            checker_outcome: case.artifact.checker_outcome,
            axiomatized_steps: case.artifact.axiomatized_steps,
        }
    }
}

const COLUMN: usize = 48;

fn wrap(text: &str, width: usize) -> Vec<String> {
    let mut lines = Vec::new();
    let mut current = String::new();
    for word in text.split_whitespace() {
        let extra = if current.is_empty() { 0 } else { 1 };
        if !current.is_empty() && current.chars().count() + extra + word.chars().count() > width {
            lines.push(std::mem::take(&mut current));
        }
        if !current.is_empty() {
            current.push(' ');
        }
        current.push_str(word);
    }
    if !current.is_empty() || lines.is_empty() {
        lines.push(current);
    }
    lines
}

fn row(out: &mut String, label: &str, left: &str, right: &str) {
    let l = wrap(left, COLUMN);
    let r = wrap(right, COLUMN);
    for i in 0..l.len().max(r.len()) {
        let tag = if i == 0 { label } else { "" };
        let a = l.get(i).map_or("", String::as_str);
        let b = r.get(i).map_or("", String::as_str);
        let pad = COLUMN.saturating_sub(a.chars().count());
        out.push_str(&format!("{tag:<14}{a}{:pad$} | {b}\n", ""));
    }
}

/// Plain-text side-by-side rendering for terminals.
pub fn render_review_screen(screen: &ReviewScreen) -> String {
    let mut out = format!(
        "case {}  (statement {})\nchecker: {:?}   axiomatized steps: {}\n\n",
        screen.case_id, screen.statement_id, screen.checker_outcome, screen.axiomatized_steps
    );
    if screen.axiomatized_steps > 0 {
        out.push_str("note: the artifact assumes axioms; inspect them before deciding\n\n");
    }
    row(&mut out, "", "ORIGINAL", "FORMAL (declared)");
    out.push_str(&format!("{}\n", "-".repeat(14 + COLUMN + 3 + COLUMN)));
    let n = screen.premises.len().max(screen.declared.premises.len());
    for i in 0..n {
        row(
            &mut out,
            &format!("premise {}", i + 1),
            screen.premises.get(i).map_or("(missing)", String::as_str),
            screen.declared.premises.get(i).map_or("(missing)", String::as_str),
        );
    }
    row(
        &mut out,
        "conclusion",
        &screen.conclusion,
        screen.declared.conclusion.as_deref().unwrap_or("(missing)"),
    );
    out
}
