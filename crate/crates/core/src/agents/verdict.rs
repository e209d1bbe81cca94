//! Machine-readable verdict grammar.
//!
//! ```text
//! VERDICT: REJECT
//! POSITION: <step label> | "<verbatim excerpt>"
//! EVIDENCE: <explanation, may continue on following lines>
//! ```
//!
//! Only the first `VERDICT:` line counts. For ACCEPT everything after it
//! is ignored.

use std::sync::LazyLock;

use regex::Regex;
use thiserror::Error;

use crate::model::{validate_verdict, Decision, ProofAttempt, ProofPosition, VerifierVerdict};

static VERDICT_LINE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)^[\s*`#>]*VERDICT\s*:\s*[*`]*\s*(ACCEPT|REJECT)\s*[*`.]*\s*$").unwrap()
});
static POSITION_LINE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r#"(?i)^[\s*`]*POSITION\s*:\s*[*`]*\s*([^|]*?)\s*\|\s*(?:"(.*)"|“(.*)”)\s*$"#).unwrap()
});
static POSITION_MARKER: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)^[\s*`]*POSITION\s*:").unwrap());
static EVIDENCE_LINE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)^[\s*`]*EVIDENCE\s*:\s*[*`]*\s?(.*)$").unwrap());

#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("MALFORMED_VERDICT: {reason}")]
pub struct MalformedVerdict {
    pub reason: String,
}

impl MalformedVerdict {
    fn new(reason: impl Into<String>) -> Self {
        Self { reason: reason.into() }
    }
}

pub fn parse_verdict(
    raw: &str,
    proof: &ProofAttempt,
    verifier_index: u8,
) -> Result<VerifierVerdict, MalformedVerdict> {
    let lines: Vec<&str> = raw.lines().collect();
    let (at, decision) = lines
        .iter()
        .enumerate()
        .find_map(|(i, l)| {
            VERDICT_LINE.captures(l).map(|c| {
                let d = if c[1].eq_ignore_ascii_case("accept") {
                    Decision::Accept
                } else {
                    Decision::Reject
                };
                (i, d)
            })
        })
        .ok_or_else(|| MalformedVerdict::new("no VERDICT: ACCEPT|REJECT line"))?;

    if decision == Decision::Accept {
        return Ok(VerifierVerdict::accept(verifier_index));
    }

    let rest = &lines[at + 1..];
    let mut position = None;
    let mut evidence: Option<String> = None;
    let mut i = 0;
    while i < rest.len() {
        let line = rest[i];
        if position.is_none() && POSITION_MARKER.is_match(line) {
            let caps = POSITION_LINE.captures(line).ok_or_else(|| {
                MalformedVerdict::new("POSITION line is not `<step label> | \"<quote>\"`")
            })?;
            let quote = caps.get(2).or_else(|| caps.get(3)).map_or("", |m| m.as_str());
            position = Some(ProofPosition::new(caps[1].trim(), quote));
            i += 1;
            continue;
        }
        if evidence.is_none() {
            if let Some(caps) = EVIDENCE_LINE.captures(line) {
                let mut text = caps[1].to_string();
                i += 1;
                while i < rest.len() && !POSITION_MARKER.is_match(rest[i]) {
                    text.push('\n');
                    text.push_str(rest[i]);
                    i += 1;
                }
                evidence = Some(text.trim().to_string());
                continue;
            }
        }
        i += 1;
    }

    let position = position.ok_or_else(|| MalformedVerdict::new("REJECT without POSITION"))?;
    let evidence = evidence
        .filter(|e| !e.is_empty())
        .ok_or_else(|| MalformedVerdict::new("REJECT without EVIDENCE"))?;
    let verdict = VerifierVerdict::reject(verifier_index, evidence, position);
    validate_verdict(&verdict, proof).map_err(|violations| {
        MalformedVerdict::new(
            violations
                .iter()
                .map(ToString::to_string)
                .collect::<Vec<_>>()
                .join("; "),
        )
    })?;
    Ok(verdict)
}

/// Renders a verdict in the grammar `parse_verdict` reads.
pub fn format_verdict(verdict: &VerifierVerdict) -> String {
    match verdict.decision {
        Decision::Accept => "VERDICT: ACCEPT".to_string(),
        Decision::Reject => {
            let mut out = String::from("VERDICT: REJECT\n");
            if let Some(p) = &verdict.position {
                out.push_str(&format!("POSITION: {p}\n"));
            }
            if let Some(e) = &verdict.evidence {
                out.push_str(&format!("EVIDENCE: {e}"));
            }
            out
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn proof() -> ProofAttempt {
        ProofAttempt::new(
            1,
            "**Step 3.** The sequence is bounded, hence by monotonicity it converges.",
            "t",
        )
        .unwrap()
    }

    #[test]
    fn accept() {
        let v = parse_verdict("VERDICT: ACCEPT", &proof(), 1).unwrap();
        assert_eq!(v, VerifierVerdict::accept(1));
    }

    #[test]
    fn accept_ignores_trailing_commentary() {
        let v = parse_verdict("VERDICT: ACCEPT\nNice proof.\nEVIDENCE: none", &proof(), 2).unwrap();
        assert_eq!(v, VerifierVerdict::accept(2));
    }

    #[test]
    fn reject_with_position_and_evidence() {
        let raw = "VERDICT: REJECT\nPOSITION: step 3 | \"hence by monotonicity it converges\"\nEVIDENCE: monotonicity unproved";
        let v = parse_verdict(raw, &proof(), 1).unwrap();
        assert_eq!(
            v,
            VerifierVerdict::reject(
                1,
                "monotonicity unproved",
                ProofPosition::new("step 3", "hence by monotonicity it converges")
            )
        );
    }

    #[test]
    fn spec_example_grammar() {
        let p = ProofAttempt::new(1, "we conclude by monotonicity that x > 0", "t").unwrap();
        let raw = "VERDICT: REJECT\nPOSITION: step 3 | \"conclude by monotonicity\"\nEVIDENCE: monotonicity unproved";
        let v = parse_verdict(raw, &p, 1).unwrap();
        assert_eq!(v.evidence.as_deref(), Some("monotonicity unproved"));
    }

    #[test]
    fn no_marker_is_malformed() {
        assert!(parse_verdict("The proof is fine.", &proof(), 1).is_err());
    }

    #[test]
    fn reject_needs_blocks() {
        let missing_pos = "VERDICT: REJECT\nEVIDENCE: bad";
        assert_eq!(
            parse_verdict(missing_pos, &proof(), 1).unwrap_err().reason,
            "REJECT without POSITION"
        );
        let missing_ev = "VERDICT: REJECT\nPOSITION: s | \"by monotonicity it converges\"";
        assert_eq!(
            parse_verdict(missing_ev, &proof(), 1).unwrap_err().reason,
            "REJECT without EVIDENCE"
        );
        let unverifiable = "VERDICT: REJECT\nPOSITION: s | \"by convexity it diverges\"\nEVIDENCE: x";
        assert!(parse_verdict(unverifiable, &proof(), 1)
            .unwrap_err()
            .reason
            .contains("quote not found"));
    }

    #[test]
    fn tolerant_markdown_and_multiline_evidence() {
        let raw = "Let me check.\n**VERDICT: REJECT**\nnotes in between\nEVIDENCE: line one\nline two\n\nPOSITION: Step 3 | “The sequence is bounded, hence”";
        let v = parse_verdict(raw, &proof(), 1).unwrap();
        assert_eq!(v.evidence.as_deref(), Some("line one\nline two"));
        assert_eq!(v.position.unwrap().quote, "The sequence is bounded, hence");
    }

    #[test]
    fn format_then_parse() {
        let v = VerifierVerdict::reject(
            2,
            "gap\nsecond line",
            ProofPosition::new("Step 3", "by monotonicity it converges"),
        );
        assert_eq!(parse_verdict(&format_verdict(&v), &proof(), 2).unwrap(), v);
    }
}
