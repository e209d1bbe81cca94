//! Line-oriented record codec.
//!
//! One JSON object per line, each carrying a `schema_version` next to the
//! record's own fields. Statement files, research output files and the
//! archive all use it.

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::RecordError;
use crate::model::TheoremStatement;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Serialize)]
struct EnvelopeRef<'a, T> {
    schema_version: u32,
    #[serde(flatten)]
    body: &'a T,
}

#[derive(Deserialize)]
struct Envelope<T> {
    schema_version: u64,
    #[serde(flatten)]
    body: T,
}

pub fn to_line<T: Serialize>(value: &T) -> Result<String, serde_json::Error> {
    serde_json::to_string(&EnvelopeRef {
        schema_version: SCHEMA_VERSION,
        body: value,
    })
}

pub fn from_line<T: DeserializeOwned>(line: &str) -> Result<T, RecordError> {
    parse_numbered(line, 1)
}

fn parse_numbered<T: DeserializeOwned>(line: &str, number: usize) -> Result<T, RecordError> {
    let env: Envelope<T> =
        serde_json::from_str(line).map_err(|source| RecordError::Json { line: number, source })?;
    if env.schema_version != u64::from(SCHEMA_VERSION) {
        return Err(RecordError::SchemaVersion {
            line: number,
            found: env.schema_version,
            expected: SCHEMA_VERSION,
        });
    }
    Ok(env.body)
}

/// Parses every non-blank line; the first bad line fails the whole read.
pub fn from_lines<T: DeserializeOwned>(text: &str) -> Result<Vec<T>, RecordError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| parse_numbered(l, i + 1))
        .collect()
}

pub fn to_lines<'a, T: Serialize + 'a>(
    values: impl IntoIterator<Item = &'a T>,
) -> Result<String, serde_json::Error> {
    let mut out = String::new();
    for v in values {
        out.push_str(&to_line(v)?);
        out.push('\n');
    }
    Ok(out)
}

/// Reads a statements file and checks each statement's invariants and
/// id uniqueness.
pub fn parse_statements(text: &str) -> Result<Vec<TheoremStatement>, RecordError> {
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let statement: TheoremStatement = parse_numbered(line, i + 1)?;
        statement
            .validate()
            .map_err(|source| RecordError::Model { line: i + 1, source })?;
        if !seen.insert(statement.id.clone()) {
            return Err(RecordError::Model {
                line: i + 1,
                source: crate::error::ModelError::Invalid {
                    type_name: "TheoremStatement",
                    reason: format!("duplicate id {:?}", statement.id),
                },
            });
        }
        out.push(statement);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::*;
    use proptest::prelude::*;

    #[test]
    fn field_names_and_version_are_on_the_line() {
        let s = TheoremStatement::user("t", vec!["p".into()], "c").unwrap();
        let line = to_line(&s).unwrap();
        assert!(line.starts_with(r#"{"schema_version":1,"id":"t","premises":["p"],"conclusion":"c","source":"USER_SUPPLIED"}"#));
        assert_eq!(from_line::<TheoremStatement>(&line).unwrap(), s);
    }

    #[test]
    fn wrong_schema_version_is_rejected() {
        let line = r#"{"schema_version":2,"id":"t","premises":[],"conclusion":"c","source":"USER_SUPPLIED"}"#;
        assert!(matches!(
            from_line::<TheoremStatement>(line),
            Err(RecordError::SchemaVersion { found: 2, .. })
        ));
    }

    #[test]
    fn statements_file_checks_invariants_and_duplicates() {
        let good = "{\"schema_version\":1,\"id\":\"a\",\"premises\":[],\"conclusion\":\"c\",\"source\":\"USER_SUPPLIED\"}\n\n";
        assert_eq!(parse_statements(good).unwrap().len(), 1);
        let dup = format!("{good}{good}");
        assert!(matches!(parse_statements(&dup), Err(RecordError::Model { line: 3, .. })));
        let empty = "{\"schema_version\":1,\"id\":\"a\",\"premises\":[],\"conclusion\":\"\",\"source\":\"USER_SUPPLIED\"}";
        assert!(parse_statements(empty).is_err());
    }

    fn verdict_strategy() -> impl Strategy<Value = VerifierVerdict> {
        prop_oneof![
            (1u8..=2).prop_map(VerifierVerdict::accept),
            (1u8..=2, "[a-z ]{1,30}", "[a-z0-9 ]{1,10}", "[a-z\"| ]{1,30}").prop_map(
                |(i, e, l, q)| VerifierVerdict::reject(i, e, ProofPosition::new(l, q))
            ),
        ]
    }

    proptest! {
        #[test]
        fn verdict_lines_round_trip(v in verdict_strategy()) {
            let line = to_line(&v).unwrap();
            prop_assert!(!line.contains('\n'));
            prop_assert_eq!(from_line::<VerifierVerdict>(&line).unwrap(), v);
        }

        #[test]
        fn statement_lines_round_trip(
            premises in proptest::collection::vec("[^\n]{1,20}", 0..4),
            conclusion in "[a-z]{1,20}",
            tag in proptest::option::of("[a-z ]{0,10}"),
        ) {
            let mut s = TheoremStatement {
                id: "x".into(),
                premises,
                conclusion,
                source: StatementSource::ResearchMode,
                goal_tag: None,
            };
            s.goal_tag = tag;
            let line = to_line(&s).unwrap();
            prop_assert_eq!(from_line::<TheoremStatement>(&line).unwrap(), s);
        }
    }
}
