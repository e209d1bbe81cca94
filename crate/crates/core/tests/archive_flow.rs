mod common;

use common::*;
use ttvr_core::archive::{read_archive, summarize_archive, ArchiveWriter, RecordKind};
use ttvr_core::certification::{submit_review, CertificationCase, HumanAssessment};
use ttvr_core::report::{difficulty_rows, render_difficulty_table, ReportFormat};
use ttvr_core::{CheckerOutcome, FormalArtifact, ProofStatus, ReviewDecision, RunConfig};

async fn traces(accept_at: &[Option<u32>], max_iterations: u32) -> Vec<ttvr_core::RunTrace> {
    let config = RunConfig::default().with_max_iterations(max_iterations).unwrap();
    let mut out = Vec::new();
    for (i, k) in accept_at.iter().enumerate() {
        let trace = engine(loop_backend(*k))
            .run_ttvr(&statement(&format!("s{}", i + 1)), &config)
            .await
            .unwrap();
        out.push(trace);
    }
    out
}

#[tokio::test]
async fn mean_difficulty_of_three_traces() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("a.jsonl");
    let mut w = ArchiveWriter::open(&path).unwrap().without_fsync();
    for t in traces(&[Some(1), Some(2), Some(3)], 15).await {
        w.append(RecordKind::Trace, &t).unwrap();
    }
    drop(w);
    let summary = summarize_archive(&read_archive(&path).unwrap());
    assert_eq!(summary.traces, 3);
    assert_eq!(summary.mean_difficulty, 2.0);
    assert_eq!(summary.by_terminal["PROVED_UNCERTIFIED"], 3);
}

#[tokio::test]
async fn twenty_two_of_sixty_six_is_a_third() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("a.jsonl");
    let mut w = ArchiveWriter::open(&path).unwrap().without_fsync();
    let plan: Vec<Option<u32>> = (0..66).map(|i| (i % 3 == 0).then_some(1)).collect();
    for t in traces(&plan, 2).await {
        w.append(RecordKind::Trace, &t).unwrap();
    }
    drop(w);
    let summary = summarize_archive(&read_archive(&path).unwrap());
    assert_eq!((summary.solved, summary.traces), (22, 66));
    assert!((summary.solved_fraction - 1.0 / 3.0).abs() < 1e-12);
    assert_eq!(summary.by_terminal["EXHAUSTED"], 44);
}

#[test]
fn empty_archive_summary_is_zero() {
    let dir = tempfile::tempdir().unwrap();
    let summary = summarize_archive(&read_archive(dir.path().join("none.jsonl")).unwrap());
    assert_eq!(summary, Default::default());
}

#[tokio::test]
async fn replay_is_idempotent_and_corruption_is_counted() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("a.jsonl");
    let mut w = ArchiveWriter::open(&path).unwrap();
    for t in traces(&[Some(2), None], 3).await {
        w.append(RecordKind::Trace, &t).unwrap();
    }
    drop(w);
    let mut text = std::fs::read_to_string(&path).unwrap();
    text.push_str("{\"not\": \"a record\"\n");
    std::fs::write(&path, text).unwrap();

    let first = summarize_archive(&read_archive(&path).unwrap());
    let second = summarize_archive(&read_archive(&path).unwrap());
    assert_eq!(first, second);
    assert_eq!(first.traces, 2);
    assert_eq!(first.skipped_records, 1);

    // The writer recovers from the torn tail and keeps sequences monotone.
    let mut w = ArchiveWriter::open(&path).unwrap();
    assert_eq!(w.append(RecordKind::Trace, &traces(&[Some(1)], 3).await[0]).unwrap(), 3);
    drop(w);
    let scan = read_archive(&path).unwrap();
    assert_eq!(scan.records.len(), 3);
}

#[tokio::test]
async fn report_rows_follow_cases_and_reviews() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("a.jsonl");
    let mut w = ArchiveWriter::open(&path).unwrap().without_fsync();
    let ts = traces(&[Some(4), None, Some(2)], 5).await;
    for t in &ts {
        w.append(RecordKind::Trace, t).unwrap();
    }
    let mut artifact = FormalArtifact::unchecked("theorem t : True := trivial", 1);
    artifact.checker_outcome = CheckerOutcome::Certified;
    artifact.checker_log = "ok".into();
    let case = CertificationCase::new(
        ts[0].run_id.clone(),
        ts[0].statement.clone(),
        ts[0].accepted_proof().unwrap().clone(),
        artifact,
    );
    w.append(RecordKind::Certification, &case).unwrap();
    let reviewed = submit_review(&case, ReviewDecision::Conformant, "r", "")
        .unwrap()
        .with_human_correct(HumanAssessment::Yes);
    assert_eq!(reviewed.final_status, ProofStatus::Valid);
    w.append(RecordKind::Certification, &reviewed).unwrap();
    drop(w);

    let scan = read_archive(&path).unwrap();
    assert!(scan.pending_reviews().is_empty());
    let csv = render_difficulty_table(&difficulty_rows(&scan), ReportFormat::Csv).unwrap();
    assert_eq!(
        csv,
        "item,itn,O/C,P/R,correct?,certified?\ns1,4,,P,Y,Y*\ns2,NA,NA,NA,NA,NA\ns3,2,,P,,\n"
    );
}
