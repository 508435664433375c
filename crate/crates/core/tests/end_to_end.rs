use std::fs;

use apsieve::pipeline::{run, verify_record, EliminationRecord, RecordLevel, RunConfig, Stage};

fn records(dir: &std::path::Path) -> Vec<EliminationRecord> {
    fs::read_to_string(dir.join("records.jsonl")).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect()
}

#[test]
fn every_record_reverifies() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = RunConfig {
        cases: (1..=12).collect(),
        p_max: Some(11),
        r_max: 400,
        workers: 2,
        out: dir.path().to_path_buf(),
        ..RunConfig::default()
    };
    let s = run(&cfg).unwrap();
    assert!(s.complete && s.verdict.only_trivial);
    let recs = records(dir.path());
    for r in &recs {
        assert!(verify_record(r).unwrap(), "{r:?}");
    }
    // one terminal record per processed (case, p, r) in the sieve cases
    for case in 1..=4u8 {
        for p in [7u64, 11] {
            let n = recs.iter().filter(|r| r.case == case && r.p == Some(p)).count();
            assert_eq!(n, 400, "case {case} p {p}");
        }
    }
    let cited: Vec<u8> = recs.iter().filter(|r| r.stage == Stage::ExternalFact).map(|r| r.case).collect();
    assert_eq!(cited, vec![1, 3, 4]);
    assert_eq!(recs.iter().filter(|r| r.stage == Stage::EvenCase).count(), 4);
    let verdict = fs::read_to_string(dir.path().join("verdict.txt")).unwrap();
    assert!(verdict.contains("cited, not computed:\n  case 1 p = 5"));
}

#[test]
fn post_germain_level_keeps_counts() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let mk = |out: &std::path::Path, records| RunConfig {
        cases: vec![2],
        p_max: Some(7),
        r_max: 3000,
        out: out.to_path_buf(),
        records,
        ..RunConfig::default()
    };
    let full = run(&mk(a.path(), RecordLevel::All)).unwrap();
    let slim = run(&mk(b.path(), RecordLevel::PostGermain)).unwrap();
    assert_eq!(full.tables, slim.tables);
    assert!(records(b.path()).iter().all(|r| !matches!(r.stage, Stage::Germain | Stage::CoprimeFilter)));
    assert!(records(b.path()).len() < records(a.path()).len());
}
