mod common;

use std::collections::BTreeMap;
use std::sync::Arc;

use edurepair_core::corpus::split_by_semester;
use edurepair_core::executor::{Executor, MockRunner, ScriptedVerdict};
use edurepair_core::pairer::{
    failing_repairs, load_art_repairs, merge_external_repairs, nearest_correct_repair, ArtRepair,
    Provenance,
};
use edurepair_core::{Corpus, SandboxLimits, Submission, Verdict};

use common::{mini_corpus, mini_run};

fn train_split() -> Corpus {
    let map = BTreeMap::from([
        ("fall21".to_string(), "train".to_string()),
        ("spring21".to_string(), "dev".to_string()),
        ("spring22".to_string(), "test".to_string()),
    ]);
    split_by_semester(&mini_corpus(), &map, None)
        .unwrap()
        .remove("train")
        .unwrap()
}

fn with_source(base: &Submission, id: &str, source: &str) -> Submission {
    Submission {
        id: id.into(),
        source: source.into(),
        correct: Some(true),
        ..base.clone()
    }
}

#[test]
fn nearest_correct_of_a_pool_of_three() {
    let c = mini_corpus();
    let incorrect = c.submission("s01").unwrap();
    let pool = [
        with_source(incorrect, "c3", "def search(x, seq):\n    return sum(1 for e in seq if e < x)\n"),
        with_source(incorrect, "c1", &c.submission("s06").unwrap().source),
        with_source(
            incorrect,
            "c2",
            "def search(x, seq):\n    for i, elem in enumerate(seq):\n        if x <= elem:\n            return i\n    return len(seq)\n",
        ),
    ];
    let refs: Vec<&Submission> = pool.iter().collect();
    let pair = nearest_correct_repair(incorrect, &refs).unwrap();
    assert_eq!(pair.provenance, Provenance::NearestCorrect);
    assert_eq!(pair.repair_source, pool[1].source);
    assert!(
        (pair.similarity - 68.0 / 71.0).abs() < 1e-12,
        "{}",
        pair.similarity
    );

    // The runners-up, pinned from an independent LCS computation.
    let f = |s: &Submission| nearest_correct_repair(incorrect, &[s]).unwrap().similarity;
    assert!((f(&pool[2]) - 52.0 / 67.0).abs() < 1e-12);
    assert!((f(&pool[0]) - 28.0 / 57.0).abs() < 1e-12);
}

#[test]
fn ties_go_to_the_smallest_id() {
    let c = mini_corpus();
    let incorrect = with_source(c.submission("s01").unwrap(), "s01", "x = 1\n");
    let pool = [
        with_source(&incorrect, "z9", "x = 2\n"),
        with_source(&incorrect, "a1", "x = 3\n"),
    ];
    let pair = nearest_correct_repair(&incorrect, &[&pool[0], &pool[1]]).unwrap();
    assert_eq!(pair.repair_source, "x = 3\n");
    assert!((pair.similarity - 2.0 / 3.0).abs() < 1e-12);
    assert!(nearest_correct_repair(&incorrect, &[]).is_err());
}

#[test]
fn art_covering_two_of_three() {
    let train = train_split();
    let buggy: Vec<&str> = train.buggy().map(|s| s.id.as_str()).collect();
    assert_eq!(buggy, ["s01", "s02", "s07"]);

    let art = load_art_repairs(&mini_run().join("art_repairs.jsonl")).unwrap();
    let outcome = merge_external_repairs(&art, &train);
    let counts = outcome.provenance_counts();
    assert_eq!(
        counts,
        BTreeMap::from([
            (Provenance::ExternalArt, 2),
            (Provenance::NearestCorrect, 1)
        ])
    );
    assert!(outcome.unpaired.is_empty() && outcome.warnings.is_empty());
    let s02 = outcome
        .pairs
        .iter()
        .find(|p| p.incorrect_submission_id == "s02")
        .unwrap();
    assert_eq!(s02.provenance, Provenance::NearestCorrect);
    assert_eq!(s02.repair_source, train.submission("s06").unwrap().source);
}

#[test]
fn fallback_only_and_unpaired_reporting() {
    let train = train_split();
    let outcome = merge_external_repairs(&[], &train);
    // p2 has no correct program in the training split.
    assert_eq!(outcome.unpaired, ["s07"]);
    assert!(outcome
        .pairs
        .iter()
        .all(|p| p.provenance == Provenance::NearestCorrect));
    assert_eq!(outcome.pairs.len(), 2);

    let art = vec![
        ArtRepair {
            submission_id: "nope".into(),
            repair_source: "x = 1".into(),
        },
        ArtRepair {
            submission_id: "s07".into(),
            repair_source: "   ".into(),
        },
    ];
    let outcome = merge_external_repairs(&art, &train);
    assert_eq!(outcome.warnings.len(), 1);
    assert!(outcome.warnings[0].contains("nope"));
    assert_eq!(outcome.unpaired, ["s07"]);
}

#[test]
fn merge_is_deterministic() {
    let train = train_split();
    let art = load_art_repairs(&mini_run().join("art_repairs.jsonl")).unwrap();
    assert_eq!(
        merge_external_repairs(&art, &train),
        merge_external_repairs(&art, &train)
    );
}

#[test]
fn external_repairs_are_checked_against_the_tests() {
    let train = train_split();
    let art = load_art_repairs(&mini_run().join("art_repairs.jsonl")).unwrap();
    let outcome = merge_external_repairs(&art, &train);
    let runner = MockRunner::from_file(&mini_run().join("mock_verdicts.jsonl")).unwrap();
    let ex = Executor::new(Arc::new(runner), SandboxLimits::default(), 2);
    assert!(failing_repairs(&outcome.pairs, &train, &ex)
        .unwrap()
        .is_empty());

    let strict = MockRunner::new([ScriptedVerdict {
        source: train.submission("s06").unwrap().source.clone(),
        verdict: Verdict::Pass,
        tests_passed: 5,
        tests_total: 5,
    }]);
    let ex = Executor::new(Arc::new(strict), SandboxLimits::default(), 1);
    assert_eq!(
        failing_repairs(&outcome.pairs, &train, &ex).unwrap(),
        ["s07"]
    );
}
