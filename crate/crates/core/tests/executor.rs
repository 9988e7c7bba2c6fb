mod common;

use std::fs;
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use edurepair_core::executor::{
    run_batch, Executor, MockRunner, RunnerOutcome, SandboxRunner, ScriptedVerdict,
};
use edurepair_core::{Error, GenerationRecord, Problem, Result, SandboxLimits, Verdict};

/// Verdict derived from the program text, after a text-dependent delay.
struct Jittery;

impl SandboxRunner for Jittery {
    fn run(&self, source: &str, _: &str, _: &SandboxLimits) -> Result<RunnerOutcome> {
        let h = source
            .bytes()
            .fold(7u64, |a, b| a.wrapping_mul(31).wrapping_add(b as u64));
        thread::sleep(Duration::from_millis(h % 7));
        let (verdict, passed) = match h % 3 {
            0 => (Verdict::Pass, 4),
            1 => (Verdict::Fail, 1),
            _ => (Verdict::Error, 0),
        };
        Ok(RunnerOutcome {
            verdict,
            tests_passed: passed,
            tests_total: if verdict == Verdict::Error { 0 } else { 4 },
            diagnostics: String::new(),
        })
    }
}

fn problem(dir: &std::path::Path) -> Problem {
    fs::write(dir.join("p1.py"), "def run(ns):\n    return [True]\n").unwrap();
    Problem {
        id: "p1".into(),
        title: "t".into(),
        description: "d".into(),
        difficulty: edurepair_core::Difficulty::Easy,
        max_score: 1.0,
        test_suite: "p1.py".into(),
    }
}

fn record(sub: &str, idx: usize, raw: &str) -> GenerationRecord {
    GenerationRecord::new(
        "p1",
        sub,
        idx,
        Ok(raw.to_string()),
        &["### END".to_string()],
    )
}

#[test]
fn parallelism_does_not_change_verdicts_or_order() {
    let dir = tempfile::tempdir().unwrap();
    let p = problem(dir.path());
    let work: Vec<(GenerationRecord, Problem)> = (0..48)
        .map(|i| {
            (
                record(&format!("s{}", i / 8), i % 8, &format!("x = {i}\n")),
                p.clone(),
            )
        })
        .collect();
    let runner: Arc<dyn SandboxRunner> = Arc::new(Jittery);
    let limits = SandboxLimits::default();
    let strip = |rs: Vec<edurepair_core::ExecutionResult>| {
        rs.into_iter()
            .map(|r| (r.submission_id, r.sample_index, r.verdict, r.tests_passed))
            .collect::<Vec<_>>()
    };
    let serial = strip(run_batch(&work, dir.path(), &limits, runner.clone(), 1).unwrap());
    let parallel = strip(run_batch(&work, dir.path(), &limits, runner, 8).unwrap());
    assert_eq!(serial, parallel);
    let keys: Vec<(String, usize)> = work
        .iter()
        .map(|(g, _)| (g.submission_id.clone(), g.sample_index))
        .collect();
    assert_eq!(
        serial
            .iter()
            .map(|r| (r.0.clone(), r.1))
            .collect::<Vec<_>>(),
        keys
    );
}

#[test]
fn unextracted_candidate_gets_an_error_without_running() {
    let dir = tempfile::tempdir().unwrap();
    let p = problem(dir.path());
    let work = vec![
        (record("s1", 0, "good = 1"), p.clone()),
        (record("s1", 1, "### END"), p.clone()),
        (record("s1", 2, "bad = 1"), p.clone()),
        (record("s1", 3, "```\ngood = 1\n```"), p),
    ];
    assert!(work[1].0.extracted_source.is_none());
    let runner = MockRunner::new([ScriptedVerdict {
        source: "good = 1".into(),
        verdict: Verdict::Pass,
        tests_passed: 3,
        tests_total: 3,
    }]);
    let results = run_batch(
        &work,
        dir.path(),
        &SandboxLimits::default(),
        Arc::new(runner),
        2,
    )
    .unwrap();
    assert_eq!(results.len(), 4);
    let verdicts: Vec<Verdict> = results.iter().map(|r| r.verdict).collect();
    assert_eq!(
        verdicts,
        [Verdict::Pass, Verdict::Error, Verdict::Fail, Verdict::Pass]
    );
    assert_eq!(results[1].duration, 0.0);
    assert!(results[1].diagnostics.contains("extracted"));
    assert_eq!(results[2].diagnostics, "no scripted verdict");
}

#[test]
fn missing_suite_marks_the_candidate_as_error() {
    let dir = tempfile::tempdir().unwrap();
    let mut p = problem(dir.path());
    p.test_suite = "absent.py".into();
    let work = vec![(record("s1", 0, "x = 1"), p)];
    let results = run_batch(
        &work,
        dir.path(),
        &SandboxLimits::default(),
        Arc::new(MockRunner::default()),
        1,
    )
    .unwrap();
    assert_eq!(results[0].verdict, Verdict::Error);
    assert!(results[0].diagnostics.contains("absent.py"));
}

struct Broken;

impl SandboxRunner for Broken {
    fn run(&self, _: &str, _: &str, _: &SandboxLimits) -> Result<RunnerOutcome> {
        Err(Error::Environment("runtime vanished".into()))
    }
}

#[test]
fn environment_failures_abort_the_batch() {
    let dir = tempfile::tempdir().unwrap();
    let p = problem(dir.path());
    let work = vec![(record("s1", 0, "x = 1"), p)];
    let err = run_batch(
        &work,
        dir.path(),
        &SandboxLimits::default(),
        Arc::new(Broken),
        1,
    )
    .unwrap_err();
    assert!(matches!(err, Error::Environment(_)));
}

#[test]
fn invalid_limits_and_parallelism_are_rejected() {
    let runner: Arc<dyn SandboxRunner> = Arc::new(MockRunner::default());
    let bad = SandboxLimits {
        wall_timeout: 0.0,
        ..SandboxLimits::default()
    };
    assert!(Executor::new(runner.clone(), bad, 1).run(&[]).is_err());
    assert!(Executor::new(runner, SandboxLimits::default(), 0)
        .run(&[])
        .is_err());
}

#[test]
fn mock_verdicts_of_the_fixture_label_reference_programs() {
    let c = edurepair_core::load_corpus(&common::mini_root()).unwrap();
    let runner = MockRunner::from_file(&common::mini_run().join("mock_verdicts.jsonl")).unwrap();
    let ex = Executor::new(Arc::new(runner), SandboxLimits::default(), 3);
    let verdicts = ex.label_sources(&c).unwrap();
    let passing: Vec<&str> = c
        .submissions
        .iter()
        .zip(&verdicts)
        .filter(|(_, v)| **v == Verdict::Pass)
        .map(|(s, _)| s.id.as_str())
        .collect();
    assert_eq!(passing, ["s06", "s08"]);
}
