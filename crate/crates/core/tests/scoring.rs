//! Scoring, table rendering and prompt layout on the fixture corpus.

mod common;

use std::sync::Arc;

use edurepair_core::corpus::CurationReport;
use edurepair_core::corpus::{label_correctness, load_corpus, LabelMode};
use edurepair_core::executor::{Executor, MockRunner};
use edurepair_core::generator::{generate, ReplayProvider};
use edurepair_core::metrics::{score_run, ScoreOptions, SubsetKey, SubsetScores};
use edurepair_core::pairer::{Provenance, RepairPair};
use edurepair_core::pipeline::{build_prompts, execute_generations};
use edurepair_core::promptgen::{build_repair_prompt, build_training_example};
use edurepair_core::report::{render, render_curation, Format, RenderSpec};
use edurepair_core::{
    Corpus, Difficulty, Error, ExecutionResult, GenerationRecord, PromptTemplate, SamplingConfig,
    SandboxLimits, ScoreReport, Verdict,
};

use common::{assert_golden, mini_run};

/// The two buggy programs of the fixture's test split.
fn eval_corpus() -> Corpus {
    let c = label_correctness(
        &load_corpus(&common::mini_root()).unwrap(),
        &LabelMode::ByScore,
    )
    .unwrap();
    let subs = c
        .submissions
        .iter()
        .filter(|s| s.semester.as_deref() == Some("spring22"))
        .cloned()
        .collect();
    c.with_submissions(subs)
}

fn run_fixture() -> (Corpus, Vec<GenerationRecord>, Vec<ExecutionResult>) {
    let c = eval_corpus();
    let t = PromptTemplate::default();
    let prompts = build_prompts(&c, &t).unwrap();
    let provider = ReplayProvider::from_file(&mini_run().join("generations.jsonl")).unwrap();
    let cfg = SamplingConfig {
        n: 4,
        ..SamplingConfig::default()
    };
    let gens = generate(&prompts, &provider, &cfg, &t).unwrap();
    let runner = MockRunner::from_file(&mini_run().join("mock_verdicts.jsonl")).unwrap();
    let results = execute_generations(
        &c,
        &gens,
        &Executor::new(Arc::new(runner), SandboxLimits::default(), 2),
    )
    .unwrap();
    (c, gens, results)
}

fn opts() -> ScoreOptions {
    ScoreOptions {
        ks: vec![1, 2, 4],
        n: 4,
        run_label: "replay-4".into(),
        ..ScoreOptions::default()
    }
}

#[test]
fn fixture_scores_match_hand_computation() {
    let (c, gens, results) = run_fixture();
    let (report, per_program) = score_run(&[("mini", &c)], &gens, &results, &opts()).unwrap();
    assert_eq!(per_program.len(), 2);
    let s05 = &per_program[0];
    assert_eq!((s05.submission_id.as_str(), s05.n, s05.c), ("s05", 4, 2));
    // Token LCS 25 of 31/25 tokens, and 21 of 35/25 tokens.
    let expected = [25.0 / 28.0, 0.0, 0.7, 0.0];
    for (got, want) in s05.rouge_values.iter().zip(expected) {
        assert!((got - want).abs() < 1e-12, "{:?}", s05.rouge_values);
    }
    assert_eq!(per_program[1].c, 0);
    assert_eq!(per_program[1].rouge_values, [0.0; 4]);

    let hard = report
        .subset(&SubsetKey::new("mini", Difficulty::Hard))
        .unwrap();
    assert_eq!(hard.programs, 1);
    assert!(hard.pass_at_k.values().all(|v| *v == 0.0));
}

#[test]
fn missing_results_are_integrity_errors_unless_extraction_failed() {
    let (c, gens, results) = run_fixture();
    // s05#3 failed extraction; without its result it is padded as a fail.
    let padded: Vec<ExecutionResult> = results
        .iter()
        .filter(|r| !(r.submission_id == "s05" && r.sample_index == 3))
        .cloned()
        .collect();
    let (a, _) = score_run(&[("mini", &c)], &gens, &padded, &opts()).unwrap();
    let (b, _) = score_run(&[("mini", &c)], &gens, &results, &opts()).unwrap();
    assert_eq!(a, b);

    let gaps: Vec<ExecutionResult> = results
        .iter()
        .filter(|r| !(r.sample_index == 1))
        .cloned()
        .collect();
    let err = score_run(&[("mini", &c)], &gens, &gaps, &opts()).unwrap_err();
    let Error::Integrity(msg) = &err else {
        panic!("{err}")
    };
    assert!(msg.contains("s05#1") && msg.contains("s09#1"), "{msg}");

    let mut dup = results.clone();
    dup.push(results[0].clone());
    let mut extra = results[0].clone();
    extra.sample_index = 9;
    dup.push(extra);
    let err = score_run(&[("mini", &c)], &gens, &dup, &opts()).unwrap_err();
    assert!(
        err.to_string().contains("duplicate") && err.to_string().contains("beyond n=4"),
        "{err}"
    );
}

#[test]
fn report_tables_golden() {
    let (c, gens, results) = run_fixture();
    let (report, _) = score_run(&[("mini", &c)], &gens, &results, &opts()).unwrap();
    let mut other = report.clone();
    other.run_label = "replay-4-copy".into();
    let reports = [report, other];
    let md = render(
        &reports,
        &RenderSpec::covering(&reports, vec![1, 2, 4], Format::Markdown),
    )
    .unwrap();
    let csv = render(
        &reports,
        &RenderSpec::covering(&reports, vec![1, 2, 4], Format::Csv),
    )
    .unwrap();
    assert_golden("report.md", &md);
    assert_golden("report.csv", &csv);

    // CSV parses back to the same numbers at two decimals.
    let mut rows = csv::Reader::from_reader(csv.as_bytes());
    let header = rows.headers().unwrap().clone();
    for row in rows.records() {
        let row = row.unwrap();
        let r = &reports[if &row[1] == "replay-4" { 0 } else { 1 }];
        for (col, cell) in header.iter().zip(row.iter()).skip(2) {
            let (label, k) = col.rsplit_once('@').unwrap();
            let s = r.subsets.iter().find(|s| s.key.label() == label).unwrap();
            let map = if &row[0] == "pass@k" {
                &s.pass_at_k
            } else {
                &s.rouge_at_k
            };
            let want = map[&k.parse::<usize>().unwrap()] * 100.0;
            assert!(
                (cell.parse::<f64>().unwrap() - want).abs() <= 0.005 + 1e-9,
                "{col}: {cell} vs {want}"
            );
        }
    }
}

fn one_cell(value: f64) -> ScoreReport {
    ScoreReport {
        run_label: "m".into(),
        n: 10,
        ks: vec![1],
        rouge_variant: Default::default(),
        subsets: vec![SubsetScores {
            key: SubsetKey::new("d", Difficulty::Easy),
            programs: 1,
            pass_at_k: [(1, value)].into(),
            rouge_at_k: [(1, value)].into(),
        }],
    }
}

#[test]
fn rendering_edge_cases() {
    let r = one_cell(0.190);
    let spec = RenderSpec::covering(std::slice::from_ref(&r), vec![1], Format::Csv);
    assert_eq!(
        render(std::slice::from_ref(&r), &spec).unwrap(),
        "metric,run,d_easy@1\npass@k,m,19.00\nrouge@k,m,19.00\n"
    );

    let empty = render(
        &[],
        &RenderSpec {
            format: Format::Markdown,
            ..spec.clone()
        },
    )
    .unwrap();
    assert!(
        !empty.contains("| m |") && empty.contains("| Run | d_easy@1 |"),
        "{empty}"
    );

    let missing = RenderSpec {
        ks: vec![1, 5],
        ..spec.clone()
    };
    let err = render(&[r], &missing).unwrap_err();
    assert!(matches!(err, Error::Render(_)));
    assert!(
        err.to_string().contains("d_easy") && err.to_string().contains("k=5"),
        "{err}"
    );
}

#[test]
fn curation_table_edge_cases() {
    let empty = render_curation(&CurationReport::default(), Format::Markdown).unwrap();
    assert_eq!(empty.lines().count(), 2);
}

#[test]
fn prompt_and_training_example_golden() {
    let c = eval_corpus();
    let t = PromptTemplate::default();
    let s05 = c.submission("s05").unwrap();
    let p1 = &c.problems["p1"];
    let prompt = build_repair_prompt(p1, s05, &t, None).unwrap();
    assert!(prompt.text.ends_with(&t.repair_marker));
    let pair = RepairPair {
        incorrect_submission_id: "s05".into(),
        repair_source: "def search(x, seq):\n    for i, elem in enumerate(seq):\n        if x <= elem:\n            return i\n    return len(seq)\n\n".into(),
        provenance: Provenance::ExternalArt,
        similarity: 25.0 / 28.0,
    };
    let ex = build_training_example(p1, s05, &pair, &t).unwrap();
    assert!(ex.text.starts_with(&prompt.text));
    assert!(!ex.repair_equals_source);
    assert_golden("training_example.txt", &ex.text);

    let ignored = build_repair_prompt(p1, s05, &t, Some("2 of 5 tests failed")).unwrap();
    assert_eq!(ignored, prompt);
    let t = PromptTemplate {
        include_grader_feedback: true,
        ..t
    };
    let with_feedback = build_repair_prompt(p1, s05, &t, Some("2 of 5 tests failed")).unwrap();
    assert_golden("prompt_with_feedback.txt", &with_feedback.text);
}

#[test]
fn extraction_failures_never_reach_the_sandbox() {
    let (_, gens, results) = run_fixture();
    let r = results
        .iter()
        .find(|r| r.submission_id == "s05" && r.sample_index == 3)
        .unwrap();
    assert!(gens
        .iter()
        .any(|g| g.submission_id == "s05" && g.sample_index == 3 && g.extracted_source.is_none()));
    assert_eq!(r.verdict, Verdict::Error);
    assert_eq!(r.duration, 0.0);
}
