//! Runs extracted repairs against their problem's unit tests in a sandbox.

mod runner;

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Problem};
use crate::error::{Error, Result};
use crate::generator::GenerationRecord;

pub use runner::{MockRunner, RunnerOutcome, SandboxRunner, ScriptedVerdict, ShimRunner};

/// Slack allowed on top of `wall_timeout` for process teardown.
pub const TIMEOUT_GRACE: Duration = Duration::from_secs(1);

/// Resource caps for one sandboxed run. Network access is never granted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SandboxLimits {
    /// Seconds.
    pub wall_timeout: f64,
    /// Bytes of address space.
    pub memory_cap: u64,
    /// Bytes of diagnostics kept.
    pub output_cap: usize,
}

impl Default for SandboxLimits {
    fn default() -> Self {
        SandboxLimits {
            wall_timeout: 10.0,
            memory_cap: 512 * 1024 * 1024,
            output_cap: 64 * 1024,
        }
    }
}

impl SandboxLimits {
    pub fn validate(&self) -> Result<()> {
        if !(self.wall_timeout > 0.0) || self.memory_cap == 0 || self.output_cap == 0 {
            return Err(Error::Config(format!(
                "sandbox limits must be positive: {self:?}"
            )));
        }
        Ok(())
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_secs_f64(self.wall_timeout)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
    Error,
    Timeout,
}

/// Outcome of one candidate. `verdict == Pass` iff every test passed and there
/// was at least one test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionResult {
    pub submission_id: String,
    pub sample_index: usize,
    pub verdict: Verdict,
    pub tests_passed: u32,
    pub tests_total: u32,
    /// Seconds.
    pub duration: f64,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub diagnostics: String,
}

impl ExecutionResult {
    fn unrun(submission_id: &str, sample_index: usize, why: &str) -> Self {
        ExecutionResult {
            submission_id: submission_id.to_string(),
            sample_index,
            verdict: Verdict::Error,
            tests_passed: 0,
            tests_total: 0,
            duration: 0.0,
            diagnostics: why.to_string(),
        }
    }
}

/// Forces a runner's answer to respect the verdict invariants.
fn normalize(mut out: RunnerOutcome, limits: &SandboxLimits) -> RunnerOutcome {
    let inconsistent = out.tests_passed > out.tests_total
        || (out.verdict == Verdict::Pass
            && (out.tests_total == 0 || out.tests_passed != out.tests_total));
    if inconsistent {
        out.diagnostics = format!(
            "runner protocol violation: verdict {:?} with {}/{} tests\n{}",
            out.verdict, out.tests_passed, out.tests_total, out.diagnostics
        );
        out.verdict = Verdict::Error;
        out.tests_passed = out.tests_passed.min(out.tests_total);
    }
    out.diagnostics = crate::shim::truncate_tail(&out.diagnostics, limits.output_cap);
    out
}

/// Runs one program against the suite file at `suite`.
pub fn run_candidate(
    submission_id: &str,
    sample_index: usize,
    source: &str,
    suite: &Path,
    limits: &SandboxLimits,
    runner: &dyn SandboxRunner,
) -> Result<ExecutionResult> {
    let test_source = fs::read_to_string(suite)
        .map_err(|e| Error::Config(format!("test suite {}: {e}", suite.display())))?;
    let start = Instant::now();
    let outcome = match runner.run(source, &test_source, limits) {
        Ok(o) => o,
        Err(e @ Error::Environment(_)) => return Err(e),
        Err(e) => RunnerOutcome::error(e.to_string()),
    };
    let outcome = normalize(outcome, limits);
    Ok(ExecutionResult {
        submission_id: submission_id.to_string(),
        sample_index,
        verdict: outcome.verdict,
        tests_passed: outcome.tests_passed,
        tests_total: outcome.tests_total,
        duration: start.elapsed().as_secs_f64(),
        diagnostics: outcome.diagnostics,
    })
}

/// One unit of work for [`Executor::run`].
#[derive(Debug, Clone)]
pub struct Candidate {
    pub submission_id: String,
    pub sample_index: usize,
    /// `None` when extraction failed; no sandbox is started for it.
    pub source: Option<String>,
    pub suite: PathBuf,
}

/// A runner plus the limits and parallelism to drive it with.
#[derive(Clone)]
pub struct Executor {
    pub runner: Arc<dyn SandboxRunner>,
    pub limits: SandboxLimits,
    pub parallelism: usize,
}

impl Executor {
    pub fn new(runner: Arc<dyn SandboxRunner>, limits: SandboxLimits, parallelism: usize) -> Self {
        Executor {
            runner,
            limits,
            parallelism,
        }
    }

    /// Runs every candidate; results come back in input order.
    pub fn run(&self, candidates: &[Candidate]) -> Result<Vec<ExecutionResult>> {
        if self.parallelism == 0 {
            return Err(Error::Config("parallelism must be at least 1".into()));
        }
        self.limits.validate()?;
        let one = |c: &Candidate| -> Result<ExecutionResult> {
            let Some(source) = &c.source else {
                return Ok(ExecutionResult::unrun(
                    &c.submission_id,
                    c.sample_index,
                    "no repair could be extracted from the generation",
                ));
            };
            match run_candidate(
                &c.submission_id,
                c.sample_index,
                source,
                &c.suite,
                &self.limits,
                self.runner.as_ref(),
            ) {
                Err(Error::Config(msg)) => Ok(ExecutionResult::unrun(
                    &c.submission_id,
                    c.sample_index,
                    &msg,
                )),
                other => other,
            }
        };
        if self.parallelism == 1 {
            return candidates.iter().map(one).collect();
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.parallelism)
            .build()
            .map_err(|e| Error::Environment(format!("cannot build worker pool: {e}")))?;
        pool.install(|| candidates.par_iter().map(one).collect())
    }

    /// Verdict of every submission's own source against its problem's suite, in corpus order.
    pub fn label_sources(&self, corpus: &Corpus) -> Result<Vec<Verdict>> {
        let candidates: Vec<Candidate> = corpus
            .submissions
            .iter()
            .map(|s| Candidate {
                submission_id: s.id.clone(),
                sample_index: 0,
                source: Some(s.source.clone()),
                suite: corpus.suite_path(&corpus.problems[&s.problem_id]),
            })
            .collect();
        Ok(self
            .run(&candidates)?
            .into_iter()
            .map(|r| r.verdict)
            .collect())
    }
}

/// Runs generated repairs against the suites of their problems.
pub fn run_batch(
    candidates: &[(GenerationRecord, Problem)],
    suites_dir: &Path,
    limits: &SandboxLimits,
    runner: Arc<dyn SandboxRunner>,
    parallelism: usize,
) -> Result<Vec<ExecutionResult>> {
    let work: Vec<Candidate> = candidates
        .iter()
        .map(|(g, p)| Candidate {
            submission_id: g.submission_id.clone(),
            sample_index: g.sample_index,
            source: g.extracted_source.clone(),
            suite: suites_dir.join(&p.test_suite),
        })
        .collect();
    Executor::new(runner, limits.clone(), parallelism).run(&work)
}
