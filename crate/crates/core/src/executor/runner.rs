use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{SandboxLimits, Verdict};
use crate::error::{Error, Result};
use crate::jsonl;
use crate::shim::{self, RunStatus, RunTestsResponse, ShimCommand, ShimRequest};

/// What a runner reports for one program.
#[derive(Debug, Clone, PartialEq)]
pub struct RunnerOutcome {
    pub verdict: Verdict,
    pub tests_passed: u32,
    pub tests_total: u32,
    pub diagnostics: String,
}

impl RunnerOutcome {
    pub fn error(diagnostics: impl Into<String>) -> Self {
        RunnerOutcome {
            verdict: Verdict::Error,
            tests_passed: 0,
            tests_total: 0,
            diagnostics: diagnostics.into(),
        }
    }
}

/// Executes a program against a test suite in isolation.
///
/// `Err(Error::Environment)` means the runner itself is unusable; any other
/// failure is reported as an error verdict.
pub trait SandboxRunner: Send + Sync {
    fn run(&self, source: &str, test_source: &str, limits: &SandboxLimits)
        -> Result<RunnerOutcome>;
}

/// Runs each program in a fresh `<runtime> shim.py` process inside its own
/// scratch directory.
#[derive(Debug, Clone)]
pub struct ShimRunner {
    pub cmd: ShimCommand,
}

impl ShimRunner {
    pub fn new(cmd: ShimCommand) -> Self {
        ShimRunner { cmd }
    }
}

impl SandboxRunner for ShimRunner {
    fn run(
        &self,
        source: &str,
        test_source: &str,
        limits: &SandboxLimits,
    ) -> Result<RunnerOutcome> {
        let scratch = tempfile::tempdir()
            .map_err(|e| Error::Environment(format!("cannot create scratch dir: {e}")))?;
        let req = ShimRequest::RunTests {
            source: source.to_string(),
            test_source: test_source.to_string(),
        };
        let shot = shim::run_one_shot(
            &self.cmd,
            &req,
            scratch.path(),
            limits.timeout(),
            Some(limits.memory_cap),
            limits.output_cap,
        )?;
        if shot.timed_out {
            return Ok(RunnerOutcome {
                verdict: Verdict::Timeout,
                tests_passed: 0,
                tests_total: 0,
                diagnostics: format!(
                    "killed after {:.2}s wall clock\n{}",
                    shot.elapsed.as_secs_f64(),
                    shot.stderr_tail
                ),
            });
        }
        let Some(line) = shot.first_line else {
            return Ok(RunnerOutcome::error(format!(
                "shim produced no response ({})\n{}",
                shot.status
                    .map(|s| s.to_string())
                    .unwrap_or_else(|| "no exit status".into()),
                shot.stderr_tail
            )));
        };
        let resp: RunTestsResponse = match serde_json::from_str(&line) {
            Ok(r) => r,
            Err(e) => {
                return Ok(RunnerOutcome::error(format!(
                    "shim protocol violation: {e}: {line:.200}\n{}",
                    shot.stderr_tail
                )))
            }
        };
        let verdict = match resp.status {
            RunStatus::Pass => Verdict::Pass,
            RunStatus::Fail => Verdict::Fail,
            RunStatus::Error => Verdict::Error,
        };
        let mut diagnostics = resp.stderr_tail;
        if !shot.stderr_tail.is_empty() {
            if !diagnostics.is_empty() {
                diagnostics.push('\n');
            }
            diagnostics.push_str(&shot.stderr_tail);
        }
        Ok(RunnerOutcome {
            verdict,
            tests_passed: resp.tests_passed,
            tests_total: resp.tests_total,
            diagnostics,
        })
    }
}

/// One line of a mock-verdict script.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptedVerdict {
    pub source: String,
    pub verdict: Verdict,
    #[serde(default)]
    pub tests_passed: u32,
    #[serde(default)]
    pub tests_total: u32,
}

/// Answers from a table keyed by program text (trailing whitespace ignored).
/// Unknown programs get the fallback outcome, `fail 0/0` by default.
#[derive(Debug, Clone)]
pub struct MockRunner {
    scripted: HashMap<String, RunnerOutcome>,
    fallback: RunnerOutcome,
}

impl Default for MockRunner {
    fn default() -> Self {
        MockRunner {
            scripted: HashMap::new(),
            fallback: RunnerOutcome {
                verdict: Verdict::Fail,
                tests_passed: 0,
                tests_total: 0,
                diagnostics: "no scripted verdict".into(),
            },
        }
    }
}

impl MockRunner {
    pub fn new(entries: impl IntoIterator<Item = ScriptedVerdict>) -> Self {
        let mut runner = MockRunner::default();
        for e in entries {
            runner.scripted.insert(
                e.source.trim_end().to_string(),
                RunnerOutcome {
                    verdict: e.verdict,
                    tests_passed: e.tests_passed,
                    tests_total: e.tests_total,
                    diagnostics: String::new(),
                },
            );
        }
        runner
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let entries: Vec<ScriptedVerdict> = jsonl::read_jsonl(path)?;
        Ok(MockRunner::new(entries))
    }

    pub fn with_fallback(mut self, fallback: RunnerOutcome) -> Self {
        self.fallback = fallback;
        self
    }
}

impl SandboxRunner for MockRunner {
    fn run(
        &self,
        source: &str,
        _test_source: &str,
        _limits: &SandboxLimits,
    ) -> Result<RunnerOutcome> {
        Ok(self
            .scripted
            .get(source.trim_end())
            .unwrap_or(&self.fallback)
            .clone())
    }
}
