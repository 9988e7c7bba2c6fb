//! Harness configuration file (TOML). Unknown keys are rejected.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::corpus::{Canonicalizer, CurationPlan, LexicalCanonicalizer, ShimCanonicalizer};
use crate::error::{Error, Result};
use crate::executor::{MockRunner, SandboxLimits, SandboxRunner, ShimRunner};
use crate::generator::{ProviderSpec, SamplingConfig};
use crate::metrics::{RougeVariant, TokenizeOptions};
use crate::shim::ShimCommand;

fn default_runtime() -> String {
    "python3".into()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum RunnerSpec {
    /// Scripted verdicts keyed by program text.
    Mock { verdicts: PathBuf },
    Shim {
        script: PathBuf,
        #[serde(default = "default_runtime")]
        runtime: String,
    },
}

impl FromStr for RunnerSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.split_once(':') {
            Some(("mock", p)) if !p.is_empty() => Ok(RunnerSpec::Mock { verdicts: p.into() }),
            Some(("shim", p)) if !p.is_empty() => Ok(RunnerSpec::Shim {
                script: p.into(),
                runtime: default_runtime(),
            }),
            _ => Err(Error::Config(format!(
                "runner {s:?} must be mock:<file> or shim:<script>"
            ))),
        }
    }
}

impl RunnerSpec {
    pub fn build(&self) -> Result<Arc<dyn SandboxRunner>> {
        Ok(match self {
            RunnerSpec::Mock { verdicts } => Arc::new(MockRunner::from_file(verdicts)?),
            RunnerSpec::Shim { script, runtime } => {
                if !script.is_file() {
                    return Err(Error::Environment(format!(
                        "shim script {} not found",
                        script.display()
                    )));
                }
                Arc::new(ShimRunner::new(ShimCommand::new(
                    runtime.clone(),
                    script.clone(),
                )))
            }
        })
    }

    fn resolve(&mut self, base: &Path) {
        match self {
            RunnerSpec::Mock { verdicts: p } | RunnerSpec::Shim { script: p, .. } => {
                rebase(p, base)
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum CanonicalizerSpec {
    #[default]
    Lexical,
    Shim {
        script: PathBuf,
        #[serde(default = "default_runtime")]
        runtime: String,
    },
}

impl FromStr for CanonicalizerSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.split_once(':') {
            None if s == "lexical" => Ok(CanonicalizerSpec::Lexical),
            Some(("shim", p)) if !p.is_empty() => Ok(CanonicalizerSpec::Shim {
                script: p.into(),
                runtime: default_runtime(),
            }),
            _ => Err(Error::Config(format!(
                "canonicalizer {s:?} must be lexical or shim:<script>"
            ))),
        }
    }
}

impl CanonicalizerSpec {
    pub fn build(&self) -> Result<Box<dyn Canonicalizer>> {
        Ok(match self {
            CanonicalizerSpec::Lexical => Box::new(LexicalCanonicalizer),
            CanonicalizerSpec::Shim { script, runtime } => Box::new(ShimCanonicalizer::new(
                ShimCommand::new(runtime.clone(), script.clone()),
                Duration::from_secs(30),
            )?),
        })
    }

    fn resolve(&mut self, base: &Path) {
        if let CanonicalizerSpec::Shim { script, .. } = self {
            rebase(script, base);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelModeSpec {
    #[default]
    ByScore,
    ByTests,
    Preset,
}

impl FromStr for LabelModeSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").as_str() {
            "by_score" => Ok(LabelModeSpec::ByScore),
            "by_tests" => Ok(LabelModeSpec::ByTests),
            "preset" => Ok(LabelModeSpec::Preset),
            _ => Err(Error::Config(format!(
                "label mode {s:?} must be by_score, by_tests or preset"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScoringConfig {
    pub rouge_variant: RougeVariant,
    pub strip_comments: bool,
}

impl Default for ScoringConfig {
    fn default() -> Self {
        ScoringConfig {
            rouge_variant: RougeVariant::F,
            strip_comments: TokenizeOptions::default().strip_comments,
        }
    }
}

fn default_ks() -> Vec<usize> {
    vec![1, 5, 10]
}

fn default_parallelism() -> usize {
    4
}

fn default_run_label() -> String {
    "run".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HarnessConfig {
    pub dataset: PathBuf,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    /// Prompt template file; the built-in template when absent.
    #[serde(default)]
    pub template: Option<PathBuf>,
    #[serde(default = "default_run_label")]
    pub run_label: String,
    /// Dataset name in report columns; defaults to the dataset directory name.
    #[serde(default)]
    pub dataset_label: Option<String>,
    #[serde(default)]
    pub label_mode: LabelModeSpec,
    /// Split whose buggy programs are evaluated; required when splitting.
    #[serde(default)]
    pub eval_split: Option<String>,
    #[serde(default = "default_ks")]
    pub ks: Vec<usize>,
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
    #[serde(default)]
    pub curation: CurationPlan,
    #[serde(default)]
    pub canonicalizer: CanonicalizerSpec,
    #[serde(default)]
    pub sampling: SamplingConfig,
    #[serde(default)]
    pub sandbox: SandboxLimits,
    #[serde(default)]
    pub scoring: ScoringConfig,
    pub provider: ProviderSpec,
    pub runner: RunnerSpec,
}

fn rebase(path: &mut PathBuf, base: &Path) {
    if path.is_relative() {
        *path = base.join(&*path);
    }
}

impl HarnessConfig {
    /// Parses and validates a config file; relative paths resolve against its directory.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: HarnessConfig = toml::from_str(&text).map_err(|e| Error::Load {
            path: path.to_path_buf(),
            line: e
                .span()
                .map(|s| text[..s.start].lines().count().max(1))
                .unwrap_or(0),
            message: e.message().to_string(),
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        rebase(&mut self.dataset, base);
        if let Some(p) = &mut self.out_dir {
            rebase(p, base);
        }
        if let Some(p) = &mut self.template {
            rebase(p, base);
        }
        self.provider.resolve_paths(base);
        self.runner.resolve(base);
        self.canonicalizer.resolve(base);
    }

    pub fn validate(&self) -> Result<()> {
        self.sampling.validate()?;
        self.sandbox.validate()?;
        if self.parallelism == 0 {
            return Err(Error::Config("parallelism must be at least 1".into()));
        }
        if self.ks.is_empty() || self.ks.iter().any(|&k| k == 0 || k > self.sampling.n) {
            return Err(Error::Config(format!(
                "ks {:?} must be non-empty and within 1..={}",
                self.ks, self.sampling.n
            )));
        }
        if self.curation.is_split() && self.eval_split.is_none() {
            return Err(Error::Config(
                "eval_split is required when splits are configured".into(),
            ));
        }
        Ok(())
    }
}
