//! File-based end-to-end run: curate, prompt, generate, execute, score, report.
//!
//! Each stage reads the previous stage's artifacts from the output directory
//! and writes its own. A stage is skipped when its artifact already exists and
//! no upstream stage ran in the same invocation.

use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Serialize;

use crate::config::{HarnessConfig, LabelModeSpec};
use crate::corpus::{self, Corpus, CurationReport, LabelMode};
use crate::error::{Error, Result};
use crate::executor::{Candidate, ExecutionResult, Executor, SandboxRunner};
use crate::generator::{self, GenerationRecord};
use crate::jsonl;
use crate::metrics::{self, ScoreOptions, ScoreReport};
use crate::promptgen::{self, EvalPrompt, PromptTemplate};
use crate::report::{self, Format, RenderSpec};

pub const CURATED_DIR: &str = "curated";
pub const CURATION_REPORT: &str = "curation_report.json";
pub const PROMPTS: &str = "prompts.jsonl";
pub const GENERATIONS: &str = "generations.jsonl";
pub const RESULTS: &str = "results.jsonl";
pub const SCORES: &str = "scores.jsonl";
pub const REPORT_JSON: &str = "report.json";
pub const REPORT_MD: &str = "report.md";
pub const REPORT_CSV: &str = "report.csv";
pub const CURATION_MD: &str = "curation.md";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum StageName {
    Curate,
    Prompt,
    Generate,
    Execute,
    Score,
    Report,
}

impl StageName {
    pub const ALL: [StageName; 6] = [
        StageName::Curate,
        StageName::Prompt,
        StageName::Generate,
        StageName::Execute,
        StageName::Score,
        StageName::Report,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            StageName::Curate => "curate",
            StageName::Prompt => "prompt",
            StageName::Generate => "generate",
            StageName::Execute => "execute",
            StageName::Score => "score",
            StageName::Report => "report",
        }
    }

    /// Process exit status used when this stage fails.
    pub fn exit_code(self) -> i32 {
        10 + self as i32
    }

    /// The file whose presence marks the stage complete.
    pub fn artifact(self) -> &'static str {
        match self {
            StageName::Curate => CURATION_REPORT,
            StageName::Prompt => PROMPTS,
            StageName::Generate => GENERATIONS,
            StageName::Execute => RESULTS,
            StageName::Score => REPORT_JSON,
            StageName::Report => REPORT_MD,
        }
    }
}

impl fmt::Display for StageName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug)]
pub struct PipelineError {
    pub stage: StageName,
    pub source: Error,
}

impl fmt::Display for PipelineError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "stage {} failed: {}", self.stage, self.source)
    }
}

impl std::error::Error for PipelineError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.source)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct RunSummary {
    pub executed: Vec<StageName>,
    pub skipped: Vec<StageName>,
}

/// Template from an optional file, else the built-in one.
pub fn load_template(path: Option<&Path>) -> Result<PromptTemplate> {
    match path {
        Some(p) => PromptTemplate::from_file(p),
        None => Ok(PromptTemplate::default()),
    }
}

/// Applies a label mode; `by_tests` needs an executor.
pub fn apply_labels(
    c: &Corpus,
    mode: LabelModeSpec,
    executor: Option<&Executor>,
) -> Result<Corpus> {
    let mode = match (mode, executor) {
        (LabelModeSpec::ByScore, _) => LabelMode::ByScore,
        (LabelModeSpec::Preset, _) => LabelMode::Preset,
        (LabelModeSpec::ByTests, Some(ex)) => LabelMode::ByTests(ex),
        (LabelModeSpec::ByTests, None) => {
            return Err(Error::Config(
                "by_tests labeling needs a sandbox runner".into(),
            ))
        }
    };
    corpus::label_correctness(c, &mode)
}

/// One prompt per buggy submission, in corpus order.
pub fn build_prompts(c: &Corpus, t: &PromptTemplate) -> Result<Vec<EvalPrompt>> {
    c.buggy()
        .map(|s| promptgen::build_repair_prompt(&c.problems[&s.problem_id], s, t, None))
        .collect()
}

/// Runs each generation's extracted repair against its problem's suite.
pub fn execute_generations(
    c: &Corpus,
    generations: &[GenerationRecord],
    executor: &Executor,
) -> Result<Vec<ExecutionResult>> {
    let mut candidates = Vec::with_capacity(generations.len());
    for g in generations {
        let s = c.submission(&g.submission_id).ok_or_else(|| {
            Error::Integrity(format!(
                "generation for unknown submission {:?}",
                g.submission_id
            ))
        })?;
        candidates.push(Candidate {
            submission_id: g.submission_id.clone(),
            sample_index: g.sample_index,
            source: g.extracted_source.clone(),
            suite: c.suite_path(&c.problems[&s.problem_id]),
        });
    }
    executor.run(&candidates)
}

/// Reads a generations file and re-derives each extracted source with `stops`.
pub fn read_generations(path: &Path, stops: &[String]) -> Result<Vec<GenerationRecord>> {
    let mut gens: Vec<GenerationRecord> = jsonl::read_jsonl(path)?;
    for g in &mut gens {
        g.reextract(stops);
    }
    Ok(gens)
}

struct Ctx<'a> {
    cfg: &'a HarnessConfig,
    out: PathBuf,
    template: PromptTemplate,
    runner: Option<Arc<dyn SandboxRunner>>,
}

impl Ctx<'_> {
    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn executor(&mut self) -> Result<Executor> {
        let runner = match &self.runner {
            Some(r) => r.clone(),
            None => {
                let r = self.cfg.runner.build()?;
                self.runner = Some(r.clone());
                r
            }
        };
        Ok(Executor::new(
            runner,
            self.cfg.sandbox.clone(),
            self.cfg.parallelism,
        ))
    }

    fn eval_split(&self) -> &str {
        self.cfg.eval_split.as_deref().unwrap_or(corpus::UNSPLIT)
    }

    fn eval_corpus(&self) -> Result<Corpus> {
        corpus::load_corpus(&self.path(CURATED_DIR).join(self.eval_split()))
    }

    fn stops(&self) -> Vec<String> {
        self.cfg.sampling.stops(&self.template).to_vec()
    }

    fn run_stage(&mut self, stage: StageName) -> Result<()> {
        match stage {
            StageName::Curate => self.curate(),
            StageName::Prompt => {
                let c = self.eval_corpus()?;
                jsonl::write_jsonl(&self.path(PROMPTS), &build_prompts(&c, &self.template)?)
            }
            StageName::Generate => {
                let prompts: Vec<EvalPrompt> = jsonl::read_jsonl(&self.path(PROMPTS))?;
                let provider = self.cfg.provider.build(&self.stops())?;
                let records = generator::generate(
                    &prompts,
                    provider.as_ref(),
                    &self.cfg.sampling,
                    &self.template,
                )?;
                jsonl::write_jsonl(&self.path(GENERATIONS), &records)
            }
            StageName::Execute => {
                let c = self.eval_corpus()?;
                let gens = read_generations(&self.path(GENERATIONS), &self.stops())?;
                let executor = self.executor()?;
                let results = execute_generations(&c, &gens, &executor)?;
                jsonl::write_jsonl(&self.path(RESULTS), &results)
            }
            StageName::Score => {
                let c = self.eval_corpus()?;
                let gens = read_generations(&self.path(GENERATIONS), &self.stops())?;
                let results: Vec<ExecutionResult> = jsonl::read_jsonl(&self.path(RESULTS))?;
                let label = self.cfg.dataset_label.clone().unwrap_or_else(|| {
                    self.cfg
                        .dataset
                        .file_name()
                        .map(|n| n.to_string_lossy().into_owned())
                        .unwrap_or_else(|| "dataset".into())
                });
                let opts = ScoreOptions {
                    ks: self.cfg.ks.clone(),
                    n: self.cfg.sampling.n,
                    run_label: self.cfg.run_label.clone(),
                    rouge_variant: self.cfg.scoring.rouge_variant,
                    strip_comments: self.cfg.scoring.strip_comments,
                };
                let (report, per_program) =
                    metrics::score_run(&[(&label, &c)], &gens, &results, &opts)?;
                jsonl::write_jsonl(&self.path(SCORES), &per_program)?;
                jsonl::write_json(&self.path(REPORT_JSON), &report)
            }
            StageName::Report => {
                let report: ScoreReport = jsonl::read_json(&self.path(REPORT_JSON))?;
                let curation: CurationReport = jsonl::read_json(&self.path(CURATION_REPORT))?;
                let reports = [report];
                let mut ks = self.cfg.ks.clone();
                ks.sort_unstable();
                ks.dedup();
                let mut spec = RenderSpec::covering(&reports, ks, Format::Csv);
                if spec.subsets.is_empty() {
                    return Err(Error::Render("no buggy programs were scored".into()));
                }
                let csv = report::render(&reports, &spec)?;
                spec.format = Format::Markdown;
                let md = report::render(&reports, &spec)?;
                let cur = report::render_curation(&curation, Format::Markdown)?;
                jsonl::write_atomic(&self.path(REPORT_CSV), csv.as_bytes())?;
                jsonl::write_atomic(&self.path(CURATION_MD), cur.as_bytes())?;
                jsonl::write_atomic(&self.path(REPORT_MD), md.as_bytes())
            }
        }
    }

    fn curate(&mut self) -> Result<()> {
        let raw = corpus::load_corpus(&self.cfg.dataset)?;
        let executor = match self.cfg.label_mode {
            LabelModeSpec::ByTests => Some(self.executor()?),
            _ => None,
        };
        let labeled = apply_labels(&raw, self.cfg.label_mode, executor.as_ref())?;
        let canon = if self.cfg.curation.stages.contains(&corpus::Stage::Dedup) {
            Some(self.cfg.canonicalizer.build()?)
        } else {
            None
        };
        let (splits, report) = corpus::curate(&labeled, &self.cfg.curation, canon.as_deref())?;
        if !splits.contains_key(self.eval_split()) {
            return Err(Error::Config(format!(
                "eval split {:?} is not produced by the split map",
                self.eval_split()
            )));
        }
        let dir = self.path(CURATED_DIR);
        for (name, part) in &splits {
            corpus::write_corpus(part, &dir.join(name))?;
        }
        jsonl::write_json(&self.path(CURATION_REPORT), &report)
    }
}

/// Runs (or resumes) the whole pipeline into `out_dir`.
pub fn run_all(
    cfg: &HarnessConfig,
    out_dir: &Path,
) -> std::result::Result<RunSummary, PipelineError> {
    let fail = |stage| move |source| PipelineError { stage, source };
    cfg.validate().map_err(fail(StageName::Curate))?;
    let template = load_template(cfg.template.as_deref()).map_err(fail(StageName::Prompt))?;
    let mut ctx = Ctx {
        cfg,
        out: out_dir.to_path_buf(),
        template,
        runner: None,
    };
    let mut summary = RunSummary::default();
    let mut upstream_ran = false;
    for stage in StageName::ALL {
        if !upstream_ran && ctx.path(stage.artifact()).is_file() {
            tracing::info!(
                stage = stage.as_str(),
                status = "skipped",
                "artifact present"
            );
            summary.skipped.push(stage);
            continue;
        }
        tracing::info!(stage = stage.as_str(), status = "started");
        ctx.run_stage(stage).map_err(|source| {
            tracing::error!(stage = stage.as_str(), status = "failed", error = %source);
            PipelineError { stage, source }
        })?;
        tracing::info!(stage = stage.as_str(), status = "completed");
        summary.executed.push(stage);
        upstream_ran = true;
    }
    Ok(summary)
}
