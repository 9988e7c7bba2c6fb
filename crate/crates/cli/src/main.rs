//! `edurepair` command-line front end.
//!
//! Exit codes: 0 success, 2 bad arguments or config, 10..=15 failure in the
//! curate, prompt, generate, execute, score or report stage, 16 pairing failure.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};

use edurepair_core::config::{CanonicalizerSpec, LabelModeSpec, RunnerSpec};
use edurepair_core::corpus::{self, CurationPlan, CurationReport, Stage};
use edurepair_core::executor::{ExecutionResult, Executor};
use edurepair_core::generator::{self, ProviderSpec};
use edurepair_core::metrics::{self, RougeVariant, ScoreOptions};
use edurepair_core::pairer::{self, Provenance, RepairPair};
use edurepair_core::pipeline::{self, StageName};
use edurepair_core::promptgen::{self, EvalPrompt, PromptTemplate};
use edurepair_core::report::{self, Format, RenderSpec};
use edurepair_core::{jsonl, HarnessConfig, SamplingConfig, SandboxLimits, ScoreReport};

const EXIT_USAGE: u8 = 2;
const EXIT_PAIR: u8 = 16;

#[derive(Parser, Debug)]
#[command(
    name = "edurepair",
    version,
    about = "Program repair benchmark harness"
)]
struct Cli {
    /// Worker threads for sandboxed runs and pooled work.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Sampling seed forwarded to the completion provider.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory for default output paths (and the run-all output directory).
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Filter, deduplicate and split a dataset.
    Curate(CurateArgs),
    /// Build repair prompts, or training examples when --pairs is given.
    Prompt(PromptArgs),
    /// Draw samples for every prompt.
    Generate(GenerateArgs),
    /// Run extracted repairs against the unit tests.
    Execute(ExecuteArgs),
    /// Compute pass@k and rouge@k.
    Score(ScoreArgs),
    /// Render score or curation reports as tables.
    Report(ReportArgs),
    /// Build (incorrect, repair) training pairs.
    Pair(PairArgs),
    /// Run or resume the whole pipeline from a config file.
    RunAll(RunAllArgs),
}

#[derive(Args, Debug)]
struct CurateArgs {
    #[arg(long = "in")]
    input: PathBuf,
    /// Output directory; one corpus per split plus curation_report.json.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', value_parser = parse_stage)]
    stages: Vec<Stage>,
    /// Semester to split map, e.g. fall21=train,spring22=test.
    #[arg(long, value_parser = parse_split_map)]
    splits: Option<BTreeMap<String, String>>,
    /// Split for semesters missing from --splits.
    #[arg(long)]
    default_split: Option<String>,
    #[arg(long, default_value = "by-score", value_parser = parse_from_str::<LabelModeSpec>)]
    label: LabelModeSpec,
    /// Sandbox runner for --label by-tests.
    #[arg(long, value_parser = parse_from_str::<RunnerSpec>)]
    runner: Option<RunnerSpec>,
    #[arg(long, default_value = "10")]
    timeout: f64,
    #[arg(long, default_value = "lexical", value_parser = parse_from_str::<CanonicalizerSpec>)]
    canonicalizer: CanonicalizerSpec,
}

#[derive(Args, Debug)]
struct PromptArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// TOML prompt template; the built-in one when omitted.
    #[arg(long)]
    template: Option<PathBuf>,
    /// Emit training examples for these repair pairs instead of eval prompts.
    #[arg(long)]
    pairs: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct GenerateArgs {
    #[arg(long)]
    prompts: PathBuf,
    /// replay:<file> or http:<url>.
    #[arg(long, value_parser = parse_from_str::<ProviderSpec>)]
    provider: ProviderSpec,
    #[arg(long, default_value = "10")]
    n: usize,
    #[arg(long, default_value = "0.6")]
    temperature: f64,
    #[arg(long, default_value = "0.95")]
    top_p: f64,
    #[arg(long, default_value = "512")]
    max_tokens: usize,
    #[arg(long, default_value = "4")]
    max_in_flight: usize,
    /// Stop marker; repeatable. Defaults to the template's markers.
    #[arg(long = "stop")]
    stops: Vec<String>,
    #[arg(long)]
    template: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ExecuteArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    generations: PathBuf,
    /// mock:<verdicts.jsonl> or shim:<script>.
    #[arg(long, value_parser = parse_from_str::<RunnerSpec>)]
    runner: RunnerSpec,
    /// Wall-clock limit per run, in seconds.
    #[arg(long, default_value = "10")]
    timeout: f64,
    #[arg(long, default_value = "512")]
    memory_mb: u64,
    /// Template whose stop markers re-extract repairs from raw text.
    #[arg(long)]
    template: Option<PathBuf>,
    #[arg(long = "stop")]
    stops: Vec<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ScoreArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    generations: PathBuf,
    #[arg(long)]
    results: PathBuf,
    #[arg(long, default_value = "10")]
    n: usize,
    #[arg(long, value_delimiter = ',', default_value = "1,5,10")]
    ks: Vec<usize>,
    #[arg(long, default_value = "run")]
    run_label: String,
    /// Dataset name in report columns; defaults to the corpus directory name.
    #[arg(long)]
    dataset_label: Option<String>,
    #[arg(long, default_value = "f", value_parser = parse_rouge_variant)]
    rouge_variant: RougeVariant,
    #[arg(long)]
    strip_comments: bool,
    #[arg(long)]
    template: Option<PathBuf>,
    #[arg(long = "stop")]
    stops: Vec<String>,
    /// Directory for scores.jsonl and report.json.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ReportArgs {
    /// report.json files; one table row each.
    #[arg(long, num_args = 1.., required_unless_present = "curation")]
    scores: Vec<PathBuf>,
    /// Render a curation_report.json instead.
    #[arg(long, conflicts_with = "scores")]
    curation: Option<PathBuf>,
    #[arg(long, default_value = "markdown", value_parser = parse_from_str::<Format>)]
    format: Format,
    #[arg(long, value_delimiter = ',', default_value = "1,5,10")]
    ks: Vec<usize>,
    /// Write here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct PairArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// External repairs, {"submission_id","repair_source"} per line.
    #[arg(long)]
    art: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Check that external repairs pass their tests.
    #[arg(long, value_parser = parse_from_str::<RunnerSpec>)]
    runner: Option<RunnerSpec>,
    #[arg(long, default_value = "10")]
    timeout: f64,
}

#[derive(Args, Debug)]
struct RunAllArgs {
    #[arg(long)]
    config: PathBuf,
}

fn parse_from_str<T>(s: &str) -> Result<T, String>
where
    T: std::str::FromStr,
    T::Err: std::fmt::Display,
{
    s.parse::<T>().map_err(|e| e.to_string())
}

fn parse_stage(s: &str) -> Result<Stage, String> {
    parse_from_str(s)
}

fn parse_split_map(s: &str) -> Result<BTreeMap<String, String>, String> {
    let mut map = BTreeMap::new();
    for entry in s.split(',').filter(|e| !e.trim().is_empty()) {
        let (semester, split) = entry
            .split_once('=')
            .ok_or_else(|| format!("split entry {entry:?} must look like semester=split"))?;
        map.insert(semester.trim().to_string(), split.trim().to_string());
    }
    Ok(map)
}

fn parse_rouge_variant(s: &str) -> Result<RougeVariant, String> {
    match s {
        "f" => Ok(RougeVariant::F),
        "precision" | "p" => Ok(RougeVariant::Precision),
        "recall" | "r" => Ok(RougeVariant::Recall),
        _ => Err(format!(
            "rouge variant {s:?} must be f, precision or recall"
        )),
    }
}

/// An error tagged with the exit code it maps to.
struct Failure {
    code: u8,
    stage: &'static str,
    error: anyhow::Error,
}

trait Tag<T> {
    fn at(self, stage: StageName) -> Result<T, Failure>;
    fn usage(self) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> Tag<T> for Result<T, E> {
    fn at(self, stage: StageName) -> Result<T, Failure> {
        self.map_err(|e| Failure {
            code: stage.exit_code() as u8,
            stage: stage.as_str(),
            error: e.into(),
        })
    }

    fn usage(self) -> Result<T, Failure> {
        self.map_err(|e| Failure {
            code: EXIT_USAGE,
            stage: "config",
            error: e.into(),
        })
    }
}

struct Globals {
    jobs: Option<usize>,
    seed: Option<u64>,
    out_dir: Option<PathBuf>,
}

impl Globals {
    fn base(&self) -> PathBuf {
        self.out_dir.clone().unwrap_or_else(|| PathBuf::from("."))
    }

    fn out(&self, given: Option<PathBuf>, default: &str) -> PathBuf {
        given.unwrap_or_else(|| self.base().join(default))
    }

    fn jobs(&self) -> usize {
        self.jobs.unwrap_or(4)
    }
}

fn limits(timeout: f64) -> anyhow::Result<SandboxLimits> {
    let limits = SandboxLimits {
        wall_timeout: timeout,
        ..SandboxLimits::default()
    };
    limits.validate()?;
    Ok(limits)
}

fn template_and_stops(
    template: Option<&Path>,
    stops: Vec<String>,
) -> anyhow::Result<(PromptTemplate, Vec<String>)> {
    let t = pipeline::load_template(template)?;
    let stops = if stops.is_empty() {
        t.stop_markers.clone()
    } else {
        stops
    };
    Ok((t, stops))
}

fn curate(g: &Globals, a: CurateArgs) -> Result<(), Failure> {
    let stage = StageName::Curate;
    let plan = CurationPlan {
        stages: a.stages,
        splits: a.splits.unwrap_or_default(),
        default_split: a.default_split,
    };
    let executor = match (a.label, &a.runner) {
        (LabelModeSpec::ByTests, Some(spec)) => Some(Executor::new(
            spec.build().at(stage)?,
            limits(a.timeout).usage()?,
            g.jobs(),
        )),
        (LabelModeSpec::ByTests, None) => {
            return Err(anyhow!("--label by-tests requires --runner")).usage();
        }
        _ => None,
    };
    let raw = corpus::load_corpus(&a.input).at(stage)?;
    let labeled = pipeline::apply_labels(&raw, a.label, executor.as_ref()).at(stage)?;
    let canon = if plan.stages.contains(&Stage::Dedup) {
        Some(a.canonicalizer.build().at(stage)?)
    } else {
        None
    };
    let (splits, report) = corpus::curate(&labeled, &plan, canon.as_deref()).at(stage)?;

    let out = g.out(a.out, pipeline::CURATED_DIR);
    for (name, part) in &splits {
        corpus::write_corpus(part, &out.join(name)).at(stage)?;
    }
    jsonl::write_json(&out.join(pipeline::CURATION_REPORT), &report).at(stage)?;
    for row in &report.stages {
        tracing::info!(
            stage = row.name.as_str(),
            before = row.before,
            after = row.after,
            "curation stage"
        );
    }
    print!(
        "{}",
        report::render_curation(&report, Format::Markdown).at(stage)?
    );
    Ok(())
}

fn prompt(g: &Globals, a: PromptArgs) -> Result<(), Failure> {
    let stage = StageName::Prompt;
    let template = pipeline::load_template(a.template.as_deref()).at(stage)?;
    let c = corpus::load_corpus(&a.corpus).at(stage)?;
    match a.pairs {
        None => {
            let prompts = pipeline::build_prompts(&c, &template).at(stage)?;
            let out = g.out(a.out, pipeline::PROMPTS);
            jsonl::write_jsonl(&out, &prompts).at(stage)?;
            tracing::info!(prompts = prompts.len(), out = %out.display(), "prompts written");
        }
        Some(path) => {
            let pairs: Vec<RepairPair> = jsonl::read_jsonl(&path).at(stage)?;
            let mut examples = Vec::with_capacity(pairs.len());
            for pair in &pairs {
                let s = c
                    .submission(&pair.incorrect_submission_id)
                    .ok_or_else(|| {
                        anyhow!(
                            "pair for unknown submission {:?}",
                            pair.incorrect_submission_id
                        )
                    })
                    .at(stage)?;
                let p = &c.problems[&s.problem_id];
                examples.push(promptgen::build_training_example(p, s, pair, &template).at(stage)?);
            }
            let same = examples.iter().filter(|e| e.repair_equals_source).count();
            if same > 0 {
                tracing::warn!(
                    count = same,
                    "training examples whose repair equals the buggy program"
                );
            }
            let out = g.out(a.out, "training.jsonl");
            jsonl::write_jsonl(&out, &examples).at(stage)?;
            tracing::info!(examples = examples.len(), out = %out.display(), "training examples written");
        }
    }
    Ok(())
}

fn generate(g: &Globals, a: GenerateArgs) -> Result<(), Failure> {
    let stage = StageName::Generate;
    let cfg = SamplingConfig {
        n: a.n,
        temperature: a.temperature,
        top_p: a.top_p,
        max_new_tokens: a.max_tokens,
        stop_markers: a.stops,
        seed: g.seed,
        max_in_flight: a.max_in_flight,
    };
    cfg.validate().usage()?;
    let template = pipeline::load_template(a.template.as_deref()).at(stage)?;
    let prompts: Vec<EvalPrompt> = jsonl::read_jsonl(&a.prompts).at(stage)?;
    let provider = a.provider.build(cfg.stops(&template)).at(stage)?;
    let records = generator::generate(&prompts, provider.as_ref(), &cfg, &template).at(stage)?;
    let failed = records
        .iter()
        .filter(|r| r.extracted_source.is_none())
        .count();
    let out = g.out(a.out, pipeline::GENERATIONS);
    jsonl::write_jsonl(&out, &records).at(stage)?;
    tracing::info!(records = records.len(), unextracted = failed, out = %out.display(), "generations written");
    Ok(())
}

fn execute(g: &Globals, a: ExecuteArgs) -> Result<(), Failure> {
    let stage = StageName::Execute;
    let limits = SandboxLimits {
        wall_timeout: a.timeout,
        memory_cap: a.memory_mb * 1024 * 1024,
        ..SandboxLimits::default()
    };
    limits.validate().usage()?;
    let (_, stops) = template_and_stops(a.template.as_deref(), a.stops).at(stage)?;
    let c = corpus::load_corpus(&a.corpus).at(stage)?;
    let gens = pipeline::read_generations(&a.generations, &stops).at(stage)?;
    let executor = Executor::new(a.runner.build().at(stage)?, limits, g.jobs());
    let results = pipeline::execute_generations(&c, &gens, &executor).at(stage)?;
    let out = g.out(a.out, pipeline::RESULTS);
    jsonl::write_jsonl(&out, &results).at(stage)?;
    let mut verdicts: BTreeMap<String, usize> = BTreeMap::new();
    for r in &results {
        *verdicts
            .entry(format!("{:?}", r.verdict).to_lowercase())
            .or_default() += 1;
    }
    tracing::info!(results = results.len(), verdicts = ?verdicts, out = %out.display(), "results written");
    Ok(())
}

fn score(g: &Globals, a: ScoreArgs) -> Result<(), Failure> {
    let stage = StageName::Score;
    let (_, stops) = template_and_stops(a.template.as_deref(), a.stops).at(stage)?;
    let c = corpus::load_corpus(&a.corpus).at(stage)?;
    let gens = pipeline::read_generations(&a.generations, &stops).at(stage)?;
    let results: Vec<ExecutionResult> = jsonl::read_jsonl(&a.results).at(stage)?;
    let label = a.dataset_label.unwrap_or_else(|| {
        fs::canonicalize(&a.corpus)
            .ok()
            .and_then(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
            .unwrap_or_else(|| "dataset".into())
    });
    let opts = ScoreOptions {
        ks: a.ks,
        n: a.n,
        run_label: a.run_label,
        rouge_variant: a.rouge_variant,
        strip_comments: a.strip_comments,
    };
    let (report, per_program) =
        metrics::score_run(&[(&label, &c)], &gens, &results, &opts).at(stage)?;
    let out = a.out.unwrap_or_else(|| g.base());
    jsonl::write_jsonl(&out.join(pipeline::SCORES), &per_program).at(stage)?;
    jsonl::write_json(&out.join(pipeline::REPORT_JSON), &report).at(stage)?;
    tracing::info!(programs = per_program.len(), out = %out.display(), "scores written");
    Ok(())
}

fn render_report(a: ReportArgs) -> Result<(), Failure> {
    let stage = StageName::Report;
    let text = match &a.curation {
        Some(path) => {
            let cur: CurationReport = jsonl::read_json(path).at(stage)?;
            report::render_curation(&cur, a.format).at(stage)?
        }
        None => {
            let mut reports = Vec::with_capacity(a.scores.len());
            for path in &a.scores {
                let r: ScoreReport = jsonl::read_json(path)
                    .with_context(|| format!("reading {}", path.display()))
                    .at(stage)?;
                reports.push(r);
            }
            let mut ks = a.ks;
            ks.sort_unstable();
            ks.dedup();
            let spec = RenderSpec::covering(&reports, ks, a.format);
            report::render(&reports, &spec).at(stage)?
        }
    };
    match a.out {
        Some(path) => jsonl::write_atomic(&path, text.as_bytes()).at(stage)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn pair(g: &Globals, a: PairArgs) -> Result<(), Failure> {
    let fail = |e: anyhow::Error| Failure {
        code: EXIT_PAIR,
        stage: "pair",
        error: e,
    };
    let c = corpus::load_corpus(&a.corpus).map_err(|e| fail(e.into()))?;
    let art = pairer::load_art_repairs(&a.art).map_err(|e| fail(e.into()))?;
    let outcome = pairer::merge_external_repairs(&art, &c);
    for w in &outcome.warnings {
        tracing::warn!(warning = w.as_str(), "external repairs");
    }
    if !outcome.unpaired.is_empty() {
        tracing::warn!(unpaired = ?outcome.unpaired, "submissions without any repair");
    }
    if let Some(spec) = &a.runner {
        let executor = Executor::new(
            spec.build().map_err(|e| fail(e.into()))?,
            limits(a.timeout).usage()?,
            g.jobs(),
        );
        let external: Vec<RepairPair> = outcome
            .pairs
            .iter()
            .filter(|p| p.provenance == Provenance::ExternalArt)
            .cloned()
            .collect();
        let failing =
            pairer::failing_repairs(&external, &c, &executor).map_err(|e| fail(e.into()))?;
        if !failing.is_empty() {
            return Err(fail(anyhow!(
                "external repairs fail their tests for {}",
                failing.join(", ")
            )));
        }
    }
    let out = g.out(a.out, "pairs.jsonl");
    jsonl::write_jsonl(&out, &outcome.pairs).map_err(|e| fail(e.into()))?;
    let counts: BTreeMap<String, usize> = outcome
        .provenance_counts()
        .into_iter()
        .map(|(k, v)| (format!("{k:?}"), v))
        .collect();
    tracing::info!(pairs = outcome.pairs.len(), provenance = ?counts, unpaired = outcome.unpaired.len(), out = %out.display(), "pairs written");
    Ok(())
}

fn run_all(g: &Globals, a: RunAllArgs) -> Result<(), Failure> {
    let mut cfg = HarnessConfig::from_file(&a.config).usage()?;
    if let Some(jobs) = g.jobs {
        cfg.parallelism = jobs;
    }
    if g.seed.is_some() {
        cfg.sampling.seed = g.seed;
    }
    cfg.validate().usage()?;
    let out = match g.out_dir.clone().or_else(|| cfg.out_dir.clone()) {
        Some(dir) => dir,
        None => {
            return Err(anyhow!(
                "no output directory: pass --out-dir or set out_dir"
            ))
            .usage()
        }
    };
    let summary = pipeline::run_all(&cfg, &out).map_err(|e| Failure {
        code: e.stage.exit_code() as u8,
        stage: e.stage.as_str(),
        error: e.source.into(),
    })?;
    tracing::info!(executed = ?summary.executed, skipped = ?summary.skipped, out = %out.display(), "run complete");
    Ok(())
}

fn init_logging() {
    let filter = tracing_subscriber::EnvFilter::try_from_env("EDUREPAIR_LOG")
        .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("info"));
    tracing_subscriber::fmt()
        .json()
        .with_env_filter(filter)
        .with_writer(std::io::stderr)
        .with_current_span(false)
        .init();
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    if cli.jobs == Some(0) {
        return Err(anyhow!("--jobs must be at least 1")).usage();
    }
    let g = Globals {
        jobs: cli.jobs,
        seed: cli.seed,
        out_dir: cli.out_dir,
    };
    match cli.command {
        Command::Curate(a) => curate(&g, a),
        Command::Prompt(a) => prompt(&g, a),
        Command::Generate(a) => generate(&g, a),
        Command::Execute(a) => execute(&g, a),
        Command::Score(a) => score(&g, a),
        Command::Report(a) => render_report(a),
        Command::Pair(a) => pair(&g, a),
        Command::RunAll(a) => run_all(&g, a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_logging();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            tracing::error!(
                stage = f.stage,
                exit_code = f.code,
                error = format!("{:#}", f.error),
                "failed"
            );
            ExitCode::from(f.code)
        }
    }
}
