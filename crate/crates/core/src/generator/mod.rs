//! Sampling repair candidates from a completion provider.

mod provider;

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::promptgen::{EvalPrompt, PromptTemplate};

pub use provider::{CompletionProvider, HttpProvider, ProviderSpec, ReplayProvider, SampleText};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplingConfig {
    /// Samples per prompt.
    pub n: usize,
    pub temperature: f64,
    pub top_p: f64,
    pub max_new_tokens: usize,
    /// Overrides the template's stop markers when non-empty.
    pub stop_markers: Vec<String>,
    pub seed: Option<u64>,
    /// Requests in flight at once (HTTP providers only).
    pub max_in_flight: usize,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        SamplingConfig {
            n: 10,
            temperature: 0.6,
            top_p: 0.95,
            max_new_tokens: 512,
            stop_markers: Vec::new(),
            seed: None,
            max_in_flight: 4,
        }
    }
}

impl SamplingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Config("sampling n must be at least 1".into()));
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(Error::Config(format!(
                "top_p {} outside (0, 1]",
                self.top_p
            )));
        }
        if !(self.temperature >= 0.0) {
            return Err(Error::Config(format!(
                "temperature {} is negative",
                self.temperature
            )));
        }
        if self.max_in_flight == 0 {
            return Err(Error::Config("max_in_flight must be at least 1".into()));
        }
        Ok(())
    }

    pub fn stops<'a>(&'a self, t: &'a PromptTemplate) -> &'a [String] {
        if self.stop_markers.is_empty() {
            &t.stop_markers
        } else {
            &self.stop_markers
        }
    }
}

/// One sampled output. `raw_text` is absent only when the provider failed, in
/// which case `error` says why; `extracted_source` is absent iff extraction failed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub submission_id: String,
    pub sample_index: usize,
    pub raw_text: Option<String>,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub problem_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extracted_source: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl GenerationRecord {
    /// Builds a record and extracts the repair from `raw_text`.
    pub fn new(
        problem_id: &str,
        submission_id: &str,
        sample_index: usize,
        raw: SampleText,
        stops: &[String],
    ) -> Self {
        let (raw_text, error) = match raw {
            Ok(text) => (Some(text), None),
            Err(e) => (None, Some(e)),
        };
        let extracted_source = raw_text
            .as_deref()
            .and_then(|r| extract_with_stops(r, stops));
        GenerationRecord {
            submission_id: submission_id.to_string(),
            sample_index,
            raw_text,
            problem_id: problem_id.to_string(),
            extracted_source,
            error,
        }
    }

    /// Re-derives `extracted_source` from `raw_text` with the given stop markers.
    pub fn reextract(&mut self, stops: &[String]) {
        self.extracted_source = self
            .raw_text
            .as_deref()
            .and_then(|r| extract_with_stops(r, stops));
    }
}

/// Pulls the repaired program out of a raw completion.
pub fn extract_repair(raw_text: &str, t: &PromptTemplate) -> Option<String> {
    extract_with_stops(raw_text, &t.stop_markers)
}

/// Cuts at the earliest stop marker, unwraps the first fenced code block if
/// any, drops leading blank lines and trailing whitespace. `None` when nothing
/// is left.
pub fn extract_with_stops(raw_text: &str, stops: &[String]) -> Option<String> {
    let cut = stops
        .iter()
        .filter(|m| !m.is_empty())
        .filter_map(|m| raw_text.find(m.as_str()))
        .min()
        .unwrap_or(raw_text.len());
    let head = &raw_text[..cut];

    let body = match fenced_block(head) {
        Some(inner) => inner,
        None => head,
    };
    let mut start = 0;
    for line in body.split_inclusive('\n') {
        if line.trim().is_empty() {
            start += line.len();
        } else {
            break;
        }
    }
    let code = body[start..].trim_end();
    (!code.is_empty()).then(|| code.to_string())
}

fn fenced_block(text: &str) -> Option<&str> {
    let mut offset = 0;
    let mut open: Option<usize> = None;
    for line in text.split_inclusive('\n') {
        let is_fence = line.trim_start().starts_with("```");
        match (open, is_fence) {
            (None, true) => open = Some(offset + line.len()),
            (Some(begin), true) => return Some(&text[begin..offset]),
            _ => {}
        }
        offset += line.len();
    }
    open.map(|begin| &text[begin.min(text.len())..])
}

/// Draws `cfg.n` samples per prompt. Output is sorted by `(submission_id, sample_index)`.
pub fn generate(
    prompts: &[EvalPrompt],
    provider: &dyn CompletionProvider,
    cfg: &SamplingConfig,
    template: &PromptTemplate,
) -> Result<Vec<GenerationRecord>> {
    cfg.validate()?;
    let mut ids = BTreeSet::new();
    if let Some(dup) = prompts
        .iter()
        .find(|p| !ids.insert(p.submission_id.as_str()))
    {
        return Err(Error::Domain(format!(
            "submission {:?} has more than one prompt",
            dup.submission_id
        )));
    }
    provider.preflight(prompts, cfg)?;
    let stops = cfg.stops(template);

    let one = |p: &EvalPrompt| -> Vec<GenerationRecord> {
        let samples = match provider.complete(p, cfg) {
            Ok(s) => s,
            Err(e) => vec![Err(e.to_string()); cfg.n],
        };
        let mut samples = samples.into_iter();
        (0..cfg.n)
            .map(|idx| {
                let raw = samples.next().unwrap_or_else(|| {
                    Err(format!("provider returned fewer than {} samples", cfg.n))
                });
                GenerationRecord::new(&p.problem_id, &p.submission_id, idx, raw, stops)
            })
            .collect()
    };

    let in_flight = provider.max_in_flight(cfg);
    let mut records: Vec<GenerationRecord> = if in_flight <= 1 {
        prompts.iter().flat_map(one).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(in_flight)
            .build()
            .map_err(|e| Error::Environment(format!("cannot build request pool: {e}")))?;
        pool.install(|| prompts.par_iter().flat_map_iter(one).collect())
    };
    records.sort_by(|a, b| {
        (&a.submission_id, a.sample_index).cmp(&(&b.submission_id, b.sample_index))
    });
    Ok(records)
}
