use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::estimators::{pass_at_k, rouge_at_k};
use super::rouge::{rouge_l_source, TokenizeOptions};
use crate::corpus::{Corpus, Difficulty};
use crate::error::{Error, Result};
use crate::executor::{ExecutionResult, Verdict};
use crate::generator::GenerationRecord;

/// The n samples drawn for one buggy program.
///
/// `rouge_values[i]` is the Rouge-L score of sample i against the buggy
/// program, forced to 0 when sample i failed its tests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemScores {
    pub submission_id: String,
    pub n: usize,
    pub c: usize,
    #[serde(skip)]
    pub pass_flags: Vec<bool>,
    pub rouge_values: Vec<f64>,
}

impl ProblemScores {
    /// Zeroes the similarity of failing samples.
    pub fn new(
        submission_id: impl Into<String>,
        pass_flags: Vec<bool>,
        similarity: &[f64],
    ) -> Result<Self> {
        if pass_flags.len() != similarity.len() {
            return Err(Error::Domain(format!(
                "{} pass flags but {} similarity values",
                pass_flags.len(),
                similarity.len()
            )));
        }
        let rouge_values = pass_flags
            .iter()
            .zip(similarity)
            .map(|(&pass, &s)| if pass { s } else { 0.0 })
            .collect();
        Self::from_parts(submission_id, pass_flags, rouge_values)
    }

    /// Validates that failing samples already carry a score of 0.
    pub fn from_parts(
        submission_id: impl Into<String>,
        pass_flags: Vec<bool>,
        rouge_values: Vec<f64>,
    ) -> Result<Self> {
        let submission_id = submission_id.into();
        if pass_flags.len() != rouge_values.len() || pass_flags.is_empty() {
            return Err(Error::Domain(format!(
                "{submission_id}: need n >= 1 flags and scores of equal length"
            )));
        }
        for (i, (&pass, &v)) in pass_flags.iter().zip(&rouge_values).enumerate() {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Domain(format!(
                    "{submission_id}#{i}: score {v} outside [0, 1]"
                )));
            }
            if !pass && v != 0.0 {
                return Err(Error::Domain(format!(
                    "{submission_id}#{i}: failing sample has non-zero score {v}"
                )));
            }
        }
        Ok(ProblemScores {
            submission_id,
            n: pass_flags.len(),
            c: pass_flags.iter().filter(|p| **p).count(),
            pass_flags,
            rouge_values,
        })
    }

    pub fn pass_at_k(&self, k: usize) -> Result<f64> {
        pass_at_k(self.n, self.c, k)
    }

    pub fn rouge_at_k(&self, k: usize) -> Result<f64> {
        rouge_at_k(&self.rouge_values, k)
    }
}

/// Which Rouge-L component feeds rouge@k.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RougeVariant {
    #[default]
    F,
    Precision,
    Recall,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SubsetKey {
    pub dataset: String,
    pub difficulty: Difficulty,
}

impl SubsetKey {
    pub fn new(dataset: impl Into<String>, difficulty: Difficulty) -> Self {
        SubsetKey {
            dataset: dataset.into(),
            difficulty,
        }
    }

    pub fn label(&self) -> String {
        format!("{}_{}", self.dataset, self.difficulty.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetScores {
    #[serde(flatten)]
    pub key: SubsetKey,
    /// Buggy programs averaged over.
    pub programs: usize,
    pub pass_at_k: BTreeMap<usize, f64>,
    pub rouge_at_k: BTreeMap<usize, f64>,
}

/// Raw fractions; renderers scale them for display.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub run_label: String,
    pub n: usize,
    pub ks: Vec<usize>,
    pub rouge_variant: RougeVariant,
    pub subsets: Vec<SubsetScores>,
}

impl ScoreReport {
    pub fn subset(&self, key: &SubsetKey) -> Option<&SubsetScores> {
        self.subsets.iter().find(|s| &s.key == key)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScoreOptions {
    pub ks: Vec<usize>,
    /// Samples expected per buggy program.
    pub n: usize,
    pub run_label: String,
    pub rouge_variant: RougeVariant,
    pub strip_comments: bool,
}

impl Default for ScoreOptions {
    fn default() -> Self {
        ScoreOptions {
            ks: vec![1, 5, 10],
            n: 10,
            run_label: "run".into(),
            rouge_variant: RougeVariant::F,
            strip_comments: false,
        }
    }
}

/// Scores every buggy program of every dataset and averages per
/// `(dataset, difficulty)` subset.
///
/// A sample with no execution result is scored as failing only when its
/// generation record shows extraction failed; any other gap, a duplicate, or
/// an index outside `0..n` is an integrity error listing all offenders.
pub fn score_run(
    datasets: &[(&str, &Corpus)],
    generations: &[GenerationRecord],
    results: &[ExecutionResult],
    opts: &ScoreOptions,
) -> Result<(ScoreReport, Vec<ProblemScores>)> {
    let mut ks = opts.ks.clone();
    ks.sort_unstable();
    ks.dedup();
    if ks.is_empty() || ks[0] == 0 || *ks.last().unwrap() > opts.n {
        return Err(Error::Domain(format!(
            "ks {:?} must lie in 1..={}",
            opts.ks, opts.n
        )));
    }
    let tok = TokenizeOptions {
        strip_comments: opts.strip_comments,
    };

    let mut offenders: Vec<String> = Vec::new();
    let mut by_key: HashMap<(&str, usize), &ExecutionResult> = HashMap::new();
    for r in results {
        if by_key
            .insert((r.submission_id.as_str(), r.sample_index), r)
            .is_some()
        {
            offenders.push(format!(
                "{}#{}: duplicate result",
                r.submission_id, r.sample_index
            ));
        }
    }
    let gens: HashMap<(&str, usize), &GenerationRecord> = generations
        .iter()
        .map(|g| ((g.submission_id.as_str(), g.sample_index), g))
        .collect();

    let mut all_scores = Vec::new();
    let mut groups: BTreeMap<(usize, Difficulty), Vec<usize>> = BTreeMap::new();
    for (di, (_, corpus)) in datasets.iter().enumerate() {
        for s in corpus.buggy() {
            let mut flags = Vec::with_capacity(opts.n);
            let mut sims = Vec::with_capacity(opts.n);
            for idx in 0..opts.n {
                let key = (s.id.as_str(), idx);
                let gen = gens.get(&key);
                let pass = match (by_key.get(&key), gen) {
                    (Some(r), _) => r.verdict == Verdict::Pass,
                    (None, Some(g)) if g.extracted_source.is_none() => false,
                    _ => {
                        offenders.push(format!("{}#{idx}: no execution result", s.id));
                        false
                    }
                };
                let sim = match (pass, gen.and_then(|g| g.extracted_source.as_deref())) {
                    (false, _) => 0.0,
                    (true, Some(repair)) => {
                        let r = rouge_l_source(repair, &s.source, tok);
                        match opts.rouge_variant {
                            RougeVariant::F => r.f,
                            RougeVariant::Precision => r.precision,
                            RougeVariant::Recall => r.recall,
                        }
                    }
                    (true, None) => {
                        offenders.push(format!("{}#{idx}: passing result without a repair", s.id));
                        0.0
                    }
                };
                flags.push(pass);
                sims.push(sim);
            }
            let extra = results
                .iter()
                .filter(|r| r.submission_id == s.id && r.sample_index >= opts.n)
                .count();
            if extra > 0 {
                offenders.push(format!("{}: {extra} result(s) beyond n={}", s.id, opts.n));
            }
            let difficulty = corpus.problems[&s.problem_id].difficulty;
            groups
                .entry((di, difficulty))
                .or_default()
                .push(all_scores.len());
            all_scores.push(ProblemScores::new(s.id.clone(), flags, &sims)?);
        }
    }
    if !offenders.is_empty() {
        return Err(Error::Integrity(format!(
            "sample count mismatch for {} sample(s): {}",
            offenders.len(),
            offenders.join("; ")
        )));
    }

    let mut subsets = Vec::new();
    for ((di, difficulty), members) in groups {
        let mut pass = BTreeMap::new();
        let mut rouge = BTreeMap::new();
        for &k in &ks {
            let (mut p, mut r) = (0.0, 0.0);
            for &m in &members {
                p += all_scores[m].pass_at_k(k)?;
                r += all_scores[m].rouge_at_k(k)?;
            }
            pass.insert(k, p / members.len() as f64);
            rouge.insert(k, r / members.len() as f64);
        }
        subsets.push(SubsetScores {
            key: SubsetKey::new(datasets[di].0, difficulty),
            programs: members.len(),
            pass_at_k: pass,
            rouge_at_k: rouge,
        });
    }
    let report = ScoreReport {
        run_label: opts.run_label.clone(),
        n: opts.n,
        ks,
        rouge_variant: opts.rouge_variant,
        subsets,
    };
    Ok((report, all_scores))
}
