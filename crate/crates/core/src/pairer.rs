//! Artificial (incorrect -> repair) training pairs.
//!
//! Repairs from an external repair tool are used when present; otherwise the
//! incorrect program is mapped to the most Rouge-L-similar correct program of
//! the same problem.

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Submission};
use crate::error::{Error, Result};
use crate::executor::{Candidate, Executor, Verdict};
use crate::jsonl;
use crate::metrics::{rouge_l_source, TokenizeOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    ExternalArt,
    NearestCorrect,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepairPair {
    pub incorrect_submission_id: String,
    pub repair_source: String,
    pub provenance: Provenance,
    /// Rouge-L F of the repair (candidate) against the incorrect program (reference).
    pub similarity: f64,
}

/// One line of the external repair tool's output.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtRepair {
    pub submission_id: String,
    pub repair_source: String,
}

pub fn load_art_repairs(path: &Path) -> Result<Vec<ArtRepair>> {
    jsonl::read_jsonl(path)
}

fn similarity(repair: &str, incorrect: &str) -> f64 {
    rouge_l_source(repair, incorrect, TokenizeOptions::default()).f
}

/// Picks the pool member most similar to `incorrect`; ties go to the smallest id.
pub fn nearest_correct_repair(incorrect: &Submission, pool: &[&Submission]) -> Result<RepairPair> {
    if let Some(stray) = pool.iter().find(|s| s.problem_id != incorrect.problem_id) {
        return Err(Error::Domain(format!(
            "pool member {:?} belongs to problem {:?}, not {:?}",
            stray.id, stray.problem_id, incorrect.problem_id
        )));
    }
    let best = pool
        .iter()
        .map(|s| (similarity(&s.source, &incorrect.source), *s))
        .reduce(|best, cand| {
            let better = cand.0 > best.0 || (cand.0 == best.0 && cand.1.id < best.1.id);
            if better {
                cand
            } else {
                best
            }
        })
        .ok_or_else(|| {
            Error::Domain(format!(
                "problem {:?} has no correct programs to pair {:?} with",
                incorrect.problem_id, incorrect.id
            ))
        })?;
    Ok(RepairPair {
        incorrect_submission_id: incorrect.id.clone(),
        repair_source: best.1.source.clone(),
        provenance: Provenance::NearestCorrect,
        similarity: best.0,
    })
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MergeOutcome {
    pub pairs: Vec<RepairPair>,
    /// Incorrect submissions with neither an external repair nor a correct pool.
    pub unpaired: Vec<String>,
    pub warnings: Vec<String>,
}

impl MergeOutcome {
    pub fn provenance_counts(&self) -> BTreeMap<Provenance, usize> {
        let mut counts = BTreeMap::new();
        for p in &self.pairs {
            *counts.entry(p.provenance).or_insert(0) += 1;
        }
        counts
    }
}

/// Gives every incorrect submission of `corpus` exactly one repair: the
/// external one when present and non-blank, else its nearest correct program.
pub fn merge_external_repairs(art: &[ArtRepair], corpus: &Corpus) -> MergeOutcome {
    let mut outcome = MergeOutcome::default();
    let buggy: BTreeMap<&str, &Submission> = corpus.buggy().map(|s| (s.id.as_str(), s)).collect();

    let mut external: BTreeMap<&str, &str> = BTreeMap::new();
    for a in art {
        if !buggy.contains_key(a.submission_id.as_str()) {
            outcome.warnings.push(format!(
                "external repair for unknown or non-buggy submission {:?} skipped",
                a.submission_id
            ));
            continue;
        }
        if external
            .insert(&a.submission_id, &a.repair_source)
            .is_some()
        {
            outcome.warnings.push(format!(
                "duplicate external repair for {:?}; the last one is used",
                a.submission_id
            ));
        }
    }

    let mut pools: BTreeMap<&str, Vec<&Submission>> = BTreeMap::new();
    for s in corpus
        .submissions
        .iter()
        .filter(|s| s.correct == Some(true))
    {
        pools.entry(s.problem_id.as_str()).or_default().push(s);
    }

    let incorrect: Vec<&Submission> = corpus.buggy().collect();
    let paired: Vec<Option<RepairPair>> = incorrect
        .par_iter()
        .map(|s| match external.get(s.id.as_str()) {
            Some(src) if !src.trim().is_empty() => Some(RepairPair {
                incorrect_submission_id: s.id.clone(),
                repair_source: src.to_string(),
                provenance: Provenance::ExternalArt,
                similarity: similarity(src, &s.source),
            }),
            _ => {
                let pool = pools
                    .get(s.problem_id.as_str())
                    .map(Vec::as_slice)
                    .unwrap_or(&[]);
                nearest_correct_repair(s, pool).ok()
            }
        })
        .collect();
    for (s, pair) in incorrect.iter().zip(paired) {
        match pair {
            Some(p) => outcome.pairs.push(p),
            None => outcome.unpaired.push(s.id.clone()),
        }
    }
    outcome
}

/// Runs each pair's repair against its problem's suite and returns the ids of
/// incorrect submissions whose repair does not pass.
pub fn failing_repairs(
    pairs: &[RepairPair],
    corpus: &Corpus,
    executor: &Executor,
) -> Result<Vec<String>> {
    let mut candidates = Vec::with_capacity(pairs.len());
    for p in pairs {
        let s = corpus
            .submission(&p.incorrect_submission_id)
            .ok_or_else(|| {
                Error::Integrity(format!(
                    "pair for unknown submission {:?}",
                    p.incorrect_submission_id
                ))
            })?;
        candidates.push(Candidate {
            submission_id: s.id.clone(),
            sample_index: 0,
            source: Some(p.repair_source.clone()),
            suite: corpus.suite_path(&corpus.problems[&s.problem_id]),
        });
    }
    Ok(executor
        .run(&candidates)?
        .into_iter()
        .filter(|r| r.verdict != Verdict::Pass)
        .map(|r| r.submission_id)
        .collect())
}
