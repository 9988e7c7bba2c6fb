use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::canon::{CanonicalForm, Canonicalizer};
use super::{Corpus, Submission};
use crate::error::{Error, Result};
use crate::executor::{Executor, Verdict};

/// One row of a curation report.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CurationStage {
    pub name: String,
    pub before: usize,
    pub after: usize,
    pub problems_after: usize,
    /// Submissions dropped because their source did not parse (dedup only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dropped_unparseable: Option<usize>,
}

impl CurationStage {
    fn new(name: &str, before: &Corpus, after: &Corpus) -> Self {
        CurationStage {
            name: name.to_string(),
            before: before.submissions.len(),
            after: after.submissions.len(),
            problems_after: after.active_problem_count(),
            dropped_unparseable: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CurationReport {
    pub stages: Vec<CurationStage>,
    /// Submission count per split, when the corpus was split.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub splits: BTreeMap<String, usize>,
}

pub type StageOutcome = (Corpus, CurationStage);

/// Drops every submission scored 0.
pub fn filter_zero_score(c: &Corpus) -> Result<StageOutcome> {
    if let Some(s) = c.submissions.iter().find(|s| s.score.is_none()) {
        return Err(Error::Config(format!(
            "zero-score filter needs scores but submission {:?} has none; disable the stage for score-less corpora",
            s.id
        )));
    }
    let kept = c
        .submissions
        .iter()
        .filter(|s| s.score.is_some_and(|v| v > 0.0))
        .cloned()
        .collect();
    let out = c.with_submissions(kept);
    let stage = CurationStage::new("zero-score", c, &out);
    Ok((out, stage))
}

/// Keeps each student's latest submission per problem. Equal timestamps go to
/// the lexicographically largest id.
pub fn select_final_submissions(c: &Corpus) -> Result<StageOutcome> {
    let mut latest: HashMap<(&str, &str), &Submission> = HashMap::new();
    for s in &c.submissions {
        let Some(ts) = s.submitted_at else {
            return Err(Error::Config(format!(
                "final-submission selection needs timestamps but submission {:?} has none",
                s.id
            )));
        };
        let slot = latest
            .entry((s.student_id.as_str(), s.problem_id.as_str()))
            .or_insert(s);
        if (ts, s.id.as_str()) > (slot.submitted_at.unwrap(), slot.id.as_str()) {
            *slot = s;
        }
    }
    let keep: HashSet<&str> = latest.values().map(|s| s.id.as_str()).collect();
    let kept = c
        .submissions
        .iter()
        .filter(|s| keep.contains(s.id.as_str()))
        .cloned()
        .collect();
    let out = c.with_submissions(kept);
    let stage = CurationStage::new("final", c, &out);
    Ok((out, stage))
}

pub enum LabelMode<'a> {
    /// Correct iff `score == max_score`.
    ByScore,
    /// Correct iff the program passes its own problem's suite.
    ByTests(&'a Executor),
    /// Keep the labels shipped with the data.
    Preset,
}

impl fmt::Debug for LabelMode<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LabelMode::ByScore => "ByScore",
            LabelMode::ByTests(_) => "ByTests",
            LabelMode::Preset => "Preset",
        })
    }
}

/// Sets `correct` on every submission.
pub fn label_correctness(c: &Corpus, mode: &LabelMode<'_>) -> Result<Corpus> {
    let mut subs = c.submissions.clone();
    match mode {
        LabelMode::ByScore => {
            for s in &mut subs {
                let max = c.problems[&s.problem_id].max_score;
                let score = s.score.ok_or_else(|| {
                    Error::Config(format!(
                        "by_score labeling: submission {:?} has no score",
                        s.id
                    ))
                })?;
                if max <= 0.0 {
                    return Err(Error::Config(format!(
                        "by_score labeling: problem {:?} has max_score 0",
                        s.problem_id
                    )));
                }
                s.correct = Some(score == max);
            }
        }
        LabelMode::Preset => {
            if let Some(s) = subs.iter().find(|s| s.correct.is_none()) {
                return Err(Error::Config(format!(
                    "preset labeling: submission {:?} has no correct field",
                    s.id
                )));
            }
        }
        LabelMode::ByTests(executor) => {
            let verdicts = executor.label_sources(c)?;
            for (s, verdict) in subs.iter_mut().zip(verdicts) {
                s.correct = Some(verdict == Verdict::Pass);
            }
        }
    }
    Ok(c.with_submissions(subs))
}

/// Collapses submissions with equal canonical keys inside each
/// `(problem_id, correct)` group, keeping the earliest by `(submitted_at, id)`.
/// Unparseable submissions are dropped and counted.
pub fn dedup_by_normalized_ast(c: &Corpus, canon: &dyn Canonicalizer) -> Result<StageOutcome> {
    let forms: Vec<CanonicalForm> = c
        .submissions
        .par_iter()
        .map(|s| canon.canonicalize(&s.source))
        .collect::<Result<_>>()?;

    let mut order: Vec<usize> = (0..c.submissions.len()).collect();
    order.sort_by(|&a, &b| {
        let (sa, sb) = (&c.submissions[a], &c.submissions[b]);
        (sa.submitted_at, &sa.id).cmp(&(sb.submitted_at, &sb.id))
    });

    let mut seen: HashSet<(&str, Option<bool>, &str)> = HashSet::new();
    let mut keep = vec![false; c.submissions.len()];
    let mut unparseable = 0;
    for idx in order {
        let s = &c.submissions[idx];
        match &forms[idx] {
            CanonicalForm::ParseError => unparseable += 1,
            CanonicalForm::Key(key) => {
                if seen.insert((s.problem_id.as_str(), s.correct, key.as_str())) {
                    keep[idx] = true;
                }
            }
        }
    }
    let kept = c
        .submissions
        .iter()
        .zip(&keep)
        .filter(|(_, k)| **k)
        .map(|(s, _)| s.clone())
        .collect();
    let out = c.with_submissions(kept);
    let mut stage = CurationStage::new("dedup", c, &out);
    stage.dropped_unparseable = Some(unparseable);
    Ok((out, stage))
}

/// Partitions submissions by semester label. Every split named in `assignment`
/// (and the default) appears in the result, possibly empty.
pub fn split_by_semester(
    c: &Corpus,
    assignment: &BTreeMap<String, String>,
    default: Option<&str>,
) -> Result<BTreeMap<String, Corpus>> {
    let mut parts: BTreeMap<String, Vec<Submission>> = assignment
        .values()
        .map(|v| (v.clone(), Vec::new()))
        .collect();
    if let Some(d) = default {
        parts.entry(d.to_string()).or_default();
    }
    for s in &c.submissions {
        let split = s
            .semester
            .as_deref()
            .and_then(|sem| assignment.get(sem))
            .map(String::as_str)
            .or(default)
            .ok_or_else(|| {
                Error::Config(format!(
                    "submission {:?}: semester {:?} is not mapped to a split and no default is set",
                    s.id, s.semester
                ))
            })?;
        parts.get_mut(split).unwrap().push(s.clone());
    }
    Ok(parts
        .into_iter()
        .map(|(name, subs)| (name, c.with_submissions(subs)))
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    ZeroScore,
    Final,
    Dedup,
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "zero-score" => Ok(Stage::ZeroScore),
            "final" => Ok(Stage::Final),
            "dedup" => Ok(Stage::Dedup),
            other => Err(Error::Config(format!(
                "unknown curation stage {other:?} (expected zero-score, final, dedup)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurationPlan {
    #[serde(default)]
    pub stages: Vec<Stage>,
    /// semester label -> split name; empty means no splitting.
    #[serde(default)]
    pub splits: BTreeMap<String, String>,
    #[serde(default)]
    pub default_split: Option<String>,
}

impl CurationPlan {
    pub fn is_split(&self) -> bool {
        !self.splits.is_empty() || self.default_split.is_some()
    }
}

/// Name of the single output when no split is configured.
pub const UNSPLIT: &str = "all";

/// Runs the plan. Filtering stages run in the listed order on the whole
/// corpus; when splitting, dedup runs afterwards inside each split
/// independently and is reported as one aggregated stage.
pub fn curate(
    c: &Corpus,
    plan: &CurationPlan,
    canon: Option<&dyn Canonicalizer>,
) -> Result<(BTreeMap<String, Corpus>, CurationReport)> {
    let mut seen = BTreeSet::new();
    if let Some(dup) = plan.stages.iter().find(|s| !seen.insert(**s)) {
        return Err(Error::Config(format!("stage {dup:?} listed twice")));
    }
    let needs_canon = plan.stages.contains(&Stage::Dedup);
    let canon = match (needs_canon, canon) {
        (true, None) => {
            return Err(Error::Environment(
                "dedup requested but no canonicalizer is available".into(),
            ))
        }
        (_, c) => c,
    };

    let mut report = CurationReport::default();
    let mut current = c.clone();
    let split = plan.is_split();
    for stage in &plan.stages {
        let (next, row) = match stage {
            Stage::ZeroScore => filter_zero_score(&current)?,
            Stage::Final => select_final_submissions(&current)?,
            Stage::Dedup if split => continue,
            Stage::Dedup => dedup_by_normalized_ast(&current, canon.unwrap())?,
        };
        report.stages.push(row);
        current = next;
    }

    if !split {
        return Ok((BTreeMap::from([(UNSPLIT.to_string(), current)]), report));
    }

    let mut parts = split_by_semester(&current, &plan.splits, plan.default_split.as_deref())?;
    if needs_canon {
        let mut agg = CurationStage {
            name: "dedup".into(),
            before: current.submissions.len(),
            after: 0,
            problems_after: 0,
            dropped_unparseable: Some(0),
        };
        let mut problems = BTreeSet::new();
        for part in parts.values_mut() {
            let (deduped, row) = dedup_by_normalized_ast(part, canon.unwrap())?;
            agg.after += row.after;
            *agg.dropped_unparseable.as_mut().unwrap() += row.dropped_unparseable.unwrap_or(0);
            problems.extend(deduped.submissions.iter().map(|s| s.problem_id.clone()));
            *part = deduped;
        }
        agg.problems_after = problems.len();
        report.stages.push(agg);
    }
    report.splits = parts
        .iter()
        .map(|(k, v)| (k.clone(), v.submissions.len()))
        .collect();
    Ok((parts, report))
}
