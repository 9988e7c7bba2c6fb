//! Problem/submission corpora: on-disk layout, validation and curation.
//!
//! A dataset root holds `problems.jsonl`, `submissions.jsonl` and a `tests/`
//! directory with one student-language suite per problem.

mod canon;
mod curate;

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use chrono::{DateTime, FixedOffset};
use serde::{Deserialize, Deserializer, Serialize};

use crate::error::{Error, Result};
use crate::jsonl;

pub use canon::{
    CanonicalForm, Canonicalizer, LexicalCanonicalizer, ShimCanonicalizer, PYTHON_KEYWORDS,
};
pub use curate::{
    curate, dedup_by_normalized_ast, filter_zero_score, label_correctness,
    select_final_submissions, split_by_semester, CurationPlan, CurationReport, CurationStage,
    LabelMode, Stage, StageOutcome, UNSPLIT,
};

pub const PROBLEMS_FILE: &str = "problems.jsonl";
pub const SUBMISSIONS_FILE: &str = "submissions.jsonl";
pub const TESTS_DIR: &str = "tests";

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize,
)]
#[serde(rename_all = "lowercase")]
pub enum Difficulty {
    Easy,
    Hard,
    #[default]
    Unknown,
}

impl Difficulty {
    pub fn as_str(self) -> &'static str {
        match self {
            Difficulty::Easy => "easy",
            Difficulty::Hard => "hard",
            Difficulty::Unknown => "unknown",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Problem {
    pub id: String,
    #[serde(default)]
    pub title: String,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub difficulty: Difficulty,
    pub max_score: f64,
    /// Path of the suite relative to the dataset's `tests/` directory.
    pub test_suite: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Submission {
    pub id: String,
    pub problem_id: String,
    /// Empty when the source dataset does not record students.
    #[serde(default, deserialize_with = "null_as_empty")]
    pub student_id: String,
    pub source: String,
    #[serde(default)]
    pub score: Option<f64>,
    #[serde(default)]
    pub submitted_at: Option<DateTime<FixedOffset>>,
    #[serde(default)]
    pub semester: Option<String>,
    #[serde(default)]
    pub correct: Option<bool>,
}

fn null_as_empty<'de, D: Deserializer<'de>>(de: D) -> std::result::Result<String, D::Error> {
    Ok(Option::<String>::deserialize(de)?.unwrap_or_default())
}

/// An immutable, validated set of problems and their submissions.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub problems: BTreeMap<String, Problem>,
    pub submissions: Vec<Submission>,
    pub provenance: String,
    /// Directory that `Problem::test_suite` is resolved against.
    pub suites_dir: PathBuf,
}

impl Corpus {
    /// Builds a corpus from parts and checks referential integrity.
    pub fn new(
        problems: impl IntoIterator<Item = Problem>,
        submissions: Vec<Submission>,
        provenance: impl Into<String>,
        suites_dir: impl Into<PathBuf>,
    ) -> Result<Self> {
        let mut map = BTreeMap::new();
        for p in problems {
            if let Some(dup) = map.insert(p.id.clone(), p) {
                return Err(Error::Integrity(format!(
                    "duplicate problem id {:?}",
                    dup.id
                )));
            }
        }
        let corpus = Corpus {
            problems: map,
            submissions,
            provenance: provenance.into(),
            suites_dir: suites_dir.into(),
        };
        corpus.validate()?;
        Ok(corpus)
    }

    fn validate(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        for p in self.problems.values() {
            if !(p.max_score >= 0.0) {
                return Err(Error::Integrity(format!(
                    "problem {:?} has negative max_score",
                    p.id
                )));
            }
        }
        for s in &self.submissions {
            if !seen.insert(s.id.as_str()) {
                return Err(Error::Integrity(format!(
                    "duplicate submission id {:?}",
                    s.id
                )));
            }
            let Some(problem) = self.problems.get(&s.problem_id) else {
                return Err(Error::Integrity(format!(
                    "submission {:?} references unknown problem {:?}",
                    s.id, s.problem_id
                )));
            };
            if let Some(score) = s.score {
                if !(0.0..=problem.max_score).contains(&score) {
                    return Err(Error::Integrity(format!(
                        "submission {:?} score {score} outside [0, {}]",
                        s.id, problem.max_score
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn problem(&self, id: &str) -> Option<&Problem> {
        self.problems.get(id)
    }

    pub fn submission(&self, id: &str) -> Option<&Submission> {
        self.submissions.iter().find(|s| s.id == id)
    }

    pub fn suite_path(&self, problem: &Problem) -> PathBuf {
        self.suites_dir.join(&problem.test_suite)
    }

    /// Same problems and provenance, different submissions.
    pub fn with_submissions(&self, submissions: Vec<Submission>) -> Corpus {
        Corpus {
            problems: self.problems.clone(),
            submissions,
            provenance: self.provenance.clone(),
            suites_dir: self.suites_dir.clone(),
        }
    }

    pub fn submission_ids(&self) -> BTreeSet<&str> {
        self.submissions.iter().map(|s| s.id.as_str()).collect()
    }

    /// Number of distinct problems that still have submissions.
    pub fn active_problem_count(&self) -> usize {
        self.submissions
            .iter()
            .map(|s| s.problem_id.as_str())
            .collect::<BTreeSet<_>>()
            .len()
    }

    /// Submissions labeled incorrect, in corpus order.
    pub fn buggy(&self) -> impl Iterator<Item = &Submission> {
        self.submissions.iter().filter(|s| s.correct == Some(false))
    }
}

/// Loads and validates a dataset root.
pub fn load_corpus(root: &Path) -> Result<Corpus> {
    let problems_path = root.join(PROBLEMS_FILE);
    let submissions_path = root.join(SUBMISSIONS_FILE);
    let problems: Vec<Problem> = jsonl::read_jsonl(&problems_path)?;
    let submissions: Vec<Submission> = jsonl::read_jsonl(&submissions_path)?;
    let suites_dir = root.join(TESTS_DIR);

    for p in &problems {
        let suite = suites_dir.join(&p.test_suite);
        if !suite.is_file() {
            return Err(Error::Integrity(format!(
                "problem {:?}: test suite {} not found",
                p.id,
                suite.display()
            )));
        }
    }
    let provenance = root
        .canonicalize()
        .ok()
        .and_then(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
        .unwrap_or_default();
    Corpus::new(problems, submissions, provenance, suites_dir)
}

/// Writes a corpus as a loadable dataset root, copying the suites it references.
pub fn write_corpus(corpus: &Corpus, root: &Path) -> Result<()> {
    let problems: Vec<&Problem> = corpus.problems.values().collect();
    jsonl::write_jsonl(&root.join(PROBLEMS_FILE), &problems)?;
    jsonl::write_jsonl(&root.join(SUBMISSIONS_FILE), &corpus.submissions)?;
    let tests = root.join(TESTS_DIR);
    for p in &problems {
        let from = corpus.suite_path(p);
        let to = tests.join(&p.test_suite);
        if let Some(parent) = to.parent() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        if from != to {
            fs::copy(&from, &to).map_err(|e| Error::io(&from, e))?;
        }
    }
    Ok(())
}
