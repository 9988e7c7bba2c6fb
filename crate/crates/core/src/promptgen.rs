//! Repair prompts and fine-tuning examples.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{Problem, Submission};
use crate::error::{Error, Result};
use crate::pairer::RepairPair;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PromptTemplate {
    pub preamble: String,
    pub description_header: String,
    pub buggy_marker: String,
    pub repair_marker: String,
    pub feedback_header: String,
    /// The first entry terminates training examples.
    pub stop_markers: Vec<String>,
    pub include_grader_feedback: bool,
}

impl Default for PromptTemplate {
    fn default() -> Self {
        PromptTemplate {
            preamble: "Below is a programming exercise followed by a student's incorrect Python \
                       program. Write a corrected version of the program that passes all the unit \
                       tests, changing as little of the student's code as possible.\n\n"
                .into(),
            description_header: "### Problem description\n".into(),
            buggy_marker: "### Buggy program\n".into(),
            repair_marker: "### Fixed program\n".into(),
            feedback_header: "### Grader feedback\n".into(),
            stop_markers: vec!["### END".into()],
            include_grader_feedback: false,
        }
    }
}

impl PromptTemplate {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let t: PromptTemplate = toml::from_str(&text).map_err(|e| Error::Load {
            path: path.to_path_buf(),
            line: e
                .span()
                .map(|s| text[..s.start].lines().count().max(1))
                .unwrap_or(0),
            message: e.message().to_string(),
        })?;
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        if self.buggy_marker.is_empty() || self.repair_marker.is_empty() {
            return Err(Error::Config("template markers must be non-empty".into()));
        }
        if self.buggy_marker == self.repair_marker {
            return Err(Error::Config(
                "buggy_marker and repair_marker must differ".into(),
            ));
        }
        if self.stop_markers.is_empty() || self.stop_markers.iter().any(String::is_empty) {
            return Err(Error::Config(
                "template needs at least one non-empty stop marker".into(),
            ));
        }
        self.check_no_stop(&self.preamble, "preamble")?;
        self.check_no_stop(&self.description_header, "description header")
    }

    fn check_no_stop(&self, segment: &str, what: &str) -> Result<()> {
        match self
            .stop_markers
            .iter()
            .find(|m| segment.contains(m.as_str()))
        {
            Some(m) => Err(Error::Domain(format!(
                "stop marker {m:?} occurs in the {what}"
            ))),
            None => Ok(()),
        }
    }

    pub fn terminator(&self) -> &str {
        &self.stop_markers[0]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalPrompt {
    pub problem_id: String,
    pub submission_id: String,
    pub text: String,
}

/// Renders the prompt for repairing `s`.
///
/// Layout: preamble, description header and text, buggy marker, the source
/// verbatim plus one newline, optional feedback section, repair marker. The
/// source is never normalized so distinct sources give distinct prompts.
pub fn build_repair_prompt(
    p: &Problem,
    s: &Submission,
    t: &PromptTemplate,
    feedback: Option<&str>,
) -> Result<EvalPrompt> {
    if s.correct == Some(true) {
        return Err(Error::Domain(format!(
            "submission {:?} is labeled correct; only buggy programs are repaired",
            s.id
        )));
    }
    if s.problem_id != p.id {
        return Err(Error::Domain(format!(
            "submission {:?} belongs to {:?}, not {:?}",
            s.id, s.problem_id, p.id
        )));
    }
    t.validate()?;
    t.check_no_stop(&p.description, "problem description")?;

    let mut text =
        String::with_capacity(t.preamble.len() + p.description.len() + s.source.len() + 128);
    text.push_str(&t.preamble);
    text.push_str(&t.description_header);
    text.push_str(&p.description);
    text.push_str("\n\n");
    text.push_str(&t.buggy_marker);
    text.push_str(&s.source);
    text.push('\n');
    if let (true, Some(fb)) = (t.include_grader_feedback, feedback) {
        text.push('\n');
        text.push_str(&t.feedback_header);
        text.push_str(fb);
        text.push('\n');
    }
    text.push('\n');
    text.push_str(&t.repair_marker);
    Ok(EvalPrompt {
        problem_id: p.id.clone(),
        submission_id: s.id.clone(),
        text,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingExample {
    pub problem_id: String,
    pub submission_id: String,
    pub text: String,
    /// The "repair" is byte-identical to the buggy program.
    pub repair_equals_source: bool,
}

/// Eval prompt followed by the repair and the terminating stop marker.
pub fn build_training_example(
    p: &Problem,
    s: &Submission,
    repair: &RepairPair,
    t: &PromptTemplate,
) -> Result<TrainingExample> {
    if repair.incorrect_submission_id != s.id {
        return Err(Error::Domain(format!(
            "repair targets {:?}, not {:?}",
            repair.incorrect_submission_id, s.id
        )));
    }
    let prompt = build_repair_prompt(p, s, t, None)?;
    let mut text = prompt.text;
    text.push_str(repair.repair_source.trim_end());
    text.push('\n');
    text.push_str(t.terminator());
    text.push('\n');
    Ok(TrainingExample {
        problem_id: p.id.clone(),
        submission_id: s.id.clone(),
        text,
        repair_equals_source: repair.repair_source == s.source,
    })
}
