//! Canonical program keys used to detect submissions that are identical up to
//! variable renaming.

use std::collections::HashMap;
use std::sync::Mutex;
use std::time::Duration;

use crate::error::{Error, Result};
use crate::metrics::{tokenize_code_with, TokenizeOptions};
use crate::shim::{AstDumpResponse, AstStatus, ShimCommand, ShimRequest, Worker};

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum CanonicalForm {
    Key(String),
    /// The source does not parse; such submissions are dropped by dedup.
    ParseError,
}

/// Maps a program to a key that is equal for alpha-equivalent programs.
pub trait Canonicalizer: Send + Sync {
    fn canonicalize(&self, source: &str) -> Result<CanonicalForm>;
}

pub const PYTHON_KEYWORDS: &[&str] = &[
    "False", "None", "True", "and", "as", "assert", "async", "await", "break", "class", "continue",
    "def", "del", "elif", "else", "except", "finally", "for", "from", "global", "if", "import",
    "in", "is", "lambda", "nonlocal", "not", "or", "pass", "raise", "return", "try", "while",
    "with", "yield",
];

/// Token-level approximation of the AST key, usable without a Python runtime.
///
/// Comments and blank lines are dropped, indentation becomes explicit
/// indent/dedent tokens, and every identifier that is not a keyword, a call
/// target, an attribute or an imported module is renamed `v0, v1, ...` in
/// first-occurrence order. Unbalanced brackets count as a parse error.
#[derive(Debug, Clone, Copy, Default)]
pub struct LexicalCanonicalizer;

impl Canonicalizer for LexicalCanonicalizer {
    fn canonicalize(&self, source: &str) -> Result<CanonicalForm> {
        Ok(lexical_key(source))
    }
}

fn lexical_key(source: &str) -> CanonicalForm {
    let opts = TokenizeOptions {
        strip_comments: true,
    };
    let mut out: Vec<String> = Vec::new();
    let mut names: HashMap<&str, usize> = HashMap::new();
    let mut indents: Vec<usize> = vec![0];
    let mut depth: i64 = 0;

    for line in source.lines() {
        let tokens = tokenize_code_with(line, opts);
        if tokens.is_empty() {
            continue;
        }
        if depth == 0 {
            let width = line.len() - line.trim_start().len();
            if width > *indents.last().unwrap() {
                indents.push(width);
                out.push("<indent>".into());
            }
            while width < *indents.last().unwrap() {
                indents.pop();
                out.push("<dedent>".into());
            }
            if width != *indents.last().unwrap() {
                return CanonicalForm::ParseError;
            }
        }
        let mut after_import = false;
        for (i, tok) in tokens.iter().enumerate() {
            match *tok {
                "(" | "[" | "{" => depth += 1,
                ")" | "]" | "}" => {
                    depth -= 1;
                    if depth < 0 {
                        return CanonicalForm::ParseError;
                    }
                }
                _ => {}
            }
            let first = tok.chars().next().unwrap();
            let is_name = (first.is_alphabetic() || first == '_') && !PYTHON_KEYWORDS.contains(tok);
            if *tok == "import" || *tok == "from" {
                after_import = true;
            }
            let prev_dot = i > 0 && tokens[i - 1] == ".";
            let next_call = tokens.get(i + 1) == Some(&"(");
            if is_name && !prev_dot && !next_call && !after_import {
                let next = names.len();
                let slot = *names.entry(tok).or_insert(next);
                out.push(format!("v{slot}"));
            } else {
                out.push((*tok).to_string());
            }
        }
        if depth == 0 {
            out.push("<nl>".into());
        }
    }
    if depth != 0 {
        return CanonicalForm::ParseError;
    }
    CanonicalForm::Key(out.join(" "))
}

/// Canonicalizer backed by a pool of long-lived shim processes (`ast_dump`).
pub struct ShimCanonicalizer {
    cmd: ShimCommand,
    timeout: Duration,
    idle: Mutex<Vec<Worker>>,
    scratch: tempfile::TempDir,
}

impl ShimCanonicalizer {
    pub fn new(cmd: ShimCommand, timeout: Duration) -> Result<Self> {
        let scratch = tempfile::tempdir()
            .map_err(|e| Error::Environment(format!("cannot create scratch dir: {e}")))?;
        let pool = ShimCanonicalizer {
            cmd,
            timeout,
            idle: Mutex::new(Vec::new()),
            scratch,
        };
        // Fail fast when the runtime is missing.
        let worker = Worker::spawn(&pool.cmd, pool.scratch.path())?;
        pool.idle.lock().unwrap().push(worker);
        Ok(pool)
    }

    fn checkout(&self) -> Result<Worker> {
        if let Some(w) = self.idle.lock().unwrap().pop() {
            return Ok(w);
        }
        Worker::spawn(&self.cmd, self.scratch.path())
    }
}

impl Canonicalizer for ShimCanonicalizer {
    fn canonicalize(&self, source: &str) -> Result<CanonicalForm> {
        let mut worker = self.checkout()?;
        let req = ShimRequest::AstDump {
            source: source.to_string(),
        };
        // A worker that misbehaves is dropped (and killed) instead of returned.
        let line = worker.request(&req, self.timeout)?;
        let resp: AstDumpResponse = serde_json::from_str(&line)
            .map_err(|e| Error::Protocol(format!("bad ast_dump response {line:?}: {e}")))?;
        let form = match resp.status {
            AstStatus::Ok => match resp.canonical {
                Some(c) => CanonicalForm::Key(c),
                None => {
                    return Err(Error::Protocol(
                        "ast_dump ok response without canonical text".into(),
                    ))
                }
            },
            AstStatus::ParseError => CanonicalForm::ParseError,
            AstStatus::Error => {
                return Err(Error::Protocol(format!(
                    "shim rejected request: {}",
                    resp.error.unwrap_or_default()
                )))
            }
        };
        self.idle.lock().unwrap().push(worker);
        Ok(form)
    }
}
