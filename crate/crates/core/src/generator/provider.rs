use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::SamplingConfig;
use crate::error::{Error, Result};
use crate::jsonl;
use crate::promptgen::EvalPrompt;

/// Raw completion text, or why it could not be obtained.
pub type SampleText = std::result::Result<String, String>;

/// Source of completions for rendered prompts.
pub trait CompletionProvider: Send + Sync {
    /// Checks up front that every prompt can be served.
    fn preflight(&self, _prompts: &[EvalPrompt], _cfg: &SamplingConfig) -> Result<()> {
        Ok(())
    }

    /// Up to `cfg.n` samples for one prompt, in sample-index order.
    fn complete(&self, prompt: &EvalPrompt, cfg: &SamplingConfig) -> Result<Vec<SampleText>>;

    fn max_in_flight(&self, cfg: &SamplingConfig) -> usize {
        cfg.max_in_flight
    }
}

#[derive(Debug, Clone, Deserialize)]
struct ReplayEntry {
    submission_id: String,
    sample_index: usize,
    raw_text: Option<String>,
}

/// Serves pre-recorded generations keyed by `(submission_id, sample_index)`.
#[derive(Debug, Clone, Default)]
pub struct ReplayProvider {
    entries: HashMap<(String, usize), Option<String>>,
}

impl ReplayProvider {
    pub fn from_file(path: &Path) -> Result<Self> {
        let rows: Vec<ReplayEntry> = jsonl::read_jsonl(path)?;
        let mut entries = HashMap::new();
        for row in rows {
            let key = (row.submission_id, row.sample_index);
            if entries.contains_key(&key) {
                return Err(Error::Integrity(format!(
                    "{}: duplicate replay entry for {:?} sample {}",
                    path.display(),
                    key.0,
                    key.1
                )));
            }
            entries.insert(key, row.raw_text);
        }
        Ok(ReplayProvider { entries })
    }

    pub fn from_entries(entries: impl IntoIterator<Item = (String, usize, String)>) -> Self {
        ReplayProvider {
            entries: entries
                .into_iter()
                .map(|(s, i, t)| ((s, i), Some(t)))
                .collect(),
        }
    }
}

impl CompletionProvider for ReplayProvider {
    fn preflight(&self, prompts: &[EvalPrompt], cfg: &SamplingConfig) -> Result<()> {
        let missing: Vec<String> = prompts
            .iter()
            .flat_map(|p| (0..cfg.n).map(move |i| (p.submission_id.clone(), i)))
            .filter(|key| !self.entries.contains_key(key))
            .map(|(s, i)| format!("{s}#{i}"))
            .collect();
        if missing.is_empty() {
            Ok(())
        } else {
            Err(Error::Provider(format!(
                "replay file is missing {} sample(s): {}",
                missing.len(),
                missing.join(", ")
            )))
        }
    }

    fn complete(&self, prompt: &EvalPrompt, cfg: &SamplingConfig) -> Result<Vec<SampleText>> {
        (0..cfg.n)
            .map(|i| {
                let key = (prompt.submission_id.clone(), i);
                match self.entries.get(&key) {
                    Some(Some(text)) => Ok(Ok(text.clone())),
                    Some(None) => Ok(Err("recorded generation failure".to_string())),
                    None => Err(Error::Provider(format!(
                        "replay miss for {}#{i}",
                        prompt.submission_id
                    ))),
                }
            })
            .collect()
    }

    fn max_in_flight(&self, _cfg: &SamplingConfig) -> usize {
        1
    }
}

#[derive(Debug, Serialize)]
struct CompletionRequest<'a> {
    prompt: &'a str,
    temperature: f64,
    top_p: f64,
    max_tokens: usize,
    n: usize,
    stop: &'a [String],
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
}

#[derive(Debug, Deserialize)]
struct CompletionResponse {
    choices: Vec<Choice>,
}

#[derive(Debug, Deserialize)]
struct Choice {
    text: String,
}

/// Text-completion endpoint: POST `{"prompt","temperature","top_p","max_tokens","n","stop"}`,
/// answer `{"choices":[{"text"}, ...]}`.
#[derive(Debug, Clone)]
pub struct HttpProvider {
    client: reqwest::blocking::Client,
    endpoint: String,
    auth: Option<String>,
    retries: usize,
    backoff: Duration,
    stops: Vec<String>,
}

/// Environment variable holding the bearer token for HTTP providers.
pub const DEFAULT_AUTH_ENV: &str = "EDUREPAIR_API_KEY";

impl HttpProvider {
    pub fn new(endpoint: impl Into<String>, timeout: Duration) -> Result<Self> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| Error::Environment(format!("cannot build HTTP client: {e}")))?;
        Ok(HttpProvider {
            client,
            endpoint: endpoint.into(),
            auth: None,
            retries: 3,
            backoff: Duration::from_millis(250),
            stops: Vec::new(),
        })
    }

    /// Reads a bearer token from `var` if it is set.
    pub fn with_auth_env(mut self, var: &str) -> Self {
        self.auth = std::env::var(var).ok().filter(|v| !v.is_empty());
        self
    }

    pub fn with_retries(mut self, retries: usize, backoff: Duration) -> Self {
        self.retries = retries;
        self.backoff = backoff;
        self
    }

    /// Stop sequences sent with each request.
    pub fn with_stops(mut self, stops: Vec<String>) -> Self {
        self.stops = stops;
        self
    }

    fn attempt(&self, body: &CompletionRequest<'_>) -> std::result::Result<Vec<String>, String> {
        let mut req = self.client.post(&self.endpoint).json(body);
        if let Some(token) = &self.auth {
            req = req.bearer_auth(token);
        }
        let resp = req.send().map_err(|e| format!("request failed: {e}"))?;
        let status = resp.status();
        if !status.is_success() {
            return Err(format!("HTTP {status}"));
        }
        let parsed: CompletionResponse = resp
            .json()
            .map_err(|e| format!("malformed completion response: {e}"))?;
        Ok(parsed.choices.into_iter().map(|c| c.text).collect())
    }
}

impl CompletionProvider for HttpProvider {
    fn complete(&self, prompt: &EvalPrompt, cfg: &SamplingConfig) -> Result<Vec<SampleText>> {
        let body = CompletionRequest {
            prompt: &prompt.text,
            temperature: cfg.temperature,
            top_p: cfg.top_p,
            max_tokens: cfg.max_new_tokens,
            n: cfg.n,
            stop: if cfg.stop_markers.is_empty() {
                &self.stops
            } else {
                &cfg.stop_markers
            },
            seed: cfg.seed,
        };
        let mut last = String::new();
        for attempt in 0..=self.retries {
            if attempt > 0 {
                thread::sleep(self.backoff * attempt as u32);
            }
            match self.attempt(&body) {
                Ok(texts) => {
                    let mut out: Vec<SampleText> = texts.into_iter().take(cfg.n).map(Ok).collect();
                    let got = out.len();
                    out.extend(
                        (got..cfg.n)
                            .map(|_| Err(format!("provider returned {got} of {} choices", cfg.n))),
                    );
                    return Ok(out);
                }
                Err(e) => last = e,
            }
        }
        Err(Error::Provider(format!(
            "{} after {} attempt(s): {last}",
            self.endpoint,
            self.retries + 1
        )))
    }
}

/// `replay:<file>` or `http:<url>` (the URL keeps its own scheme, e.g.
/// `http:http://localhost:8080/v1/completions`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ProviderSpec {
    Replay {
        path: PathBuf,
    },
    Http {
        url: String,
        #[serde(default)]
        auth_env: Option<String>,
        #[serde(default = "default_http_timeout")]
        timeout_secs: f64,
    },
}

fn default_http_timeout() -> f64 {
    60.0
}

impl FromStr for ProviderSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.split_once(':') {
            Some(("replay", path)) if !path.is_empty() => Ok(ProviderSpec::Replay {
                path: PathBuf::from(path),
            }),
            Some(("http", url)) if !url.is_empty() => {
                let url = if url.starts_with("//") {
                    format!("http:{url}")
                } else {
                    url.to_string()
                };
                Ok(ProviderSpec::Http {
                    url,
                    auth_env: None,
                    timeout_secs: default_http_timeout(),
                })
            }
            _ => Err(Error::Config(format!(
                "provider {s:?} must be replay:<file> or http:<url>"
            ))),
        }
    }
}

impl ProviderSpec {
    pub fn build(&self, stops: &[String]) -> Result<Box<dyn CompletionProvider>> {
        Ok(match self {
            ProviderSpec::Replay { path } => Box::new(ReplayProvider::from_file(path)?),
            ProviderSpec::Http {
                url,
                auth_env,
                timeout_secs,
            } => Box::new(
                HttpProvider::new(url.clone(), Duration::from_secs_f64(*timeout_secs))?
                    .with_auth_env(auth_env.as_deref().unwrap_or(DEFAULT_AUTH_ENV))
                    .with_stops(stops.to_vec()),
            ),
        })
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        if let ProviderSpec::Replay { path } = self {
            if path.is_relative() {
                *path = base.join(&*path);
            }
        }
    }
}
