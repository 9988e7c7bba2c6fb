//! Benchmark harness for educational program repair.
//!
//! The pipeline curates a corpus of student submissions, prompts a completion
//! provider for repairs of the buggy ones, runs every extracted repair against
//! the problem's unit tests in a sandbox, and scores the run with pass@k and
//! rouge@k (expected best Rouge-L similarity to the buggy program among k
//! samples, with failing samples scored 0).

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod corpus;
pub mod error;
pub mod executor;
pub mod generator;
pub mod jsonl;
pub mod metrics;
pub mod pairer;
pub mod pipeline;
pub mod promptgen;
pub mod report;
pub mod shim;

pub use config::HarnessConfig;
pub use corpus::{load_corpus, Corpus, Difficulty, Problem, Submission};
pub use error::{Error, Result};
pub use executor::{ExecutionResult, SandboxLimits, Verdict};
pub use generator::{GenerationRecord, SamplingConfig};
pub use metrics::{pass_at_k, rouge_at_k, rouge_l, tokenize_code, ScoreReport};
pub use pairer::RepairPair;
pub use promptgen::{EvalPrompt, PromptTemplate};
