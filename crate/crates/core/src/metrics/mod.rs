//! Rouge-L, pass@k, rouge@k and run scoring.

mod estimators;
pub mod oracle;
mod rouge;
mod score;

pub use estimators::{pass_at_k, rouge_at_k};
pub use rouge::{
    lcs_length, rouge_l, rouge_l_source, tokenize_code, tokenize_code_with, RougeScores,
    TokenizeOptions,
};
pub use score::{
    score_run, ProblemScores, RougeVariant, ScoreOptions, ScoreReport, SubsetKey, SubsetScores,
};
