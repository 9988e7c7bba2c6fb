//! Token-level Rouge-L over program text.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenizeOptions {
    /// Drop `#` line comments (outside string literals) before splitting.
    pub strip_comments: bool,
}

/// Splits source into lexical tokens.
///
/// Maximal runs of identifier/number characters (alphanumerics and `_`) form one
/// token; every other non-whitespace character is a token on its own. Whitespace
/// only separates.
pub fn tokenize_code(source: &str) -> Vec<&str> {
    tokenize_code_with(source, TokenizeOptions::default())
}

pub fn tokenize_code_with(source: &str, opts: TokenizeOptions) -> Vec<&str> {
    let mut tokens = Vec::new();
    let mut run_start: Option<usize> = None;
    let mut lexer = CommentTracker::default();
    let mut skip_to_eol = false;

    for (idx, ch) in source.char_indices() {
        if skip_to_eol {
            if ch == '\n' {
                skip_to_eol = false;
            }
            continue;
        }
        if opts.strip_comments && lexer.starts_comment(source, idx, ch) {
            if let Some(start) = run_start.take() {
                tokens.push(&source[start..idx]);
            }
            skip_to_eol = true;
            continue;
        }
        if is_word_char(ch) {
            if run_start.is_none() {
                run_start = Some(idx);
            }
            continue;
        }
        if let Some(start) = run_start.take() {
            tokens.push(&source[start..idx]);
        }
        if !ch.is_whitespace() {
            tokens.push(&source[idx..idx + ch.len_utf8()]);
        }
    }
    if let Some(start) = run_start {
        tokens.push(&source[start..]);
    }
    tokens
}

fn is_word_char(ch: char) -> bool {
    ch.is_alphanumeric() || ch == '_'
}

/// Tracks Python string literals so `#` inside strings is not taken for a comment.
#[derive(Default)]
struct CommentTracker {
    quote: Option<(char, bool)>,
    escaped: bool,
    skip: usize,
}

impl CommentTracker {
    fn starts_comment(&mut self, source: &str, idx: usize, ch: char) -> bool {
        if self.skip > 0 {
            self.skip -= 1;
            return false;
        }
        match self.quote {
            Some((q, triple)) => {
                if self.escaped {
                    self.escaped = false;
                } else if ch == '\\' {
                    self.escaped = true;
                } else if ch == q {
                    if !triple {
                        self.quote = None;
                    } else if source[idx..].starts_with(&q.to_string().repeat(3)) {
                        self.quote = None;
                        self.skip = 2;
                    }
                } else if ch == '\n' && !triple {
                    self.quote = None;
                }
                false
            }
            None => match ch {
                '#' => true,
                '\'' | '"' => {
                    let triple = source[idx..].starts_with(&ch.to_string().repeat(3));
                    if triple {
                        self.skip = 2;
                    }
                    self.quote = Some((ch, triple));
                    false
                }
                _ => false,
            },
        }
    }
}

/// Rouge-L precision/recall/F for one candidate against one reference.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RougeScores {
    pub precision: f64,
    pub recall: f64,
    pub f: f64,
    pub lcs_length: usize,
}

impl RougeScores {
    /// Weighted F-measure; `beta > 1` favours recall.
    pub fn f_beta(&self, beta: f64) -> f64 {
        let b2 = beta * beta;
        let denom = b2 * self.precision + self.recall;
        if denom > 0.0 {
            (1.0 + b2) * self.precision * self.recall / denom
        } else {
            0.0
        }
    }
}

pub fn lcs_length<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    let (outer, inner) = if a.len() >= b.len() { (a, b) } else { (b, a) };
    let mut prev = vec![0usize; inner.len() + 1];
    let mut cur = vec![0usize; inner.len() + 1];
    for x in outer {
        for (j, y) in inner.iter().enumerate() {
            cur[j + 1] = if x == y {
                prev[j] + 1
            } else {
                cur[j].max(prev[j + 1])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[inner.len()]
}

pub fn rouge_l<T: PartialEq>(candidate: &[T], reference: &[T]) -> RougeScores {
    let lcs = lcs_length(candidate, reference);
    let ratio = |den: usize| {
        if den == 0 {
            0.0
        } else {
            lcs as f64 / den as f64
        }
    };
    let precision = ratio(candidate.len());
    let recall = ratio(reference.len());
    let f = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    RougeScores {
        precision,
        recall,
        f,
        lcs_length: lcs,
    }
}

/// Rouge-L between two program texts using [`tokenize_code_with`].
pub fn rouge_l_source(candidate: &str, reference: &str, opts: TokenizeOptions) -> RougeScores {
    rouge_l(
        &tokenize_code_with(candidate, opts),
        &tokenize_code_with(reference, opts),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn tokenizer_examples() {
        assert_eq!(tokenize_code("x=1"), vec!["x", "=", "1"]);
        assert!(tokenize_code("").is_empty());
        assert_eq!(
            tokenize_code("print(total + 1)"),
            vec!["print", "(", "total", "+", "1", ")"]
        );
        assert_eq!(tokenize_code("a  <=\tb_2"), vec!["a", "<", "=", "b_2"]);
    }

    #[test]
    fn comments_kept_unless_stripped() {
        let src = "x = 1  # set x\ns = '#not'\n";
        assert_eq!(
            tokenize_code(src),
            vec!["x", "=", "1", "#", "set", "x", "s", "=", "'", "#", "not", "'"]
        );
        let opts = TokenizeOptions {
            strip_comments: true,
        };
        assert_eq!(
            tokenize_code_with(src, opts),
            vec!["x", "=", "1", "s", "=", "'", "#", "not", "'"]
        );
        let triple = "d = \"\"\"# doc\"\"\" # tail\ny=2";
        assert_eq!(
            tokenize_code_with(triple, opts),
            vec!["d", "=", "\"", "\"", "\"", "#", "doc", "\"", "\"", "\"", "y", "=", "2"]
        );
    }

    #[test]
    fn rouge_fixtures() {
        let same = ["a", "b", "c", "d"];
        let s = rouge_l(&same, &same);
        assert_eq!(
            (s.precision, s.recall, s.f, s.lcs_length),
            (1.0, 1.0, 1.0, 4)
        );

        let s = rouge_l(&["a", "b"], &["c", "d"]);
        assert_eq!(
            (s.precision, s.recall, s.f, s.lcs_length),
            (0.0, 0.0, 0.0, 0)
        );

        let s = rouge_l(&["a", "c", "d", "e"], &["a", "b", "c", "d"]);
        assert_eq!(s.lcs_length, 3);
        assert_eq!((s.precision, s.recall, s.f), (0.75, 0.75, 0.75));
    }

    #[test]
    fn empty_sides_score_zero() {
        let empty: [&str; 0] = [];
        assert_eq!(rouge_l(&empty, &["a"]).f, 0.0);
        assert_eq!(rouge_l(&["a"], &empty).f, 0.0);
        assert_eq!(rouge_l(&empty, &empty).f, 0.0);
    }

    #[test]
    fn f_beta_one_is_balanced_f() {
        let s = rouge_l(&["a", "b", "x"], &["a", "b", "c", "d", "e"]);
        assert!((s.f_beta(1.0) - s.f).abs() < 1e-15);
        assert!(s.f_beta(2.0) < s.f);
    }

    /// Exponential reference LCS by recursion; only for tiny inputs.
    fn naive_lcs(a: &[u8], b: &[u8]) -> usize {
        match (a.split_first(), b.split_first()) {
            (Some((x, ra)), Some((y, rb))) => {
                if x == y {
                    1 + naive_lcs(ra, rb)
                } else {
                    naive_lcs(ra, b).max(naive_lcs(a, rb))
                }
            }
            _ => 0,
        }
    }

    proptest! {
        #[test]
        fn lcs_matches_naive(a in prop::collection::vec(0u8..4, 0..9), b in prop::collection::vec(0u8..4, 0..9)) {
            prop_assert_eq!(lcs_length(&a, &b), naive_lcs(&a, &b));
        }

        #[test]
        fn swapping_sides_swaps_p_and_r(a in prop::collection::vec(0u8..5, 0..12), b in prop::collection::vec(0u8..5, 0..12)) {
            let ab = rouge_l(&a, &b);
            let ba = rouge_l(&b, &a);
            prop_assert_eq!(ab.precision, ba.recall);
            prop_assert_eq!(ab.recall, ba.precision);
            prop_assert!((ab.f - ba.f).abs() < 1e-15);
            prop_assert_eq!(ab.f == 0.0, ab.lcs_length == 0);
        }

        #[test]
        fn tokens_never_contain_whitespace(src in "[a-z0-9_ =+()\\n\\t#'.]{0,40}") {
            for t in tokenize_code(&src) {
                prop_assert!(!t.is_empty());
                prop_assert!(!t.chars().any(char::is_whitespace));
            }
        }
    }
}
