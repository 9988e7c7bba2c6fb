//! Literal enumeration of every k-subset. Test oracle for the closed forms; do not
//! use for scoring.

use crate::error::{Error, Result};

pub const MAX_ORACLE_N: usize = 20;

fn guard(n: usize, k: usize) -> Result<()> {
    if n > MAX_ORACLE_N {
        return Err(Error::Domain(format!(
            "n={n} exceeds the enumeration limit of {MAX_ORACLE_N}"
        )));
    }
    if k == 0 || k > n {
        return Err(Error::Domain(format!("k={k} outside 1..={n}")));
    }
    Ok(())
}

fn k_subsets(n: usize, k: usize) -> impl Iterator<Item = u32> {
    (0u32..(1u32 << n)).filter(move |mask| mask.count_ones() as usize == k)
}

/// Fraction of k-subsets of `flags` holding at least one `true`.
pub fn brute_force_pass_at_k_flags(flags: &[bool], k: usize) -> Result<f64> {
    let n = flags.len();
    guard(n, k)?;
    let (mut hits, mut total) = (0u64, 0u64);
    for mask in k_subsets(n, k) {
        total += 1;
        if (0..n).any(|i| mask & (1 << i) != 0 && flags[i]) {
            hits += 1;
        }
    }
    Ok(hits as f64 / total as f64)
}

pub fn brute_force_pass_at_k(n: usize, c: usize, k: usize) -> Result<f64> {
    if c > n {
        return Err(Error::Domain(format!("c={c} exceeds n={n}")));
    }
    let flags: Vec<bool> = (0..n).map(|i| i < c).collect();
    brute_force_pass_at_k_flags(&flags, k)
}

/// Mean over all k-subsets of the subset maximum.
pub fn brute_force_rouge_at_k(scores: &[f64], k: usize) -> Result<f64> {
    let n = scores.len();
    guard(n, k)?;
    let (mut sum, mut total) = (0.0f64, 0u64);
    for mask in k_subsets(n, k) {
        total += 1;
        let best = (0..n)
            .filter(|i| mask & (1 << i) != 0)
            .map(|i| scores[i])
            .fold(f64::NEG_INFINITY, f64::max);
        sum += best;
    }
    Ok(sum / total as f64)
}
