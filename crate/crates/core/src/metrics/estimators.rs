//! Closed-form pass@k and rouge@k.

use crate::error::{Error, Result};

/// Probability that a uniformly random `k`-subset of `n` samples, `c` of which
/// pass, contains at least one passing sample: `1 - C(n-c, k) / C(n, k)`.
///
/// Uses the product form `1 - prod_{i=n-c+1}^{n} (1 - k/i)`, which never forms
/// a binomial coefficient.
pub fn pass_at_k(n: usize, c: usize, k: usize) -> Result<f64> {
    if c > n {
        return Err(Error::Domain(format!("c={c} exceeds n={n}")));
    }
    if k == 0 || k > n {
        return Err(Error::Domain(format!("k={k} outside 1..={n}")));
    }
    if n - c < k {
        return Ok(1.0);
    }
    let kf = k as f64;
    let miss: f64 = (n - c + 1..=n).map(|i| 1.0 - kf / i as f64).product();
    Ok(1.0 - miss)
}

/// Expected maximum score over a uniformly random `k`-subset of `scores`.
///
/// With scores sorted ascending as `s_1..s_n`, the i-th smallest is the subset
/// maximum in exactly `C(i-1, k-1)` of the `C(n, k)` subsets, so the mean is
/// `sum_{i=k}^{n} C(i-1, k-1) / C(n, k) * s_i`. Equal scores are treated as
/// distinct samples, which the sorted-index weighting handles.
pub fn rouge_at_k(scores: &[f64], k: usize) -> Result<f64> {
    let n = scores.len();
    if k == 0 || k > n {
        return Err(Error::Domain(format!("k={k} outside 1..={n}")));
    }
    if let Some(bad) = scores.iter().find(|s| !(0.0..=1.0).contains(*s)) {
        return Err(Error::Domain(format!("score {bad} outside [0, 1]")));
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(f64::total_cmp);

    // weight of the i-th smallest (1-based): w_n = k/n, w_{i-1} = w_i * (i-k)/(i-1)
    let mut weight = k as f64 / n as f64;
    let mut total = 0.0;
    for i in (k..=n).rev() {
        total += weight * sorted[i - 1];
        if i > 1 {
            weight *= (i - k) as f64 / (i - 1) as f64;
        }
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pass_at_k_examples() {
        for k in 1..=10 {
            assert_eq!(pass_at_k(10, 0, k).unwrap(), 0.0);
        }
        assert_eq!(pass_at_k(10, 10, 1).unwrap(), 1.0);
        let v = pass_at_k(10, 3, 5).unwrap();
        assert!((v - (1.0 - 21.0 / 252.0)).abs() < 1e-15);
        assert!((pass_at_k(6, 2, 3).unwrap() - 0.8).abs() < 1e-15);
        assert!((pass_at_k(7, 3, 1).unwrap() - 3.0 / 7.0).abs() < 1e-15);
    }

    #[test]
    fn pass_at_k_rejects_bad_arguments() {
        assert!(matches!(pass_at_k(5, 6, 1), Err(Error::Domain(_))));
        assert!(matches!(pass_at_k(5, 1, 6), Err(Error::Domain(_))));
        assert!(matches!(pass_at_k(5, 1, 0), Err(Error::Domain(_))));
    }

    #[test]
    fn rouge_at_k_examples() {
        assert_eq!(rouge_at_k(&[0.0; 6], 3).unwrap(), 0.0);
        assert!((rouge_at_k(&[0.2, 0.9, 0.4], 3).unwrap() - 0.9).abs() < 1e-15);
        let v = rouge_at_k(&[0.0, 0.5, 1.0], 2).unwrap();
        assert!((v - 2.5 / 3.0).abs() < 1e-15);
        let mean = (0.1 + 0.7 + 0.4 + 0.0) / 4.0;
        assert!((rouge_at_k(&[0.1, 0.7, 0.4, 0.0], 1).unwrap() - mean).abs() < 1e-15);
    }

    #[test]
    fn rouge_at_k_rejects_bad_arguments() {
        assert!(matches!(rouge_at_k(&[0.5], 2), Err(Error::Domain(_))));
        assert!(matches!(rouge_at_k(&[], 1), Err(Error::Domain(_))));
        assert!(matches!(rouge_at_k(&[1.5, 0.0], 1), Err(Error::Domain(_))));
        assert!(matches!(rouge_at_k(&[f64::NAN], 1), Err(Error::Domain(_))));
    }
}
