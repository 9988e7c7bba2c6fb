//! Input generators shared by the criterion benches.

use edurepair_core::metrics::tokenize_code;

/// A synthetic student program of roughly `lines` lines.
pub fn synthetic_program(lines: usize, salt: usize) -> String {
    let mut out = String::from("def solve(values, target):\n    total = 0\n");
    for i in 0..lines {
        let v = (i * 7 + salt) % 13;
        out.push_str(&format!(
            "    if values[{i}] > {v}:\n        total += values[{i}] * {}\n",
            (i + salt) % 5
        ));
    }
    out.push_str("    return total == target\n");
    out
}

pub fn token_count(source: &str) -> usize {
    tokenize_code(source).len()
}
