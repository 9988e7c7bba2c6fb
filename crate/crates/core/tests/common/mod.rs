#![allow(dead_code)]

use std::path::PathBuf;

use edurepair_core::corpus::{label_correctness, load_corpus, Corpus, LabelMode};

pub fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

pub fn mini_root() -> PathBuf {
    fixtures().join("mini")
}

pub fn mini_run() -> PathBuf {
    fixtures().join("mini-run")
}

/// The mini corpus labelled by score.
pub fn mini_corpus() -> Corpus {
    let c = load_corpus(&mini_root()).expect("mini corpus loads");
    label_correctness(&c, &LabelMode::ByScore).expect("labels")
}

pub fn ids(c: &Corpus) -> Vec<&str> {
    c.submissions.iter().map(|s| s.id.as_str()).collect()
}

pub fn golden(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/golden")
        .join(name)
}

/// Compares against a golden file; `UPDATE_GOLDEN=1` rewrites it instead.
pub fn assert_golden(name: &str, actual: &str) {
    let path = golden(name);
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(&path, actual).unwrap();
        return;
    }
    let expected = std::fs::read_to_string(&path)
        .unwrap_or_else(|e| panic!("golden {} unreadable: {e}", path.display()));
    assert_eq!(actual, expected, "golden mismatch for {name}");
}
