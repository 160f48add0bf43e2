//! Shared fixtures for the criterion benchmarks.

use std::path::PathBuf;

use tcpa_core::harness::{load_corpus, BenchJob};

pub fn corpus_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../corpus")
}

/// Every corpus program that loads cleanly.
pub fn corpus_jobs() -> Vec<BenchJob> {
    load_corpus(&corpus_dir())
        .expect("corpus directory is readable")
        .into_iter()
        .filter_map(Result::ok)
        .collect()
}
