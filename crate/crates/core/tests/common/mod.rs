#![allow(dead_code)]

use std::path::PathBuf;

use tutorbench_core::corpus::{load_corpus, Corpus, Split};

pub const APPENDIX_IDS: [&str; 5] = ["0701", "1062", "0298", "1674", "1650"];
pub const PINNED_EXEMPLARS: [&str; 5] = ["h01", "h02", "h03", "h04", "h05"];

pub fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

pub fn load(name: &str) -> Corpus {
    load_corpus(&fixtures().join(name), Split::Custom).unwrap()
}

pub fn blessing() -> bool {
    std::env::var_os("TUTORBENCH_BLESS").is_some_and(|v| v == "1")
}
