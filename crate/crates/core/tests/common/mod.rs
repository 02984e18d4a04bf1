#![allow(dead_code)]

use std::path::PathBuf;

use mesc_core::corpus::{read_corpus_file, Corpus, ScenarioRegistry};

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

pub fn mini_train() -> Corpus {
    read_corpus_file(fixture("mini_train.jsonl"), &ScenarioRegistry::default()).expect("fixture parses")
}

pub fn read_fixture(name: &str) -> String {
    std::fs::read_to_string(fixture(name)).expect("fixture readable")
}
