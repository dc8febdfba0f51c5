#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use groundcheck::RunConfig;
use serde::Deserialize;

pub fn golden_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/golden")
}

pub fn copy_dir(from: &Path, to: &Path) {
    std::fs::create_dir_all(to).unwrap();
    for entry in std::fs::read_dir(from).unwrap() {
        let entry = entry.unwrap();
        std::fs::copy(entry.path(), to.join(entry.file_name())).unwrap();
    }
}

/// A run config over the golden corpus with a private copy of the document
/// cache, the mock backend and offline fetching.
pub fn golden_config(work: &Path) -> RunConfig {
    let golden = golden_dir();
    copy_dir(&golden.join("cache"), &work.join("cache"));
    RunConfig {
        transcripts: golden.join("transcripts"),
        ratings: golden.join("ratings.csv"),
        cache: work.join("cache"),
        output: work.join("out"),
        mock: Some(golden.join("mock.json")),
        offline: true,
        ..RunConfig::default()
    }
}

#[derive(Debug, Deserialize)]
pub struct Expected {
    pub alpha: f64,
    pub transcripts: Vec<ExpectedTranscript>,
}

#[derive(Debug, Deserialize)]
pub struct ExpectedTranscript {
    pub file: String,
    pub assistant: String,
    pub topic: String,
    pub user_type: String,
    pub thinking_mode: bool,
    pub refused: bool,
    pub citations: Vec<String>,
    pub units: Vec<ExpectedUnit>,
}

#[derive(Debug, Deserialize)]
pub struct ExpectedUnit {
    pub id: String,
    pub label: String,
    pub raw_text: String,
    #[serde(default)]
    pub text: Option<String>,
    /// Source group name to decision.
    pub verdicts: BTreeMap<String, String>,
}

impl ExpectedUnit {
    pub fn verifiable(&self) -> bool {
        self.label == "Fact" || self.label == "Claim"
    }
}

pub fn expected() -> Expected {
    let text = std::fs::read_to_string(golden_dir().join("expected.json")).unwrap();
    serde_json::from_str(&text).unwrap()
}
