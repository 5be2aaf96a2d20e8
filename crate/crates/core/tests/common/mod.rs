#![allow(dead_code)]

use fallacy_forensics_core::corpus::IngestOptions;
use fallacy_forensics_core::synth::{generate, SynthBundle, SynthConfig};
use fallacy_forensics_core::Corpus;
use serde_json::Value;

pub const SEED: u64 = 42;

pub fn bundle() -> SynthBundle {
    generate(&SynthConfig::default(), SEED)
}

pub fn load(b: &SynthBundle) -> Corpus {
    Corpus::from_readers(
        ("posts", b.posts.as_bytes()),
        ("comments", b.comments.as_bytes()),
        Some(("profiles".to_string(), b.profiles.as_bytes())),
        &IngestOptions {
            salt: Some(b"oracle-salt".to_vec()),
            lenient: false,
        },
    )
    .unwrap()
}

pub fn lines(s: &str) -> Vec<Value> {
    s.lines().map(|l| serde_json::from_str(l).unwrap()).collect()
}

/// Gold labels aligned with corpus order.
pub fn gold_labels(b: &SynthBundle, corpus: &Corpus) -> Vec<bool> {
    let gold: std::collections::HashMap<String, bool> = lines(&b.gold)
        .into_iter()
        .map(|v| (v["id"].as_str().unwrap().to_string(), v["label"] == "adhominem"))
        .collect();
    corpus.comments().iter().map(|c| gold[&c.id]).collect()
}
