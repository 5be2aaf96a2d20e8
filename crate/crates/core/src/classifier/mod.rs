//! Deterministic baseline ad hominem classifier: hashed unigram and bigram
//! features with L2-regularized logistic loss, plus the stratified k-fold and
//! label-fraction evaluation protocols.

mod eval;
mod model;
mod tokenize;

use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use eval::{kfold_evaluate, label_fraction_sweep, stratified_folds, SweepRow};
pub use model::{
    hash_bigram, hash_unigram, sigmoid, train_baseline, BaselineConfig, BaselineModel, HashedFeature, Prediction,
    TokenScore, MODEL_FORMAT, MODEL_VERSION,
};
pub use tokenize::{tokenize, Token};

#[derive(Debug, Error)]
pub enum ClassifierError {
    #[error("degenerate training set: need at least 2 examples covering both classes")]
    DegenerateTrainingSet,
    #[error("class `{class}` has {count} examples, fewer than k = {k}")]
    TooFewPerClass { class: Label, count: usize, k: usize },
    #[error("k must be at least 2, got {0}")]
    InvalidK(usize),
    #[error("label fraction must lie in (0, 1], got {0}")]
    InvalidFraction(f64),
    #[error("fraction {fraction}: class `{class}` has no labeled examples left")]
    ClassVanished { fraction: f64, class: Label },
    #[error("invalid classifier config: {0}")]
    InvalidConfig(String),
    #[error("training diverged")]
    Diverged,
    #[error("model artifact: {0}")]
    Artifact(String),
    #[error("model artifact version {found} is not supported (expected {expected})")]
    ArtifactVersion { found: u32, expected: u32 },
    #[error("labeled dataset line {line}: {message}")]
    Dataset { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Metrics(#[from] crate::stats::StatsError),
}

pub type Result<T, E = ClassifierError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Adhominem,
    None,
}

impl Label {
    pub fn is_adhominem(self) -> bool {
        self == Label::Adhominem
    }

    pub fn from_bool(adhominem: bool) -> Self {
        if adhominem {
            Label::Adhominem
        } else {
            Label::None
        }
    }
}

impl std::fmt::Display for Label {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Label::Adhominem => "adhominem",
            Label::None => "none",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabeledExample {
    pub id: String,
    pub text: String,
    pub label: Label,
}

/// Reads a labeled dataset (`{"id","text","label"}` per line).
pub fn load_labeled(path: &Path) -> Result<Vec<LabeledExample>> {
    let reader = BufReader::new(std::fs::File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let ex: LabeledExample = serde_json::from_str(&line).map_err(|e| ClassifierError::Dataset {
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(ex);
    }
    Ok(out)
}

pub fn labeled_jsonl(examples: &[LabeledExample]) -> String {
    let mut s = String::new();
    for e in examples {
        s.push_str(&serde_json::to_string(e).expect("example serializes"));
        s.push('\n');
    }
    s
}
