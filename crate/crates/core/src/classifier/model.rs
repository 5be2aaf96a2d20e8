use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::tokenize::{tokenize, Token};
use super::{ClassifierError, LabeledExample, Result};
use crate::util::fnv1a64;

pub const MODEL_FORMAT: &str = "fallacy-forensics/baseline-model";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaselineConfig {
    /// log2 of the hash space size.
    pub hash_bits: u32,
    /// 1 = unigrams only, 2 = unigrams and bigrams.
    pub max_ngram: usize,
    /// L2 penalty on the feature weights (the bias is not penalized).
    pub l2: f64,
    pub max_epochs: usize,
    /// Stop once every gradient component is below this in magnitude.
    pub tolerance: f64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        BaselineConfig {
            hash_bits: 18,
            max_ngram: 2,
            l2: 1e-4,
            max_epochs: 500,
            tolerance: 1e-6,
        }
    }
}

impl BaselineConfig {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if !(1..=30).contains(&self.hash_bits) {
            problems.push(format!("hash_bits must be in 1..=30, got {}", self.hash_bits));
        }
        if !(1..=2).contains(&self.max_ngram) {
            problems.push(format!("max_ngram must be 1 or 2, got {}", self.max_ngram));
        }
        if !(self.l2.is_finite() && self.l2 >= 0.0) {
            problems.push(format!("l2 must be finite and non-negative, got {}", self.l2));
        }
        if self.max_epochs == 0 {
            problems.push("max_epochs must be at least 1".to_string());
        }
        if !(self.tolerance.is_finite() && self.tolerance > 0.0) {
            problems.push(format!("tolerance must be positive, got {}", self.tolerance));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(ClassifierError::InvalidConfig(problems.join("; ")))
        }
    }

    fn mask(&self) -> u64 {
        (1u64 << self.hash_bits) - 1
    }
}

/// A hashed feature: bucket index plus the ±1 sign from the hash.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashedFeature {
    pub bucket: u32,
    pub sign: i8,
}

pub fn hash_unigram(token: &str, config: &BaselineConfig) -> HashedFeature {
    hash_key(&format!("1\u{1f}{token}"), config)
}

pub fn hash_bigram(first: &str, second: &str, config: &BaselineConfig) -> HashedFeature {
    hash_key(&format!("2\u{1f}{first}\u{1f}{second}"), config)
}

fn hash_key(key: &str, config: &BaselineConfig) -> HashedFeature {
    let h = fnv1a64(key.as_bytes());
    HashedFeature {
        bucket: (h & config.mask()) as u32,
        sign: if h >> 63 == 1 { -1 } else { 1 },
    }
}

/// Sparse feature vector of a tokenized text: (bucket, summed signs), sorted
/// by bucket, zeros removed.
pub(crate) fn featurize(tokens: &[Token], config: &BaselineConfig) -> Vec<(u32, f64)> {
    let mut acc: BTreeMap<u32, f64> = BTreeMap::new();
    for t in tokens {
        let f = hash_unigram(&t.text, config);
        *acc.entry(f.bucket).or_default() += f64::from(f.sign);
    }
    if config.max_ngram >= 2 {
        for pair in tokens.windows(2) {
            let f = hash_bigram(&pair[0].text, &pair[1].text, config);
            *acc.entry(f.bucket).or_default() += f64::from(f.sign);
        }
    }
    acc.into_iter().filter(|&(_, v)| v != 0.0).collect()
}

/// Hashed n-gram logistic regression model.
#[derive(Debug, Clone, PartialEq)]
pub struct BaselineModel {
    pub config: BaselineConfig,
    pub seed: u64,
    pub bias: f64,
    /// Nonzero weights by hash bucket.
    pub weights: BTreeMap<u32, f64>,
    /// Epochs run and whether the gradient tolerance was reached.
    pub epochs: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenScore {
    pub token: String,
    pub start: usize,
    pub end: usize,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub p_adhominem: f64,
    pub label: bool,
    pub logit: f64,
    /// Per-token logit contributions; their sum plus the bias is the logit.
    pub token_scores: Vec<TokenScore>,
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl BaselineModel {
    /// Model with every weight and the bias at zero.
    pub fn zeros(config: BaselineConfig) -> Self {
        BaselineModel {
            config,
            seed: 0,
            bias: 0.0,
            weights: BTreeMap::new(),
            epochs: 0,
            converged: false,
        }
    }

    fn weight(&self, f: HashedFeature) -> f64 {
        self.weights.get(&f.bucket).copied().unwrap_or(0.0) * f64::from(f.sign)
    }

    /// Sets the weight so that one occurrence of `token` adds `value` to the logit.
    pub fn set_unigram_weight(&mut self, token: &str, value: f64) {
        let f = hash_unigram(token, &self.config);
        self.weights.insert(f.bucket, value * f64::from(f.sign));
    }

    pub fn set_bigram_weight(&mut self, first: &str, second: &str, value: f64) {
        let f = hash_bigram(first, second, &self.config);
        self.weights.insert(f.bucket, value * f64::from(f.sign));
    }

    pub fn logit(&self, text: &str) -> f64 {
        let tokens = tokenize(text);
        self.bias
            + featurize(&tokens, &self.config)
                .iter()
                .map(|&(b, x)| self.weights.get(&b).copied().unwrap_or(0.0) * x)
                .sum::<f64>()
    }

    /// Probability, label (`p >= 0.5`) and token attributions for `text`.
    ///
    /// A token's score is its unigram contribution plus half of each bigram
    /// contribution it takes part in.
    pub fn predict(&self, text: &str) -> Prediction {
        let tokens = tokenize(text);
        let unigram: Vec<f64> = tokens
            .iter()
            .map(|t| self.weight(hash_unigram(&t.text, &self.config)))
            .collect();
        let bigram: Vec<f64> = if self.config.max_ngram >= 2 {
            tokens
                .windows(2)
                .map(|p| self.weight(hash_bigram(&p[0].text, &p[1].text, &self.config)))
                .collect()
        } else {
            Vec::new()
        };
        let logit = self.bias + unigram.iter().sum::<f64>() + bigram.iter().sum::<f64>();
        let token_scores = tokens
            .into_iter()
            .enumerate()
            .map(|(i, t)| {
                let left = if i > 0 {
                    bigram.get(i - 1).copied().unwrap_or(0.0)
                } else {
                    0.0
                };
                let right = bigram.get(i).copied().unwrap_or(0.0);
                TokenScore {
                    token: t.text,
                    start: t.start,
                    end: t.end,
                    score: unigram[i] + 0.5 * (left + right),
                }
            })
            .collect();
        let p = sigmoid(logit);
        Prediction {
            p_adhominem: p,
            label: p >= 0.5,
            logit,
            token_scores,
        }
    }

    pub fn to_json(&self) -> String {
        let artifact = ModelArtifact {
            format: MODEL_FORMAT.to_string(),
            version: MODEL_VERSION,
            config: self.config.clone(),
            seed: self.seed,
            bias: self.bias,
            epochs: self.epochs,
            converged: self.converged,
            weights: self.weights.iter().map(|(&b, &w)| (b, w)).collect(),
        };
        serde_json::to_string(&artifact).expect("model serializes") + "\n"
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let header: ArtifactHeader = serde_json::from_str(s).map_err(|e| ClassifierError::Artifact(e.to_string()))?;
        if header.format != MODEL_FORMAT {
            return Err(ClassifierError::Artifact(format!(
                "unexpected format `{}`",
                header.format
            )));
        }
        if header.version != MODEL_VERSION {
            return Err(ClassifierError::ArtifactVersion {
                found: header.version,
                expected: MODEL_VERSION,
            });
        }
        let a: ModelArtifact = serde_json::from_str(s).map_err(|e| ClassifierError::Artifact(e.to_string()))?;
        a.config.validate()?;
        if !a.bias.is_finite() || a.weights.iter().any(|(_, w)| !w.is_finite()) {
            return Err(ClassifierError::Artifact("non-finite weight".into()));
        }
        Ok(BaselineModel {
            config: a.config,
            seed: a.seed,
            bias: a.bias,
            weights: a.weights.into_iter().collect(),
            epochs: a.epochs,
            converged: a.converged,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::util::write_atomic(path, self.to_json().as_bytes()).map_err(ClassifierError::Io)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(ClassifierError::Io)?;
        Self::from_json(&s)
    }
}

#[derive(Deserialize)]
struct ArtifactHeader {
    format: String,
    version: u32,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelArtifact {
    format: String,
    version: u32,
    config: BaselineConfig,
    seed: u64,
    bias: f64,
    epochs: usize,
    converged: bool,
    weights: Vec<(u32, f64)>,
}

/// Featurized training document.
pub(crate) struct Doc {
    pub features: Vec<(u32, f64)>,
    pub label: bool,
}

pub(crate) fn featurize_examples(examples: &[LabeledExample], config: &BaselineConfig) -> Vec<Doc> {
    examples
        .iter()
        .map(|e| Doc {
            features: featurize(&tokenize(&e.text), config),
            label: e.label.is_adhominem(),
        })
        .collect()
}

/// Trains on labeled examples. See [`train_docs`].
pub fn train_baseline(examples: &[LabeledExample], config: &BaselineConfig, seed: u64) -> Result<BaselineModel> {
    config.validate()?;
    let docs = featurize_examples(examples, config);
    let refs: Vec<&Doc> = docs.iter().collect();
    train_docs(&refs, config, seed)
}

/// Minimizes mean logistic loss + (l2/2)·‖w‖² with Nesterov-accelerated
/// full-batch gradient descent at step 1/L, where L bounds the gradient's
/// Lipschitz constant. Weights start at zero and only buckets that occur in
/// the training set can move, so the optimization runs over those alone.
pub(crate) fn train_docs(docs: &[&Doc], config: &BaselineConfig, seed: u64) -> Result<BaselineModel> {
    let positives = docs.iter().filter(|d| d.label).count();
    if docs.len() < 2 || positives == 0 || positives == docs.len() {
        return Err(ClassifierError::DegenerateTrainingSet);
    }

    let buckets: Vec<u32> = docs
        .iter()
        .flat_map(|d| d.features.iter().map(|&(b, _)| b))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let slot: HashMap<u32, usize> = buckets.iter().enumerate().map(|(i, &b)| (b, i)).collect();
    let rows: Vec<Vec<(usize, f64)>> = docs
        .iter()
        .map(|d| d.features.iter().map(|&(b, x)| (slot[&b], x)).collect())
        .collect();
    let targets: Vec<f64> = docs.iter().map(|d| if d.label { 1.0 } else { 0.0 }).collect();

    let n = docs.len() as f64;
    let dim = buckets.len();
    let max_sq_norm = rows
        .iter()
        .map(|r| 1.0 + r.iter().map(|&(_, x)| x * x).sum::<f64>())
        .fold(0.0, f64::max);
    let step = 1.0 / (0.25 * max_sq_norm + config.l2);

    // Parameter layout: [weights..., bias].
    let mut current = vec![0.0; dim + 1];
    let mut lookahead = current.clone();
    let mut grad = vec![0.0; dim + 1];
    let mut momentum = 1.0f64;
    let mut epochs = 0;
    let mut converged = false;

    while epochs < config.max_epochs {
        epochs += 1;
        grad.iter_mut().for_each(|g| *g = 0.0);
        let bias = lookahead[dim];
        for (row, &y) in rows.iter().zip(&targets) {
            let z = bias + row.iter().map(|&(j, x)| lookahead[j] * x).sum::<f64>();
            let residual = (sigmoid(z) - y) / n;
            for &(j, x) in row {
                grad[j] += residual * x;
            }
            grad[dim] += residual;
        }
        for j in 0..dim {
            grad[j] += config.l2 * lookahead[j];
        }
        let max_abs = grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
        if max_abs < config.tolerance {
            current.clone_from(&lookahead);
            converged = true;
            break;
        }
        let next: Vec<f64> = lookahead.iter().zip(&grad).map(|(v, g)| v - step * g).collect();
        let next_momentum = (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt()) / 2.0;
        let beta = (momentum - 1.0) / next_momentum;
        for j in 0..=dim {
            lookahead[j] = next[j] + beta * (next[j] - current[j]);
        }
        current = next;
        momentum = next_momentum;
    }

    if current.iter().any(|v| !v.is_finite()) {
        return Err(ClassifierError::Diverged);
    }
    Ok(BaselineModel {
        config: config.clone(),
        seed,
        bias: current[dim],
        weights: buckets
            .iter()
            .zip(&current[..dim])
            .filter(|(_, &w)| w != 0.0)
            .map(|(&b, &w)| (b, w))
            .collect(),
        epochs,
        converged,
    })
}
