//! Word distributions, Jensen-Shannon divergence in bits and per-word
//! divergence contributions.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifier::tokenize;
use crate::corpus::Corpus;

#[derive(Debug, Error, PartialEq)]
pub enum WordShiftError {
    #[error("no tokens to build a distribution from")]
    Empty,
    #[error("mixture weight must lie strictly between 0 and 1, got {0}")]
    BadWeight(f64),
    #[error("not a probability distribution: {0}")]
    BadDistribution(String),
}

pub type Result<T, E = WordShiftError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WordDistribution {
    pub probs: BTreeMap<String, f64>,
    pub token_total: u64,
}

impl WordDistribution {
    pub fn from_counts(counts: BTreeMap<String, u64>) -> Result<Self> {
        let total: u64 = counts.values().sum();
        if total == 0 {
            return Err(WordShiftError::Empty);
        }
        let probs = counts
            .into_iter()
            .filter(|(_, n)| *n > 0)
            .map(|(w, n)| (w, n as f64 / total as f64))
            .collect();
        Ok(WordDistribution {
            probs,
            token_total: total,
        })
    }

    /// Validates an explicit probability map.
    pub fn from_probs(probs: BTreeMap<String, f64>) -> Result<Self> {
        if let Some((w, p)) = probs.iter().find(|(_, p)| !(p.is_finite() && **p >= 0.0)) {
            return Err(WordShiftError::BadDistribution(format!("p({w}) = {p}")));
        }
        let sum: f64 = probs.values().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(WordShiftError::BadDistribution(format!("sums to {sum}")));
        }
        Ok(WordDistribution { probs, token_total: 0 })
    }

    pub fn vocabulary_size(&self) -> usize {
        self.probs.len()
    }

    pub fn p(&self, word: &str) -> f64 {
        self.probs.get(word).copied().unwrap_or(0.0)
    }
}

/// Token counts over every comment text, skipping words in `stop`.
pub fn word_counts(corpus: &Corpus, stop: Option<&BTreeSet<String>>) -> BTreeMap<String, u64> {
    corpus
        .comments()
        .par_iter()
        .fold(BTreeMap::new, |mut acc: BTreeMap<String, u64>, c| {
            for t in tokenize(&c.text) {
                if stop.is_some_and(|s| s.contains(&t.text)) {
                    continue;
                }
                *acc.entry(t.text).or_default() += 1;
            }
            acc
        })
        .reduce(BTreeMap::new, |mut a, b| {
            for (w, n) in b {
                *a.entry(w).or_default() += n;
            }
            a
        })
}

pub fn word_distribution(corpus: &Corpus, stop: Option<&BTreeSet<String>>) -> Result<WordDistribution> {
    WordDistribution::from_counts(word_counts(corpus, stop))
}

fn check_weight(pi1: f64) -> Result<()> {
    if pi1 > 0.0 && pi1 < 1.0 {
        Ok(())
    } else {
        Err(WordShiftError::BadWeight(pi1))
    }
}

fn term(p: f64, m: f64) -> f64 {
    if p == 0.0 {
        0.0
    } else {
        p * (p / m).log2()
    }
}

fn contribution(p: f64, q: f64, pi1: f64) -> f64 {
    let pi2 = 1.0 - pi1;
    let m = pi1 * p + pi2 * q;
    pi1 * term(p, m) + pi2 * term(q, m)
}

fn union_vocabulary<'a>(p: &'a WordDistribution, q: &'a WordDistribution) -> BTreeSet<&'a str> {
    p.probs.keys().chain(q.probs.keys()).map(String::as_str).collect()
}

/// Weighted Jensen-Shannon divergence in bits, clipped to its bounds
/// `[0, H(π1, π2)]` to absorb rounding.
pub fn jsd(p: &WordDistribution, q: &WordDistribution, pi1: f64) -> Result<f64> {
    check_weight(pi1)?;
    let d: f64 = union_vocabulary(p, q)
        .into_iter()
        .map(|w| contribution(p.p(w), q.p(w), pi1))
        .sum();
    let pi2 = 1.0 - pi1;
    let ceiling = -(pi1 * pi1.log2() + pi2 * pi2.log2());
    Ok(d.clamp(0.0, ceiling))
}

/// Weights proportional to token totals, for comparing by volume.
pub fn proportional_weight(p: &WordDistribution, q: &WordDistribution) -> f64 {
    p.token_total as f64 / (p.token_total + q.token_total) as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    First,
    Second,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WordShiftEntry {
    pub word: String,
    pub contribution: f64,
    pub side: Side,
    pub p_first: f64,
    pub p_second: f64,
}

/// Every word's contribution, largest first (ties by word).
pub fn word_shift_full(p: &WordDistribution, q: &WordDistribution, pi1: f64) -> Result<Vec<WordShiftEntry>> {
    check_weight(pi1)?;
    let mut entries: Vec<WordShiftEntry> = union_vocabulary(p, q)
        .into_iter()
        .map(|w| {
            let (pf, ps) = (p.p(w), q.p(w));
            WordShiftEntry {
                word: w.to_string(),
                contribution: contribution(pf, ps, pi1),
                side: if pf >= ps { Side::First } else { Side::Second },
                p_first: pf,
                p_second: ps,
            }
        })
        .collect();
    entries.sort_by(|a, b| {
        b.contribution
            .total_cmp(&a.contribution)
            .then_with(|| a.word.cmp(&b.word))
    });
    Ok(entries)
}

pub fn word_shift(p: &WordDistribution, q: &WordDistribution, pi1: f64, top_n: usize) -> Result<Vec<WordShiftEntry>> {
    let mut all = word_shift_full(p, q, pi1)?;
    all.truncate(top_n);
    Ok(all)
}
