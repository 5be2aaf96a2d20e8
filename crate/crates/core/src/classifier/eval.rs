use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::model::{featurize_examples, train_docs, BaselineConfig, Doc};
use super::{ClassifierError, Label, LabeledExample, Result};
use crate::stats::{classification_metrics, EvalMetrics};
use crate::util::{mean_std, substream};

/// Assigns each example to one of `k` folds, stratified by label.
///
/// Each class is shuffled independently, then the classes are dealt
/// round-robin in sequence, so every fold holds ⌊n_c/k⌋ or ⌈n_c/k⌉ members
/// of each class.
pub fn stratified_folds<R: Rng>(labels: &[bool], k: usize, rng: &mut R) -> Vec<usize> {
    let mut positives: Vec<usize> = (0..labels.len()).filter(|&i| labels[i]).collect();
    let mut negatives: Vec<usize> = (0..labels.len()).filter(|&i| !labels[i]).collect();
    positives.shuffle(rng);
    negatives.shuffle(rng);
    let mut fold_of = vec![0; labels.len()];
    for (pos, &i) in positives.iter().chain(&negatives).enumerate() {
        fold_of[i] = pos % k;
    }
    fold_of
}

fn check_k(docs: &[Doc], k: usize) -> Result<()> {
    if k < 2 {
        return Err(ClassifierError::InvalidK(k));
    }
    let positives = docs.iter().filter(|d| d.label).count();
    for (class, count) in [(Label::Adhominem, positives), (Label::None, docs.len() - positives)] {
        if count < k {
            return Err(ClassifierError::TooFewPerClass { class, count, k });
        }
    }
    Ok(())
}

/// Runs k-fold cross validation, keeping a training subset per fold chosen
/// by `select`, and scores the pooled held-out predictions.
fn cross_validate<F>(docs: &[Doc], k: usize, seed: u64, config: &BaselineConfig, select: F) -> Result<EvalMetrics>
where
    F: Fn(usize, &[usize]) -> Result<Vec<usize>> + Sync,
{
    let labels: Vec<bool> = docs.iter().map(|d| d.label).collect();
    let fold_of = stratified_folds(&labels, k, &mut substream(seed, "folds"));

    let per_fold: Vec<Result<Vec<(usize, bool)>>> = (0..k)
        .into_par_iter()
        .map(|fold| {
            let train: Vec<usize> = (0..docs.len()).filter(|&i| fold_of[i] != fold).collect();
            let kept = select(fold, &train)?;
            let train_refs: Vec<&Doc> = kept.iter().map(|&i| &docs[i]).collect();
            let model = train_docs(&train_refs, config, seed)?;
            Ok((0..docs.len())
                .filter(|&i| fold_of[i] == fold)
                .map(|i| {
                    let logit = model.bias
                        + docs[i]
                            .features
                            .iter()
                            .map(|&(b, x)| model.weights.get(&b).copied().unwrap_or(0.0) * x)
                            .sum::<f64>();
                    (i, super::sigmoid(logit) >= 0.5)
                })
                .collect())
        })
        .collect();

    let mut pred = vec![false; docs.len()];
    for fold in per_fold {
        for (i, p) in fold? {
            pred[i] = p;
        }
    }
    let mut metrics = classification_metrics(&pred, &labels)?;
    metrics.folds = k;
    Ok(metrics)
}

/// Stratified k-fold cross validation with pooled scoring.
pub fn kfold_evaluate(
    examples: &[LabeledExample],
    k: usize,
    config: &BaselineConfig,
    seed: u64,
) -> Result<EvalMetrics> {
    config.validate()?;
    let docs = featurize_examples(examples, config);
    check_k(&docs, k)?;
    cross_validate(&docs, k, seed, config, |_, train| Ok(train.to_vec()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub fraction: f64,
    /// Mean and population std of macro-F1 over the seeds; `None` when the
    /// cell failed.
    pub mean_macro_f1: Option<f64>,
    pub std_macro_f1: Option<f64>,
    pub per_seed: Vec<f64>,
    pub error: Option<String>,
}

/// Indices of a stratified ⌈fraction·|train|⌉ subset of `train`, in their
/// original order. Class quotas use largest remainders.
fn labeled_subset<R: Rng>(docs: &[Doc], train: &[usize], fraction: f64, rng: &mut R) -> Result<Vec<usize>> {
    let total = train.len();
    let keep = ((fraction * total as f64) - 1e-9).ceil().max(0.0) as usize;
    let keep = keep.min(total);
    let mut pos: Vec<usize> = train.iter().copied().filter(|&i| docs[i].label).collect();
    let mut neg: Vec<usize> = train.iter().copied().filter(|&i| !docs[i].label).collect();

    let exact_pos = keep as f64 * pos.len() as f64 / total as f64;
    let exact_neg = keep as f64 * neg.len() as f64 / total as f64;
    let (mut q_pos, mut q_neg) = (exact_pos.floor() as usize, exact_neg.floor() as usize);
    if q_pos + q_neg < keep {
        if exact_pos - q_pos as f64 >= exact_neg - q_neg as f64 {
            q_pos += 1;
        } else {
            q_neg += 1;
        }
    }
    if q_pos == 0 {
        return Err(ClassifierError::ClassVanished {
            fraction,
            class: Label::Adhominem,
        });
    }
    if q_neg == 0 {
        return Err(ClassifierError::ClassVanished {
            fraction,
            class: Label::None,
        });
    }
    pos.shuffle(rng);
    neg.shuffle(rng);
    let mut kept: Vec<usize> = pos[..q_pos].iter().chain(&neg[..q_neg]).copied().collect();
    kept.sort_unstable();
    Ok(kept)
}

/// Retrains on stratified labeled subsets of every training fold and
/// evaluates on the full held-out folds, averaging macro-F1 over `seeds`.
pub fn label_fraction_sweep(
    examples: &[LabeledExample],
    fractions: &[f64],
    k: usize,
    seeds: &[u64],
    config: &BaselineConfig,
) -> Result<Vec<SweepRow>> {
    config.validate()?;
    for &f in fractions {
        if !(f > 0.0 && f <= 1.0) {
            return Err(ClassifierError::InvalidFraction(f));
        }
    }
    let docs = featurize_examples(examples, config);
    check_k(&docs, k)?;

    let mut rows = Vec::with_capacity(fractions.len());
    for &fraction in fractions {
        let mut per_seed = Vec::with_capacity(seeds.len());
        let mut error = None;
        for &seed in seeds {
            let outcome = cross_validate(&docs, k, seed, config, |fold, train| {
                let mut rng = substream(seed, &format!("sweep-mask/{fraction}/{fold}"));
                labeled_subset(&docs, train, fraction, &mut rng)
            });
            match outcome {
                Ok(m) => per_seed.push(m.macro_f1),
                Err(e) => {
                    error = Some(e.to_string());
                    break;
                }
            }
        }
        let (mean, std) = if error.is_none() && !per_seed.is_empty() {
            let (m, s) = mean_std(&per_seed);
            (Some(m), Some(s))
        } else {
            (None, None)
        };
        rows.push(SweepRow {
            fraction,
            mean_macro_f1: mean,
            std_macro_f1: std,
            per_seed,
            error,
        });
    }
    Ok(rows)
}
