//! Statistical toolkit: Mann-Whitney U, Fleiss' kappa, binary
//! classification metrics and fraction uncertainty bands.

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;
use thiserror::Error;

use crate::util::mean_std;

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("sample {0} is empty")]
    EmptySample(&'static str),
    #[error("exact Mann-Whitney p-value requires tie-free samples")]
    TiesInExactMode,
    #[error("exact Mann-Whitney null distribution too large for n1={n1}, n2={n2}")]
    ExactTooLarge { n1: usize, n2: usize },
    #[error("non-finite value in sample")]
    NonFinite,
    #[error("item {item} has {got} ratings, expected {expected}")]
    UnequalRaters { item: usize, got: u64, expected: u64 },
    #[error("need at least 2 items and 2 raters per item")]
    TooFewRatings,
    #[error("degenerate marginals: chance agreement is 1")]
    DegenerateMarginals,
    #[error("label sequences differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("no labels to score")]
    EmptyLabels,
    #[error("count {ah} exceeds total {total}")]
    CountExceedsTotal { ah: u64, total: u64 },
    #[error("total must be at least 1")]
    ZeroTotal,
}

pub type Result<T, E = StatsError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MwuMode {
    /// Exact when `n1 * n2 <= 400` and no cross-group ties, normal otherwise.
    #[default]
    Auto,
    Exact,
    NormalApprox,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MwuMethod {
    Exact,
    NormalApprox,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MwuResult {
    pub u: f64,
    pub n1: usize,
    pub n2: usize,
    pub p_two_sided: f64,
    pub method: MwuMethod,
}

/// Largest `n1 * n2` for which `Auto` uses the exact null distribution.
pub const EXACT_MWU_LIMIT: usize = 400;

/// Mann-Whitney U test of `a` against `b`.
///
/// `U` counts pairs with `a_i > b_j`, ties counting one half. The two-sided
/// p-value doubles the smaller tail and is clipped to `(0, 1]`.
pub fn mann_whitney_u(a: &[f64], b: &[f64], mode: MwuMode) -> Result<MwuResult> {
    if a.is_empty() {
        return Err(StatsError::EmptySample("a"));
    }
    if b.is_empty() {
        return Err(StatsError::EmptySample("b"));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    let (n1, n2) = (a.len(), b.len());
    let ranked = RankedSample::new(a, b);
    let u = ranked.rank_sum_a - (n1 * (n1 + 1)) as f64 / 2.0;

    let use_exact = match mode {
        MwuMode::Exact => {
            if ranked.cross_ties {
                return Err(StatsError::TiesInExactMode);
            }
            if !exact_fits(n1, n2) {
                return Err(StatsError::ExactTooLarge { n1, n2 });
            }
            true
        }
        MwuMode::NormalApprox => false,
        MwuMode::Auto => !ranked.cross_ties && n1 * n2 <= EXACT_MWU_LIMIT,
    };

    let (p, method) = if use_exact {
        // Without cross ties U is an integer.
        let dist = exact_u_distribution(n1, n2);
        let total: f64 = dist.iter().map(|&c| c as f64).sum();
        let k = u.round() as usize;
        let lower: u64 = dist[..=k].iter().sum();
        let upper: u64 = dist[k..].iter().sum();
        let tail = lower.min(upper) as f64;
        (2.0 * tail / total, MwuMethod::Exact)
    } else {
        let n = (n1 + n2) as f64;
        let (n1f, n2f) = (n1 as f64, n2 as f64);
        let mean = n1f * n2f / 2.0;
        let tie_term = ranked.tie_term / (n * (n - 1.0));
        let var = n1f * n2f / 12.0 * ((n + 1.0) - tie_term);
        let p = if var <= 0.0 {
            1.0
        } else {
            let z = ((u - mean).abs() - 0.5).max(0.0) / var.sqrt();
            erfc(z / std::f64::consts::SQRT_2)
        };
        (p, MwuMethod::NormalApprox)
    };

    Ok(MwuResult {
        u,
        n1,
        n2,
        p_two_sided: p.clamp(f64::MIN_POSITIVE, 1.0),
        method,
    })
}

struct RankedSample {
    rank_sum_a: f64,
    /// Σ (t³ − t) over tie groups of the pooled sample.
    tie_term: f64,
    cross_ties: bool,
}

impl RankedSample {
    fn new(a: &[f64], b: &[f64]) -> Self {
        let mut pooled: Vec<(f64, bool)> = a
            .iter()
            .map(|&v| (v, true))
            .chain(b.iter().map(|&v| (v, false)))
            .collect();
        pooled.sort_by(|x, y| x.0.total_cmp(&y.0));
        let mut rank_sum_a = 0.0;
        let mut tie_term = 0.0;
        let mut cross_ties = false;
        let mut i = 0;
        while i < pooled.len() {
            let mut j = i + 1;
            while j < pooled.len() && pooled[j].0 == pooled[i].0 {
                j += 1;
            }
            // Ranks i+1..=j share their mean.
            let mid = (i + 1 + j) as f64 / 2.0;
            let group = &pooled[i..j];
            let in_a = group.iter().filter(|x| x.1).count();
            rank_sum_a += mid * in_a as f64;
            let t = (j - i) as f64;
            tie_term += t * t * t - t;
            if in_a > 0 && in_a < group.len() {
                cross_ties = true;
            }
            i = j;
        }
        RankedSample {
            rank_sum_a,
            tie_term,
            cross_ties,
        }
    }
}

/// Whether C(n1+n2, n1) fits the u64 counters of [`exact_u_distribution`].
fn exact_fits(n1: usize, n2: usize) -> bool {
    let (small, n) = (n1.min(n2), n1 + n2);
    let mut c = 1.0f64;
    for i in 0..small {
        c = c * (n - i) as f64 / (i + 1) as f64;
    }
    c < 1e19
}

/// Counts of each U value (0..=n1*n2) over all C(n1+n2, n1) assignments.
///
/// Uses the recurrence `f(m, n, u) = f(m-1, n, u-n) + f(m, n-1, u)`.
pub fn exact_u_distribution(n1: usize, n2: usize) -> Vec<u64> {
    // prev[n][u] holds f(m-1, n, u); rebuilt for each m.
    let max_u = n1 * n2;
    let mut prev: Vec<Vec<u64>> = (0..=n2)
        .map(|_| {
            let mut v = vec![0u64; max_u + 1];
            v[0] = 1;
            v
        })
        .collect();
    for _m in 1..=n1 {
        let mut cur: Vec<Vec<u64>> = Vec::with_capacity(n2 + 1);
        let mut base = vec![0u64; max_u + 1];
        base[0] = 1; // f(m, 0, 0) = 1
        cur.push(base);
        for n in 1..=n2 {
            let mut row = vec![0u64; max_u + 1];
            for u in 0..=max_u {
                let mut v = cur[n - 1][u];
                if u >= n {
                    v += prev[n][u - n];
                }
                row[u] = v;
            }
            cur.push(row);
        }
        prev = cur;
    }
    std::mem::take(&mut prev[n2])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementResult {
    pub kappa: f64,
    pub raters_per_item: u64,
    pub items: usize,
    pub categories: usize,
    pub observed_agreement: f64,
    pub chance_agreement: f64,
}

/// Fleiss' kappa over an items × categories matrix of rating counts.
pub fn fleiss_kappa(ratings: &[Vec<u64>]) -> Result<AgreementResult> {
    if ratings.len() < 2 {
        return Err(StatsError::TooFewRatings);
    }
    let raters: u64 = ratings[0].iter().sum();
    if raters < 2 {
        return Err(StatsError::TooFewRatings);
    }
    let categories = ratings.iter().map(Vec::len).max().unwrap_or(0);
    for (item, row) in ratings.iter().enumerate() {
        let got: u64 = row.iter().sum();
        if got != raters {
            return Err(StatsError::UnequalRaters {
                item,
                got,
                expected: raters,
            });
        }
    }
    let n = raters as f64;
    let items = ratings.len() as f64;

    let mut category_totals = vec![0u64; categories];
    let mut agreement_sum = 0.0;
    for row in ratings {
        let pairs: u64 = row.iter().map(|&c| c * c.saturating_sub(1)).sum();
        agreement_sum += pairs as f64 / (n * (n - 1.0));
        for (j, &c) in row.iter().enumerate() {
            category_totals[j] += c;
        }
    }
    let p_bar = agreement_sum / items;
    let p_e: f64 = category_totals
        .iter()
        .map(|&t| {
            let p = t as f64 / (items * n);
            p * p
        })
        .sum();
    if (1.0 - p_e).abs() < 1e-15 {
        return Err(StatsError::DegenerateMarginals);
    }
    Ok(AgreementResult {
        kappa: (p_bar - p_e) / (1.0 - p_e),
        raters_per_item: raters,
        items: ratings.len(),
        categories,
        observed_agreement: p_bar,
        chance_agreement: p_e,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

/// Binary classification metrics; the positive class is ad hominem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalMetrics {
    pub accuracy: f64,
    pub adhominem: ClassMetrics,
    pub none: ClassMetrics,
    pub macro_f1: f64,
    pub folds: usize,
    /// Set when some precision, recall or F1 hit a zero denominator and was
    /// reported as 0.
    pub zero_division: bool,
}

/// Scores predictions (`true` = ad hominem) against the truth.
pub fn classification_metrics(pred: &[bool], truth: &[bool]) -> Result<EvalMetrics> {
    if pred.len() != truth.len() {
        return Err(StatsError::LengthMismatch(pred.len(), truth.len()));
    }
    if pred.is_empty() {
        return Err(StatsError::EmptyLabels);
    }
    let (mut tp, mut fp, mut fn_, mut tn) = (0usize, 0usize, 0usize, 0usize);
    for (&p, &t) in pred.iter().zip(truth) {
        match (p, t) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => tn += 1,
        }
    }
    let mut zero_division = false;
    let mut class = |tp: usize, fp: usize, fn_: usize| {
        let mut ratio = |num: usize, den: usize| {
            if den == 0 {
                zero_division = true;
                0.0
            } else {
                num as f64 / den as f64
            }
        };
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = if precision + recall == 0.0 {
            zero_division = true;
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        ClassMetrics {
            precision,
            recall,
            f1,
            support: tp + fn_,
        }
    };
    let adhominem = class(tp, fp, fn_);
    let none = class(tn, fn_, fp);
    Ok(EvalMetrics {
        accuracy: (tp + tn) as f64 / pred.len() as f64,
        macro_f1: (adhominem.f1 + none.f1) / 2.0,
        adhominem,
        none,
        folds: 1,
        zero_division,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FractionBand {
    pub point: f64,
    /// Wilson score 95% interval on the pooled count.
    pub wilson95: (f64, f64),
    pub monthly_mean: Option<f64>,
    pub monthly_std: Option<f64>,
    /// Mean ± one population standard deviation of the monthly fractions.
    pub monthly_std_band: Option<(f64, f64)>,
}

const Z95: f64 = 1.959_963_984_540_054;

pub fn wilson_interval(successes: u64, total: u64, z: f64) -> (f64, f64) {
    let n = total as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    let lo = if successes == 0 { 0.0 } else { (centre - half).max(0.0) };
    let hi = if successes == total {
        1.0
    } else {
        (centre + half).min(1.0)
    };
    (lo, hi)
}

/// Point estimate of an ad hominem fraction with both candidate error bands.
pub fn fraction_band(ah: u64, total: u64, monthly_fractions: &[f64]) -> Result<FractionBand> {
    if total == 0 {
        return Err(StatsError::ZeroTotal);
    }
    if ah > total {
        return Err(StatsError::CountExceedsTotal { ah, total });
    }
    let (mean, std) = if monthly_fractions.is_empty() {
        (None, None)
    } else {
        let (m, s) = mean_std(monthly_fractions);
        (Some(m), Some(s))
    };
    Ok(FractionBand {
        point: ah as f64 / total as f64,
        wilson95: wilson_interval(ah, total, Z95),
        monthly_mean: mean,
        monthly_std: std,
        monthly_std_band: mean.zip(std).map(|(m, s)| (m - s, m + s)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mwu_separated_pairs() {
        let r = mann_whitney_u(&[1.0, 2.0], &[3.0, 4.0], MwuMode::Auto).unwrap();
        assert_eq!(r.u, 0.0);
        assert_eq!(r.method, MwuMethod::Exact);
        assert!((r.p_two_sided - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn mwu_identical_samples() {
        let a = [1.0, 2.0, 2.0, 5.0];
        let r = mann_whitney_u(&a, &a, MwuMode::Auto).unwrap();
        assert_eq!(r.u, 8.0);
        assert_eq!(r.p_two_sided, 1.0);
        assert_eq!(r.method, MwuMethod::NormalApprox);
    }

    #[test]
    fn mwu_pairwise_definition() {
        let a = [1.0, 3.0, 3.0, 7.0];
        let b = [3.0, 0.5, 8.0];
        let brute: f64 = a
            .iter()
            .flat_map(|x| b.iter().map(move |y| (x, y)))
            .map(|(x, y)| {
                if x > y {
                    1.0
                } else if x == y {
                    0.5
                } else {
                    0.0
                }
            })
            .sum();
        let r = mann_whitney_u(&a, &b, MwuMode::Auto).unwrap();
        assert_eq!(r.u, brute);
    }

    #[test]
    fn mwu_errors() {
        assert_eq!(
            mann_whitney_u(&[], &[1.0], MwuMode::Auto).unwrap_err(),
            StatsError::EmptySample("a")
        );
        assert_eq!(
            mann_whitney_u(&[1.0], &[1.0], MwuMode::Exact).unwrap_err(),
            StatsError::TiesInExactMode
        );
    }

    #[test]
    fn exact_distribution_sums_to_binomial() {
        let d = exact_u_distribution(4, 3);
        assert_eq!(d.iter().sum::<u64>(), 35);
        // Symmetric around n1*n2/2.
        let rev: Vec<u64> = d.iter().rev().copied().collect();
        assert_eq!(d, rev);
        assert_eq!(exact_u_distribution(20, 20).iter().sum::<u64>(), 137_846_528_820);
    }

    #[test]
    fn fleiss_hand_computed() {
        let r = fleiss_kappa(&[vec![2, 0], vec![0, 2]]).unwrap();
        assert_eq!(r.observed_agreement, 1.0);
        assert_eq!(r.chance_agreement, 0.5);
        assert_eq!(r.kappa, 1.0);
    }

    #[test]
    fn fleiss_errors() {
        assert_eq!(
            fleiss_kappa(&[vec![2, 0], vec![1, 2]]).unwrap_err(),
            StatsError::UnequalRaters {
                item: 1,
                got: 3,
                expected: 2
            }
        );
        assert_eq!(
            fleiss_kappa(&[vec![3, 0], vec![3, 0]]).unwrap_err(),
            StatsError::DegenerateMarginals
        );
    }

    #[test]
    fn metrics_one_class_predictions() {
        let truth = [true, true, false, false];
        let m = classification_metrics(&[true; 4], &truth).unwrap();
        assert_eq!(m.accuracy, 0.5);
        assert!((m.macro_f1 - 1.0 / 3.0).abs() < 1e-15);
        assert!(m.zero_division);
        let perfect = classification_metrics(&truth, &truth).unwrap();
        assert_eq!((perfect.accuracy, perfect.macro_f1), (1.0, 1.0));
        assert!(!perfect.zero_division);
        assert!(classification_metrics(&[true], &truth).is_err());
    }

    #[test]
    fn fraction_band_edges() {
        let b = fraction_band(0, 50, &[0.2, 0.2, 0.2]).unwrap();
        assert_eq!(b.point, 0.0);
        assert_eq!(b.wilson95.0, 0.0);
        assert_eq!(b.monthly_std, Some(0.0));
        assert_eq!(b.monthly_std_band, Some((0.2, 0.2)));
        assert!(fraction_band(3, 2, &[]).is_err());
        assert!(fraction_band(0, 0, &[]).is_err());
    }

    #[test]
    fn wilson_contains_point() {
        for total in 1..40u64 {
            for ah in 0..=total {
                let (lo, hi) = wilson_interval(ah, total, Z95);
                let p = ah as f64 / total as f64;
                assert!(0.0 <= lo && lo <= p && p <= hi && hi <= 1.0, "{ah}/{total}");
            }
        }
    }
}
