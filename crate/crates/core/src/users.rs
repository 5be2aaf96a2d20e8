//! Per-topic ad hominem summaries and the comparison of profile
//! characteristics between users who did and did not post ad hominem.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;
use thiserror::Error;

use crate::corpus::{AuthorId, AuthorProfile, CorpusError};
use crate::scorer::AnnotatedCorpus;
use crate::stats::{fraction_band, mann_whitney_u, FractionBand, MwuMode, MwuResult, StatsError};
use crate::temporal::{monthly_series, TemporalError};
use crate::util::mean_std;

#[derive(Debug, Error)]
pub enum UsersError {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Temporal(#[from] TemporalError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error("corpus has no profiles")]
    NoProfiles,
}

pub type Result<T, E = UsersError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AhSummary {
    pub topic: String,
    pub scored_comments: u64,
    pub ah_comments: u64,
    /// Band over the pooled count and over the active months' fractions.
    pub band: FractionBand,
    pub users: u64,
    /// Users with at least half of their scored comments flagged.
    pub ah_users: u64,
    pub ah_user_fraction: f64,
}

pub fn ah_summary(annotated: &AnnotatedCorpus<'_>, topic: &str) -> Result<AhSummary> {
    let corpus = annotated.corpus;
    let mut per_user: BTreeMap<&AuthorId, (u64, u64)> = BTreeMap::new();
    for &i in corpus.topic_comments(topic)? {
        if let Some(flag) = annotated.is_adhominem(i) {
            let e = per_user.entry(&corpus.comments()[i].author).or_default();
            e.0 += 1;
            e.1 += u64::from(flag);
        }
    }
    let scored: u64 = per_user.values().map(|u| u.0).sum();
    let ah: u64 = per_user.values().map(|u| u.1).sum();
    let series = monthly_series(annotated, topic)?;
    let monthly: Vec<f64> = series
        .months
        .iter()
        .filter(|m| m.active)
        .map(|m| m.ah_fraction)
        .collect();
    let users = per_user.len() as u64;
    let ah_users = per_user.values().filter(|(n, a)| 2 * a >= *n).count() as u64;
    Ok(AhSummary {
        topic: topic.to_string(),
        scored_comments: scored,
        ah_comments: ah,
        band: fraction_band(ah, scored, &monthly)?,
        users,
        ah_users,
        ah_user_fraction: if users == 0 {
            0.0
        } else {
            ah_users as f64 / users as f64
        },
    })
}

pub const CHARACTERISTICS: [&str; 6] = ["posts", "reward_points", "efficiency", "allies", "enemies", "hostiles"];

fn characteristic(p: &AuthorProfile, name: &str) -> f64 {
    match name {
        "posts" => p.posts as f64,
        "reward_points" => p.reward_points as f64,
        "efficiency" => p.efficiency,
        "allies" => p.allies as f64,
        "enemies" => p.enemies as f64,
        "hostiles" => p.hostiles as f64,
        _ => unreachable!("unknown characteristic {name}"),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupSummary {
    pub n: usize,
    pub mean: Option<f64>,
    pub std: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CharacteristicComparison {
    pub characteristic: &'static str,
    /// Users with at least one ad hominem comment.
    pub with_ah: GroupSummary,
    /// Users who commented but never ad hominem.
    pub without_ah: GroupSummary,
    pub mwu: Option<MwuResult>,
    pub error: Option<String>,
}

fn summarize(v: &[f64]) -> GroupSummary {
    if v.is_empty() {
        return GroupSummary {
            n: 0,
            mean: None,
            std: None,
        };
    }
    let (m, s) = mean_std(v);
    GroupSummary {
        n: v.len(),
        mean: Some(m),
        std: Some(s),
    }
}

/// Splits commenting users with a profile by whether any of their scored
/// comments (over all topics) is ad hominem, and compares every profile
/// characteristic with a Mann-Whitney U test.
pub fn compare_user_characteristics(annotated: &AnnotatedCorpus<'_>) -> Result<Vec<CharacteristicComparison>> {
    let corpus = annotated.corpus;
    let profiles = corpus.profiles().ok_or(UsersError::NoProfiles)?;
    let mut commented = BTreeSet::new();
    let mut offenders = BTreeSet::new();
    for (i, c) in corpus.comments().iter().enumerate() {
        commented.insert(&c.author);
        if annotated.is_adhominem(i) == Some(true) {
            offenders.insert(&c.author);
        }
    }
    Ok(CHARACTERISTICS
        .iter()
        .map(|&name| {
            let (mut with, mut without) = (Vec::new(), Vec::new());
            for p in profiles.iter().filter(|p| commented.contains(&p.author)) {
                let v = characteristic(p, name);
                if offenders.contains(&p.author) {
                    with.push(v);
                } else {
                    without.push(v);
                }
            }
            let (mwu, error) = match mann_whitney_u(&with, &without, MwuMode::Auto) {
                Ok(r) => (Some(r), None),
                Err(e) => (None, Some(e.to_string())),
            };
            CharacteristicComparison {
                characteristic: name,
                with_ah: summarize(&with),
                without_ah: summarize(&without),
                mwu,
                error,
            }
        })
        .collect())
}
