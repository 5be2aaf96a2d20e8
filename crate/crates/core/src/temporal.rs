//! Monthly activity series, trailing smoothing, standardized multi-channel
//! signals, exact kernel change-point detection and corpus partitioning.

use std::collections::BTreeMap;
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{AuthorId, Corpus, CorpusError, MonthIndex};
use crate::scorer::AnnotatedCorpus;
use crate::util::mean_std;

#[derive(Debug, Error)]
pub enum TemporalError {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("corpus has no comments")]
    EmptyCorpus,
    #[error("window must be at least 1")]
    ZeroWindow,
    #[error("no series supplied")]
    NoSeries,
    #[error("no quantities selected")]
    NoQuantities,
    #[error("series month ranges do not overlap: {0}")]
    DisjointRanges(String),
    #[error("every channel is constant; nothing to segment")]
    AllChannelsConstant,
    #[error("matrix rows have inconsistent widths")]
    Ragged,
    #[error("K must be at least 1")]
    ZeroK,
    #[error("min_size must be at least 1")]
    ZeroMinSize,
    #[error("need at least (K+1)*min_size = {needed} months, have {have}")]
    TooShort { needed: usize, have: usize },
    #[error("gamma must be finite and positive, got {0}")]
    BadGamma(f64),
    #[error("signal contains non-finite values")]
    NonFinite,
    #[error("change points {0:?} are not strictly ascending inside (0, {1})")]
    BadChangePoints(Vec<usize>, usize),
}

pub type Result<T, E = TemporalError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonthStats {
    pub month: MonthIndex,
    pub total_comments: u64,
    pub ah_comments: u64,
    pub ah_fraction: f64,
    pub active_users: u64,
    pub ah_users: u64,
    pub ah_user_fraction: f64,
    pub active: bool,
}

/// Per-month counts for one topic over the corpus's full month range.
/// Comments without a score are left out of every count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonthlySeries {
    pub topic: String,
    pub months: Vec<MonthStats>,
}

impl MonthlySeries {
    pub fn first_month(&self) -> MonthIndex {
        self.months[0].month
    }

    pub fn last_month(&self) -> MonthIndex {
        self.months[self.months.len() - 1].month
    }

    pub fn values(&self, q: Quantity) -> Vec<f64> {
        self.months.iter().map(|m| q.of(m)).collect()
    }
}

fn ratio(part: u64, whole: u64) -> f64 {
    if whole == 0 {
        0.0
    } else {
        part as f64 / whole as f64
    }
}

pub fn monthly_series(annotated: &AnnotatedCorpus<'_>, topic: &str) -> Result<MonthlySeries> {
    let corpus = annotated.corpus;
    let indices = corpus.topic_comments(topic)?;
    let (first, last) = corpus.month_range().ok_or(TemporalError::EmptyCorpus)?;
    let len = first.months_until(last) as usize + 1;

    let mut per_user: Vec<BTreeMap<&AuthorId, (u64, u64)>> = vec![BTreeMap::new(); len];
    for &i in indices {
        let Some(flag) = annotated.is_adhominem(i) else {
            continue;
        };
        let c = &corpus.comments()[i];
        let slot = first.months_until(c.month()) as usize;
        let e = per_user[slot].entry(&c.author).or_default();
        e.0 += 1;
        e.1 += u64::from(flag);
    }
    let months = per_user
        .iter()
        .enumerate()
        .map(|(slot, users)| {
            let total: u64 = users.values().map(|u| u.0).sum();
            let ah: u64 = users.values().map(|u| u.1).sum();
            let active = users.len() as u64;
            let ah_users = users.values().filter(|(n, a)| 2 * a >= *n).count() as u64;
            MonthStats {
                month: first.offset(slot as i32),
                total_comments: total,
                ah_comments: ah,
                ah_fraction: ratio(ah, total),
                active_users: active,
                ah_users,
                ah_user_fraction: ratio(ah_users, active),
                active: total > 0,
            }
        })
        .collect();
    Ok(MonthlySeries {
        topic: topic.to_string(),
        months,
    })
}

/// Trailing mean over up to `window` values ending at each position.
pub fn moving_average(values: &[f64], window: usize) -> Result<Vec<f64>> {
    if window == 0 {
        return Err(TemporalError::ZeroWindow);
    }
    Ok((0..values.len())
        .map(|i| {
            let lo = (i + 1).saturating_sub(window);
            values[lo..=i].iter().sum::<f64>() / (i + 1 - lo) as f64
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quantity {
    TotalComments,
    AhComments,
    AhFraction,
    ActiveUsers,
    AhUsers,
    AhUserFraction,
}

impl Quantity {
    pub const ALL: [Quantity; 6] = [
        Quantity::TotalComments,
        Quantity::AhComments,
        Quantity::AhFraction,
        Quantity::ActiveUsers,
        Quantity::AhUsers,
        Quantity::AhUserFraction,
    ];

    pub fn of(self, m: &MonthStats) -> f64 {
        match self {
            Quantity::TotalComments => m.total_comments as f64,
            Quantity::AhComments => m.ah_comments as f64,
            Quantity::AhFraction => m.ah_fraction,
            Quantity::ActiveUsers => m.active_users as f64,
            Quantity::AhUsers => m.ah_users as f64,
            Quantity::AhUserFraction => m.ah_user_fraction,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Quantity::TotalComments => "total_comments",
            Quantity::AhComments => "ah_comments",
            Quantity::AhFraction => "ah_fraction",
            Quantity::ActiveUsers => "active_users",
            Quantity::AhUsers => "ah_users",
            Quantity::AhUserFraction => "ah_user_fraction",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Quantity::ALL.into_iter().find(|q| q.name() == s)
    }
}

impl fmt::Display for Quantity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Channel {
    pub topic: String,
    pub quantity: Quantity,
    pub mean: f64,
    pub std: f64,
}

/// T × D matrix, one row per month.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalMatrix {
    pub start: Option<MonthIndex>,
    pub rows: Vec<Vec<f64>>,
    pub channels: Vec<Channel>,
    /// Channels dropped for having zero variance.
    pub dropped: Vec<(String, Quantity)>,
}

impl SignalMatrix {
    /// Wraps raw rows without standardization or month labels.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != d) {
            return Err(TemporalError::Ragged);
        }
        Ok(SignalMatrix {
            start: None,
            rows,
            channels: Vec::new(),
            dropped: Vec::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn month(&self, t: usize) -> Option<MonthIndex> {
        self.start.map(|s| s.offset(t as i32))
    }
}

/// Stacks the selected quantities of each series as z-scored channels over
/// the intersection of their month ranges, optionally smoothing first.
pub fn build_signal_matrix(
    series: &[MonthlySeries],
    quantities: &[Quantity],
    smoothing: Option<usize>,
) -> Result<SignalMatrix> {
    if series.is_empty() {
        return Err(TemporalError::NoSeries);
    }
    if quantities.is_empty() {
        return Err(TemporalError::NoQuantities);
    }
    let start = series.iter().map(MonthlySeries::first_month).max().unwrap();
    let end = series.iter().map(MonthlySeries::last_month).min().unwrap();
    if start > end {
        let ranges: Vec<String> = series
            .iter()
            .map(|s| format!("{} {}..{}", s.topic, s.first_month(), s.last_month()))
            .collect();
        return Err(TemporalError::DisjointRanges(ranges.join(", ")));
    }
    let t = start.months_until(end) as usize + 1;
    let mut columns = Vec::new();
    let mut channels = Vec::new();
    let mut dropped = Vec::new();
    for s in series {
        let skip = s.first_month().months_until(start) as usize;
        for &q in quantities {
            let mut col: Vec<f64> = s.values(q)[skip..skip + t].to_vec();
            if let Some(w) = smoothing {
                col = moving_average(&col, w)?;
            }
            let (mean, std) = mean_std(&col);
            if std <= 1e-12 * mean.abs().max(1.0) {
                log::warn!("dropping constant channel {}/{}", s.topic, q);
                dropped.push((s.topic.clone(), q));
                continue;
            }
            columns.push(col.iter().map(|v| (v - mean) / std).collect::<Vec<_>>());
            channels.push(Channel {
                topic: s.topic.clone(),
                quantity: q,
                mean,
                std,
            });
        }
    }
    if columns.is_empty() {
        return Err(TemporalError::AllChannelsConstant);
    }
    let rows = (0..t).map(|i| columns.iter().map(|c| c[i]).collect()).collect();
    Ok(SignalMatrix {
        start: Some(start),
        rows,
        channels,
        dropped,
    })
}

/// Gram matrix of the RBF kernel with 2-D and diagonal prefix sums.
pub struct KernelCost {
    n: usize,
    prefix: Vec<f64>,
    diag: Vec<f64>,
    pub gamma: f64,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// 1 / median of the nonzero pairwise squared distances, or 1 when there
/// are none.
pub fn median_heuristic(rows: &[Vec<f64>]) -> f64 {
    let mut d: Vec<f64> = (0..rows.len())
        .flat_map(|i| (i + 1..rows.len()).map(move |j| (i, j)))
        .map(|(i, j)| sq_dist(&rows[i], &rows[j]))
        .filter(|&v| v > 0.0)
        .collect();
    if d.is_empty() {
        return 1.0;
    }
    d.sort_by(f64::total_cmp);
    let m = d.len();
    let median = if m % 2 == 1 {
        d[m / 2]
    } else {
        0.5 * (d[m / 2 - 1] + d[m / 2])
    };
    if median > 0.0 {
        1.0 / median
    } else {
        1.0
    }
}

impl KernelCost {
    pub fn new(rows: &[Vec<f64>], gamma: f64) -> Self {
        let n = rows.len();
        let gram: Vec<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|i| (0..n).map(|j| (-gamma * sq_dist(&rows[i], &rows[j])).exp()).collect())
            .collect();
        let w = n + 1;
        let mut prefix = vec![0.0; w * w];
        for i in 0..n {
            for j in 0..n {
                prefix[(i + 1) * w + j + 1] =
                    gram[i][j] + prefix[i * w + j + 1] + prefix[(i + 1) * w + j] - prefix[i * w + j];
            }
        }
        let mut diag = vec![0.0; w];
        for i in 0..n {
            diag[i + 1] = diag[i] + gram[i][i];
        }
        KernelCost { n, prefix, diag, gamma }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Kernel within-segment scatter of `[a, b)`, clamped at 0.
    pub fn segment_cost(&self, a: usize, b: usize) -> f64 {
        assert!(a < b && b <= self.n, "segment [{a}, {b}) out of range");
        if b - a == 1 {
            return 0.0;
        }
        let w = self.n + 1;
        let block = self.prefix[b * w + b] - self.prefix[a * w + b] - self.prefix[b * w + a] + self.prefix[a * w + a];
        let cost = (self.diag[b] - self.diag[a]) - block / (b - a) as f64;
        cost.max(0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segmentation {
    /// First index of each new segment, ascending.
    pub change_points: Vec<usize>,
    pub k: usize,
    pub total_cost: f64,
    pub segment_costs: Vec<f64>,
    pub gamma: f64,
}

impl Segmentation {
    /// Segment boundaries `[0, cp1, …, cpK, T]`.
    pub fn bounds(&self, t: usize) -> Vec<usize> {
        let mut b = vec![0];
        b.extend(&self.change_points);
        b.push(t);
        b
    }
}

pub fn check_segmentation_args(t: usize, k: usize, min_size: usize) -> Result<()> {
    if k == 0 {
        return Err(TemporalError::ZeroK);
    }
    if min_size == 0 {
        return Err(TemporalError::ZeroMinSize);
    }
    let needed = (k + 1) * min_size;
    if t < needed {
        return Err(TemporalError::TooShort { needed, have: t });
    }
    Ok(())
}

/// Exact minimum-cost segmentation into `k + 1` segments of at least
/// `min_size` rows. Among equal-cost optima the lexicographically earliest
/// change points win.
pub fn detect_changepoints(
    signal: &SignalMatrix,
    k: usize,
    min_size: usize,
    gamma: Option<f64>,
) -> Result<Segmentation> {
    let t = signal.len();
    check_segmentation_args(t, k, min_size)?;
    if signal.rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(TemporalError::NonFinite);
    }
    let gamma = match gamma {
        Some(g) if g.is_finite() && g > 0.0 => g,
        Some(g) => return Err(TemporalError::BadGamma(g)),
        None => median_heuristic(&signal.rows),
    };
    let cost = KernelCost::new(&signal.rows, gamma);

    // best[j][e]: minimal cost of covering [0, e) with j + 1 segments;
    // back[j][e]: start of the last of those segments.
    let mut best = vec![vec![f64::INFINITY; t + 1]; k + 1];
    let mut back = vec![vec![usize::MAX; t + 1]; k + 1];
    for e in min_size..=t {
        best[0][e] = cost.segment_cost(0, e);
        back[0][e] = 0;
    }
    for j in 1..=k {
        let (done, rest) = best.split_at_mut(j);
        let prev = &done[j - 1];
        let (back_done, back_rest) = back.split_at_mut(j);
        let cells: Vec<(usize, f64, usize)> = ((j + 1) * min_size..=t)
            .into_par_iter()
            .map(|e| {
                let mut chosen = (f64::INFINITY, usize::MAX);
                for (s, &head) in prev.iter().enumerate().take(e - min_size + 1).skip(j * min_size) {
                    if !head.is_finite() {
                        continue;
                    }
                    let c = head + cost.segment_cost(s, e);
                    let better = c < chosen.0 || (c == chosen.0 && earlier(&back_done[..j], s, chosen.1));
                    if better {
                        chosen = (c, s);
                    }
                }
                (e, chosen.0, chosen.1)
            })
            .collect();
        for (e, c, s) in cells {
            rest[0][e] = c;
            back_rest[0][e] = s;
        }
    }

    let mut change_points = Vec::with_capacity(k);
    let mut e = t;
    for j in (1..=k).rev() {
        let s = back[j][e];
        change_points.push(s);
        e = s;
    }
    change_points.reverse();
    let mut bounds = vec![0];
    bounds.extend(&change_points);
    bounds.push(t);
    let segment_costs: Vec<f64> = bounds.windows(2).map(|w| cost.segment_cost(w[0], w[1])).collect();
    Ok(Segmentation {
        change_points,
        k,
        total_cost: best[k][t],
        segment_costs,
        gamma,
    })
}

/// Whether the optimal path ending with a boundary at `a` is
/// lexicographically earlier than the one ending at `b`. `back` holds the
/// back pointers of the layers below.
fn earlier(back: &[Vec<usize>], a: usize, b: usize) -> bool {
    if b == usize::MAX {
        return true;
    }
    let path = |mut e: usize| {
        let mut p = vec![e];
        for layer in back.iter().skip(1).rev() {
            e = layer[e];
            p.push(e);
        }
        p.reverse();
        p
    };
    path(a) < path(b)
}

/// Splits `corpus` at change points given as month offsets from the start
/// of the corpus's month range. Segment `i` holds the comments whose month
/// offset lies in `[cp_i, cp_{i+1})`.
pub fn partition_corpus(corpus: &Corpus, change_points: &[usize]) -> Result<Vec<Corpus>> {
    let (first, last) = corpus.month_range().ok_or(TemporalError::EmptyCorpus)?;
    let t = first.months_until(last) as usize + 1;
    let valid = change_points.windows(2).all(|w| w[0] < w[1]) && change_points.iter().all(|&c| c > 0 && c < t);
    if !valid {
        return Err(TemporalError::BadChangePoints(change_points.to_vec(), t));
    }
    let mut bounds = vec![0];
    bounds.extend(change_points);
    bounds.push(t);
    Ok(bounds
        .windows(2)
        .map(|w| {
            let (lo, hi) = (w[0] as i32, w[1] as i32);
            corpus.filter_comments(|c| {
                let off = first.months_until(c.month());
                off >= lo && off < hi
            })
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::IngestOptions;

    fn col(values: &[f64]) -> SignalMatrix {
        SignalMatrix::from_rows(values.iter().map(|&v| vec![v]).collect()).unwrap()
    }

    fn corpus(rows: &[(&str, &str, &str)]) -> Corpus {
        let posts =
            r#"{"post_id":"p","author":"op","timestamp":"2000-01-01T00:00:00Z","topic":"politics","title":"t"}"#;
        let comments: String = rows
            .iter()
            .map(|(id, author, ts)| {
                serde_json::json!({"id": id, "post_id": "p", "parent_id": null, "author": author,
                    "timestamp": ts, "topic": "politics", "text": "x"})
                .to_string()
                    + "\n"
            })
            .collect();
        Corpus::from_readers(
            ("p", posts.as_bytes()),
            ("c", comments.as_bytes()),
            None,
            &IngestOptions::default(),
        )
        .unwrap()
    }

    #[test]
    fn single_month_fraction() {
        let c = corpus(&[
            ("1", "a", "2010-03-01T00:00:00Z"),
            ("2", "b", "2010-03-02T00:00:00Z"),
            ("3", "c", "2010-03-03T00:00:00Z"),
            ("4", "d", "2010-03-04T00:00:00Z"),
        ]);
        let ann = AnnotatedCorpus::from_labels(&c, &[true, false, false, false]);
        let s = monthly_series(&ann, "politics").unwrap();
        assert_eq!(s.months.len(), 1);
        assert_eq!(s.months[0].ah_fraction, 0.25);
        assert_eq!(s.months[0].ah_users, 1);
    }

    #[test]
    fn half_share_counts_as_ah_user_and_gaps_are_zero_filled() {
        let c = corpus(&[
            ("1", "a", "2010-01-05T00:00:00Z"),
            ("2", "a", "2010-01-06T00:00:00Z"),
            ("3", "b", "2010-04-01T00:00:00Z"),
        ]);
        let ann = AnnotatedCorpus::from_labels(&c, &[true, false, false]);
        let s = monthly_series(&ann, "politics").unwrap();
        assert_eq!(s.months.len(), 4);
        assert_eq!(s.months[0].ah_users, 1);
        assert_eq!(s.months[0].ah_user_fraction, 1.0);
        assert!(!s.months[1].active && s.months[1].total_comments == 0 && s.months[1].ah_fraction == 0.0);
        assert_eq!(s.months[3].month, MonthIndex::new(2010, 4));
        assert!(monthly_series(&ann, "law").is_err());
    }

    #[test]
    fn moving_average_edges() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(moving_average(&v, 1).unwrap(), v);
        assert_eq!(moving_average(&v, 2).unwrap(), [1.0, 1.5, 2.5, 3.5]);
        assert_eq!(moving_average(&[5.0; 6], 12).unwrap(), [5.0; 6]);
        assert!(moving_average(&v, 0).is_err());
    }

    #[test]
    fn step_is_found() {
        let seg = detect_changepoints(&col(&[0., 0., 0., 0., 10., 10., 10., 10.]), 1, 2, None).unwrap();
        assert_eq!(seg.change_points, [4]);
        assert!(seg.total_cost.abs() < 1e-12);
    }

    #[test]
    fn constant_signal_takes_earliest_boundaries() {
        let seg = detect_changepoints(&col(&[1.0; 10]), 2, 2, None).unwrap();
        assert_eq!(seg.change_points, [2, 4]);
        assert_eq!(seg.total_cost, 0.0);
        assert_eq!(seg.gamma, 1.0);
    }

    #[test]
    fn argument_checks() {
        assert!(matches!(
            detect_changepoints(&col(&[0.0; 5]), 2, 2, None),
            Err(TemporalError::TooShort { needed: 6, have: 5 })
        ));
        assert!(matches!(
            detect_changepoints(&col(&[0.0; 5]), 1, 0, None),
            Err(TemporalError::ZeroMinSize)
        ));
        assert!(matches!(
            detect_changepoints(&col(&[0.0; 5]), 0, 1, None),
            Err(TemporalError::ZeroK)
        ));
    }

    #[test]
    fn single_point_segments_cost_nothing() {
        let rows: Vec<Vec<f64>> = (0..6).map(|i| vec![i as f64, (i * i) as f64]).collect();
        let kc = KernelCost::new(&rows, 0.3);
        for a in 0..6 {
            assert_eq!(kc.segment_cost(a, a + 1), 0.0);
        }
    }

    #[test]
    fn partition_covers_corpus() {
        let c = corpus(&[
            ("1", "a", "2010-01-05T00:00:00Z"),
            ("2", "a", "2010-02-06T00:00:00Z"),
            ("3", "b", "2010-04-01T00:00:00Z"),
        ]);
        let whole = partition_corpus(&c, &[]).unwrap();
        assert_eq!(whole.len(), 1);
        assert_eq!(whole[0].comments(), c.comments());
        let parts = partition_corpus(&c, &[1, 3]).unwrap();
        let sizes: Vec<usize> = parts.iter().map(|p| p.comments().len()).collect();
        assert_eq!(sizes, [1, 1, 1]);
        assert!(partition_corpus(&c, &[4]).is_err());
        assert!(partition_corpus(&c, &[2, 2]).is_err());
    }

    #[test]
    fn standardized_channels() {
        let c = corpus(&[
            ("1", "a", "2010-01-05T00:00:00Z"),
            ("2", "b", "2010-01-06T00:00:00Z"),
            ("3", "b", "2010-02-01T00:00:00Z"),
            ("4", "c", "2010-04-01T00:00:00Z"),
        ]);
        let ann = AnnotatedCorpus::from_labels(&c, &[true, false, true, false]);
        let s = monthly_series(&ann, "politics").unwrap();
        let m = build_signal_matrix(&[s.clone(), s], &[Quantity::TotalComments], None).unwrap();
        assert_eq!(m.channels.len(), 2);
        for d in 0..2 {
            let column: Vec<f64> = m.rows.iter().map(|r| r[d]).collect();
            let (mean, std) = mean_std(&column);
            assert!(mean.abs() < 1e-12 && (std - 1.0).abs() < 1e-12);
        }
        assert!(m.rows.iter().all(|r| r[0] == r[1]));
    }
}
