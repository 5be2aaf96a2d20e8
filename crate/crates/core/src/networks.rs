//! Support/dispute author graphs, activity sets S(λ, ρ), reciprocity,
//! activity-group tables, top-poster tables and cross-topic user overlap.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{AuthorCounts, AuthorId, Corpus, CorpusError, Reaction};
use crate::scorer::AnnotatedCorpus;

#[derive(Debug, Error)]
pub enum NetworkError {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("reciprocity undefined: graph has no edges")]
    EmptyGraph,
    #[error("grid must be non-empty and strictly ascending: {0:?}")]
    BadGrid(Vec<u64>),
    #[error("group boundaries must be non-empty and strictly ascending: {0:?}")]
    BadBoundaries(Vec<u64>),
    #[error("top-n must be at least 1")]
    ZeroTopN,
    #[error("overlap of topic `{0}` with itself is trivially 1")]
    SameTopic(String),
    #[error("count buckets must be non-empty, non-overlapping and ascending")]
    BadBuckets,
}

pub type Result<T, E = NetworkError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Flavor {
    Support,
    Dispute,
}

/// Directed author graph; edge weight counts replies of one flavor.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplyGraph {
    pub flavor: Flavor,
    pub nodes: BTreeSet<AuthorId>,
    pub edges: BTreeMap<(AuthorId, AuthorId), u64>,
}

impl ReplyGraph {
    fn new(flavor: Flavor) -> Self {
        ReplyGraph {
            flavor,
            nodes: BTreeSet::new(),
            edges: BTreeMap::new(),
        }
    }

    pub fn total_weight(&self) -> u64 {
        self.edges.values().sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplyNetworks {
    pub support: ReplyGraph,
    pub dispute: ReplyGraph,
    /// Replies that produced no edge: clarify/none reactions and
    /// self-replies (and, when restricted, replies outside the set).
    pub ignored_replies: u64,
    pub top_level_comments: u64,
}

/// Builds the support and dispute graphs of `topic`, optionally keeping only
/// edges with both endpoints in `restrict_to`.
pub fn build_reply_networks(
    corpus: &Corpus,
    topic: &str,
    restrict_to: Option<&BTreeSet<AuthorId>>,
) -> Result<ReplyNetworks> {
    let member = |a: &AuthorId| restrict_to.is_none_or(|set| set.contains(a));
    let mut support = ReplyGraph::new(Flavor::Support);
    let mut dispute = ReplyGraph::new(Flavor::Dispute);
    let mut ignored = 0;
    let mut top_level = 0;
    for &i in corpus.topic_comments(topic)? {
        let c = &corpus.comments()[i];
        if member(&c.author) {
            support.nodes.insert(c.author.clone());
            dispute.nodes.insert(c.author.clone());
        }
        let Some(target) = corpus.parent_author(i) else {
            top_level += 1;
            continue;
        };
        let graph = match c.reaction {
            Reaction::Support => &mut support,
            Reaction::Dispute => &mut dispute,
            Reaction::Clarify | Reaction::None => {
                ignored += 1;
                continue;
            }
        };
        if target == &c.author || !member(&c.author) || !member(target) {
            ignored += 1;
            continue;
        }
        *graph.edges.entry((c.author.clone(), target.clone())).or_default() += 1;
    }
    for g in [&mut support, &mut dispute] {
        let endpoints: Vec<AuthorId> = g.edges.keys().flat_map(|(a, b)| [a.clone(), b.clone()]).collect();
        g.nodes.extend(endpoints);
    }
    Ok(ReplyNetworks {
        support,
        dispute,
        ignored_replies: ignored,
        top_level_comments: top_level,
    })
}

/// Fraction of directed edges whose reverse edge also exists.
pub fn reciprocity(graph: &ReplyGraph) -> Result<f64> {
    if graph.edges.is_empty() {
        return Err(NetworkError::EmptyGraph);
    }
    let mutual = graph
        .edges
        .keys()
        .filter(|(a, b)| graph.edges.contains_key(&(b.clone(), a.clone())))
        .count();
    Ok(mutual as f64 / graph.edges.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ActivitySet {
    pub lambda: u64,
    pub rho: u64,
    pub members: BTreeSet<AuthorId>,
}

fn select_active(counts: &BTreeMap<AuthorId, AuthorCounts>, lambda: u64, rho: u64) -> BTreeSet<AuthorId> {
    counts
        .iter()
        .filter(|(_, c)| c.top_level_comments >= lambda && c.direct_replies_received >= rho)
        .map(|(a, _)| a.clone())
        .collect()
}

/// S(λ, ρ): authors with at least λ top-level comments and at least ρ
/// direct replies received in `topic`.
pub fn activity_set(corpus: &Corpus, topic: &str, lambda: u64, rho: u64) -> Result<ActivitySet> {
    let counts = corpus.structural_counts(topic)?;
    Ok(ActivitySet {
        lambda,
        rho,
        members: select_active(&counts, lambda, rho),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SurfaceCell {
    pub lambda: u64,
    pub rho: u64,
    pub authors: usize,
    /// `None` when the restricted graph has no edges.
    pub support_reciprocity: Option<f64>,
    pub dispute_reciprocity: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReciprocitySurface {
    pub topic: String,
    pub lambdas: Vec<u64>,
    pub rhos: Vec<u64>,
    /// Row-major: `cells[i * rhos.len() + j]` is (lambdas[i], rhos[j]).
    pub cells: Vec<SurfaceCell>,
}

impl ReciprocitySurface {
    pub fn cell(&self, i: usize, j: usize) -> &SurfaceCell {
        &self.cells[i * self.rhos.len() + j]
    }
}

fn check_grid(grid: &[u64]) -> Result<()> {
    if grid.is_empty() || grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(NetworkError::BadGrid(grid.to_vec()));
    }
    Ok(())
}

/// Size of S(λ, ρ) and reciprocity of the networks restricted to it, for
/// every grid cell.
pub fn reciprocity_surface(corpus: &Corpus, topic: &str, lambdas: &[u64], rhos: &[u64]) -> Result<ReciprocitySurface> {
    check_grid(lambdas)?;
    check_grid(rhos)?;
    let counts = corpus.structural_counts(topic)?;
    let grid: Vec<(u64, u64)> = lambdas
        .iter()
        .flat_map(|&l| rhos.iter().map(move |&r| (l, r)))
        .collect();
    let cells = grid
        .par_iter()
        .map(|&(lambda, rho)| {
            let members = select_active(&counts, lambda, rho);
            let nets = build_reply_networks(corpus, topic, Some(&members))?;
            Ok(SurfaceCell {
                lambda,
                rho,
                authors: members.len(),
                support_reciprocity: reciprocity(&nets.support).ok(),
                dispute_reciprocity: reciprocity(&nets.dispute).ok(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ReciprocitySurface {
        topic: topic.to_string(),
        lambdas: lambdas.to_vec(),
        rhos: rhos.to_vec(),
        cells,
    })
}

/// Inclusive top-level comment count range; `max = None` is open-ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountRange {
    pub min: u64,
    pub max: Option<u64>,
}

impl CountRange {
    pub fn contains(&self, v: u64) -> bool {
        v >= self.min && self.max.is_none_or(|m| v <= m)
    }

    pub fn label(&self) -> String {
        match self.max {
            Some(m) if m == self.min => format!("{m}"),
            Some(m) => format!("{}-{}", self.min, m),
            None => format!(">={}", self.min),
        }
    }
}

/// Group ranges for boundaries `b1 < … < bm`: `[0, b1]`, `[b1+1, b2]`, …,
/// `[b(m-1)+1, bm-1]`, `[bm, ∞)`. With the defaults this is
/// ≤10, 11-50, 51-100, 101-1999, ≥2000.
pub fn group_ranges(boundaries: &[u64]) -> Result<Vec<CountRange>> {
    if boundaries.is_empty() || boundaries.windows(2).any(|w| w[0] >= w[1]) {
        return Err(NetworkError::BadBoundaries(boundaries.to_vec()));
    }
    let m = boundaries.len();
    if m == 1 {
        // A single boundary splits into [0, b-1] and [b, ∞).
        return Ok(if boundaries[0] == 0 {
            vec![CountRange { min: 0, max: None }]
        } else {
            vec![
                CountRange {
                    min: 0,
                    max: Some(boundaries[0] - 1),
                },
                CountRange {
                    min: boundaries[0],
                    max: None,
                },
            ]
        });
    }
    let mut ranges = vec![CountRange {
        min: 0,
        max: Some(boundaries[0]),
    }];
    for i in 1..m - 1 {
        ranges.push(CountRange {
            min: boundaries[i - 1] + 1,
            max: Some(boundaries[i]),
        });
    }
    ranges.push(CountRange {
        min: boundaries[m - 2] + 1,
        max: Some(boundaries[m - 1] - 1),
    });
    ranges.push(CountRange {
        min: boundaries[m - 1],
        max: None,
    });
    Ok(ranges)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupRow {
    pub range: CountRange,
    pub users: usize,
    pub comments: u64,
    pub ah_comments: u64,
    pub pct_users: f64,
    pub pct_comments: f64,
    /// `None` when the group has no scored comments.
    pub pct_adhominem: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupTable {
    pub topic: String,
    pub rows: Vec<GroupRow>,
    pub total_users: usize,
    pub total_comments: u64,
    pub total_pct_adhominem: Option<f64>,
}

/// Users grouped by top-level comment count in `topic`, with each group's
/// share of users, share of the topic's comments, and ad hominem rate over
/// the group's own scored comments.
pub fn activity_groups(annotated: &AnnotatedCorpus<'_>, topic: &str, boundaries: &[u64]) -> Result<GroupTable> {
    let ranges = group_ranges(boundaries)?;
    let corpus = annotated.corpus;
    let counts = corpus.structural_counts(topic)?;
    let mut rows: Vec<GroupRow> = ranges
        .iter()
        .map(|&range| GroupRow {
            range,
            users: 0,
            comments: 0,
            ah_comments: 0,
            pct_users: 0.0,
            pct_comments: 0.0,
            pct_adhominem: None,
        })
        .collect();
    let group_of = |author: &AuthorId| {
        let tlc = counts[author].top_level_comments;
        ranges
            .iter()
            .position(|r| r.contains(tlc))
            .expect("ranges cover all counts")
    };
    for author in counts.keys() {
        rows[group_of(author)].users += 1;
    }
    let mut scored = vec![0u64; rows.len()];
    for &i in corpus.topic_comments(topic)? {
        let g = group_of(&corpus.comments()[i].author);
        rows[g].comments += 1;
        if let Some(label) = annotated.is_adhominem(i) {
            scored[g] += 1;
            if label {
                rows[g].ah_comments += 1;
            }
        }
    }
    let total_users = counts.len();
    let total_comments: u64 = rows.iter().map(|r| r.comments).sum();
    for (row, &s) in rows.iter_mut().zip(&scored) {
        row.pct_users = pct(row.users as u64, total_users as u64);
        row.pct_comments = pct(row.comments, total_comments);
        row.pct_adhominem = (s > 0).then(|| pct(row.ah_comments, s));
    }
    let total_scored: u64 = scored.iter().sum();
    let total_ah: u64 = rows.iter().map(|r| r.ah_comments).sum();
    Ok(GroupTable {
        topic: topic.to_string(),
        rows,
        total_users,
        total_comments,
        total_pct_adhominem: (total_scored > 0).then(|| pct(total_ah, total_scored)),
    })
}

fn pct(part: u64, whole: u64) -> f64 {
    if whole == 0 {
        0.0
    } else {
        100.0 * part as f64 / whole as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankedAuthor {
    pub author: AuthorId,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TopTables {
    pub top_posters: Vec<RankedAuthor>,
    pub top_receivers: Vec<RankedAuthor>,
    pub overlap: usize,
}

/// Top `n` authors by top-level comments and by direct replies received,
/// ties broken by author id.
pub fn top_tables(corpus: &Corpus, topic: &str, n: usize) -> Result<TopTables> {
    if n == 0 {
        return Err(NetworkError::ZeroTopN);
    }
    let counts = corpus.structural_counts(topic)?;
    let rank = |key: fn(&AuthorCounts) -> u64| {
        let mut v: Vec<RankedAuthor> = counts
            .iter()
            .map(|(a, c)| RankedAuthor {
                author: a.clone(),
                count: key(c),
            })
            .collect();
        v.sort_by(|x, y| y.count.cmp(&x.count).then_with(|| x.author.cmp(&y.author)));
        v.truncate(n);
        v
    };
    let top_posters = rank(|c| c.top_level_comments);
    let top_receivers = rank(|c| c.direct_replies_received);
    let posters: BTreeSet<&AuthorId> = top_posters.iter().map(|r| &r.author).collect();
    let overlap = top_receivers.iter().filter(|r| posters.contains(&r.author)).count();
    Ok(TopTables {
        top_posters,
        top_receivers,
        overlap,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OverlapCell {
    pub bucket: CountRange,
    pub users: usize,
    pub overlapping: usize,
    /// `None` when no user of `topic_a` falls in the bucket.
    pub fraction: Option<f64>,
}

/// For each bucket of comment counts in `topic_a`, the fraction of those
/// users who also commented at least once in `topic_b`.
pub fn topic_overlap(
    corpus: &Corpus,
    topic_a: &str,
    topic_b: &str,
    buckets: &[CountRange],
) -> Result<Vec<OverlapCell>> {
    if topic_a == topic_b {
        return Err(NetworkError::SameTopic(topic_a.to_string()));
    }
    let ascending = buckets.windows(2).all(|w| w[0].max.is_some_and(|m| m < w[1].min));
    if buckets.is_empty() || !ascending || buckets.iter().any(|b| b.max.is_some_and(|m| m < b.min)) {
        return Err(NetworkError::BadBuckets);
    }
    let counts_a = corpus.structural_counts(topic_a)?;
    let users_b: BTreeSet<AuthorId> = corpus.structural_counts(topic_b)?.into_keys().collect();
    Ok(buckets
        .iter()
        .map(|&bucket| {
            let users: Vec<&AuthorId> = counts_a
                .iter()
                .filter(|(_, c)| c.total_comments > 0 && bucket.contains(c.total_comments))
                .map(|(a, _)| a)
                .collect();
            let overlapping = users.iter().filter(|a| users_b.contains(**a)).count();
            OverlapCell {
                bucket,
                users: users.len(),
                overlapping,
                fraction: (!users.is_empty()).then(|| overlapping as f64 / users.len() as f64),
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::IngestOptions;

    fn corpus(rows: &[(&str, Option<&str>, &str, Option<&str>)]) -> Corpus {
        let posts = r#"{"post_id":"p","author":"op","timestamp":"2010-01-01T00:00:00Z","topic":"politics","title":"t"}
{"post_id":"q","author":"op","timestamp":"2010-01-01T00:00:00Z","topic":"science","title":"t"}
"#;
        let comments: String = rows
            .iter()
            .map(|(id, parent, author, reaction)| {
                serde_json::json!({
                    "id": id, "post_id": "p", "parent_id": parent, "author": author,
                    "timestamp": "2010-01-02T00:00:00Z", "topic": "politics", "text": "x",
                    "reaction": reaction,
                })
                .to_string()
                    + "\n"
            })
            .collect();
        Corpus::from_readers(
            ("posts", posts.as_bytes()),
            ("comments", comments.as_bytes()),
            None,
            &IngestOptions::default(),
        )
        .unwrap()
    }

    fn a(s: &str) -> AuthorId {
        AuthorId::new(s)
    }

    #[test]
    fn repeated_dispute_is_weighted() {
        let c = corpus(&[
            ("b1", None, "B", None),
            ("a1", Some("b1"), "A", Some("dispute")),
            ("a2", Some("b1"), "A", Some("dispute")),
        ]);
        let nets = build_reply_networks(&c, "politics", None).unwrap();
        assert_eq!(nets.dispute.edges[&(a("A"), a("B"))], 2);
        assert!(nets.support.edges.is_empty());
        assert_eq!(reciprocity(&nets.dispute).unwrap(), 0.0);
        assert!(matches!(reciprocity(&nets.support), Err(NetworkError::EmptyGraph)));
    }

    #[test]
    fn self_replies_make_no_edge() {
        let c = corpus(&[("a1", None, "A", None), ("a2", Some("a1"), "A", Some("support"))]);
        let nets = build_reply_networks(&c, "politics", None).unwrap();
        assert!(nets.support.edges.is_empty());
        assert_eq!(nets.ignored_replies, 1);
    }

    #[test]
    fn mutual_edges() {
        let c = corpus(&[
            ("a1", None, "A", None),
            ("b1", Some("a1"), "B", Some("support")),
            ("a2", Some("b1"), "A", Some("support")),
            ("c1", Some("a2"), "C", Some("clarify")),
        ]);
        let nets = build_reply_networks(&c, "politics", None).unwrap();
        assert_eq!(reciprocity(&nets.support).unwrap(), 1.0);
        let total =
            nets.support.total_weight() + nets.dispute.total_weight() + nets.ignored_replies + nets.top_level_comments;
        assert_eq!(total, 4);
    }

    #[test]
    fn activity_set_thresholds() {
        let c = corpus(&[
            ("a1", None, "A", None),
            ("a2", None, "A", None),
            ("b1", Some("a1"), "B", Some("support")),
        ]);
        let all = activity_set(&c, "politics", 0, 0).unwrap();
        assert_eq!(all.members.len(), 2);
        let strict = activity_set(&c, "politics", 2, 1).unwrap();
        assert_eq!(strict.members, BTreeSet::from([a("A")]));
        assert!(activity_set(&c, "politics", 100, 0).unwrap().members.is_empty());
        assert!(activity_set(&c, "law", 0, 0).is_err());
    }

    #[test]
    fn degenerate_surface_matches_whole_topic() {
        let c = corpus(&[
            ("a1", None, "A", None),
            ("b1", Some("a1"), "B", Some("support")),
            ("a2", Some("b1"), "A", Some("support")),
            ("c1", Some("a1"), "C", Some("dispute")),
        ]);
        let s = reciprocity_surface(&c, "politics", &[0], &[0]).unwrap();
        let nets = build_reply_networks(&c, "politics", None).unwrap();
        assert_eq!(s.cell(0, 0).support_reciprocity, reciprocity(&nets.support).ok());
        assert_eq!(s.cell(0, 0).dispute_reciprocity, Some(0.0));
        assert_eq!(s.cell(0, 0).authors, 3);
        let high = reciprocity_surface(&c, "politics", &[0, 5], &[0]).unwrap();
        assert_eq!(high.cell(1, 0).support_reciprocity, None);
        assert!(reciprocity_surface(&c, "politics", &[3, 1], &[0]).is_err());
    }

    #[test]
    fn default_group_ranges() {
        let labels: Vec<String> = group_ranges(&[10, 50, 100, 2000])
            .unwrap()
            .iter()
            .map(CountRange::label)
            .collect();
        assert_eq!(labels, ["0-10", "11-50", "51-100", "101-1999", ">=2000"]);
        assert!(group_ranges(&[10, 10]).is_err());
    }

    #[test]
    fn single_group_shows_global_rate() {
        let c = corpus(&[("a1", None, "A", None), ("b1", Some("a1"), "B", Some("dispute"))]);
        let ann = AnnotatedCorpus::from_labels(&c, &[true, false]);
        let t = activity_groups(&ann, "politics", &[10, 50, 100, 2000]).unwrap();
        assert_eq!(t.rows[0].pct_users, 100.0);
        assert_eq!(t.rows[0].pct_comments, 100.0);
        assert_eq!(t.rows[0].pct_adhominem, Some(50.0));
        assert_eq!(t.total_pct_adhominem, Some(50.0));
    }

    #[test]
    fn top_tables_single_author() {
        let c = corpus(&[("a1", None, "A", None)]);
        let t = top_tables(&c, "politics", 10).unwrap();
        assert_eq!(t.top_posters.len(), 1);
        assert_eq!(t.top_receivers.len(), 1);
        assert_eq!(t.overlap, 1);
        assert!(top_tables(&c, "politics", 0).is_err());
    }

    #[test]
    fn overlap_requires_distinct_topics() {
        let c = corpus(&[("a1", None, "A", None)]);
        let buckets = [CountRange { min: 1, max: None }];
        assert!(matches!(
            topic_overlap(&c, "politics", "politics", &buckets),
            Err(NetworkError::SameTopic(_))
        ));
        let cells = topic_overlap(&c, "politics", "science", &buckets).unwrap();
        assert_eq!(cells[0].fraction, Some(0.0));
        let cells = topic_overlap(&c, "science", "politics", &buckets).unwrap();
        assert_eq!(cells[0].fraction, None);
    }
}
