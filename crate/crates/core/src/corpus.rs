//! Threaded forum corpus: loading, validation, pseudonymization and
//! structural queries.
//!
//! A dump is three JSON Lines files (posts, comments, optional author
//! profiles). Loading enforces referential integrity and replaces every
//! author name with a salted digest when a salt is given. Fields the loader
//! does not know are kept in a per-record provenance map and written back on
//! serialization.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::{BufRead, BufReader};
use std::path::Path;

use chrono::{DateTime, Datelike, Timelike, Utc};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Length in hex characters of a pseudonymized author id (16-byte digest).
pub const PSEUDONYM_HEX_LEN: usize = 32;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{file} line {line}: field `{field}`: {message}")]
    Malformed {
        file: String,
        line: usize,
        field: String,
        message: String,
    },
    #[error("{file} line {line}: duplicate {kind} id `{id}`")]
    DuplicateId {
        file: String,
        line: usize,
        kind: &'static str,
        id: String,
    },
    #[error("comment `{id}` references unknown post `{post_id}`")]
    UnknownPost { id: String, post_id: String },
    #[error("dangling parent_id: {}", format_dangling(.pairs))]
    DanglingParents { pairs: Vec<(String, String)> },
    #[error("comment `{id}`: {reason}")]
    InvalidRecord { id: String, reason: String },
    #[error("unknown topic `{topic}`; valid topics: {}", .valid.join(", "))]
    UnknownTopic { topic: String, valid: Vec<String> },
    #[error("author name must be non-empty")]
    EmptyAuthor,
}

fn format_dangling(pairs: &[(String, String)]) -> String {
    pairs
        .iter()
        .map(|(child, parent)| format!("{child} -> {parent}"))
        .collect::<Vec<_>>()
        .join(", ")
}

pub type Result<T, E = CorpusError> = std::result::Result<T, E>;

/// Pseudonymous (or, without a salt, raw) author identifier.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AuthorId(String);

impl AuthorId {
    pub fn new(s: impl Into<String>) -> Self {
        AuthorId(s.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// True when the id has the shape produced by [`hash_author`].
    pub fn is_pseudonym(&self) -> bool {
        looks_like_pseudonym(&self.0)
    }
}

impl fmt::Display for AuthorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

fn looks_like_pseudonym(s: &str) -> bool {
    s.len() == PSEUDONYM_HEX_LEN && s.bytes().all(|b| matches!(b, b'0'..=b'9' | b'a'..=b'f'))
}

/// Pseudonym for `name`: first 16 bytes of SHA-256(salt ‖ name), hex encoded.
pub fn hash_author(name: &str, salt: &[u8]) -> Result<AuthorId> {
    if name.is_empty() {
        return Err(CorpusError::EmptyAuthor);
    }
    let mut hasher = Sha256::new();
    hasher.update(salt);
    hasher.update(name.as_bytes());
    let digest = hasher.finalize();
    Ok(AuthorId(hex::encode(&digest[..PSEUDONYM_HEX_LEN / 2])))
}

/// Calendar month as a running count (`year * 12 + month0`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MonthIndex(pub i32);

impl MonthIndex {
    pub fn new(year: i32, month: u32) -> Self {
        assert!((1..=12).contains(&month), "month out of range: {month}");
        MonthIndex(year * 12 + month as i32 - 1)
    }

    pub fn of(ts: &DateTime<Utc>) -> Self {
        MonthIndex::new(ts.year(), ts.month())
    }

    pub fn year(self) -> i32 {
        self.0.div_euclid(12)
    }

    pub fn month(self) -> u32 {
        self.0.rem_euclid(12) as u32 + 1
    }

    pub fn offset(self, months: i32) -> Self {
        MonthIndex(self.0 + months)
    }

    /// Number of months from `self` to `later`.
    pub fn months_until(self, later: MonthIndex) -> i32 {
        later.0 - self.0
    }

    /// Parses `YYYY-MM`.
    pub fn parse(s: &str) -> Option<Self> {
        let (y, m) = s.split_once('-')?;
        let year: i32 = y.parse().ok()?;
        let month: u32 = m.parse().ok()?;
        (1..=12).contains(&month).then(|| MonthIndex::new(year, month))
    }
}

impl fmt::Display for MonthIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}", self.year(), self.month())
    }
}

/// How a reply qualifies its parent comment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Reaction {
    Support,
    Dispute,
    Clarify,
    None,
}

impl Reaction {
    fn parse(v: Option<&Value>) -> std::result::Result<Self, String> {
        match v {
            None | Some(Value::Null) => Ok(Reaction::None),
            Some(Value::String(s)) => match s.as_str() {
                "support" => Ok(Reaction::Support),
                "dispute" => Ok(Reaction::Dispute),
                "clarify" => Ok(Reaction::Clarify),
                other => Err(format!(
                    "expected \"support\", \"dispute\", \"clarify\" or null, got \"{other}\""
                )),
            },
            Some(other) => Err(format!("expected string or null, got {other}")),
        }
    }

    fn to_json(self) -> Value {
        match self {
            Reaction::Support => Value::from("support"),
            Reaction::Dispute => Value::from("dispute"),
            Reaction::Clarify => Value::from("clarify"),
            Reaction::None => Value::Null,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PostRecord {
    pub post_id: String,
    pub author: AuthorId,
    pub timestamp: DateTime<Utc>,
    pub topic: String,
    pub title: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CommentRecord {
    pub id: String,
    pub post_id: String,
    /// `None` for a top-level comment (a reply to the post body).
    pub parent_id: Option<String>,
    pub author: AuthorId,
    pub timestamp: DateTime<Utc>,
    pub topic: String,
    pub text: String,
    pub reaction: Reaction,
}

impl CommentRecord {
    pub fn is_top_level(&self) -> bool {
        self.parent_id.is_none()
    }

    pub fn month(&self) -> MonthIndex {
        MonthIndex::of(&self.timestamp)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuthorProfile {
    pub author: AuthorId,
    pub posts: u64,
    pub reward_points: u64,
    /// Debate efficiency in percent.
    pub efficiency: f64,
    pub allies: u64,
    pub enemies: u64,
    pub hostiles: u64,
}

/// Per-author structural counts within one topic.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct AuthorCounts {
    pub top_level_comments: u64,
    pub direct_replies_received: u64,
    pub total_comments: u64,
}

#[derive(Debug, Clone, Default)]
pub struct IngestOptions {
    /// Salt for author pseudonyms; `None` keeps names as they are.
    pub salt: Option<Vec<u8>>,
    /// Drop comments whose parent is missing (and their descendants)
    /// instead of failing.
    pub lenient: bool,
}

/// Unknown fields per record, keyed by record id (author id for profiles).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Provenance {
    pub posts: BTreeMap<String, Map<String, Value>>,
    pub comments: BTreeMap<String, Map<String, Value>>,
    pub profiles: BTreeMap<String, Map<String, Value>>,
}

/// Immutable, validated forum corpus with lookup indexes.
#[derive(Debug, Clone)]
pub struct Corpus {
    posts: Vec<PostRecord>,
    comments: Vec<CommentRecord>,
    profiles: Option<Vec<AuthorProfile>>,
    provenance: Provenance,
    topics: BTreeSet<String>,
    /// Author of each comment's parent; survives sub-corpus extraction even
    /// when the parent itself falls outside the sub-corpus.
    parent_author: Vec<Option<AuthorId>>,
    comment_index: HashMap<String, usize>,
    post_index: HashMap<String, usize>,
    by_topic: BTreeMap<String, Vec<usize>>,
    by_author: BTreeMap<AuthorId, Vec<usize>>,
    by_post: HashMap<String, Vec<usize>>,
    by_month: BTreeMap<MonthIndex, Vec<usize>>,
    dropped: usize,
}

impl PartialEq for Corpus {
    fn eq(&self, other: &Self) -> bool {
        self.posts == other.posts
            && self.comments == other.comments
            && self.profiles == other.profiles
            && self.provenance == other.provenance
            && self.parent_author == other.parent_author
    }
}

/// Loads and validates a dump from disk.
pub fn ingest_corpus(
    posts_path: &Path,
    comments_path: &Path,
    profiles_path: Option<&Path>,
    options: &IngestOptions,
) -> Result<Corpus> {
    let open = |p: &Path| {
        std::fs::File::open(p)
            .map(BufReader::new)
            .map_err(|source| CorpusError::Io {
                path: p.display().to_string(),
                source,
            })
    };
    let posts = open(posts_path)?;
    let comments = open(comments_path)?;
    let profiles = profiles_path.map(open).transpose()?;
    Corpus::from_readers(
        (&posts_path.display().to_string(), posts),
        (&comments_path.display().to_string(), comments),
        profiles.map(|r| (profiles_path.unwrap().display().to_string(), r)),
        options,
    )
}

impl Corpus {
    /// Loads a dump from `(name, reader)` pairs; `name` labels error messages.
    pub fn from_readers<R: BufRead>(
        posts: (&str, R),
        comments: (&str, R),
        profiles: Option<(String, R)>,
        options: &IngestOptions,
    ) -> Result<Corpus> {
        let pseudo = |name: String| -> Result<AuthorId> {
            if name.is_empty() {
                return Err(CorpusError::EmptyAuthor);
            }
            match &options.salt {
                Some(salt) if !looks_like_pseudonym(&name) => hash_author(&name, salt),
                _ => Ok(AuthorId(name)),
            }
        };

        let mut provenance = Provenance::default();

        let mut post_records = Vec::new();
        let mut post_index = HashMap::new();
        for (line_no, obj) in read_objects(posts.0, posts.1)? {
            let mut rec = Fields::new(posts.0, line_no, obj);
            let post_id = rec.string("post_id")?;
            let author = rec.string("author")?;
            let author = pseudo(author).map_err(|e| rec.err("author", &e.to_string()))?;
            let timestamp = rec.timestamp("timestamp")?;
            let topic = rec.string("topic")?;
            let title = rec.string("title")?;
            if post_index.insert(post_id.clone(), post_records.len()).is_some() {
                return Err(CorpusError::DuplicateId {
                    file: posts.0.to_string(),
                    line: line_no,
                    kind: "post",
                    id: post_id,
                });
            }
            if !rec.rest.is_empty() {
                provenance.posts.insert(post_id.clone(), rec.rest);
            }
            post_records.push(PostRecord {
                post_id,
                author,
                timestamp,
                topic,
                title,
            });
        }

        let mut comment_records = Vec::new();
        let mut seen = HashMap::new();
        let mut comment_extras = BTreeMap::new();
        for (line_no, obj) in read_objects(comments.0, comments.1)? {
            let mut rec = Fields::new(comments.0, line_no, obj);
            let id = rec.string("id")?;
            let post_id = rec.string("post_id")?;
            let parent_id = rec.opt_string("parent_id")?;
            let author = rec.string("author")?;
            let author = pseudo(author).map_err(|e| rec.err("author", &e.to_string()))?;
            let timestamp = rec.timestamp("timestamp")?;
            let topic = rec.string("topic")?;
            let text = rec.string("text")?;
            let reaction = Reaction::parse(rec.take("reaction").as_ref()).map_err(|m| rec.err("reaction", &m))?;
            if seen.insert(id.clone(), line_no).is_some() {
                return Err(CorpusError::DuplicateId {
                    file: comments.0.to_string(),
                    line: line_no,
                    kind: "comment",
                    id,
                });
            }
            if !rec.rest.is_empty() {
                comment_extras.insert(id.clone(), rec.rest);
            }
            comment_records.push(CommentRecord {
                id,
                post_id,
                parent_id,
                author,
                timestamp,
                topic,
                text,
                reaction,
            });
        }

        let mut dropped = 0;
        let dangling: Vec<(String, String)> = comment_records
            .iter()
            .filter_map(|c| match &c.parent_id {
                Some(p) if !seen.contains_key(p) => Some((c.id.clone(), p.clone())),
                _ => None,
            })
            .collect();
        if !dangling.is_empty() {
            if !options.lenient {
                return Err(CorpusError::DanglingParents { pairs: dangling });
            }
            let before = comment_records.len();
            comment_records = drop_orphans(comment_records);
            dropped = before - comment_records.len();
            log::warn!("lenient ingest: dropped {dropped} comments with missing parents");
        }
        for (id, extras) in comment_extras {
            provenance.comments.insert(id, extras);
        }
        if dropped > 0 {
            let kept: BTreeSet<&str> = comment_records.iter().map(|c| c.id.as_str()).collect();
            provenance.comments.retain(|id, _| kept.contains(id.as_str()));
        }

        let profile_records = match profiles {
            None => None,
            Some((name, reader)) => {
                let mut out = Vec::new();
                for (line_no, obj) in read_objects(&name, reader)? {
                    let mut rec = Fields::new(&name, line_no, obj);
                    let author = rec.string("author")?;
                    let author = pseudo(author).map_err(|e| rec.err("author", &e.to_string()))?;
                    let profile = AuthorProfile {
                        author,
                        posts: rec.count("posts")?,
                        reward_points: rec.count("reward_points")?,
                        efficiency: rec.percentage("efficiency")?,
                        allies: rec.count("allies")?,
                        enemies: rec.count("enemies")?,
                        hostiles: rec.count("hostiles")?,
                    };
                    if !rec.rest.is_empty() {
                        provenance.profiles.insert(profile.author.0.clone(), rec.rest);
                    }
                    out.push(profile);
                }
                Some(out)
            }
        };

        let mut corpus = Corpus::assemble(post_records, comment_records, profile_records, provenance, None)?;
        corpus.dropped = dropped;
        Ok(corpus)
    }

    /// Builds indexes and checks invariants. With `parent_author` given, the
    /// comment set may be a sub-corpus whose parents live elsewhere.
    fn assemble(
        posts: Vec<PostRecord>,
        comments: Vec<CommentRecord>,
        profiles: Option<Vec<AuthorProfile>>,
        provenance: Provenance,
        parent_author: Option<Vec<Option<AuthorId>>>,
    ) -> Result<Corpus> {
        let post_index: HashMap<String, usize> =
            posts.iter().enumerate().map(|(i, p)| (p.post_id.clone(), i)).collect();
        let comment_index: HashMap<String, usize> =
            comments.iter().enumerate().map(|(i, c)| (c.id.clone(), i)).collect();
        let topics: BTreeSet<String> = posts.iter().map(|p| p.topic.clone()).collect();

        let resolved_parents = match parent_author {
            Some(pa) => pa,
            None => {
                let mut pa = Vec::with_capacity(comments.len());
                for c in &comments {
                    let post =
                        post_index
                            .get(&c.post_id)
                            .map(|&i| &posts[i])
                            .ok_or_else(|| CorpusError::UnknownPost {
                                id: c.id.clone(),
                                post_id: c.post_id.clone(),
                            })?;
                    if c.topic != post.topic {
                        return Err(invalid(
                            c,
                            format!("topic `{}` differs from its post's topic `{}`", c.topic, post.topic),
                        ));
                    }
                    if c.timestamp < post.timestamp {
                        return Err(invalid(c, "timestamp precedes its post".to_string()));
                    }
                    match &c.parent_id {
                        None => {
                            if c.reaction != Reaction::None {
                                return Err(invalid(c, "reaction set on a top-level comment".to_string()));
                            }
                            pa.push(None);
                        }
                        Some(p) => {
                            let parent = &comments[comment_index[p]];
                            if parent.post_id != c.post_id {
                                return Err(invalid(c, format!("parent `{p}` belongs to a different post")));
                            }
                            pa.push(Some(parent.author.clone()));
                        }
                    }
                }
                pa
            }
        };

        let mut by_topic: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        let mut by_author: BTreeMap<AuthorId, Vec<usize>> = BTreeMap::new();
        let mut by_post: HashMap<String, Vec<usize>> = HashMap::new();
        let mut by_month: BTreeMap<MonthIndex, Vec<usize>> = BTreeMap::new();
        for (i, c) in comments.iter().enumerate() {
            by_topic.entry(c.topic.clone()).or_default().push(i);
            by_author.entry(c.author.clone()).or_default().push(i);
            by_post.entry(c.post_id.clone()).or_default().push(i);
            by_month.entry(c.month()).or_default().push(i);
        }

        Ok(Corpus {
            posts,
            comments,
            profiles,
            provenance,
            topics,
            parent_author: resolved_parents,
            comment_index,
            post_index,
            by_topic,
            by_author,
            by_post,
            by_month,
            dropped: 0,
        })
    }

    pub fn posts(&self) -> &[PostRecord] {
        &self.posts
    }

    pub fn comments(&self) -> &[CommentRecord] {
        &self.comments
    }

    pub fn profiles(&self) -> Option<&[AuthorProfile]> {
        self.profiles.as_deref()
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn topics(&self) -> &BTreeSet<String> {
        &self.topics
    }

    /// Comments dropped by lenient ingestion.
    pub fn dropped_comments(&self) -> usize {
        self.dropped
    }

    pub fn comment(&self, id: &str) -> Option<&CommentRecord> {
        self.comment_index.get(id).map(|&i| &self.comments[i])
    }

    pub fn comment_position(&self, id: &str) -> Option<usize> {
        self.comment_index.get(id).copied()
    }

    pub fn post(&self, post_id: &str) -> Option<&PostRecord> {
        self.post_index.get(post_id).map(|&i| &self.posts[i])
    }

    /// Author of the parent of the comment at `index`, if it is a reply.
    pub fn parent_author(&self, index: usize) -> Option<&AuthorId> {
        self.parent_author[index].as_ref()
    }

    /// Positions of the comments in `topic`, in corpus order.
    pub fn topic_comments(&self, topic: &str) -> Result<&[usize]> {
        self.check_topic(topic)?;
        Ok(self.by_topic.get(topic).map(Vec::as_slice).unwrap_or(&[]))
    }

    pub fn author_comments(&self, author: &AuthorId) -> &[usize] {
        self.by_author.get(author).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn post_comments(&self, post_id: &str) -> &[usize] {
        self.by_post.get(post_id).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn month_comments(&self, month: MonthIndex) -> &[usize] {
        self.by_month.get(&month).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn authors(&self) -> impl Iterator<Item = &AuthorId> {
        self.by_author.keys()
    }

    /// First and last comment month, inclusive.
    pub fn month_range(&self) -> Option<(MonthIndex, MonthIndex)> {
        let first = *self.by_month.keys().next()?;
        let last = *self.by_month.keys().next_back()?;
        Some((first, last))
    }

    pub fn check_topic(&self, topic: &str) -> Result<()> {
        if self.topics.contains(topic) {
            Ok(())
        } else {
            Err(CorpusError::UnknownTopic {
                topic: topic.to_string(),
                valid: self.topics.iter().cloned().collect(),
            })
        }
    }

    /// Per-author top-level, received-reply and total comment counts in `topic`.
    pub fn structural_counts(&self, topic: &str) -> Result<BTreeMap<AuthorId, AuthorCounts>> {
        let mut table: BTreeMap<AuthorId, AuthorCounts> = BTreeMap::new();
        for &i in self.topic_comments(topic)? {
            let c = &self.comments[i];
            let entry = table.entry(c.author.clone()).or_default();
            entry.total_comments += 1;
            if c.is_top_level() {
                entry.top_level_comments += 1;
            }
            if let Some(parent) = &self.parent_author[i] {
                table.entry(parent.clone()).or_default().direct_replies_received += 1;
            }
        }
        Ok(table)
    }

    /// Sub-corpus of the comments satisfying `keep`, with the posts they
    /// reference. Replies whose parent is not kept still credit the parent's
    /// author.
    pub fn filter_comments(&self, mut keep: impl FnMut(&CommentRecord) -> bool) -> Corpus {
        let mut comments = Vec::new();
        let mut parents = Vec::new();
        for (i, c) in self.comments.iter().enumerate() {
            if keep(c) {
                comments.push(c.clone());
                parents.push(self.parent_author[i].clone());
            }
        }
        let referenced: BTreeSet<&str> = comments.iter().map(|c| c.post_id.as_str()).collect();
        let posts: Vec<PostRecord> = self
            .posts
            .iter()
            .filter(|p| referenced.contains(p.post_id.as_str()))
            .cloned()
            .collect();
        let ids: BTreeSet<&str> = comments.iter().map(|c| c.id.as_str()).collect();
        let mut provenance = self.provenance.clone();
        provenance.comments.retain(|id, _| ids.contains(id.as_str()));
        provenance.posts.retain(|id, _| referenced.contains(id.as_str()));
        let mut sub = Corpus::assemble(posts, comments, self.profiles.clone(), provenance, Some(parents))
            .expect("sub-corpus of a valid corpus is valid");
        // Keep the parent corpus's topic set so per-topic queries stay valid
        // on segments where a topic has no activity.
        sub.topics = self.topics.clone();
        sub
    }

    pub fn posts_jsonl(&self) -> String {
        let mut out = String::new();
        for p in &self.posts {
            let mut obj = self.provenance.posts.get(&p.post_id).cloned().unwrap_or_default();
            obj.insert("post_id".into(), p.post_id.clone().into());
            obj.insert("author".into(), p.author.0.clone().into());
            obj.insert("timestamp".into(), format_timestamp(&p.timestamp).into());
            obj.insert("topic".into(), p.topic.clone().into());
            obj.insert("title".into(), p.title.clone().into());
            push_line(&mut out, obj);
        }
        out
    }

    pub fn comments_jsonl(&self) -> String {
        let mut out = String::new();
        for c in &self.comments {
            let mut obj = self.provenance.comments.get(&c.id).cloned().unwrap_or_default();
            obj.insert("id".into(), c.id.clone().into());
            obj.insert("post_id".into(), c.post_id.clone().into());
            obj.insert(
                "parent_id".into(),
                c.parent_id.clone().map(Value::from).unwrap_or(Value::Null),
            );
            obj.insert("author".into(), c.author.0.clone().into());
            obj.insert("timestamp".into(), format_timestamp(&c.timestamp).into());
            obj.insert("topic".into(), c.topic.clone().into());
            obj.insert("text".into(), c.text.clone().into());
            obj.insert("reaction".into(), c.reaction.to_json());
            push_line(&mut out, obj);
        }
        out
    }

    pub fn profiles_jsonl(&self) -> Option<String> {
        let profiles = self.profiles.as_ref()?;
        let mut out = String::new();
        for p in profiles {
            let mut obj = self
                .provenance
                .profiles
                .get(p.author.as_str())
                .cloned()
                .unwrap_or_default();
            let Value::Object(fields) = serde_json::to_value(p).expect("profile serializes") else {
                unreachable!("profile is a struct");
            };
            obj.extend(fields);
            push_line(&mut out, obj);
        }
        Some(out)
    }
}

fn invalid(c: &CommentRecord, reason: String) -> CorpusError {
    CorpusError::InvalidRecord {
        id: c.id.clone(),
        reason,
    }
}

/// Removes comments whose parent is missing, repeating until every
/// remaining parent resolves.
fn drop_orphans(mut comments: Vec<CommentRecord>) -> Vec<CommentRecord> {
    loop {
        let ids: BTreeSet<String> = comments.iter().map(|c| c.id.clone()).collect();
        let before = comments.len();
        comments.retain(|c| c.parent_id.as_ref().is_none_or(|p| ids.contains(p)));
        if comments.len() == before {
            return comments;
        }
    }
}

pub fn format_timestamp(ts: &DateTime<Utc>) -> String {
    ts.to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}

fn push_line(out: &mut String, obj: Map<String, Value>) {
    out.push_str(&Value::Object(obj).to_string());
    out.push('\n');
}

fn read_objects<R: BufRead>(file: &str, reader: R) -> Result<Vec<(usize, Map<String, Value>)>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|source| CorpusError::Io {
            path: file.to_string(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<Value>(&line) {
            Ok(Value::Object(obj)) => out.push((line_no, obj)),
            Ok(_) => {
                return Err(CorpusError::Malformed {
                    file: file.to_string(),
                    line: line_no,
                    field: "<record>".into(),
                    message: "expected a JSON object".into(),
                })
            }
            Err(e) => {
                return Err(CorpusError::Malformed {
                    file: file.to_string(),
                    line: line_no,
                    field: "<record>".into(),
                    message: e.to_string(),
                })
            }
        }
    }
    Ok(out)
}

/// Field extraction from one JSON object, leaving unknown keys in `rest`.
struct Fields<'a> {
    file: &'a str,
    line: usize,
    rest: Map<String, Value>,
}

impl<'a> Fields<'a> {
    fn new(file: &'a str, line: usize, rest: Map<String, Value>) -> Self {
        Fields { file, line, rest }
    }

    fn err(&self, field: &str, message: &str) -> CorpusError {
        CorpusError::Malformed {
            file: self.file.to_string(),
            line: self.line,
            field: field.to_string(),
            message: message.to_string(),
        }
    }

    fn take(&mut self, field: &str) -> Option<Value> {
        self.rest.remove(field)
    }

    fn string(&mut self, field: &str) -> Result<String> {
        match self.take(field) {
            Some(Value::String(s)) => Ok(s),
            Some(other) => Err(self.err(field, &format!("expected string, got {other}"))),
            None => Err(self.err(field, "missing")),
        }
    }

    fn opt_string(&mut self, field: &str) -> Result<Option<String>> {
        match self.take(field) {
            None | Some(Value::Null) => Ok(None),
            Some(Value::String(s)) => Ok(Some(s)),
            Some(other) => Err(self.err(field, &format!("expected string or null, got {other}"))),
        }
    }

    fn timestamp(&mut self, field: &str) -> Result<DateTime<Utc>> {
        let raw = self.string(field)?;
        let parsed = DateTime::parse_from_rfc3339(&raw)
            .map_err(|e| self.err(field, &format!("invalid ISO-8601 timestamp `{raw}`: {e}")))?;
        let utc = parsed.with_timezone(&Utc);
        Ok(utc.with_nanosecond(0).expect("zero nanoseconds is valid"))
    }

    fn count(&mut self, field: &str) -> Result<u64> {
        match self.take(field) {
            Some(Value::Number(n)) => n
                .as_u64()
                .ok_or_else(|| self.err(field, &format!("expected non-negative integer, got {n}"))),
            Some(other) => Err(self.err(field, &format!("expected integer, got {other}"))),
            None => Err(self.err(field, "missing")),
        }
    }

    fn percentage(&mut self, field: &str) -> Result<f64> {
        match self.take(field) {
            Some(Value::Number(n)) => {
                let v = n.as_f64().unwrap_or(f64::NAN);
                if (0.0..=100.0).contains(&v) {
                    Ok(v)
                } else {
                    Err(self.err(field, &format!("expected value in [0, 100], got {n}")))
                }
            }
            Some(other) => Err(self.err(field, &format!("expected number, got {other}"))),
            None => Err(self.err(field, "missing")),
        }
    }
}
