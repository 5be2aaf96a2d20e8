//! Deterministic synthetic data: a three-topic forum dump with planted
//! temporal regimes, user cohorts and profile shifts, and a planted-lexicon
//! labeled set for the baseline classifier.

use chrono::{DateTime, Duration, TimeZone, Utc};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::IndexedRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::classifier::{Label, LabeledExample};
use crate::corpus::{format_timestamp, MonthIndex};
use crate::util::substream;

pub const TOPICS: [&str; 3] = ["politics", "science", "law"];

pub const INSULTS: &[&str] = &[
    "idiot",
    "moron",
    "fool",
    "stupid",
    "clown",
    "ignorant",
    "pathetic",
    "liar",
    "troll",
    "hypocrite",
    "imbecile",
    "dimwit",
    "buffoon",
    "halfwit",
    "nitwit",
    "loser",
    "dense",
    "clueless",
];

pub const ARGUMENTS: &[&str] = &[
    "evidence",
    "source",
    "study",
    "argument",
    "data",
    "reasoning",
    "premise",
    "conclusion",
    "statistics",
    "citation",
    "therefore",
    "analysis",
    "research",
    "consider",
    "example",
    "counterpoint",
    "survey",
    "logic",
];

const FILLER: &[&str] = &[
    "the", "a", "you", "your", "this", "that", "is", "are", "really", "point", "think", "about", "people", "just",
    "because", "what", "why", "it", "not", "so", "and", "don't", "you're", "we", "they", "here", "there", "when",
    "more", "most", "very", "claim", "post", "thread", "view", "agree",
];

const TOPIC_WORDS: [&[&str]; 3] = [
    &[
        "election",
        "policy",
        "senate",
        "vote",
        "tax",
        "government",
        "party",
        "campaign",
    ],
    &[
        "climate",
        "vaccine",
        "physics",
        "experiment",
        "theory",
        "species",
        "energy",
        "genome",
    ],
    &[
        "court",
        "ruling",
        "statute",
        "judge",
        "rights",
        "appeal",
        "contract",
        "precedent",
    ],
];

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub users: usize,
    pub posts: usize,
    pub comments: usize,
    pub first_month: MonthIndex,
    pub last_month: MonthIndex,
    /// First months of the second and third regimes.
    pub regime_starts: [MonthIndex; 2],
    /// Relative monthly volume per regime.
    pub volume: [f64; 3],
    /// Base ad hominem rate per regime for ordinary users.
    pub ah_rate: [f64; 3],
    /// Users at the end of the activity ranking who never post ad hominem.
    pub civil_users: usize,
    pub labeled_docs: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            users: 60,
            posts: 600,
            comments: 5000,
            first_month: MonthIndex::new(2008, 2),
            last_month: MonthIndex::new(2021, 11),
            regime_starts: [MonthIndex::new(2017, 3), MonthIndex::new(2019, 10)],
            volume: [1.0, 3.0, 2.0],
            ah_rate: [0.10, 0.38, 0.22],
            civil_users: 15,
            labeled_docs: 2000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cohort {
    Aggressive,
    Ordinary,
    Civil,
}

impl SynthConfig {
    pub fn user_name(&self, i: usize) -> String {
        format!("user_{i:02}")
    }

    pub fn cohort(&self, i: usize) -> Cohort {
        if i >= self.users - self.civil_users {
            Cohort::Civil
        } else if i % 4 == 1 {
            Cohort::Aggressive
        } else {
            Cohort::Ordinary
        }
    }

    pub fn regime(&self, m: MonthIndex) -> usize {
        self.regime_starts.iter().filter(|&&s| m >= s).count()
    }

    fn month_count(&self) -> usize {
        self.first_month.months_until(self.last_month) as usize + 1
    }
}

/// Generated JSON Lines files. `gold` holds `{"id","label"}` for every
/// comment.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthBundle {
    pub posts: String,
    pub comments: String,
    pub profiles: String,
    pub gold: String,
    pub labeled: String,
}

impl SynthBundle {
    pub fn files(&self) -> [(&'static str, &str); 5] {
        [
            ("posts.jsonl", &self.posts),
            ("comments.jsonl", &self.comments),
            ("profiles.jsonl", &self.profiles),
            ("gold.jsonl", &self.gold),
            ("labeled.jsonl", &self.labeled),
        ]
    }
}

fn sentence(rng: &mut ChaCha8Rng, topic: usize, adhominem: bool) -> String {
    let len = rng.random_range(8..17);
    let lexicon = if adhominem { INSULTS } else { ARGUMENTS };
    let mut words: Vec<&str> = (0..len)
        .map(|_| {
            let r: f64 = rng.random();
            if r < 0.6 {
                *FILLER.choose(rng).unwrap()
            } else if r < 0.8 {
                *TOPIC_WORDS[topic].choose(rng).unwrap()
            } else {
                *lexicon.choose(rng).unwrap()
            }
        })
        .collect();
    if !words.iter().any(|w| lexicon.contains(w)) {
        let at = rng.random_range(0..=words.len());
        words.insert(at, *lexicon.choose(rng).unwrap());
    }
    let mut text = String::new();
    for (i, w) in words.iter().enumerate() {
        if i > 0 {
            text.push_str(if rng.random_bool(0.08) { ", " } else { " " });
        }
        if i == 0 {
            let mut cs = w.chars();
            let first = cs.next().unwrap();
            text.extend(first.to_uppercase());
            text.push_str(cs.as_str());
        } else {
            text.push_str(w);
        }
    }
    text.push(*['.', '!', '?'].choose(rng).unwrap());
    text
}

/// Planted-lexicon labeled set: ad hominem texts carry insults, the rest
/// carry argument words, over shared filler and topic vocabulary.
pub fn labeled_examples(config: &SynthConfig, seed: u64) -> Vec<LabeledExample> {
    let mut rng = substream(seed, "synth/labeled");
    (0..config.labeled_docs)
        .map(|i| {
            let adhominem = rng.random_bool(0.4);
            let topic = rng.random_range(0..TOPICS.len());
            LabeledExample {
                id: format!("l{i:04}"),
                text: sentence(&mut rng, topic, adhominem),
                label: Label::from_bool(adhominem),
            }
        })
        .collect()
}

fn month_start(m: MonthIndex) -> DateTime<Utc> {
    Utc.with_ymd_and_hms(m.year(), m.month(), 1, 0, 0, 0).unwrap()
}

struct DraftComment {
    id: String,
    post: usize,
    parent: Option<usize>,
    author: usize,
    timestamp: DateTime<Utc>,
    text: String,
    reaction: Option<&'static str>,
    adhominem: bool,
}

pub fn generate(config: &SynthConfig, seed: u64) -> SynthBundle {
    let mut rng = substream(seed, "synth/corpus");
    let zipf: Vec<f64> = (0..config.users).map(|i| 1.0 / ((i + 1) as f64).powf(1.1)).collect();
    let pick_user = WeightedIndex::new(&zipf).unwrap();
    let months: Vec<MonthIndex> = (0..config.month_count())
        .map(|o| config.first_month.offset(o as i32))
        .collect();
    let pick_month = WeightedIndex::new(months.iter().map(|&m| config.volume[config.regime(m)])).unwrap();
    let pick_topic = WeightedIndex::new([0.5, 0.25, 0.25]).unwrap();

    struct Post {
        id: String,
        author: usize,
        topic: usize,
        month: MonthIndex,
        timestamp: DateTime<Utc>,
    }
    let mut posts: Vec<Post> = (0..config.posts)
        .map(|i| {
            let month = months[pick_month.sample(&mut rng)];
            let timestamp = month_start(month) + Duration::seconds(rng.random_range(0..10 * 86_400));
            Post {
                id: format!("p{i:04}"),
                author: pick_user.sample(&mut rng),
                topic: pick_topic.sample(&mut rng),
                month,
                timestamp,
            }
        })
        .collect();
    posts.sort_by(|a, b| a.timestamp.cmp(&b.timestamp).then_with(|| a.id.cmp(&b.id)));

    let mut per_post = vec![0usize; posts.len()];
    for _ in 0..config.comments {
        per_post[rng.random_range(0..posts.len())] += 1;
    }

    let mut drafts: Vec<DraftComment> = Vec::with_capacity(config.comments);
    for (p, post) in posts.iter().enumerate() {
        let regime = config.regime(post.month);
        let first = drafts.len();
        let mut clock = post.timestamp;
        for n in 0..per_post[p] {
            clock += Duration::seconds(rng.random_range(60..7200));
            let author = pick_user.sample(&mut rng);
            let rate = match config.cohort(author) {
                Cohort::Civil => 0.0,
                Cohort::Ordinary => config.ah_rate[regime],
                Cohort::Aggressive => (2.2 * config.ah_rate[regime]).min(0.9),
            };
            let adhominem = rng.random_bool(rate);
            let parent = (n > 0 && rng.random_bool(0.62)).then(|| first + rng.random_range(0..n));
            let reaction = parent.map(|_| {
                let r: f64 = rng.random();
                let (support, dispute) = if adhominem { (0.1, 0.9) } else { (0.45, 0.75) };
                if r < support {
                    "support"
                } else if r < dispute {
                    "dispute"
                } else {
                    "clarify"
                }
            });
            drafts.push(DraftComment {
                id: String::new(),
                post: p,
                parent,
                author,
                timestamp: clock,
                text: sentence(&mut rng, post.topic, adhominem),
                reaction,
                adhominem,
            });
        }
    }
    let mut order: Vec<usize> = (0..drafts.len()).collect();
    order.sort_by_key(|&i| (drafts[i].timestamp, i));
    for (rank, &i) in order.iter().enumerate() {
        drafts[i].id = format!("c{rank:05}");
    }

    let mut comments = String::new();
    let mut gold = String::new();
    for &i in &order {
        let d = &drafts[i];
        let post = &posts[d.post];
        let line = json!({
            "id": d.id,
            "post_id": post.id,
            "parent_id": d.parent.map(|q| drafts[q].id.clone()),
            "author": config.user_name(d.author),
            "timestamp": format_timestamp(&d.timestamp),
            "topic": TOPICS[post.topic],
            "text": d.text,
            "reaction": d.reaction,
        });
        comments.push_str(&line.to_string());
        comments.push('\n');
        let label = Label::from_bool(d.adhominem);
        gold.push_str(&json!({"id": d.id, "label": label}).to_string());
        gold.push('\n');
    }

    let mut post_lines = String::new();
    for post in &posts {
        let line = json!({
            "post_id": post.id,
            "author": config.user_name(post.author),
            "timestamp": format_timestamp(&post.timestamp),
            "topic": TOPICS[post.topic],
            "title": format!("On {}", TOPIC_WORDS[post.topic][post.author % TOPIC_WORDS[post.topic].len()]),
        });
        post_lines.push_str(&line.to_string());
        post_lines.push('\n');
    }

    let mut prng = substream(seed, "synth/profiles");
    let mut profiles = String::new();
    for u in 0..config.users {
        let cohort = config.cohort(u);
        let reward_points = match cohort {
            Cohort::Civil => prng.random_range(1500..3000u64),
            _ => prng.random_range(100..800u64),
        };
        let hostiles = match cohort {
            Cohort::Aggressive => prng.random_range(5..25u64),
            _ => prng.random_range(0..6u64),
        };
        let efficiency = f64::from(prng.random_range(4000..10_000u32)) / 100.0;
        let line = json!({
            "author": config.user_name(u),
            "posts": posts.iter().filter(|p| p.author == u).count(),
            "reward_points": reward_points,
            "efficiency": efficiency,
            "allies": prng.random_range(0..30u64),
            "enemies": prng.random_range(0..10u64),
            "hostiles": hostiles,
        });
        profiles.push_str(&line.to_string());
        profiles.push('\n');
    }

    let mut labeled = String::new();
    for ex in labeled_examples(config, seed) {
        labeled.push_str(&serde_json::to_string(&ex).unwrap());
        labeled.push('\n');
    }

    SynthBundle {
        posts: post_lines,
        comments,
        profiles,
        gold,
        labeled,
    }
}
