//! Subcommand implementations. Every step reads its inputs from the config
//! or from artifacts an earlier step left in the output directory, and
//! writes deterministic CSV/JSON files atomically.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context as _, Result};
use serde::Serialize;
use serde_json::json;
use sha2::{Digest, Sha256};

use fallacy_forensics_core::classifier::{
    kfold_evaluate, label_fraction_sweep, load_labeled, train_baseline, BaselineModel, LabeledExample, Token,
};
use fallacy_forensics_core::corpus::{ingest_corpus, IngestOptions};
use fallacy_forensics_core::explain::{align_tokens, is_special_token, render_highlight, select_trigger_trigrams};
use fallacy_forensics_core::networks::{
    activity_groups, build_reply_networks, reciprocity, reciprocity_surface, top_tables, topic_overlap,
    ReciprocitySurface,
};
use fallacy_forensics_core::scorer::{
    check_protocol, score_corpus, AnnotatedCorpus, AnnotationMeta, BuiltinScorer, ExternalScorer, ScoreOptions, Scorer,
};
use fallacy_forensics_core::synth::{generate, SynthConfig};
use fallacy_forensics_core::temporal::{
    build_signal_matrix, detect_changepoints, monthly_series, moving_average, partition_corpus, MonthlySeries,
};
use fallacy_forensics_core::users::{ah_summary, compare_user_characteristics};
use fallacy_forensics_core::wordshift::{proportional_weight, word_distribution, word_shift};
use fallacy_forensics_core::{write_atomic, Corpus, MonthIndex};

use crate::config::{PipelineConfig, ScorerKind};

pub const MODEL_FILE: &str = "model.json";
pub const ANNOTATIONS_FILE: &str = "annotations.jsonl";
pub const ANNOTATIONS_META_FILE: &str = "annotations.meta.json";
pub const SEGMENTATION_FILE: &str = "temporal/segmentation.json";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const RESOLVED_CONFIG_FILE: &str = "config.resolved";

/// Config written next to the bundled synthetic data.
pub const EXAMPLE_CONFIG: &str = r#"# Pipeline over the bundled synthetic corpus. Relative paths resolve
# against this file's directory.
seed = 42

[corpus]
posts = "posts.jsonl"
comments = "comments.jsonl"
profiles = "profiles.jsonl"
labeled = "labeled.jsonl"
salt = "synthetic-demo-salt"

[classifier]
k = 10
fractions = [0.05, 0.1, 0.25, 0.5, 1.0]
sweep_seeds = [1, 2, 3, 4, 5]

[scorer]
kind = "builtin"
threshold = 0.5

[networks]
lambdas = [0, 5, 10, 20, 50, 100]
rhos = [0, 10, 20, 50, 100, 200]
group_boundaries = [10, 50, 100, 2000]
overlap_reference = "politics"

[temporal]
quantities = ["total_comments", "ah_fraction", "ah_user_fraction"]
k = 2
min_size = 6
window = 12

[wordshift]
pi1 = 0.5
top_n = 30
"#;

pub struct Context {
    pub config: PipelineConfig,
    /// Directory relative input paths are resolved against.
    pub base: PathBuf,
    pub out: PathBuf,
    failures: Vec<String>,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn pct3(v: f64) -> String {
    format!("{v:.3}")
}

impl Context {
    pub fn new(config: PipelineConfig, base: PathBuf, out: PathBuf) -> Self {
        Context {
            config,
            base,
            out,
            failures: Vec::new(),
        }
    }

    pub fn failures(&self) -> &[String] {
        &self.failures
    }

    fn fail(&mut self, what: String) {
        log::error!("{what}");
        self.failures.push(what);
    }

    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base.join(p)
        }
    }

    fn write(&self, rel: &str, bytes: &[u8]) -> Result<()> {
        let path = self.out.join(rel);
        write_atomic(&path, bytes).with_context(|| format!("writing {}", path.display()))
    }

    fn write_json<T: Serialize>(&self, rel: &str, value: &T) -> Result<()> {
        let mut s = serde_json::to_string_pretty(value)?;
        s.push('\n');
        self.write(rel, s.as_bytes())
    }

    fn write_csv(&self, rel: &str, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header)?;
        for r in rows {
            w.write_record(r)?;
        }
        self.write(rel, &w.into_inner().map_err(|e| anyhow!("{e}"))?)
    }

    fn require(&self, rel: &str, producer: &str) -> Result<PathBuf> {
        let p = self.out.join(rel);
        if !p.exists() {
            bail!("missing {}: run `{producer}` first", p.display());
        }
        Ok(p)
    }

    pub fn write_resolved_config(&self) -> Result<()> {
        self.write(RESOLVED_CONFIG_FILE, self.config.to_toml().as_bytes())
    }

    fn labeled(&self) -> Result<Vec<LabeledExample>> {
        let p = self
            .config
            .corpus
            .labeled
            .as_ref()
            .ok_or_else(|| anyhow!("corpus.labeled is not set"))?;
        let path = self.resolve(p);
        load_labeled(&path).with_context(|| format!("loading {}", path.display()))
    }

    pub fn load_corpus(&self) -> Result<Corpus> {
        let posts = self.require("corpus/posts.jsonl", "ingest")?;
        let comments = self.require("corpus/comments.jsonl", "ingest")?;
        let profiles = self.out.join("corpus/profiles.jsonl");
        let profiles = profiles.exists().then_some(profiles);
        Ok(ingest_corpus(
            &posts,
            &comments,
            profiles.as_deref(),
            &IngestOptions::default(),
        )?)
    }

    pub fn load_annotations<'c>(&self, corpus: &'c Corpus) -> Result<AnnotatedCorpus<'c>> {
        let meta_path = self.require(ANNOTATIONS_META_FILE, "score")?;
        let path = self.require(ANNOTATIONS_FILE, "score")?;
        let meta: AnnotationMeta = serde_json::from_reader(BufReader::new(File::open(meta_path)?))?;
        Ok(AnnotatedCorpus::from_jsonl(
            corpus,
            meta,
            BufReader::new(File::open(path)?),
        )?)
    }
}

/// Writes the synthetic bundle and an example config into `dir`.
pub fn synth(dir: &Path, seed: u64) -> Result<Vec<PathBuf>> {
    let bundle = generate(&SynthConfig::default(), seed);
    let mut written = Vec::new();
    for (name, content) in bundle.files() {
        let p = dir.join(name);
        write_atomic(&p, content.as_bytes())?;
        written.push(p);
    }
    let p = dir.join("config.toml");
    write_atomic(&p, EXAMPLE_CONFIG.as_bytes())?;
    written.push(p);
    Ok(written)
}

pub fn ingest(ctx: &mut Context) -> Result<()> {
    let c = &ctx.config.corpus;
    let posts = ctx.resolve(c.posts.as_ref().ok_or_else(|| anyhow!("corpus.posts is not set"))?);
    let comments = ctx.resolve(
        c.comments
            .as_ref()
            .ok_or_else(|| anyhow!("corpus.comments is not set"))?,
    );
    let profiles = c.profiles.as_ref().map(|p| ctx.resolve(p));
    let opts = IngestOptions {
        salt: c.salt.as_ref().map(|s| s.as_bytes().to_vec()),
        lenient: c.lenient,
    };
    let corpus = ingest_corpus(&posts, &comments, profiles.as_deref(), &opts)?;
    ctx.write("corpus/posts.jsonl", corpus.posts_jsonl().as_bytes())?;
    ctx.write("corpus/comments.jsonl", corpus.comments_jsonl().as_bytes())?;
    if let Some(p) = corpus.profiles_jsonl() {
        ctx.write("corpus/profiles.jsonl", p.as_bytes())?;
    }
    let mut topics = BTreeMap::new();
    for t in corpus.topics() {
        let idx = corpus.topic_comments(t)?;
        let top = idx.iter().filter(|&&i| corpus.comments()[i].is_top_level()).count();
        topics.insert(
            t.clone(),
            json!({
                "posts": corpus.posts().iter().filter(|p| &p.topic == t).count(),
                "comments": idx.len(),
                "top_level_comments": top,
                "replies": idx.len() - top,
                "authors": corpus.structural_counts(t)?.len(),
            }),
        );
    }
    let range = corpus.month_range().map(|(a, b)| json!([a.to_string(), b.to_string()]));
    ctx.write_json(
        "ingest_summary.json",
        &json!({
            "posts": corpus.posts().len(),
            "comments": corpus.comments().len(),
            "dropped_comments": corpus.dropped_comments(),
            "authors": corpus.authors().count(),
            "profiles": corpus.profiles().map(<[_]>::len),
            "month_range": range,
            "topics": topics,
        }),
    )?;
    log::info!(
        "ingested {} posts, {} comments",
        corpus.posts().len(),
        corpus.comments().len()
    );
    Ok(())
}

pub fn train(ctx: &mut Context) -> Result<()> {
    let examples = ctx.labeled()?;
    let model = train_baseline(&examples, &ctx.config.classifier.baseline(), ctx.config.seed)?;
    ctx.write(MODEL_FILE, model.to_json().as_bytes())?;
    let positives = examples.iter().filter(|e| e.label.is_adhominem()).count();
    ctx.write_json(
        "train_summary.json",
        &json!({
            "examples": examples.len(),
            "adhominem": positives,
            "none": examples.len() - positives,
            "epochs": model.epochs,
            "converged": model.converged,
            "active_features": model.weights.len(),
            "bias": model.bias,
        }),
    )?;
    Ok(())
}

pub fn evaluate(ctx: &mut Context) -> Result<()> {
    let examples = ctx.labeled()?;
    let c = &ctx.config.classifier;
    let m = kfold_evaluate(&examples, c.k, &c.baseline(), ctx.config.seed)?;
    ctx.write_json("evaluation.json", &m)?;
    let row = |name: &str, cm: &fallacy_forensics_core::stats::ClassMetrics| {
        vec![
            name.to_string(),
            cm.precision.to_string(),
            cm.recall.to_string(),
            cm.f1.to_string(),
            cm.support.to_string(),
        ]
    };
    ctx.write_csv(
        "evaluation.csv",
        &["class", "precision", "recall", "f1", "support"],
        &[row("adhominem", &m.adhominem), row("none", &m.none)],
    )?;
    log::info!(
        "{}-fold accuracy {:.4}, macro-F1 {:.4}",
        m.folds,
        m.accuracy,
        m.macro_f1
    );
    Ok(())
}

pub fn sweep(ctx: &mut Context) -> Result<()> {
    let examples = ctx.labeled()?;
    let c = ctx.config.classifier.clone();
    let rows = label_fraction_sweep(&examples, &c.fractions, c.k, &c.sweep_seeds, &c.baseline())?;
    ctx.write_json("sweep.json", &rows)?;
    let csv_rows: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.fraction.to_string(),
                fmt_opt(r.mean_macro_f1),
                fmt_opt(r.std_macro_f1),
                r.per_seed.len().to_string(),
                r.error.clone().unwrap_or_default(),
            ]
        })
        .collect();
    ctx.write_csv(
        "sweep.csv",
        &["fraction", "mean_macro_f1", "std_macro_f1", "seeds", "error"],
        &csv_rows,
    )?;
    for r in &rows {
        if let Some(e) = &r.error {
            ctx.fail(format!("sweep cell fraction={}: {e}", r.fraction));
        }
    }
    Ok(())
}

pub fn score(ctx: &mut Context) -> Result<()> {
    let corpus = ctx.load_corpus()?;
    let s = &ctx.config.scorer;
    let opts = ScoreOptions {
        threshold: s.threshold,
        batch_size: s.batch_size,
        skip_failed: s.skip_failed,
    };
    let model;
    let external;
    let scorer: &dyn Scorer = match s.kind {
        ScorerKind::Builtin => {
            let path = match &s.model {
                Some(p) => ctx.resolve(p),
                None => ctx.require(MODEL_FILE, "train")?,
            };
            model = BaselineModel::load(&path).with_context(|| format!("loading {}", path.display()))?;
            &BuiltinScorer { model: &model }
        }
        ScorerKind::External => {
            external = ExternalScorer::new(&s.command).ok_or_else(|| anyhow!("scorer.command is empty"))?;
            &external
        }
    };
    let annotated = score_corpus(&corpus, scorer, &opts)?;
    ctx.write(ANNOTATIONS_FILE, annotated.to_jsonl().as_bytes())?;
    ctx.write_json(ANNOTATIONS_META_FILE, &annotated.meta)?;
    if annotated.meta.failed > 0 {
        log::warn!("{} comments unscored", annotated.meta.failed);
    }
    Ok(())
}

pub fn explain(ctx: &mut Context) -> Result<()> {
    let corpus = ctx.load_corpus()?;
    let annotated = ctx.load_annotations(&corpus)?;
    let mut flagged: Vec<(usize, f64)> = annotated
        .annotations()
        .iter()
        .enumerate()
        .filter_map(|(i, a)| a.as_ref().filter(|a| a.label).map(|a| (i, a.p)))
        .collect();
    flagged.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    flagged.truncate(ctx.config.explain.max_comments);

    let mut lines = String::new();
    let (mut no_tokens, mut unaligned) = (0, 0);
    for (i, _) in flagged {
        let comment = &corpus.comments()[i];
        let ann = annotated.annotations()[i].as_ref().unwrap();
        let Some(scores) = &ann.token_scores else {
            no_tokens += 1;
            continue;
        };
        let tokens: Option<Vec<Token>> = if scores.iter().all(|t| t.start.is_some() && t.end.is_some()) {
            Some(
                scores
                    .iter()
                    .map(|t| Token {
                        text: t.token.clone(),
                        start: t.start.unwrap(),
                        end: t.end.unwrap(),
                    })
                    .collect(),
            )
        } else {
            let surface: Vec<&str> = scores.iter().map(|t| t.token.as_str()).collect();
            align_tokens(&comment.text, &surface)
        };
        let Some(tokens) = tokens else {
            unaligned += 1;
            continue;
        };
        let pairs: Vec<(&str, f64)> = scores.iter().map(|t| (t.token.as_str(), t.score)).collect();
        let spans = select_trigger_trigrams(&pairs, ctx.config.explain.trigrams, is_special_token);
        match render_highlight(&comment.id, &comment.text, &tokens, &spans) {
            Ok(h) => {
                lines.push_str(&serde_json::to_string(&h)?);
                lines.push('\n');
            }
            Err(e) => {
                log::warn!("comment {}: {e}", comment.id);
                unaligned += 1;
            }
        }
    }
    ctx.write("highlights.jsonl", lines.as_bytes())?;
    ctx.write_json(
        "explain_summary.json",
        &json!({
            "highlighted": lines.lines().count(),
            "without_token_scores": no_tokens,
            "unaligned": unaligned,
        }),
    )?;
    Ok(())
}

fn surface_rows(surface: &ReciprocitySurface) -> Vec<Vec<String>> {
    surface
        .cells
        .iter()
        .map(|c| {
            vec![
                c.lambda.to_string(),
                c.rho.to_string(),
                c.authors.to_string(),
                fmt_opt(c.support_reciprocity),
                fmt_opt(c.dispute_reciprocity),
            ]
        })
        .collect()
}

const SURFACE_HEADER: [&str; 5] = ["lambda", "rho", "authors", "support_reciprocity", "dispute_reciprocity"];

pub fn analyze_networks(ctx: &mut Context) -> Result<()> {
    let corpus = ctx.load_corpus()?;
    let annotated = ctx.load_annotations(&corpus)?;
    let n = ctx.config.networks.clone();
    let mut graphs = BTreeMap::new();
    for topic in corpus.topics() {
        let nets = build_reply_networks(&corpus, topic, None)?;
        graphs.insert(
            topic.clone(),
            json!({
                "support_edges": nets.support.edges.len(),
                "support_weight": nets.support.total_weight(),
                "support_reciprocity": reciprocity(&nets.support).ok(),
                "dispute_edges": nets.dispute.edges.len(),
                "dispute_weight": nets.dispute.total_weight(),
                "dispute_reciprocity": reciprocity(&nets.dispute).ok(),
                "ignored_replies": nets.ignored_replies,
                "top_level_comments": nets.top_level_comments,
            }),
        );

        let surface = reciprocity_surface(&corpus, topic, &n.lambdas, &n.rhos)?;
        ctx.write_csv(
            &format!("networks/surface_{topic}.csv"),
            &SURFACE_HEADER,
            &surface_rows(&surface),
        )?;

        let groups = activity_groups(&annotated, topic, &n.group_boundaries)?;
        let mut rows: Vec<Vec<String>> = groups
            .rows
            .iter()
            .map(|r| {
                vec![
                    r.range.label(),
                    r.users.to_string(),
                    r.comments.to_string(),
                    r.ah_comments.to_string(),
                    pct3(r.pct_users),
                    pct3(r.pct_comments),
                    r.pct_adhominem.map(pct3).unwrap_or_default(),
                ]
            })
            .collect();
        rows.push(vec![
            "total".into(),
            groups.total_users.to_string(),
            groups.total_comments.to_string(),
            groups.rows.iter().map(|r| r.ah_comments).sum::<u64>().to_string(),
            pct3(groups.rows.iter().map(|r| r.pct_users).sum()),
            pct3(groups.rows.iter().map(|r| r.pct_comments).sum()),
            groups.total_pct_adhominem.map(pct3).unwrap_or_default(),
        ]);
        ctx.write_csv(
            &format!("networks/groups_{topic}.csv"),
            &[
                "group",
                "users",
                "comments",
                "ah_comments",
                "pct_users",
                "pct_comments",
                "pct_adhominem",
            ],
            &rows,
        )?;

        let top = top_tables(&corpus, topic, n.top_n)?;
        let rows: Vec<Vec<String>> = (0..top.top_posters.len().max(top.top_receivers.len()))
            .map(|i| {
                let p = top.top_posters.get(i);
                let r = top.top_receivers.get(i);
                vec![
                    (i + 1).to_string(),
                    p.map(|x| x.author.to_string()).unwrap_or_default(),
                    p.map(|x| x.count.to_string()).unwrap_or_default(),
                    r.map(|x| x.author.to_string()).unwrap_or_default(),
                    r.map(|x| x.count.to_string()).unwrap_or_default(),
                ]
            })
            .collect();
        ctx.write_csv(
            &format!("networks/top_{topic}.csv"),
            &["rank", "poster", "top_level_comments", "receiver", "direct_replies"],
            &rows,
        )?;
        ctx.write_json(&format!("networks/top_{topic}.json"), &top)?;
    }
    ctx.write_json("networks/graphs.json", &graphs)?;

    let reference = n.overlap_reference.clone();
    if corpus.topics().contains(&reference) {
        let buckets = n.overlap_buckets();
        let mut rows = Vec::new();
        for topic in corpus.topics().iter().filter(|t| **t != reference) {
            for cell in topic_overlap(&corpus, topic, &reference, &buckets)? {
                rows.push(vec![
                    topic.clone(),
                    cell.bucket.label(),
                    cell.users.to_string(),
                    cell.overlapping.to_string(),
                    fmt_opt(cell.fraction),
                ]);
            }
        }
        ctx.write_csv(
            "networks/overlap.csv",
            &["topic", "bucket", "users", &format!("also_in_{reference}"), "fraction"],
            &rows,
        )?;
    } else {
        ctx.fail(format!(
            "networks overlap: reference topic `{reference}` is not in the corpus"
        ));
    }
    Ok(())
}

fn series_rows(s: &MonthlySeries, window: usize) -> Result<Vec<Vec<String>>> {
    let f = |q| moving_average(&s.values(q), window);
    use fallacy_forensics_core::temporal::Quantity::*;
    let (tc, af, uf) = (f(TotalComments)?, f(AhFraction)?, f(AhUserFraction)?);
    Ok(s.months
        .iter()
        .enumerate()
        .map(|(i, m)| {
            vec![
                m.month.to_string(),
                m.total_comments.to_string(),
                m.ah_comments.to_string(),
                m.ah_fraction.to_string(),
                m.active_users.to_string(),
                m.ah_users.to_string(),
                m.ah_user_fraction.to_string(),
                m.active.to_string(),
                tc[i].to_string(),
                af[i].to_string(),
                uf[i].to_string(),
            ]
        })
        .collect())
}

const SERIES_HEADER: [&str; 11] = [
    "month",
    "total_comments",
    "ah_comments",
    "ah_fraction",
    "active_users",
    "ah_users",
    "ah_user_fraction",
    "active",
    "total_comments_smoothed",
    "ah_fraction_smoothed",
    "ah_user_fraction_smoothed",
];

fn segment_name(i: usize) -> String {
    format!("H{}", i + 1)
}

pub fn analyze_temporal(ctx: &mut Context) -> Result<()> {
    let corpus = ctx.load_corpus()?;
    let annotated = ctx.load_annotations(&corpus)?;
    let t = ctx.config.temporal.clone();
    let topics: Vec<String> = if t.topics.is_empty() {
        corpus.topics().iter().cloned().collect()
    } else {
        t.topics.clone()
    };
    let mut series = Vec::new();
    for topic in &topics {
        let s = monthly_series(&annotated, topic)?;
        ctx.write_csv(
            &format!("temporal/series_{topic}.csv"),
            &SERIES_HEADER,
            &series_rows(&s, t.window)?,
        )?;
        series.push(s);
    }
    let smoothing = t.smooth_before_detect.then_some(t.window);
    let signal = build_signal_matrix(&series, &t.quantities, smoothing)?;
    let seg = detect_changepoints(&signal, t.k, t.min_size, t.gamma)?;
    let start = signal.start.expect("built from series");
    let months: Vec<String> = seg
        .change_points
        .iter()
        .map(|&c| start.offset(c as i32).to_string())
        .collect();
    ctx.write_json(
        SEGMENTATION_FILE,
        &json!({
            "start_month": start.to_string(),
            "months": signal.len(),
            "change_points": seg.change_points,
            "change_point_months": months,
            "k": seg.k,
            "min_size": t.min_size,
            "gamma": seg.gamma,
            "total_cost": seg.total_cost,
            "segment_costs": seg.segment_costs,
            "channels": signal.channels,
            "dropped_channels": signal.dropped,
            "smoothed_before_detection": t.smooth_before_detect,
        }),
    )?;

    let parts = partition_corpus(&corpus, &seg.change_points)?;
    let bounds = seg.bounds(signal.len());
    let mut seg_rows = Vec::new();
    let mut recip_rows = Vec::new();
    let n = ctx.config.networks.clone();
    for (i, part) in parts.iter().enumerate() {
        let sub = annotated.restrict(part);
        let first = start.offset(bounds[i] as i32);
        let last = start.offset(bounds[i + 1] as i32 - 1);
        for topic in &topics {
            let idx = part.topic_comments(topic)?;
            let scored: Vec<bool> = idx.iter().filter_map(|&j| sub.is_adhominem(j)).collect();
            let ah = scored.iter().filter(|&&b| b).count();
            seg_rows.push(vec![
                segment_name(i),
                topic.clone(),
                first.to_string(),
                last.to_string(),
                idx.len().to_string(),
                ah.to_string(),
                fmt_opt((!scored.is_empty()).then(|| ah as f64 / scored.len() as f64)),
            ]);
            let surface = reciprocity_surface(part, topic, &n.lambdas, &n.rhos)?;
            for mut row in surface_rows(&surface) {
                row.insert(0, topic.clone());
                row.insert(0, segment_name(i));
                recip_rows.push(row);
            }
        }
    }
    ctx.write_csv(
        "temporal/segments.csv",
        &[
            "segment",
            "topic",
            "first_month",
            "last_month",
            "comments",
            "ah_comments",
            "ah_fraction",
        ],
        &seg_rows,
    )?;
    let mut header = vec!["segment", "topic"];
    header.extend(SURFACE_HEADER);
    ctx.write_csv("temporal/segment_reciprocity.csv", &header, &recip_rows)?;
    log::info!("change points at {}", months.join(", "));
    Ok(())
}

fn load_change_points(ctx: &Context) -> Result<Vec<usize>> {
    let p = ctx.require(SEGMENTATION_FILE, "analyze temporal")?;
    let v: serde_json::Value = serde_json::from_reader(BufReader::new(File::open(&p)?))?;
    serde_json::from_value(v["change_points"].clone()).with_context(|| format!("reading {}", p.display()))
}

pub fn analyze_wordshift(ctx: &mut Context) -> Result<()> {
    let corpus = ctx.load_corpus()?;
    let cps = load_change_points(ctx)?;
    let parts = partition_corpus(&corpus, &cps)?;
    let w = ctx.config.wordshift.clone();
    let stop: BTreeSet<String> = w.stop_words.iter().map(|s| s.to_lowercase()).collect();
    let stop = (!stop.is_empty()).then_some(&stop);
    let mut dists = Vec::new();
    for (i, part) in parts.iter().enumerate() {
        match word_distribution(part, stop) {
            Ok(d) => dists.push(Some(d)),
            Err(e) => {
                ctx.fail(format!("wordshift {}: {e}", segment_name(i)));
                dists.push(None);
            }
        }
    }
    let mut pairs = Vec::new();
    for i in 0..dists.len() {
        for j in i + 1..dists.len() {
            let (Some(p), Some(q)) = (&dists[i], &dists[j]) else {
                continue;
            };
            let pi1 = if w.proportional {
                proportional_weight(p, q)
            } else {
                w.pi1
            };
            let jsd = fallacy_forensics_core::wordshift::jsd(p, q, pi1)?;
            let entries = word_shift(p, q, pi1, w.top_n)?;
            let rows: Vec<Vec<String>> = entries
                .iter()
                .enumerate()
                .map(|(r, e)| {
                    vec![
                        (r + 1).to_string(),
                        e.word.clone(),
                        e.contribution.to_string(),
                        match e.side {
                            fallacy_forensics_core::wordshift::Side::First => segment_name(i),
                            fallacy_forensics_core::wordshift::Side::Second => segment_name(j),
                        },
                        e.p_first.to_string(),
                        e.p_second.to_string(),
                    ]
                })
                .collect();
            let name = format!("{}_{}", segment_name(i), segment_name(j));
            ctx.write_csv(
                &format!("wordshift/{name}.csv"),
                &["rank", "word", "contribution_bits", "side", "p_first", "p_second"],
                &rows,
            )?;
            pairs.push(json!({
                "first": segment_name(i),
                "second": segment_name(j),
                "pi1": pi1,
                "jsd_bits": jsd,
                "vocabulary_first": p.vocabulary_size(),
                "vocabulary_second": q.vocabulary_size(),
            }));
        }
    }
    ctx.write_json("wordshift/summary.json", &pairs)?;
    Ok(())
}

pub fn analyze_users(ctx: &mut Context) -> Result<()> {
    let corpus = ctx.load_corpus()?;
    let annotated = ctx.load_annotations(&corpus)?;
    let mut rows = Vec::new();
    for topic in corpus.topics() {
        match ah_summary(&annotated, topic) {
            Ok(s) => {
                let b = &s.band;
                rows.push(vec![
                    topic.clone(),
                    s.scored_comments.to_string(),
                    s.ah_comments.to_string(),
                    pct3(100.0 * b.point),
                    pct3(100.0 * b.wilson95.0),
                    pct3(100.0 * b.wilson95.1),
                    b.monthly_mean.map(|v| pct3(100.0 * v)).unwrap_or_default(),
                    b.monthly_std.map(|v| pct3(100.0 * v)).unwrap_or_default(),
                    s.users.to_string(),
                    s.ah_users.to_string(),
                    pct3(100.0 * s.ah_user_fraction),
                ]);
            }
            Err(e) => ctx.fail(format!("users summary {topic}: {e}")),
        }
    }
    ctx.write_csv(
        "users/ah_summary.csv",
        &[
            "topic",
            "scored_comments",
            "ah_comments",
            "pct_ah",
            "wilson95_lo",
            "wilson95_hi",
            "monthly_mean_pct",
            "monthly_std_pct",
            "users",
            "ah_users",
            "pct_ah_users",
        ],
        &rows,
    )?;

    match compare_user_characteristics(&annotated) {
        Ok(cmp) => {
            ctx.write_json("users/characteristics.json", &cmp)?;
            let rows: Vec<Vec<String>> = cmp
                .iter()
                .map(|c| {
                    vec![
                        c.characteristic.to_string(),
                        c.with_ah.n.to_string(),
                        fmt_opt(c.with_ah.mean),
                        fmt_opt(c.with_ah.std),
                        c.without_ah.n.to_string(),
                        fmt_opt(c.without_ah.mean),
                        fmt_opt(c.without_ah.std),
                        fmt_opt(c.mwu.as_ref().map(|m| m.u)),
                        fmt_opt(c.mwu.as_ref().map(|m| m.p_two_sided)),
                        c.mwu
                            .as_ref()
                            .map(|m| serde_json::to_value(m.method).unwrap().as_str().unwrap().to_string())
                            .unwrap_or_default(),
                    ]
                })
                .collect();
            ctx.write_csv(
                "users/characteristics.csv",
                &[
                    "characteristic",
                    "n_with_ah",
                    "mean_with_ah",
                    "std_with_ah",
                    "n_without_ah",
                    "mean_without_ah",
                    "std_without_ah",
                    "u",
                    "p_two_sided",
                    "method",
                ],
                &rows,
            )?;
            for c in &cmp {
                if let Some(e) = &c.error {
                    ctx.fail(format!("users {}: {e}", c.characteristic));
                }
            }
        }
        Err(e) => ctx.fail(format!("users characteristics: {e}")),
    }
    Ok(())
}

/// sha-256 of every file under the output directory except the manifest.
pub fn manifest(out: &Path) -> Result<BTreeMap<String, String>> {
    fn walk(dir: &Path, root: &Path, acc: &mut BTreeMap<String, String>) -> Result<()> {
        let mut entries: Vec<_> = std::fs::read_dir(dir)?.collect::<std::io::Result<_>>()?;
        entries.sort_by_key(|e| e.file_name());
        for e in entries {
            let p = e.path();
            let name = e.file_name();
            if name.to_string_lossy().starts_with('.') {
                continue;
            }
            if p.is_dir() {
                walk(&p, root, acc)?;
                continue;
            }
            let rel = p.strip_prefix(root)?.to_string_lossy().replace('\\', "/");
            if rel == MANIFEST_FILE {
                continue;
            }
            acc.insert(rel, hex::encode(Sha256::digest(std::fs::read(&p)?)));
        }
        Ok(())
    }
    let mut acc = BTreeMap::new();
    walk(out, out, &mut acc)?;
    Ok(acc)
}

pub fn report(ctx: &mut Context) -> Result<()> {
    let files = manifest(&ctx.out)?;
    ctx.write_json(MANIFEST_FILE, &json!({ "files": files }))?;
    log::info!("manifest lists {} files", files.len());
    Ok(())
}

pub fn run_all(ctx: &mut Context) -> Result<()> {
    ingest(ctx)?;
    if ctx.config.corpus.labeled.is_some() {
        train(ctx)?;
        evaluate(ctx)?;
        sweep(ctx)?;
    }
    score(ctx)?;
    explain(ctx)?;
    analyze_networks(ctx)?;
    analyze_temporal(ctx)?;
    analyze_wordshift(ctx)?;
    analyze_users(ctx)?;
    report(ctx)
}

/// Runs the protocol conformance checks; returns whether all passed.
pub fn check_scorer(command: &[String]) -> Result<bool> {
    let scorer = ExternalScorer::new(command).ok_or_else(|| anyhow!("no scorer command given"))?;
    let checks = check_protocol(&scorer);
    for c in &checks {
        if c.passed {
            println!("PASS {}", c.name);
        } else {
            println!("FAIL {}: {}", c.name, c.detail);
        }
    }
    Ok(checks.iter().all(|c| c.passed))
}

/// Month label helper shared with tests.
pub fn month_label(m: MonthIndex) -> String {
    m.to_string()
}
