//! Scoring a corpus with the builtin model or an external classifier process.
//!
//! External scorers speak a line protocol: one `{"id","text"}` request per
//! line on stdin, one `{"id","p_adhominem","token_scores"?}` response per
//! line on stdout, diagnostics on stderr, exit status 0 on success.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Write};
use std::process::{Command, Stdio};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifier::BaselineModel;
use crate::corpus::Corpus;

#[derive(Debug, Error)]
pub enum ScorerError {
    #[error("threshold must lie in (0, 1), got {0}")]
    InvalidThreshold(f64),
    #[error("batch size must be at least 1")]
    InvalidBatchSize,
    #[error("cannot start scorer `{program}`: {source}")]
    Spawn {
        program: String,
        #[source]
        source: std::io::Error,
    },
    #[error("scorer exited with {status}; stderr:\n{stderr}")]
    ProcessFailed { status: String, stderr: String },
    #[error("scorer response line {line}: {message}")]
    BadResponse { line: usize, message: String },
    #[error("scorer returned no response for ids: {}", .0.join(", "))]
    MissingIds(Vec<String>),
    #[error("scorer returned unknown or duplicate ids: {}", .0.join(", "))]
    UnexpectedIds(Vec<String>),
    #[error("scorer returned p = {p} for `{id}`, outside [0, 1]")]
    ProbabilityOutOfRange { id: String, p: f64 },
    #[error("scorer reported an error for `{id}`: {message}")]
    Reported { id: String, message: String },
    #[error("annotation file line {line}: {message}")]
    AnnotationFile { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = ScorerError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRequest {
    pub id: String,
    pub text: String,
}

/// Token score; `start`/`end` are byte offsets into the comment text when
/// known.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotatedToken {
    pub token: String,
    pub start: Option<usize>,
    pub end: Option<usize>,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredItem {
    pub id: String,
    pub p_adhominem: f64,
    pub token_scores: Option<Vec<AnnotatedToken>>,
}

pub trait Scorer: Sync {
    /// Provenance string recorded with the annotations.
    fn identity(&self) -> String;

    /// Scores one batch. Results need not be in request order.
    fn score_batch(&self, batch: &[ScoreRequest]) -> Result<Vec<ScoredItem>>;
}

pub struct BuiltinScorer<'m> {
    pub model: &'m BaselineModel,
}

impl Scorer for BuiltinScorer<'_> {
    fn identity(&self) -> String {
        format!(
            "builtin:baseline(hash_bits={},max_ngram={},seed={})",
            self.model.config.hash_bits, self.model.config.max_ngram, self.model.seed
        )
    }

    fn score_batch(&self, batch: &[ScoreRequest]) -> Result<Vec<ScoredItem>> {
        Ok(batch
            .iter()
            .map(|r| {
                let pred = self.model.predict(&r.text);
                ScoredItem {
                    id: r.id.clone(),
                    p_adhominem: pred.p_adhominem,
                    token_scores: Some(
                        pred.token_scores
                            .into_iter()
                            .map(|t| AnnotatedToken {
                                token: t.token,
                                start: Some(t.start),
                                end: Some(t.end),
                                score: t.score,
                            })
                            .collect(),
                    ),
                }
            })
            .collect())
    }
}

/// A child process speaking the scorer line protocol; one process per batch.
#[derive(Debug, Clone)]
pub struct ExternalScorer {
    pub program: String,
    pub args: Vec<String>,
}

#[derive(Deserialize)]
struct WireResponse {
    id: String,
    #[serde(default)]
    p_adhominem: Option<f64>,
    #[serde(default)]
    token_scores: Option<Vec<(String, f64)>>,
    #[serde(default)]
    error: Option<String>,
}

impl ExternalScorer {
    pub fn new(command: &[String]) -> Option<Self> {
        let (program, args) = command.split_first()?;
        Some(ExternalScorer {
            program: program.clone(),
            args: args.to_vec(),
        })
    }

    /// Sends `requests`, returning raw stdout on exit status 0.
    pub fn run_raw(&self, requests: &[ScoreRequest]) -> Result<Vec<u8>> {
        let mut child = Command::new(&self.program)
            .args(&self.args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|source| ScorerError::Spawn {
                program: self.program.clone(),
                source,
            })?;
        let mut stdin = child.stdin.take().expect("stdin is piped");
        let mut payload = Vec::new();
        for r in requests {
            serde_json::to_writer(&mut payload, r).expect("request serializes");
            payload.push(b'\n');
        }
        let writer = std::thread::spawn(move || {
            // A scorer that exits early closes the pipe; its exit status
            // carries the real error.
            let _ = stdin.write_all(&payload);
        });
        let output = child.wait_with_output()?;
        let _ = writer.join();
        if !output.status.success() {
            return Err(ScorerError::ProcessFailed {
                status: output.status.to_string(),
                stderr: String::from_utf8_lossy(&output.stderr).into_owned(),
            });
        }
        Ok(output.stdout)
    }
}

impl Scorer for ExternalScorer {
    fn identity(&self) -> String {
        let mut parts = vec![self.program.clone()];
        parts.extend(self.args.iter().cloned());
        format!("external:{}", parts.join(" "))
    }

    fn score_batch(&self, batch: &[ScoreRequest]) -> Result<Vec<ScoredItem>> {
        let stdout = self.run_raw(batch)?;
        let mut items = Vec::with_capacity(batch.len());
        for (i, line) in stdout.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let resp: WireResponse = serde_json::from_str(&line).map_err(|e| ScorerError::BadResponse {
                line: i + 1,
                message: e.to_string(),
            })?;
            if let Some(message) = resp.error {
                return Err(ScorerError::Reported { id: resp.id, message });
            }
            let p = resp.p_adhominem.ok_or_else(|| ScorerError::BadResponse {
                line: i + 1,
                message: "missing field `p_adhominem`".into(),
            })?;
            items.push(ScoredItem {
                id: resp.id,
                p_adhominem: p,
                token_scores: resp.token_scores.map(|ts| {
                    ts.into_iter()
                        .map(|(token, score)| AnnotatedToken {
                            token,
                            start: None,
                            end: None,
                            score,
                        })
                        .collect()
                }),
            });
        }
        Ok(items)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreOptions {
    pub threshold: f64,
    pub batch_size: usize,
    /// Record failed batches as missing annotations instead of aborting.
    pub skip_failed: bool,
}

impl Default for ScoreOptions {
    fn default() -> Self {
        ScoreOptions {
            threshold: 0.5,
            batch_size: 256,
            skip_failed: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotatedComment {
    pub id: String,
    pub p: f64,
    pub label: bool,
    pub token_scores: Option<Vec<AnnotatedToken>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationMeta {
    pub scorer: String,
    pub threshold: f64,
    pub comments: usize,
    pub failed: usize,
}

/// A corpus with one annotation slot per comment, in corpus order. Slots are
/// `None` only for comments whose batch failed under `skip_failed`.
#[derive(Debug, Clone)]
pub struct AnnotatedCorpus<'c> {
    pub corpus: &'c Corpus,
    pub meta: AnnotationMeta,
    annotations: Vec<Option<AnnotatedComment>>,
}

impl<'c> AnnotatedCorpus<'c> {
    pub fn annotations(&self) -> &[Option<AnnotatedComment>] {
        &self.annotations
    }

    /// Label of the comment at corpus position `index`, if scored.
    pub fn is_adhominem(&self, index: usize) -> Option<bool> {
        self.annotations[index].as_ref().map(|a| a.label)
    }

    pub fn get(&self, id: &str) -> Option<&AnnotatedComment> {
        let i = self.corpus.comment_position(id)?;
        self.annotations[i].as_ref()
    }

    /// Annotations re-indexed onto a sub-corpus of the same corpus.
    pub fn restrict<'s>(&self, sub: &'s Corpus) -> AnnotatedCorpus<'s> {
        let annotations: Vec<Option<AnnotatedComment>> =
            sub.comments().iter().map(|c| self.get(&c.id).cloned()).collect();
        let failed = annotations.iter().filter(|a| a.is_none()).count();
        AnnotatedCorpus {
            corpus: sub,
            meta: AnnotationMeta {
                comments: annotations.len(),
                failed,
                ..self.meta.clone()
            },
            annotations,
        }
    }

    /// Builds annotations from explicit labels (`p` = 1 or 0), for analyses
    /// that start from known labels.
    pub fn from_labels(corpus: &'c Corpus, labels: &[bool]) -> Self {
        assert_eq!(labels.len(), corpus.comments().len());
        let annotations = corpus
            .comments()
            .iter()
            .zip(labels)
            .map(|(c, &l)| {
                Some(AnnotatedComment {
                    id: c.id.clone(),
                    p: if l { 1.0 } else { 0.0 },
                    label: l,
                    token_scores: None,
                })
            })
            .collect();
        AnnotatedCorpus {
            corpus,
            meta: AnnotationMeta {
                scorer: "labels".into(),
                threshold: 0.5,
                comments: labels.len(),
                failed: 0,
            },
            annotations,
        }
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for (c, a) in self.corpus.comments().iter().zip(&self.annotations) {
            let line = match a {
                Some(a) => serde_json::json!({
                    "id": a.id, "p": a.p, "label": a.label, "token_scores": a.token_scores,
                }),
                None => serde_json::json!({
                    "id": c.id, "p": null, "label": null, "token_scores": null,
                }),
            };
            out.push_str(&line.to_string());
            out.push('\n');
        }
        out
    }

    /// Reads annotations written by [`AnnotatedCorpus::to_jsonl`].
    pub fn from_jsonl<R: BufRead>(corpus: &'c Corpus, meta: AnnotationMeta, reader: R) -> Result<Self> {
        #[derive(Deserialize)]
        struct Line {
            id: String,
            p: Option<f64>,
            label: Option<bool>,
            token_scores: Option<Vec<AnnotatedToken>>,
        }
        let mut annotations: Vec<Option<AnnotatedComment>> = vec![None; corpus.comments().len()];
        let mut seen = vec![false; corpus.comments().len()];
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let bad = |message: String| ScorerError::AnnotationFile { line: i + 1, message };
            let l: Line = serde_json::from_str(&line).map_err(|e| bad(e.to_string()))?;
            let pos = corpus
                .comment_position(&l.id)
                .ok_or_else(|| bad(format!("unknown comment id `{}`", l.id)))?;
            if std::mem::replace(&mut seen[pos], true) {
                return Err(bad(format!("duplicate id `{}`", l.id)));
            }
            annotations[pos] = match (l.p, l.label) {
                (Some(p), Some(label)) => Some(AnnotatedComment {
                    id: l.id,
                    p,
                    label,
                    token_scores: l.token_scores,
                }),
                (None, None) => None,
                _ => return Err(bad("p and label must both be set or both be null".into())),
            };
        }
        let missing: Vec<String> = corpus
            .comments()
            .iter()
            .zip(&seen)
            .filter(|(_, &s)| !s)
            .map(|(c, _)| c.id.clone())
            .collect();
        if !missing.is_empty() {
            return Err(ScorerError::MissingIds(missing));
        }
        Ok(AnnotatedCorpus {
            corpus,
            meta,
            annotations,
        })
    }
}

/// Scores every comment of `corpus`. Batches run concurrently; annotations
/// come back in corpus order. The label rule is `p >= threshold`.
pub fn score_corpus<'c>(
    corpus: &'c Corpus,
    scorer: &dyn Scorer,
    options: &ScoreOptions,
) -> Result<AnnotatedCorpus<'c>> {
    if !(options.threshold > 0.0 && options.threshold < 1.0) {
        return Err(ScorerError::InvalidThreshold(options.threshold));
    }
    if options.batch_size == 0 {
        return Err(ScorerError::InvalidBatchSize);
    }
    let requests: Vec<ScoreRequest> = corpus
        .comments()
        .iter()
        .map(|c| ScoreRequest {
            id: c.id.clone(),
            text: c.text.clone(),
        })
        .collect();

    let results: Vec<Result<Vec<ScoredItem>>> = requests
        .par_chunks(options.batch_size)
        .map(|batch| scorer.score_batch(batch).and_then(|items| join_batch(batch, items)))
        .collect();

    let mut annotations = Vec::with_capacity(requests.len());
    let mut failed = 0;
    for (batch, result) in requests.chunks(options.batch_size).zip(results) {
        match result {
            Ok(items) => annotations.extend(items.into_iter().map(|item| {
                Some(AnnotatedComment {
                    label: item.p_adhominem >= options.threshold,
                    id: item.id,
                    p: item.p_adhominem,
                    token_scores: item.token_scores,
                })
            })),
            Err(e) if options.skip_failed => {
                log::warn!("skipping {} comments after scorer failure: {e}", batch.len());
                failed += batch.len();
                annotations.extend(std::iter::repeat_n(None, batch.len()));
            }
            Err(e) => return Err(e),
        }
    }
    if failed > 0 {
        log::warn!("{failed} of {} comments left unscored", requests.len());
    }
    Ok(AnnotatedCorpus {
        corpus,
        meta: AnnotationMeta {
            scorer: scorer.identity(),
            threshold: options.threshold,
            comments: requests.len(),
            failed,
        },
        annotations,
    })
}

/// Orders scorer output by request and validates ids and probabilities.
fn join_batch(batch: &[ScoreRequest], items: Vec<ScoredItem>) -> Result<Vec<ScoredItem>> {
    let mut by_id: BTreeMap<String, ScoredItem> = BTreeMap::new();
    let mut unexpected = Vec::new();
    let wanted: BTreeSet<&str> = batch.iter().map(|r| r.id.as_str()).collect();
    for item in items {
        if !(0.0..=1.0).contains(&item.p_adhominem) {
            return Err(ScorerError::ProbabilityOutOfRange {
                id: item.id,
                p: item.p_adhominem,
            });
        }
        if !wanted.contains(item.id.as_str()) || by_id.contains_key(&item.id) {
            unexpected.push(item.id.clone());
            continue;
        }
        by_id.insert(item.id.clone(), item);
    }
    if !unexpected.is_empty() {
        return Err(ScorerError::UnexpectedIds(unexpected));
    }
    let missing: Vec<String> = batch
        .iter()
        .filter(|r| !by_id.contains_key(&r.id))
        .map(|r| r.id.clone())
        .collect();
    if !missing.is_empty() {
        return Err(ScorerError::MissingIds(missing));
    }
    Ok(batch.iter().map(|r| by_id.remove(&r.id).unwrap()).collect())
}

/// Fixed requests used to check an external scorer against the protocol.
pub fn conformance_vectors() -> Vec<ScoreRequest> {
    [
        ("v1", "You are an idiot and everyone knows it."),
        ("v2", "The evidence from the 2019 study supports the policy."),
        ("v3", "Ünïcode, \"quotes\", tabs\tand emoji 🙂 survive the round trip."),
        ("v4", ""),
        ("v5", "Liar."),
    ]
    .into_iter()
    .map(|(id, text)| ScoreRequest {
        id: id.into(),
        text: text.into(),
    })
    .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConformanceCheck {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

/// Runs the protocol conformance vectors against an external scorer.
pub fn check_protocol(scorer: &ExternalScorer) -> Vec<ConformanceCheck> {
    let mut checks = Vec::new();
    let mut record = |name, outcome: std::result::Result<(), String>| {
        checks.push(ConformanceCheck {
            name,
            passed: outcome.is_ok(),
            detail: outcome.err().unwrap_or_default(),
        })
    };

    record(
        "empty input gives empty output",
        scorer.run_raw(&[]).map_err(|e| e.to_string()).and_then(|out| {
            if out.iter().all(u8::is_ascii_whitespace) {
                Ok(())
            } else {
                Err(format!("unexpected output: {}", String::from_utf8_lossy(&out)))
            }
        }),
    );

    let vectors = conformance_vectors();
    let first = scorer
        .score_batch(&vectors)
        .and_then(|items| join_batch(&vectors, items));
    record(
        "one valid response per request",
        first.as_ref().map(|_| ()).map_err(|e| e.to_string()),
    );
    if let Ok(items) = &first {
        let bad: Vec<String> = items
            .iter()
            .filter(|i| {
                i.token_scores
                    .as_ref()
                    .is_some_and(|ts| ts.iter().any(|t| !t.score.is_finite()))
            })
            .map(|i| i.id.clone())
            .collect();
        record(
            "token scores are finite",
            if bad.is_empty() {
                Ok(())
            } else {
                Err(format!("non-finite scores for {}", bad.join(", ")))
            },
        );
        let second = scorer
            .score_batch(&vectors)
            .and_then(|items| join_batch(&vectors, items));
        record(
            "responses are deterministic",
            match second {
                Ok(again) if &again == items => Ok(()),
                Ok(_) => Err("second run differs".into()),
                Err(e) => Err(e.to_string()),
            },
        );
    }
    checks
}
