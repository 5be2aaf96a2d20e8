//! Pipeline configuration: a TOML file, `--set key.path=value` overrides and
//! validation that reports every problem at once.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use fallacy_forensics_core::classifier::BaselineConfig;
use fallacy_forensics_core::networks::CountRange;
use fallacy_forensics_core::temporal::Quantity;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub seed: u64,
    pub corpus: CorpusConfig,
    pub classifier: ClassifierConfig,
    pub scorer: ScorerConfig,
    pub explain: ExplainConfig,
    pub networks: NetworksConfig,
    pub temporal: TemporalConfig,
    pub wordshift: WordShiftConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 42,
            corpus: CorpusConfig::default(),
            classifier: ClassifierConfig::default(),
            scorer: ScorerConfig::default(),
            explain: ExplainConfig::default(),
            networks: NetworksConfig::default(),
            temporal: TemporalConfig::default(),
            wordshift: WordShiftConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CorpusConfig {
    pub posts: Option<PathBuf>,
    pub comments: Option<PathBuf>,
    pub profiles: Option<PathBuf>,
    /// Pseudonymization salt; author names are kept verbatim without one.
    pub salt: Option<String>,
    pub lenient: bool,
    /// Labeled `{"id","text","label"}` data for the builtin classifier.
    pub labeled: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClassifierConfig {
    pub hash_bits: u32,
    pub max_ngram: usize,
    pub l2: f64,
    pub max_epochs: usize,
    pub tolerance: f64,
    pub k: usize,
    pub fractions: Vec<f64>,
    pub sweep_seeds: Vec<u64>,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        let b = BaselineConfig::default();
        ClassifierConfig {
            hash_bits: b.hash_bits,
            max_ngram: b.max_ngram,
            l2: b.l2,
            max_epochs: b.max_epochs,
            tolerance: b.tolerance,
            k: 10,
            fractions: vec![0.05, 0.1, 0.25, 0.5, 1.0],
            sweep_seeds: vec![1, 2, 3, 4, 5],
        }
    }
}

impl ClassifierConfig {
    pub fn baseline(&self) -> BaselineConfig {
        BaselineConfig {
            hash_bits: self.hash_bits,
            max_ngram: self.max_ngram,
            l2: self.l2,
            max_epochs: self.max_epochs,
            tolerance: self.tolerance,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScorerKind {
    Builtin,
    External,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScorerConfig {
    pub kind: ScorerKind,
    /// Builtin model artifact; defaults to the one `train` writes.
    pub model: Option<PathBuf>,
    pub command: Vec<String>,
    pub threshold: f64,
    pub batch_size: usize,
    pub skip_failed: bool,
}

impl Default for ScorerConfig {
    fn default() -> Self {
        ScorerConfig {
            kind: ScorerKind::Builtin,
            model: None,
            command: Vec::new(),
            threshold: 0.5,
            batch_size: 256,
            skip_failed: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExplainConfig {
    pub trigrams: usize,
    /// Highlight only the most confident ad hominem comments.
    pub max_comments: usize,
}

impl Default for ExplainConfig {
    fn default() -> Self {
        ExplainConfig {
            trigrams: 3,
            max_comments: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworksConfig {
    pub lambdas: Vec<u64>,
    pub rhos: Vec<u64>,
    pub group_boundaries: Vec<u64>,
    pub top_n: usize,
    /// Lower edges of the comment-count buckets; the last is open-ended.
    pub overlap_edges: Vec<u64>,
    pub overlap_reference: String,
}

impl Default for NetworksConfig {
    fn default() -> Self {
        NetworksConfig {
            lambdas: vec![0, 5, 10, 20, 50, 100],
            rhos: vec![0, 10, 20, 50, 100, 200],
            group_boundaries: vec![10, 50, 100, 2000],
            top_n: 10,
            overlap_edges: vec![1, 11, 51, 101],
            overlap_reference: "politics".into(),
        }
    }
}

impl NetworksConfig {
    pub fn overlap_buckets(&self) -> Vec<CountRange> {
        self.overlap_edges
            .iter()
            .enumerate()
            .map(|(i, &min)| CountRange {
                min,
                max: self.overlap_edges.get(i + 1).map(|next| next - 1),
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TemporalConfig {
    /// Topics stacked into the change-point signal; empty means all.
    pub topics: Vec<String>,
    pub quantities: Vec<Quantity>,
    pub k: usize,
    pub min_size: usize,
    pub gamma: Option<f64>,
    pub window: usize,
    /// Detect on smoothed rather than raw series.
    pub smooth_before_detect: bool,
}

impl Default for TemporalConfig {
    fn default() -> Self {
        TemporalConfig {
            topics: Vec::new(),
            quantities: vec![Quantity::TotalComments, Quantity::AhFraction, Quantity::AhUserFraction],
            k: 2,
            min_size: 6,
            gamma: None,
            window: 12,
            smooth_before_detect: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WordShiftConfig {
    pub pi1: f64,
    /// Weight sub-corpora by token volume instead of `pi1`.
    pub proportional: bool,
    pub top_n: usize,
    pub stop_words: Vec<String>,
}

impl Default for WordShiftConfig {
    fn default() -> Self {
        WordShiftConfig {
            pi1: 0.5,
            proportional: false,
            top_n: 30,
            stop_words: Vec::new(),
        }
    }
}

fn ascending(v: &[u64]) -> bool {
    v.windows(2).all(|w| w[0] < w[1])
}

impl PipelineConfig {
    /// Every violation, empty when the config is usable.
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if let Err(e) = self.classifier.baseline().validate() {
            v.push(e.to_string());
        }
        let c = &self.classifier;
        if c.k < 2 {
            v.push(format!("classifier.k must be at least 2, got {}", c.k));
        }
        if c.fractions.is_empty() || c.fractions.iter().any(|f| !(*f > 0.0 && *f <= 1.0)) {
            v.push(format!(
                "classifier.fractions must be non-empty values in (0, 1], got {:?}",
                c.fractions
            ));
        }
        if c.sweep_seeds.is_empty() {
            v.push("classifier.sweep_seeds must not be empty".into());
        }
        let s = &self.scorer;
        if !(s.threshold > 0.0 && s.threshold < 1.0) {
            v.push(format!("scorer.threshold must lie in (0, 1), got {}", s.threshold));
        }
        if s.batch_size == 0 {
            v.push("scorer.batch_size must be at least 1".into());
        }
        if s.kind == ScorerKind::External && s.command.is_empty() {
            v.push("scorer.command is required when scorer.kind = \"external\"".into());
        }
        if self.explain.trigrams == 0 {
            v.push("explain.trigrams must be at least 1".into());
        }
        let n = &self.networks;
        for (name, grid) in [
            ("lambdas", &n.lambdas),
            ("rhos", &n.rhos),
            ("group_boundaries", &n.group_boundaries),
        ] {
            if grid.is_empty() || !ascending(grid) {
                v.push(format!(
                    "networks.{name} must be non-empty and strictly ascending, got {grid:?}"
                ));
            }
        }
        if n.overlap_edges.is_empty() || !ascending(&n.overlap_edges) || n.overlap_edges[0] == 0 {
            v.push(format!(
                "networks.overlap_edges must be strictly ascending and start at 1 or more, got {:?}",
                n.overlap_edges
            ));
        }
        if n.top_n == 0 {
            v.push("networks.top_n must be at least 1".into());
        }
        let t = &self.temporal;
        if t.quantities.is_empty() {
            v.push("temporal.quantities must not be empty".into());
        }
        if t.k == 0 {
            v.push("temporal.k must be at least 1".into());
        }
        if t.min_size == 0 {
            v.push("temporal.min_size must be at least 1".into());
        }
        if t.window == 0 {
            v.push("temporal.window must be at least 1".into());
        }
        if t.gamma.is_some_and(|g| !(g.is_finite() && g > 0.0)) {
            v.push(format!("temporal.gamma must be positive, got {:?}", t.gamma));
        }
        let w = &self.wordshift;
        if !(w.pi1 > 0.0 && w.pi1 < 1.0) {
            v.push(format!("wordshift.pi1 must lie in (0, 1), got {}", w.pi1));
        }
        v
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

/// Sets `path` (dot separated) in `table` to `raw`, parsed as a TOML value
/// when possible and as a string otherwise.
pub fn apply_override(table: &mut toml::Table, path: &str, raw: &str) -> Result<()> {
    let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let keys: Vec<&str> = path.split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        bail!("malformed override key `{path}`");
    }
    let (last, parents) = keys.split_last().unwrap();
    let mut cur = table;
    for k in parents {
        let entry = cur
            .entry(k.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = match entry {
            toml::Value::Table(t) => t,
            _ => bail!("override `{path}`: `{k}` is not a table"),
        };
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

/// Loads the config file (if any), applies overrides and validates.
///
/// Relative corpus and model paths are resolved against the config file's
/// directory; the returned config keeps them as written.
pub fn load(path: Option<&Path>, overrides: &[String], seed: Option<u64>) -> Result<(PipelineConfig, PathBuf)> {
    let (mut table, base) = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
            let table: toml::Table =
                toml::from_str(&text).with_context(|| format!("parsing config {}", p.display()))?;
            let base = p.parent().map(Path::to_path_buf).unwrap_or_default();
            (table, base)
        }
        None => (toml::Table::new(), PathBuf::new()),
    };
    for o in overrides {
        let (k, v) = o
            .split_once('=')
            .with_context(|| format!("override `{o}` is not key=value"))?;
        apply_override(&mut table, k.trim(), v.trim())?;
    }
    let mut config: PipelineConfig = toml::Value::Table(table).try_into().context("invalid configuration")?;
    if let Some(s) = seed {
        config.seed = s;
    }
    let problems = config.violations();
    if !problems.is_empty() {
        bail!("invalid configuration:\n  - {}", problems.join("\n  - "));
    }
    Ok((config, base))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_parse_values_and_nest() {
        let mut t = toml::Table::new();
        apply_override(&mut t, "temporal.k", "3").unwrap();
        apply_override(&mut t, "scorer.kind", "external").unwrap();
        apply_override(&mut t, "networks.lambdas", "[0, 1]").unwrap();
        let c: PipelineConfig = toml::Value::Table(t).try_into().unwrap();
        assert_eq!(c.temporal.k, 3);
        assert_eq!(c.scorer.kind, ScorerKind::External);
        assert_eq!(c.networks.lambdas, [0, 1]);
        assert!(c.violations().iter().any(|v| v.contains("scorer.command")));
    }

    #[test]
    fn all_violations_reported() {
        let mut c = PipelineConfig::default();
        c.classifier.k = 1;
        c.scorer.threshold = 1.0;
        c.networks.rhos = vec![5, 1];
        assert_eq!(c.violations().len(), 3);
    }

    #[test]
    fn unknown_keys_rejected() {
        let r: Result<PipelineConfig, _> = toml::from_str("[temporal]\nkk = 2\n");
        assert!(r.is_err());
    }

    #[test]
    fn default_round_trips() {
        let c = PipelineConfig::default();
        let back: PipelineConfig = toml::from_str(&c.to_toml()).unwrap();
        assert_eq!(back, c);
        let buckets = c.networks.overlap_buckets();
        assert_eq!(buckets[0], CountRange { min: 1, max: Some(10) });
        assert_eq!(buckets[3], CountRange { min: 101, max: None });
    }
}
