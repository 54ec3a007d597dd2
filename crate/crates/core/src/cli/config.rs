//! Flat `key = value` experiment configuration.
//!
//! One setting per line, `#` starts a comment, keys are case-sensitive and
//! unknown keys are rejected. Relative paths are resolved against the
//! directory holding the config file. Command-line flags are applied after
//! the file and override it.
//!
//! | key | meaning | default |
//! |---|---|---|
//! | `corpus` | TREC text file or directory | |
//! | `topics` | topic file | |
//! | `qrels` | relevance judgments | |
//! | `index` | index file | |
//! | `stopwords` | stopword list, one per line | none |
//! | `filters` | comma-separated `m`, `m:stride` or `inf` | `50,150,inf` |
//! | `msp_filter` | passage filter of the MSP rankers | `150` |
//! | `homogeneity_filter` | passages for the passage homogeneity features | smallest finite filter |
//! | `lambda` | collection smoothing weight | `0.5` |
//! | `top_k` | initial retrieval depth | `2000` |
//! | `list_depth` | depth of the result-list feature | `2000` |
//! | `features` | `doc`, `query` or `doc+query` | `doc+query` |
//! | `pooling` | `max` or `mean` | `max` |
//! | `folds` | cross-validation folds | `5` |
//! | `learning_rate` | SGD step size | `0.05` |
//! | `batch_size` | triples per mini-batch | `64` |
//! | `max_epochs` | epoch limit | `50` |
//! | `patience` | early-stopping patience in epochs | `5` |
//! | `negatives_per_positive` | sampled negatives per relevant doc | `5` |
//! | `permutations` | randomization-test permutations | `100000` |
//! | `seed` | seed for every random choice | `42` |
//! | `threads` | worker threads, 0 for all cores | `0` |

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::evaluation::DEFAULT_PERMUTATIONS;
use crate::features::{FeatureSet, DEFAULT_LIST_DEPTH};
use crate::passages::{
    default_filters, format_filters, parse_filters, FilterSpec, Pooling, Smoothing,
};
use crate::training::{PrecomputeConfig, TrainConfig, DEFAULT_FOLDS};

pub const DEFAULT_TOP_K: usize = 2000;

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub corpus: Option<PathBuf>,
    pub topics: Option<PathBuf>,
    pub qrels: Option<PathBuf>,
    pub index: Option<PathBuf>,
    pub stopwords: Option<PathBuf>,
    pub filters: Vec<FilterSpec>,
    pub msp_filter: FilterSpec,
    pub homogeneity_filter: Option<FilterSpec>,
    pub smoothing: Smoothing,
    pub top_k: usize,
    pub list_depth: usize,
    pub features: FeatureSet,
    pub pooling: Pooling,
    pub folds: usize,
    pub train: TrainConfig,
    pub permutations: usize,
    pub threads: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            corpus: None,
            topics: None,
            qrels: None,
            index: None,
            stopwords: None,
            filters: default_filters(),
            msp_filter: FilterSpec::finite(150).expect("valid default filter"),
            homogeneity_filter: None,
            smoothing: Smoothing::default(),
            top_k: DEFAULT_TOP_K,
            list_depth: DEFAULT_LIST_DEPTH,
            features: FeatureSet::default(),
            pooling: Pooling::Max,
            folds: DEFAULT_FOLDS,
            train: TrainConfig::default(),
            permutations: DEFAULT_PERMUTATIONS,
            threads: 0,
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e| Error::Config(format!("{key}: cannot parse '{value}': {e}")))
}

fn positive(key: &str, value: &str) -> Result<usize> {
    let v: usize = parse_num(key, value)?;
    if v == 0 {
        return Err(Error::Config(format!("{key} must be positive")));
    }
    Ok(v)
}

impl ExperimentConfig {
    /// Sets one key. Relative paths are joined onto `base`.
    pub fn set(&mut self, key: &str, value: &str, base: &Path) -> Result<()> {
        let path = || {
            let p = PathBuf::from(value);
            if p.is_relative() {
                base.join(p)
            } else {
                p
            }
        };
        match key {
            "corpus" => self.corpus = Some(path()),
            "topics" => self.topics = Some(path()),
            "qrels" => self.qrels = Some(path()),
            "index" => self.index = Some(path()),
            "stopwords" => self.stopwords = Some(path()),
            "filters" => self.filters = parse_filters(value)?,
            "msp_filter" => self.msp_filter = value.parse()?,
            "homogeneity_filter" => {
                let f: FilterSpec = value.parse()?;
                if !f.is_finite() {
                    return Err(Error::Config("homogeneity_filter must be finite".into()));
                }
                self.homogeneity_filter = Some(f);
            }
            "lambda" => self.smoothing = Smoothing::new(parse_num(key, value)?)?,
            "top_k" => self.top_k = positive(key, value)?,
            "list_depth" => self.list_depth = positive(key, value)?,
            "features" => self.features = value.parse()?,
            "pooling" => {
                self.pooling = match value {
                    "max" => Pooling::Max,
                    "mean" => Pooling::Mean,
                    _ => {
                        return Err(Error::Config(format!(
                            "pooling: expected max or mean, got '{value}'"
                        )))
                    }
                }
            }
            "folds" => self.folds = positive(key, value)?,
            "learning_rate" => self.train.learning_rate = parse_num(key, value)?,
            "batch_size" => self.train.batch_size = positive(key, value)?,
            "max_epochs" => self.train.max_epochs = positive(key, value)?,
            "patience" => self.train.patience = positive(key, value)?,
            "negatives_per_positive" => self.train.negatives_per_positive = positive(key, value)?,
            "permutations" => self.permutations = positive(key, value)?,
            "seed" => self.train.seed = parse_num(key, value)?,
            "threads" => self.threads = parse_num(key, value)?,
            _ => return Err(Error::Config(format!("unknown config key '{key}'"))),
        }
        Ok(())
    }

    pub fn parse(text: &str, name: &str, base: &Path) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(name, i + 1, "expected 'key = value'"))?;
            cfg.set(k.trim(), v.trim(), base)
                .map_err(|e| Error::parse(name, i + 1, e.to_string()))?;
        }
        cfg.train.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, &path.display().to_string(), base)
    }

    /// Settings that affect scores, in a fixed order. Paths are excluded so
    /// the same experiment in another directory gets the same fingerprint.
    pub fn canonical(&self) -> String {
        let t = &self.train;
        let mut s = String::new();
        for (k, v) in [
            ("filters", format_filters(&self.filters)),
            ("msp_filter", self.msp_filter.to_string()),
            (
                "homogeneity_filter",
                self.homogeneity_filter
                    .map_or_else(|| "auto".into(), |f| f.to_string()),
            ),
            ("lambda", format!("{:?}", self.smoothing.lambda())),
            ("top_k", self.top_k.to_string()),
            ("list_depth", self.list_depth.to_string()),
            ("features", self.features.name().to_string()),
            ("pooling", format!("{:?}", self.pooling).to_lowercase()),
            ("folds", self.folds.to_string()),
            ("learning_rate", format!("{:?}", t.learning_rate)),
            ("batch_size", t.batch_size.to_string()),
            ("max_epochs", t.max_epochs.to_string()),
            ("patience", t.patience.to_string()),
            (
                "negatives_per_positive",
                t.negatives_per_positive.to_string(),
            ),
            ("seed", t.seed.to_string()),
        ] {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }

    pub fn fingerprint(&self) -> String {
        let digest = Sha256::digest(self.canonical().as_bytes());
        format!("{digest:x}")[..8].to_string()
    }

    /// Run tag: `mode` plus the config fingerprint.
    pub fn run_tag(&self, mode: &str) -> String {
        format!("{mode}-{}", self.fingerprint())
    }

    /// Precomputation settings for fusion inputs over `filters`.
    pub fn precompute(&self, filters: Vec<FilterSpec>) -> PrecomputeConfig {
        let mut pre = PrecomputeConfig::new(filters, self.smoothing);
        pre.pooling = self.pooling;
        pre.list_depth = self.list_depth;
        if let Some(f) = self.homogeneity_filter {
            pre.homogeneity_filter = f;
        }
        pre
    }

    pub fn require<'a>(&self, value: &'a Option<PathBuf>, key: &str) -> Result<&'a Path> {
        let p = value.as_deref().ok_or_else(|| {
            Error::Config(format!(
                "missing '{key}': pass --{key} or set it in the config file"
            ))
        })?;
        if !p.exists() {
            return Err(Error::Config(format!(
                "{key} path {} does not exist",
                p.display()
            )));
        }
        Ok(p)
    }
}
