//! Softmax fusion of per-filter passage scores.
//!
//! `f(q, d) = tanh(r̃ᵀ φ(h̃) + b_R)` with `φ(h̃)_i = softmax(W_R h̃)_i`, where
//! `r̃` and `h̃` are the passage scores and fusion features after the
//! model's affine normalizations.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::Rng;

use crate::error::{Error, Result};
use crate::features::{FeatureSet, Standardizer};
use crate::passages::{format_filters, parse_filters, FilterSpec};

const HEADER: &str = "passnet-fusion-model v1";
pub const INIT_RANGE: f64 = 0.1;

/// Numerically stable softmax (max-subtracted).
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Forward {
    pub phi: Vec<f64>,
    /// Pre-activation `r̃ᵀφ + b_R`.
    pub logit: f64,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusionModel {
    filters: Vec<FilterSpec>,
    feature_set: FeatureSet,
    feature_names: Vec<String>,
    feature_norm: Standardizer,
    score_norm: Standardizer,
    /// α×β, row-major.
    weights: Vec<f64>,
    bias: f64,
}

fn check_nan(xs: &[f64], what: &str) -> Result<()> {
    if xs.iter().any(|x| x.is_nan()) {
        return Err(Error::Domain(format!("NaN in {what}")));
    }
    Ok(())
}

impl FusionModel {
    pub fn new(
        filters: Vec<FilterSpec>,
        feature_set: FeatureSet,
        feature_norm: Standardizer,
        score_norm: Standardizer,
        weights: Vec<f64>,
        bias: f64,
    ) -> Result<Self> {
        let alpha = filters.len();
        let feature_names = feature_set.names();
        let beta = feature_names.len();
        if alpha == 0 {
            return Err(Error::Config("model needs at least one filter".into()));
        }
        for (expected, got) in [
            (alpha * beta, weights.len()),
            (beta, feature_norm.dim()),
            (alpha, score_norm.dim()),
        ] {
            if expected != got {
                return Err(Error::DimensionMismatch { expected, got });
            }
        }
        let all_finite = weights
            .iter()
            .chain(feature_norm.mean.iter())
            .chain(feature_norm.std.iter())
            .chain(score_norm.mean.iter())
            .chain(score_norm.std.iter())
            .chain(std::iter::once(&bias))
            .all(|v| v.is_finite());
        if !all_finite {
            return Err(Error::Domain("model parameters must be finite".into()));
        }
        Ok(FusionModel {
            filters,
            feature_set,
            feature_names,
            feature_norm,
            score_norm,
            weights,
            bias,
        })
    }

    /// Random `W_R` in `[-0.1, 0.1]`, `b_R = 0`.
    pub fn init<R: Rng>(
        filters: Vec<FilterSpec>,
        feature_set: FeatureSet,
        feature_norm: Standardizer,
        score_norm: Standardizer,
        rng: &mut R,
    ) -> Result<Self> {
        let n = filters.len() * feature_set.names().len();
        let weights = (0..n)
            .map(|_| rng.gen_range(-INIT_RANGE..=INIT_RANGE))
            .collect();
        Self::new(filters, feature_set, feature_norm, score_norm, weights, 0.0)
    }

    /// Zero weights and identity normalizations: `φ` is uniform and the
    /// passage scores enter unchanged.
    pub fn uniform(filters: Vec<FilterSpec>, feature_set: FeatureSet) -> Result<Self> {
        let alpha = filters.len();
        let beta = feature_set.names().len();
        Self::new(
            filters,
            feature_set,
            Standardizer::identity(beta),
            Standardizer::identity(alpha),
            vec![0.0; alpha * beta],
            0.0,
        )
    }

    pub fn alpha(&self) -> usize {
        self.filters.len()
    }

    pub fn beta(&self) -> usize {
        self.feature_names.len()
    }

    pub fn filters(&self) -> &[FilterSpec] {
        &self.filters
    }

    pub fn feature_set(&self) -> FeatureSet {
        self.feature_set
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> f64 {
        self.bias
    }

    pub fn feature_norm(&self) -> &Standardizer {
        &self.feature_norm
    }

    pub fn score_norm(&self) -> &Standardizer {
        &self.score_norm
    }

    pub(crate) fn params_mut(&mut self) -> (&mut [f64], &mut f64) {
        (&mut self.weights, &mut self.bias)
    }

    pub(crate) fn set_params(&mut self, weights: &[f64], bias: f64) {
        self.weights.copy_from_slice(weights);
        self.bias = bias;
    }

    /// Normalizes raw passage scores and the raw 29-dim feature vector.
    pub fn prepare(
        &self,
        raw_scores: &[f64],
        raw_features: &[f64],
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        let r = self.score_norm.apply(raw_scores)?;
        let h = self
            .feature_norm
            .apply(&self.feature_set.select(raw_features)?)?;
        Ok((r, h))
    }

    pub fn logits(&self, h: &[f64]) -> Result<Vec<f64>> {
        if h.len() != self.beta() {
            return Err(Error::DimensionMismatch {
                expected: self.beta(),
                got: h.len(),
            });
        }
        check_nan(h, "fusion features")?;
        Ok(self
            .weights
            .chunks_exact(self.beta())
            .map(|row| row.iter().zip(h).map(|(w, x)| w * x).sum())
            .collect())
    }

    /// Fusion weights `φ(h̃)` on the probability simplex.
    pub fn phi(&self, h: &[f64]) -> Result<Vec<f64>> {
        Ok(softmax(&self.logits(h)?))
    }

    pub fn forward(&self, r: &[f64], h: &[f64]) -> Result<Forward> {
        if r.len() != self.alpha() {
            return Err(Error::DimensionMismatch {
                expected: self.alpha(),
                got: r.len(),
            });
        }
        check_nan(r, "passage scores")?;
        let phi = self.phi(h)?;
        let logit = r.iter().zip(&phi).map(|(a, b)| a * b).sum::<f64>() + self.bias;
        Ok(Forward {
            phi,
            logit,
            score: logit.tanh(),
        })
    }

    pub fn score(&self, r: &[f64], h: &[f64]) -> Result<f64> {
        Ok(self.forward(r, h)?.score)
    }

    /// Score and its gradient with respect to `W_R` (row-major) and `b_R`.
    pub fn gradient(&self, r: &[f64], h: &[f64]) -> Result<(Forward, Vec<f64>, f64)> {
        let fwd = self.forward(r, h)?;
        let dz = 1.0 - fwd.score * fwd.score;
        let mixed: f64 = r.iter().zip(&fwd.phi).map(|(a, b)| a * b).sum();
        let mut dw = Vec::with_capacity(self.weights.len());
        for (k, p) in fwd.phi.iter().enumerate() {
            let dl = dz * p * (r[k] - mixed);
            dw.extend(h.iter().map(|x| dl * x));
        }
        Ok((fwd, dw, dz))
    }

    pub fn to_text(&self) -> String {
        fn floats(xs: &[f64]) -> String {
            xs.iter()
                .map(|v| format!("{v:?}"))
                .collect::<Vec<_>>()
                .join(" ")
        }
        let mut s = String::new();
        let _ = writeln!(s, "{HEADER}");
        let _ = writeln!(s, "alpha {}", self.alpha());
        let _ = writeln!(s, "beta {}", self.beta());
        let _ = writeln!(s, "filters {}", format_filters(&self.filters));
        let _ = writeln!(s, "features {}", self.feature_set.name());
        let _ = writeln!(s, "feature_names {}", self.feature_names.join(" "));
        let _ = writeln!(s, "feature_mean {}", floats(&self.feature_norm.mean));
        let _ = writeln!(s, "feature_std {}", floats(&self.feature_norm.std));
        let _ = writeln!(s, "score_mean {}", floats(&self.score_norm.mean));
        let _ = writeln!(s, "score_std {}", floats(&self.score_norm.std));
        let _ = writeln!(s, "weights {}", floats(&self.weights));
        let _ = writeln!(s, "bias {:?}", self.bias);
        s
    }

    pub fn from_text(text: &str, name: &str) -> Result<Self> {
        let bad = |msg: String| Error::format(name, msg);
        let mut lines = text.lines();
        if lines.next() != Some(HEADER) {
            return Err(bad("missing or unsupported model header".into()));
        }
        let mut fields = std::collections::HashMap::new();
        for line in lines.filter(|l| !l.trim().is_empty()) {
            let (k, v) = line.split_once(' ').unwrap_or((line, ""));
            fields.insert(k.to_string(), v.to_string());
        }
        let get = |k: &str| {
            fields
                .get(k)
                .cloned()
                .ok_or_else(|| bad(format!("missing `{k}`")))
        };
        let floats = |k: &str| -> Result<Vec<f64>> {
            get(k)?
                .split_whitespace()
                .map(|t| {
                    t.parse::<f64>()
                        .map_err(|_| bad(format!("bad number in `{k}`")))
                })
                .collect()
        };
        let filters = parse_filters(&get("filters")?)?;
        let feature_set: FeatureSet = get("features")?.parse()?;
        let alpha: usize = get("alpha")?.parse().map_err(|_| bad("bad alpha".into()))?;
        let beta: usize = get("beta")?.parse().map_err(|_| bad("bad beta".into()))?;
        if alpha != filters.len() {
            return Err(Error::DimensionMismatch {
                expected: filters.len(),
                got: alpha,
            });
        }
        let names: Vec<String> = get("feature_names")?
            .split_whitespace()
            .map(String::from)
            .collect();
        if names != feature_set.names() || beta != names.len() {
            return Err(bad("feature order does not match this build".into()));
        }
        let bias: f64 = get("bias")?
            .trim()
            .parse()
            .map_err(|_| bad("bad bias".into()))?;
        FusionModel::new(
            filters,
            feature_set,
            Standardizer {
                mean: floats("feature_mean")?,
                std: floats("feature_std")?,
            },
            Standardizer {
                mean: floats("score_mean")?,
                std: floats("score_std")?,
            },
            floats("weights")?,
            bias,
        )
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text, &path.display().to_string())
    }
}

/// Mean and standard deviation of `φ` per filter over scored pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightReport {
    pub filters: Vec<FilterSpec>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub pairs: usize,
}

/// `features` are normalized fusion feature vectors, one per (q, d) pair.
pub fn report_weights<'a, I>(model: &FusionModel, features: I) -> Result<WeightReport>
where
    I: IntoIterator<Item = &'a [f64]>,
{
    report_weights_multi(model.filters(), features.into_iter().map(|h| (model, h)))
}

/// Like [`report_weights`], with each pair scored by its own model (one
/// per cross-validation fold). All models must share `filters`.
pub fn report_weights_multi<'a, I>(filters: &[FilterSpec], pairs: I) -> Result<WeightReport>
where
    I: IntoIterator<Item = (&'a FusionModel, &'a [f64])>,
{
    let alpha = filters.len();
    let mut sum = vec![0.0; alpha];
    let mut sq = vec![0.0; alpha];
    let mut phis = Vec::new();
    for (model, h) in pairs {
        if model.filters() != filters {
            return Err(Error::Config("models disagree on their filters".into()));
        }
        let phi = model.phi(h)?;
        for (s, p) in sum.iter_mut().zip(&phi) {
            *s += p;
        }
        phis.push(phi);
    }
    let n = phis.len();
    if n == 0 {
        return Err(Error::EmptyInput("no query-document pairs"));
    }
    let mean: Vec<f64> = sum.iter().map(|s| s / n as f64).collect();
    for phi in &phis {
        for ((q, p), m) in sq.iter_mut().zip(phi).zip(&mean) {
            *q += (p - m).powi(2);
        }
    }
    let std = sq.iter().map(|q| (q / n as f64).sqrt()).collect();
    Ok(WeightReport {
        filters: filters.to_vec(),
        mean,
        std,
        pairs: n,
    })
}

impl WeightReport {
    pub fn table(&self) -> String {
        let mut s = format!("{:<10} {:>10} {:>10}\n", "filter", "mean_phi", "std_phi");
        for ((f, m), d) in self.filters.iter().zip(&self.mean).zip(&self.std) {
            let _ = writeln!(s, "{:<10} {:>10.6} {:>10.6}", f.to_string(), m, d);
        }
        let _ = writeln!(s, "pairs {}", self.pairs);
        s
    }

    pub fn csv(&self) -> String {
        let mut s = String::from("filter,mean_phi,std_phi\n");
        for ((f, m), d) in self.filters.iter().zip(&self.mean).zip(&self.std) {
            let _ = writeln!(s, "{f},{m:.6},{d:.6}");
        }
        s
    }
}
