//! Window passages, the smoothed passage language model and its
//! logarithm-kernel form, pooling, and the max-scoring-passage baselines.
//!
//! With an all-ones kernel and bias `b_t = λ·m·cf_t / ((1-λ)·|C|)`,
//!
//! ```text
//! log(tf_{t,g} + b_t) = log((1-λ)·tf_{t,g}/m + λ·cf_t/|C|) + log(m / (1-λ))
//! ```
//!
//! so a passage's kernel score equals its language-model log-likelihood
//! plus `n_q·log(m/(1-λ))` whenever the passage has its nominal length `m`.

use std::fmt;
use std::str::FromStr;

use crate::corpus::{CorpusStats, Document, Index, Query};
use crate::error::{Error, Result};
use crate::features;
use crate::matching::MatchingMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Window {
    Finite(usize),
    Infinite,
}

/// A convolution filter: window length and stride.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FilterSpec {
    window: Window,
    stride: usize,
}

impl FilterSpec {
    /// Finite window with the default stride of half the window.
    pub fn finite(m: usize) -> Result<Self> {
        Self::with_stride(m, (m / 2).max(1))
    }

    pub fn with_stride(m: usize, stride: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::Config("filter length must be >= 1".into()));
        }
        if stride == 0 || stride > m {
            return Err(Error::Config(format!(
                "filter stride must be in [1, {m}], got {stride}"
            )));
        }
        Ok(FilterSpec {
            window: Window::Finite(m),
            stride,
        })
    }

    /// The whole-document filter.
    pub fn infinite() -> Self {
        FilterSpec {
            window: Window::Infinite,
            stride: 1,
        }
    }

    pub fn window(&self) -> Window {
        self.window
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    pub fn is_finite(&self) -> bool {
        matches!(self.window, Window::Finite(_))
    }

    /// Window length used in the kernel bias: `m`, or `n_d` for the
    /// infinite filter.
    pub fn effective_window(&self, n_d: usize) -> usize {
        match self.window {
            Window::Finite(m) => m,
            Window::Infinite => n_d,
        }
    }
}

impl fmt::Display for FilterSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.window {
            Window::Finite(m) => write!(f, "{m}:{}", self.stride),
            Window::Infinite => f.write_str("inf"),
        }
    }
}

impl FromStr for FilterSpec {
    type Err = Error;

    /// `inf`, `m` (stride `m/2`) or `m:stride`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("inf") || s == "∞" {
            return Ok(FilterSpec::infinite());
        }
        let bad = || Error::Config(format!("bad filter `{s}`"));
        match s.split_once(':') {
            Some((m, t)) => FilterSpec::with_stride(
                m.trim().parse().map_err(|_| bad())?,
                t.trim().parse().map_err(|_| bad())?,
            ),
            None => FilterSpec::finite(s.parse().map_err(|_| bad())?),
        }
    }
}

/// Parses a comma-separated filter list such as `50,150,inf`.
pub fn parse_filters(s: &str) -> Result<Vec<FilterSpec>> {
    let filters: Vec<FilterSpec> = s
        .split(',')
        .filter(|p| !p.trim().is_empty())
        .map(str::parse)
        .collect::<Result<_>>()?;
    if filters.is_empty() {
        return Err(Error::Config("at least one filter is required".into()));
    }
    Ok(filters)
}

pub fn format_filters(filters: &[FilterSpec]) -> String {
    filters
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join(",")
}

pub fn default_filters() -> Vec<FilterSpec> {
    vec![
        FilterSpec::finite(50).expect("valid"),
        FilterSpec::finite(150).expect("valid"),
        FilterSpec::infinite(),
    ]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PassageSpan {
    pub start: usize,
    pub len: usize,
}

impl PassageSpan {
    pub fn end(&self) -> usize {
        self.start + self.len
    }
}

/// Spans start at `0, τ, 2τ, …` while the start is inside the document and
/// are truncated at the document end.
pub fn extract_passages(n_d: usize, filter: &FilterSpec) -> Vec<PassageSpan> {
    if n_d == 0 {
        return Vec::new();
    }
    match filter.window {
        Window::Infinite => vec![PassageSpan { start: 0, len: n_d }],
        Window::Finite(m) => (0..n_d)
            .step_by(filter.stride)
            .map(|start| PassageSpan {
                start,
                len: m.min(n_d - start),
            })
            .collect(),
    }
}

/// Jelinek-Mercer interpolation weight `λ_c` on the collection model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Smoothing {
    lambda: f64,
}

impl Smoothing {
    pub fn new(lambda: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda < 1.0) {
            return Err(Error::Config(format!(
                "smoothing lambda must be in (0, 1), got {lambda}"
            )));
        }
        Ok(Smoothing { lambda })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }
}

impl Default for Smoothing {
    fn default() -> Self {
        Smoothing { lambda: 0.5 }
    }
}

/// `log((1-λ)·tf/n + λ·cf/|C|)`. Shared by every language-model path so
/// whole-document scores agree bit-for-bit wherever they are computed.
#[inline]
pub(crate) fn lm_term(tf: u32, n: usize, cf: u64, total_len: u64, s: &Smoothing) -> f64 {
    let lambda = s.lambda;
    ((1.0 - lambda) * f64::from(tf) / n as f64 + lambda * cf as f64 / total_len as f64).ln()
}

fn finite_or_domain(score: f64, what: &str) -> Result<f64> {
    if score.is_finite() {
        Ok(score)
    } else {
        Err(Error::Domain(format!(
            "{what} is not finite ({score}); is the OOV floor zero?"
        )))
    }
}

/// Query log-likelihood under the span's smoothed unigram model, using the
/// span's effective length. Counts are taken directly from the document.
pub fn lm_score(
    query: &Query,
    span: PassageSpan,
    doc: &Document,
    stats: &CorpusStats,
    s: &Smoothing,
) -> Result<f64> {
    let window = &doc.terms[span.start..span.end()];
    let mut score = 0.0;
    for id in &query.ids {
        let tf = match id {
            Some(t) => window.iter().filter(|&&w| w == *t).count() as u32,
            None => 0,
        };
        score += lm_term(tf, span.len, stats.corpus_freq(*id), stats.total_len(), s);
    }
    finite_or_domain(score, "language model score")
}

/// Kernel bias `b_t = λ·m·cf_t / ((1-λ)·|C|)`.
pub fn kernel_bias(cf: u64, total_len: u64, m_eff: usize, s: &Smoothing) -> f64 {
    let lambda = s.lambda;
    lambda * m_eff as f64 * cf as f64 / ((1.0 - lambda) * total_len as f64)
}

/// `n_q·log(m/(1-λ))`: the gap between a full-length span's kernel score
/// and its language-model score.
pub fn kernel_offset(n_q: usize, m_eff: usize, s: &Smoothing) -> f64 {
    n_q as f64 * (m_eff as f64 / (1.0 - s.lambda)).ln()
}

/// `Σ_t log(W·M(t, g) + b_t)` with an all-ones `W`.
pub fn kernel_score(
    query: &Query,
    span: PassageSpan,
    matrix: &MatchingMatrix,
    stats: &CorpusStats,
    s: &Smoothing,
    m_eff: usize,
) -> Result<f64> {
    if matrix.n_q() != query.len() {
        return Err(Error::DimensionMismatch {
            expected: query.len(),
            got: matrix.n_q(),
        });
    }
    let mut score = 0.0;
    for (row, id) in query.ids.iter().enumerate() {
        let tf = matrix.window_tf(row, span.start, span.len)?;
        let b = kernel_bias(stats.corpus_freq(*id), stats.total_len(), m_eff, s);
        score += (f64::from(tf) + b).ln();
    }
    finite_or_domain(score, "kernel score")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Pooling {
    /// Winner-take-all.
    #[default]
    Max,
    /// Log of the mean passage likelihood (uniform passage prior).
    Mean,
}

pub fn pool(scores: &[f64], strategy: Pooling) -> Result<f64> {
    if scores.is_empty() {
        return Err(Error::EmptyInput("no passage scores to pool"));
    }
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(match strategy {
        Pooling::Max => max,
        Pooling::Mean => {
            if scores.len() == 1 {
                return Ok(scores[0]);
            }
            let sum: f64 = scores.iter().map(|&x| (x - max).exp()).sum();
            max + sum.ln() - (scores.len() as f64).ln()
        }
    })
}

/// Per-filter pooled kernel scores `r(q, d)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PassageScoreVector(pub Vec<f64>);

impl PassageScoreVector {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Runs every filter over the matching matrix and pools each filter's
/// passage kernel scores.
pub fn score_vector(
    query: &Query,
    doc: &Document,
    filters: &[FilterSpec],
    stats: &CorpusStats,
    s: &Smoothing,
    pooling: Pooling,
) -> Result<PassageScoreVector> {
    if filters.is_empty() {
        return Err(Error::EmptyInput("no filters configured"));
    }
    let matrix = MatchingMatrix::build(query, doc);
    let mut out = Vec::with_capacity(filters.len());
    let mut buf = Vec::new();
    for f in filters {
        let m_eff = f.effective_window(doc.len());
        buf.clear();
        for span in extract_passages(doc.len(), f) {
            buf.push(kernel_score(query, span, &matrix, stats, s, m_eff)?);
        }
        out.push(pool(&buf, pooling)?);
    }
    Ok(PassageScoreVector(out))
}

/// Kernel scores shifted by their bias constant so each filter reports a
/// query log-likelihood. For the infinite filter this is exactly the
/// whole-document language model; for finite filters it is a per-query
/// constant shift.
pub fn likelihood_vector(
    query: &Query,
    doc: &Document,
    filters: &[FilterSpec],
    stats: &CorpusStats,
    s: &Smoothing,
    pooling: Pooling,
) -> Result<PassageScoreVector> {
    let mut r = score_vector(query, doc, filters, stats, s, pooling)?;
    for (v, f) in r.0.iter_mut().zip(filters) {
        *v -= kernel_offset(query.len(), f.effective_window(doc.len()), s);
    }
    Ok(r)
}

/// Whole-document smoothed query likelihood.
pub fn document_lm_score(
    query: &Query,
    doc: &Document,
    stats: &CorpusStats,
    s: &Smoothing,
) -> Result<f64> {
    lm_score(
        query,
        PassageSpan {
            start: 0,
            len: doc.len(),
        },
        doc,
        stats,
        s,
    )
}

/// Best passage language-model score under one filter.
pub fn max_passage_lm_score(
    query: &Query,
    doc: &Document,
    filter: &FilterSpec,
    stats: &CorpusStats,
    s: &Smoothing,
) -> Result<f64> {
    let mut best = f64::NEG_INFINITY;
    for span in extract_passages(doc.len(), filter) {
        best = best.max(lm_score(query, span, doc, stats, s)?);
    }
    if best == f64::NEG_INFINITY {
        return Err(Error::EmptyInput("document has no passages"));
    }
    Ok(best)
}

/// Document-model weighting for the max-scoring-passage baseline.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Homogeneity {
    None,
    Length,
    Ent,
    IntPsg,
    DocPsg,
}

impl Homogeneity {
    pub fn name(&self) -> &'static str {
        match self {
            Homogeneity::None => "base",
            Homogeneity::Length => "length",
            Homogeneity::Ent => "ent",
            Homogeneity::IntPsg => "interPsg",
            Homogeneity::DocPsg => "docPsg",
        }
    }
}

impl FromStr for Homogeneity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "base" | "none" => Homogeneity::None,
            "length" => Homogeneity::Length,
            "ent" | "entropy" => Homogeneity::Ent,
            "intpsg" | "interpsg" => Homogeneity::IntPsg,
            "docpsg" => Homogeneity::DocPsg,
            other => return Err(Error::Config(format!("unknown homogeneity `{other}`"))),
        })
    }
}

/// `log(h·P(q|d) + (1-h)·P(q|g*))` from the two log-likelihoods, without
/// leaving log space. `h = 0` and `h = 1` return the passage and document
/// scores exactly.
pub fn combine_msp(h: f64, doc_ll: f64, passage_ll: f64) -> f64 {
    if h <= 0.0 {
        return passage_ll;
    }
    if h >= 1.0 {
        return doc_ll;
    }
    let a = h.ln() + doc_ll;
    let b = (1.0 - h).ln() + passage_ll;
    let hi = a.max(b);
    hi + ((a - hi).exp() + (b - hi).exp()).ln()
}

/// Scores candidates with the max-scoring-passage model, mixing in the
/// whole-document model by `weight(doc)` when one is given.
pub fn msp_scores_with<F>(
    query: &Query,
    candidates: &[usize],
    index: &Index,
    filter: &FilterSpec,
    s: &Smoothing,
    weight: Option<F>,
) -> Result<Vec<(usize, f64)>>
where
    F: Fn(usize) -> Result<f64>,
{
    let stats = index.stats();
    candidates
        .iter()
        .map(|&di| {
            let doc = index.doc(di);
            let psg = max_passage_lm_score(query, doc, filter, stats, s)?;
            let score = match &weight {
                None => psg,
                Some(w) => combine_msp(w(di)?, document_lm_score(query, doc, stats, s)?, psg),
            };
            Ok((di, score))
        })
        .collect()
}

/// Ranks candidates by MSP, optionally weighted by a homogeneity score
/// computed with `filter`'s passages.
pub fn msp_rank(
    query: &Query,
    candidates: &[usize],
    index: &Index,
    filter: &FilterSpec,
    homogeneity: Homogeneity,
    s: &Smoothing,
) -> Result<Vec<(usize, f64)>> {
    let scored = if homogeneity == Homogeneity::None {
        msp_scores_with(
            query,
            candidates,
            index,
            filter,
            s,
            None::<fn(usize) -> Result<f64>>,
        )?
    } else {
        let w = |di: usize| {
            let h = features::homogeneity(index.doc(di), index.stats(), filter)?;
            Ok(h.select(homogeneity))
        };
        msp_scores_with(query, candidates, index, filter, s, Some(w))?
    };
    Ok(crate::rank_by_score(index, scored))
}
