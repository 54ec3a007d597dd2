//! Fusion features `h(q, d)`: four document-homogeneity scores, 24
//! aggregated query-quality statistics and the list feature.
//!
//! Raw vector layout (β = 29):
//!
//! | index  | feature                                          |
//! |--------|--------------------------------------------------|
//! | 0..4   | `h_length`, `h_ent`, `h_intpsg`, `h_docpsg`      |
//! | 4..12  | IDF statistics                                   |
//! | 12..20 | ICF magnitude (`-ICF_t`) statistics              |
//! | 20..28 | SCQ statistics                                   |
//! | 28     | mean QL score of the top-k initial retrieval     |
//!
//! Each statistics block is ordered as [`QUERY_STATS`].

use std::collections::HashMap;
use std::io::Write;
use std::str::FromStr;

use crate::corpus::{CorpusStats, Document, Index, Query, TermId};
use crate::error::{Error, Result};
use crate::passages::{extract_passages, FilterSpec, Homogeneity, Smoothing};
use crate::retrieval;

pub const HOMOGENEITY_DIMS: usize = 4;
pub const QUERY_DIMS: usize = 24;
pub const FEATURE_DIMS: usize = HOMOGENEITY_DIMS + QUERY_DIMS + 1;
pub const DEFAULT_LIST_DEPTH: usize = 2000;
pub const STD_FLOOR: f64 = 1e-8;

pub const QUERY_STATS: [&str; 8] = [
    "sum", "std", "max_min", "max", "mean", "gmean", "hmean", "cv",
];
const QUERY_BASES: [&str; 3] = ["idf", "icf", "scq"];
const HOMOGENEITY_NAMES: [&str; 4] = ["h_length", "h_ent", "h_intpsg", "h_docpsg"];

/// Names of the 29 raw feature dimensions, in vector order.
pub fn feature_names() -> Vec<String> {
    let mut names: Vec<String> = HOMOGENEITY_NAMES.iter().map(|s| s.to_string()).collect();
    for base in QUERY_BASES {
        for stat in QUERY_STATS {
            names.push(format!("{base}_{stat}"));
        }
    }
    names.push("list_mean".into());
    names
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HomogeneityScores {
    pub length: f64,
    pub ent: f64,
    pub int_psg: f64,
    pub doc_psg: f64,
}

impl HomogeneityScores {
    pub fn select(&self, which: Homogeneity) -> f64 {
        match which {
            Homogeneity::None => 0.0,
            Homogeneity::Length => self.length,
            Homogeneity::Ent => self.ent,
            Homogeneity::IntPsg => self.int_psg,
            Homogeneity::DocPsg => self.doc_psg,
        }
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.length, self.ent, self.int_psg, self.doc_psg]
    }
}

type SparseVec = Vec<(TermId, f64)>;

fn tfidf(terms: &[TermId], stats: &CorpusStats) -> SparseVec {
    let mut counts: HashMap<TermId, u32> = HashMap::new();
    for &t in terms {
        *counts.entry(t).or_insert(0) += 1;
    }
    let n_docs = stats.num_docs() as f64;
    let mut v: SparseVec = counts
        .into_iter()
        .map(|(t, tf)| {
            let idf = (n_docs / stats.doc_freq(Some(t)) as f64).ln();
            (t, f64::from(tf) * idf)
        })
        .collect();
    v.sort_unstable_by_key(|&(t, _)| t);
    v
}

fn norm(v: &SparseVec) -> f64 {
    v.iter().map(|(_, w)| w * w).sum::<f64>().sqrt()
}

/// Cosine of two non-negative sparse vectors; 0 when either is all-zero.
fn cosine(a: &SparseVec, na: f64, b: &SparseVec, nb: f64) -> f64 {
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    let (mut i, mut j, mut dot) = (0, 0, 0.0);
    while i < a.len() && j < b.len() {
        match a[i].0.cmp(&b[j].0) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                dot += a[i].1 * b[j].1;
                i += 1;
                j += 1;
            }
        }
    }
    (dot / (na * nb)).clamp(0.0, 1.0)
}

/// Length, entropy, inter-passage and doc-passage homogeneity of `doc`,
/// using `filter`'s passages for the two passage-based scores.
pub fn homogeneity(
    doc: &Document,
    stats: &CorpusStats,
    filter: &FilterSpec,
) -> Result<HomogeneityScores> {
    if !filter.is_finite() {
        return Err(Error::Config(
            "passage homogeneity needs a finite filter".into(),
        ));
    }
    let n_d = doc.len();
    if n_d == 0 {
        return Err(Error::EmptyInput("empty document"));
    }

    let spread = stats.max_log_len() - stats.min_log_len();
    let length = if spread > 0.0 {
        (1.0 - ((n_d as f64).ln() - stats.min_log_len()) / spread).clamp(0.0, 1.0)
    } else {
        1.0
    };

    let mut counts: HashMap<TermId, u32> = HashMap::new();
    for &t in &doc.terms {
        *counts.entry(t).or_insert(0) += 1;
    }
    let ent = if counts.len() == 1 {
        1.0
    } else {
        let n = n_d as f64;
        let mut neg_entropy = 0.0;
        let mut tfs: Vec<u32> = counts.values().copied().collect();
        tfs.sort_unstable();
        for tf in tfs {
            let p = f64::from(tf) / n;
            neg_entropy += p * p.ln();
        }
        (1.0 + neg_entropy / n.ln()).clamp(0.0, 1.0)
    };

    let spans = extract_passages(n_d, filter);
    let (int_psg, doc_psg) = if spans.len() < 2 {
        (1.0, 1.0)
    } else {
        let dv = tfidf(&doc.terms, stats);
        let dn = norm(&dv);
        let pv: Vec<(SparseVec, f64)> = spans
            .iter()
            .map(|s| {
                let v = tfidf(&doc.terms[s.start..s.end()], stats);
                let n = norm(&v);
                (v, n)
            })
            .collect();
        let k = pv.len() as f64;
        let mut pair_sum = 0.0;
        for i in 0..pv.len() {
            for j in i + 1..pv.len() {
                pair_sum += cosine(&pv[i].0, pv[i].1, &pv[j].0, pv[j].1);
            }
        }
        let doc_sum: f64 = pv.iter().map(|(v, n)| cosine(&dv, dn, v, *n)).sum();
        (
            (2.0 * pair_sum / (k * (k - 1.0))).clamp(0.0, 1.0),
            (doc_sum / k).clamp(0.0, 1.0),
        )
    };

    Ok(HomogeneityScores {
        length,
        ent,
        int_psg,
        doc_psg,
    })
}

/// `log((|D| + 0.5) / D_t) / (|D| + 1)`.
pub fn term_idf(df: u64, n_docs: usize) -> f64 {
    let n = n_docs as f64;
    ((n + 0.5) / df as f64).ln() / (n + 1.0)
}

/// `-log(cf_t / |C|)`, the magnitude of the (non-positive) ICF.
pub fn term_icf_magnitude(cf: u64, total_len: u64) -> f64 {
    -(cf as f64 / total_len as f64).ln()
}

/// `(1 + log cf_t) · log(1 + |D| / D_t)`.
pub fn term_scq(cf: u64, df: u64, n_docs: usize) -> f64 {
    (1.0 + (cf as f64).ln()) * (1.0 + n_docs as f64 / df as f64).ln()
}

const RATIO_FLOOR: f64 = 1e-12;

/// The eight summary statistics over per-term values, ordered as
/// [`QUERY_STATS`]. Inputs are expected non-negative; geometric and
/// harmonic means are 0 if any value is 0.
pub fn aggregate(values: &[f64]) -> [f64; 8] {
    if values.is_empty() {
        return [0.0; 8];
    }
    let n = values.len() as f64;
    let sum: f64 = values.iter().sum();
    let mean = sum / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let ratio = if max == min {
        1.0
    } else {
        max / min.max(RATIO_FLOOR)
    };
    let positive = values.iter().all(|&v| v > 0.0);
    let gmean = if positive {
        (values.iter().map(|v| v.ln()).sum::<f64>() / n).exp()
    } else {
        0.0
    };
    let hmean = if positive {
        n / values.iter().map(|v| 1.0 / v).sum::<f64>()
    } else {
        0.0
    };
    let cv = if mean != 0.0 { std / mean } else { 0.0 };
    [sum, std, ratio, max, mean, gmean, hmean, cv]
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QueryFeatureBlock(pub [f64; QUERY_DIMS]);

pub fn query_features(query: &Query, stats: &CorpusStats) -> QueryFeatureBlock {
    let n_docs = stats.num_docs();
    let mut idf = Vec::with_capacity(query.len());
    let mut icf = Vec::with_capacity(query.len());
    let mut scq = Vec::with_capacity(query.len());
    for id in &query.ids {
        let cf = stats.corpus_freq(*id).max(1);
        let df = stats.doc_freq(*id).max(1);
        idf.push(term_idf(df, n_docs));
        icf.push(term_icf_magnitude(cf, stats.total_len()));
        scq.push(term_scq(cf, df, n_docs));
    }
    let mut out = [0.0; QUERY_DIMS];
    for (b, vals) in [idf, icf, scq].iter().enumerate() {
        out[b * 8..(b + 1) * 8].copy_from_slice(&aggregate(vals));
    }
    QueryFeatureBlock(out)
}

/// Mean whole-document QL score of the top `min(k, |D|)` documents.
pub fn list_feature(index: &Index, query: &Query, s: &Smoothing, k: usize) -> Result<f64> {
    let mut scores = retrieval::score_all(index, query, s)?;
    if scores.is_empty() || k == 0 {
        return Err(Error::EmptyInput("no documents for the list feature"));
    }
    scores.sort_unstable_by(|a, b| b.total_cmp(a));
    let top = &scores[..k.min(scores.len())];
    Ok(top.iter().sum::<f64>() / top.len() as f64)
}

/// Raw (unnormalized) fusion feature vector in the documented order.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionFeatureVector(pub Vec<f64>);

pub fn fuse_features(
    h: &HomogeneityScores,
    q: &QueryFeatureBlock,
    list: f64,
) -> FusionFeatureVector {
    let mut v = Vec::with_capacity(FEATURE_DIMS);
    v.extend_from_slice(&h.to_array());
    v.extend_from_slice(&q.0);
    v.push(list);
    FusionFeatureVector(v)
}

/// Which feature groups feed the fusion network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FeatureSet {
    Doc,
    Query,
    #[default]
    DocQuery,
}

impl FeatureSet {
    /// Indices into the raw 29-dimensional vector.
    pub fn indices(&self) -> std::ops::Range<usize> {
        match self {
            FeatureSet::Doc => 0..HOMOGENEITY_DIMS,
            FeatureSet::Query => HOMOGENEITY_DIMS..FEATURE_DIMS,
            FeatureSet::DocQuery => 0..FEATURE_DIMS,
        }
    }

    pub fn names(&self) -> Vec<String> {
        feature_names()[self.indices()].to_vec()
    }

    pub fn select(&self, raw: &[f64]) -> Result<Vec<f64>> {
        if raw.len() != FEATURE_DIMS {
            return Err(Error::DimensionMismatch {
                expected: FEATURE_DIMS,
                got: raw.len(),
            });
        }
        Ok(raw[self.indices()].to_vec())
    }

    pub fn name(&self) -> &'static str {
        match self {
            FeatureSet::Doc => "doc",
            FeatureSet::Query => "query",
            FeatureSet::DocQuery => "doc+query",
        }
    }
}

impl FromStr for FeatureSet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "doc" => Ok(FeatureSet::Doc),
            "query" => Ok(FeatureSet::Query),
            "doc+query" | "doc_query" | "both" => Ok(FeatureSet::DocQuery),
            other => Err(Error::Config(format!("unknown feature set `{other}`"))),
        }
    }
}

/// Per-dimension z-scoring fitted on training rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn identity(dim: usize) -> Self {
        Standardizer {
            mean: vec![0.0; dim],
            std: vec![1.0; dim],
        }
    }

    /// Population mean/std per column; std floored at [`STD_FLOOR`].
    pub fn fit<'a, I>(rows: I, dim: usize) -> Result<Self>
    where
        I: IntoIterator<Item = &'a [f64]>,
    {
        let mut sum = vec![0.0; dim];
        let mut sq = vec![0.0; dim];
        let mut n = 0usize;
        let rows: Vec<&[f64]> = rows.into_iter().collect();
        for r in &rows {
            if r.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: r.len(),
                });
            }
            for (s, v) in sum.iter_mut().zip(r.iter()) {
                *s += v;
            }
            n += 1;
        }
        if n == 0 {
            return Err(Error::EmptyInput("no rows to fit normalization"));
        }
        let mean: Vec<f64> = sum.iter().map(|s| s / n as f64).collect();
        for r in &rows {
            for ((q, v), m) in sq.iter_mut().zip(r.iter()).zip(&mean) {
                *q += (v - m).powi(2);
            }
        }
        let std = sq
            .iter()
            .map(|q| (q / n as f64).sqrt().max(STD_FLOOR))
            .collect();
        Ok(Standardizer { mean, std })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, raw: &[f64]) -> Result<Vec<f64>> {
        if raw.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: raw.len(),
            });
        }
        Ok(raw
            .iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(v, (m, s))| (v - m) / s)
            .collect())
    }
}

/// Writes a tab-separated feature matrix: `qid`, `docno`, then one column
/// per feature named by `names`.
pub fn write_feature_matrix<'a, W, I>(w: &mut W, names: &[String], rows: I) -> std::io::Result<()>
where
    W: Write,
    I: IntoIterator<Item = (&'a str, &'a str, &'a [f64])>,
{
    write!(w, "qid\tdocno")?;
    for n in names {
        write!(w, "\t{n}")?;
    }
    writeln!(w)?;
    for (q, d, vals) in rows {
        write!(w, "{q}\t{d}")?;
        for v in vals {
            write!(w, "\t{v:?}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{IndexBuilder, TokenizeConfig};
    use approx::assert_abs_diff_eq;

    fn index(docs: &[(&str, &[&str])]) -> Index {
        let mut b = IndexBuilder::new(TokenizeConfig::default());
        for (id, toks) in docs {
            b.add_tokens(id, toks.iter().copied()).unwrap();
        }
        b.finish().unwrap()
    }

    #[test]
    fn length_extremes() {
        let idx = index(&[
            ("s", &["a", "b"]),
            ("m", &["a", "b", "c", "d"]),
            ("l", &["a", "b", "c", "d", "e", "f", "g", "h"]),
        ]);
        let f = FilterSpec::finite(2).unwrap();
        let h = |i| homogeneity(idx.doc(i), idx.stats(), &f).unwrap().length;
        assert_eq!(h(0), 1.0);
        assert_eq!(h(2), 0.0);
        assert_abs_diff_eq!(h(1), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn entropy_single_term_and_flattening() {
        let idx = index(&[
            ("one", &["a", "a", "a", "a"]),
            ("skew", &["a", "a", "a", "b"]),
            ("flat", &["a", "a", "b", "b"]),
            ("flatter", &["a", "b", "c", "d"]),
        ]);
        let f = FilterSpec::finite(50).unwrap();
        let e: Vec<f64> = (0..4)
            .map(|i| homogeneity(idx.doc(i), idx.stats(), &f).unwrap().ent)
            .collect();
        assert_eq!(e[0], 1.0);
        assert!(e[0] > e[1] && e[1] > e[2] && e[2] > e[3]);
        assert_abs_diff_eq!(e[3], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn single_passage_documents_are_homogeneous() {
        let idx = index(&[("a", &["x", "y", "z"]), ("b", &["y", "q"])]);
        let h = homogeneity(idx.doc(0), idx.stats(), &FilterSpec::finite(50).unwrap()).unwrap();
        assert_eq!(h.int_psg, 1.0);
        assert_eq!(h.doc_psg, 1.0);
    }

    #[test]
    fn passage_cosines_hand_checked() {
        // spans of [x, x, y, y] with m=2, τ=2: [x,x] and [y,y]; disjoint terms
        let idx = index(&[("a", &["x", "x", "y", "y"]), ("b", &["z"])]);
        let h = homogeneity(
            idx.doc(0),
            idx.stats(),
            &FilterSpec::with_stride(2, 2).unwrap(),
        )
        .unwrap();
        assert_eq!(h.int_psg, 0.0);
        // idf of x and y is ln 2 in both; doc vector (2,2)·ln2, passages (2,0), (0,2)
        assert_abs_diff_eq!(h.doc_psg, 1.0 / 2f64.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn infinite_filter_rejected_for_homogeneity() {
        let idx = index(&[("a", &["x"])]);
        assert!(homogeneity(idx.doc(0), idx.stats(), &FilterSpec::infinite()).is_err());
    }

    #[test]
    fn term_feature_values() {
        assert_abs_diff_eq!(term_idf(10, 100), (10.05f64).ln() / 101.0, epsilon = 1e-15);
        assert_abs_diff_eq!(term_idf(10, 100), 0.022847, epsilon = 1e-6);
        assert_abs_diff_eq!(
            term_scq(10, 10, 100),
            (1.0 + 10f64.ln()) * 11f64.ln(),
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(term_scq(10, 10, 100), 7.91925, epsilon = 1e-5);
        assert_abs_diff_eq!(term_icf_magnitude(1, 100), 100f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn one_element_statistics() {
        let s = aggregate(&[2.5]);
        assert_eq!(s[0], 2.5); // sum
        assert_eq!(s[1], 0.0); // std
        assert_eq!(s[2], 1.0); // max/min
        assert_eq!(s[3], 2.5); // max
        assert_eq!(s[4], 2.5); // mean
        assert_abs_diff_eq!(s[5], 2.5, epsilon = 1e-15);
        assert_abs_diff_eq!(s[6], 2.5, epsilon = 1e-15);
        assert_eq!(s[7], 0.0);
    }

    #[test]
    fn two_element_statistics() {
        let s = aggregate(&[1.0, 4.0]);
        assert_eq!(s, [5.0, 1.5, 4.0, 4.0, 2.5, 2.0, 1.6, 0.6]);
    }

    #[test]
    fn list_feature_brute_force() {
        let idx = index(&[("a", &["x", "y"]), ("b", &["y", "y", "z"]), ("c", &["q"])]);
        let s = Smoothing::default();
        let q = idx.query("q", "y").unwrap();
        // cf_y = 3, |C| = 6
        let ql = |tf: f64, n: f64| (0.5 * tf / n + 0.5 * 3.0 / 6.0f64).ln();
        let all = [ql(1.0, 2.0), ql(2.0, 3.0), ql(0.0, 1.0)];
        let mean3 = all.iter().sum::<f64>() / 3.0;
        assert_abs_diff_eq!(
            list_feature(&idx, &q, &s, 2000).unwrap(),
            mean3,
            epsilon = 1e-12
        );
        let top2 = (all[0] + all[1]) / 2.0;
        assert_abs_diff_eq!(
            list_feature(&idx, &q, &s, 2).unwrap(),
            top2,
            epsilon = 1e-12
        );
    }

    #[test]
    fn fused_layout() {
        assert_eq!(FEATURE_DIMS, 29);
        assert_eq!(feature_names().len(), 29);
        let idx = index(&[("a", &["x", "y"]), ("b", &["y"])]);
        let q = idx.query("q", "x y").unwrap();
        let h = homogeneity(idx.doc(0), idx.stats(), &FilterSpec::finite(50).unwrap()).unwrap();
        let v1 = fuse_features(&h, &query_features(&q, idx.stats()), -3.0);
        let v2 = fuse_features(&h, &query_features(&q, idx.stats()), -3.0);
        assert_eq!(v1, v2);
        assert_eq!(v1.0.len(), 29);
        assert_eq!(v1.0[28], -3.0);
        assert_eq!(FeatureSet::Doc.select(&v1.0).unwrap().len(), 4);
        assert_eq!(FeatureSet::Query.select(&v1.0).unwrap().len(), 25);
        assert!(FeatureSet::Doc.select(&v1.0[..5]).is_err());
    }

    #[test]
    fn standardizer_constant_column_maps_to_zero() {
        let rows: Vec<Vec<f64>> = vec![vec![1.0, 7.0], vec![3.0, 7.0]];
        let st = Standardizer::fit(rows.iter().map(|r| r.as_slice()), 2).unwrap();
        assert_eq!(st.std[1], STD_FLOOR);
        assert_eq!(st.apply(&[3.0, 7.0]).unwrap(), vec![1.0, 0.0]);
        assert!(st.apply(&[1.0]).is_err());
    }
}
