//! Initial retrieval: whole-document query likelihood over the full index.

use crate::corpus::{Index, Query};
use crate::error::{Error, Result};
use crate::passages::{lm_term, Smoothing};

/// Query likelihood of every indexed document, in index order. Uses the
/// same per-term arithmetic as [`crate::passages::document_lm_score`], so
/// the two agree exactly.
pub fn score_all(index: &Index, query: &Query, s: &Smoothing) -> Result<Vec<f64>> {
    let stats = index.stats();
    let n_docs = index.num_docs();
    // dense tf table, one row per query term
    let tf: Vec<Vec<u32>> = query
        .ids
        .iter()
        .map(|id| {
            let mut row = vec![0u32; n_docs];
            if let Some(t) = id {
                for &(d, c) in index.postings(*t) {
                    row[d as usize] = c;
                }
            }
            row
        })
        .collect();
    let cf: Vec<u64> = query.ids.iter().map(|id| stats.corpus_freq(*id)).collect();
    let mut out = Vec::with_capacity(n_docs);
    for d in 0..n_docs {
        let n = stats.doc_len(d) as usize;
        let mut score = 0.0;
        for (i, row) in tf.iter().enumerate() {
            score += lm_term(row[d], n, cf[i], stats.total_len(), s);
        }
        if !score.is_finite() {
            return Err(Error::Domain(format!(
                "query likelihood for `{}` is not finite; is the OOV floor zero?",
                query.id
            )));
        }
        out.push(score);
    }
    Ok(out)
}

/// Top `k` documents by query likelihood, ties broken by doc id.
pub fn retrieve(
    index: &Index,
    query: &Query,
    s: &Smoothing,
    k: usize,
) -> Result<Vec<(usize, f64)>> {
    let scores = score_all(index, query, s)?;
    let mut ranked = crate::rank_by_score(index, scores.into_iter().enumerate().collect());
    ranked.truncate(k);
    Ok(ranked)
}
