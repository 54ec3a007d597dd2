//! Passage-based document re-ranking: smoothed passage language models
//! computed as convolutions over query/document matching matrices, the
//! max-scoring-passage baselines, and a softmax fusion network over
//! several passage lengths.

pub mod cli;
pub mod corpus;
pub mod error;
pub mod evaluation;
pub mod features;
pub mod fusion;
pub mod matching;
pub mod passages;
pub mod retrieval;
pub mod training;

pub use error::{Error, Result};

use corpus::Index;

/// Sorts `(doc, score)` pairs by score descending, ties broken by the
/// external document id so rankings are reproducible.
pub fn rank_by_score(index: &Index, mut scored: Vec<(usize, f64)>) -> Vec<(usize, f64)> {
    scored.sort_by(|a, b| {
        b.1.total_cmp(&a.1)
            .then_with(|| index.doc(a.0).doc_id.cmp(&index.doc(b.0).doc_id))
    });
    scored
}
