//! Paired two-sided Fisher randomization (permutation) test.
//!
//! The statistic is `|mean(a_i - b_i)|`. Each permutation swaps the two
//! systems' values for a query with probability 1/2, which flips the sign
//! of that query's difference. `p = (1 + #{stat >= observed}) / (1 + N)`.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub const DEFAULT_PERMUTATIONS: usize = 100_000;
/// Largest query count accepted by [`fisher_exact`].
pub const MAX_EXACT_QUERIES: usize = 24;
// permuted statistics within this of the observed one count as reaching it
const TIE_EPS: f64 = 1e-12;

fn differences(a: &[f64], b: &[f64]) -> Result<Vec<f64>> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    if a.is_empty() {
        return Err(Error::EmptyInput("no paired queries"));
    }
    Ok(a.iter().zip(b).map(|(x, y)| x - y).collect())
}

fn statistic(diffs: &[f64], mut flip: impl FnMut(usize) -> bool) -> f64 {
    let sum: f64 = diffs
        .iter()
        .enumerate()
        .map(|(i, &d)| if flip(i) { -d } else { d })
        .sum();
    (sum / diffs.len() as f64).abs()
}

/// Monte Carlo p-value with `permutations` random sign patterns.
pub fn fisher_randomization(a: &[f64], b: &[f64], permutations: usize, seed: u64) -> Result<f64> {
    if permutations == 0 {
        return Err(Error::Config("permutations must be positive".into()));
    }
    let diffs = differences(a, b)?;
    let observed = statistic(&diffs, |_| false);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut bits = Vec::with_capacity(diffs.len().div_ceil(64));
    let mut hits = 0u64;
    for _ in 0..permutations {
        bits.clear();
        bits.extend((0..diffs.len().div_ceil(64)).map(|_| rng.next_u64()));
        let stat = statistic(&diffs, |i| bits[i / 64] >> (i % 64) & 1 == 1);
        if stat + TIE_EPS >= observed {
            hits += 1;
        }
    }
    Ok((1 + hits) as f64 / (1 + permutations) as f64)
}

/// Enumerates all `2^n` sign patterns; `p = hits / 2^n`. The observed
/// pattern is one of them, so `p >= 2^-n`.
pub fn fisher_exact(a: &[f64], b: &[f64]) -> Result<f64> {
    let diffs = differences(a, b)?;
    if diffs.len() > MAX_EXACT_QUERIES {
        return Err(Error::Config(format!(
            "exact enumeration supports at most {MAX_EXACT_QUERIES} queries"
        )));
    }
    let observed = statistic(&diffs, |_| false);
    let total = 1u64 << diffs.len();
    let hits = (0..total)
        .filter(|mask| statistic(&diffs, |i| mask >> i & 1 == 1) + TIE_EPS >= observed)
        .count() as u64;
    Ok(hits as f64 / total as f64)
}
