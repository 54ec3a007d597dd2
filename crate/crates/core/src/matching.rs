//! Binary query/document matching matrix.
//!
//! Entry `(i, j)` is 1 iff query term `i` equals document term `j`. Rows are
//! stored as sorted position lists, so a windowed row sum (the projection
//! of the all-ones kernel onto a window) is two binary searches.

use std::collections::HashMap;
use std::fmt::Write as _;

use crate::corpus::{Document, Query, TermId};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MatchingMatrix {
    n_d: usize,
    rows: Vec<Vec<u32>>,
}

impl MatchingMatrix {
    pub fn build(query: &Query, doc: &Document) -> Self {
        let mut rows_of: HashMap<TermId, Vec<usize>> = HashMap::new();
        for (i, id) in query.ids.iter().enumerate() {
            if let Some(t) = id {
                rows_of.entry(*t).or_default().push(i);
            }
        }
        let mut rows = vec![Vec::new(); query.len()];
        for (pos, t) in doc.terms.iter().enumerate() {
            if let Some(rs) = rows_of.get(t) {
                for &r in rs {
                    rows[r].push(pos as u32);
                }
            }
        }
        MatchingMatrix {
            n_d: doc.len(),
            rows,
        }
    }

    pub fn n_q(&self) -> usize {
        self.rows.len()
    }

    pub fn n_d(&self) -> usize {
        self.n_d
    }

    /// Sorted match positions of a query row.
    pub fn row_positions(&self, row: usize) -> Result<&[u32]> {
        self.rows
            .get(row)
            .map(Vec::as_slice)
            .ok_or(Error::RowOutOfRange {
                row,
                rows: self.rows.len(),
            })
    }

    /// Number of ones in `row` over columns `[start, min(start + len, n_d))`.
    pub fn window_tf(&self, row: usize, start: usize, len: usize) -> Result<u32> {
        let pos = self.row_positions(row)?;
        let end = start.saturating_add(len).min(self.n_d);
        if start >= end {
            return Ok(0);
        }
        let lo = pos.partition_point(|&p| (p as usize) < start);
        let hi = pos.partition_point(|&p| (p as usize) < end);
        Ok((hi - lo) as u32)
    }

    pub fn row_sum(&self, row: usize) -> Result<u32> {
        Ok(self.row_positions(row)?.len() as u32)
    }

    /// Dense `n_q x n_d` materialization.
    pub fn dense(&self) -> Vec<Vec<u8>> {
        self.rows
            .iter()
            .map(|pos| {
                let mut row = vec![0u8; self.n_d];
                for &p in pos {
                    row[p as usize] = 1;
                }
                row
            })
            .collect()
    }

    /// One line of 0/1 characters per query term.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for row in self.dense() {
            for v in row {
                out.push(if v == 1 { '1' } else { '0' });
            }
            let _ = writeln!(out);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{IndexBuilder, TokenizeConfig};

    fn setup(q: &[&str], d: &[&str]) -> MatchingMatrix {
        let mut b = IndexBuilder::new(TokenizeConfig::default());
        b.add_tokens("d", d.iter().copied()).unwrap();
        let idx = b.finish().unwrap();
        let query = idx
            .resolve_query("q", q.iter().map(|s| s.to_string()).collect())
            .unwrap();
        MatchingMatrix::build(&query, idx.doc(0))
    }

    #[test]
    fn dense_rows_follow_identity_rule() {
        let m = setup(&["a", "b"], &["a", "c", "b", "a"]);
        assert_eq!(m.dense(), vec![vec![1, 0, 0, 1], vec![0, 0, 1, 0]]);
        assert_eq!(m.dump(), "1001\n0010\n");
    }

    #[test]
    fn unmatched_and_identity() {
        let m = setup(&["z"], &["a", "b"]);
        assert_eq!(m.dense(), vec![vec![0, 0]]);
        let m = setup(&["a"], &["a"]);
        assert_eq!(m.dense(), vec![vec![1]]);
    }

    #[test]
    fn repeated_query_terms_share_rows() {
        let m = setup(&["a", "a"], &["a", "b", "a"]);
        assert_eq!(m.dense(), vec![vec![1, 0, 1], vec![1, 0, 1]]);
    }

    #[test]
    fn window_counts() {
        let m = setup(&["a", "z"], &["a", "c", "b", "a"]);
        assert_eq!(m.window_tf(0, 0, 2).unwrap(), 1);
        assert_eq!(m.window_tf(0, 0, 4).unwrap(), m.row_sum(0).unwrap());
        assert_eq!(m.window_tf(0, 3, 100).unwrap(), 1);
        assert_eq!(m.window_tf(1, 0, 4).unwrap(), 0);
        assert!(matches!(
            m.window_tf(2, 0, 1),
            Err(Error::RowOutOfRange { .. })
        ));
    }
}
