//! TREC qrels (`qid 0 docno rel`) and run (`qid Q0 docno rank score tag`) files.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Qrels {
    judgments: BTreeMap<String, HashMap<String, i32>>,
}

impl Qrels {
    pub fn insert(&mut self, qid: &str, doc_id: &str, rel: i32) -> Result<()> {
        if rel < 0 {
            return Err(Error::Config(format!(
                "negative relevance for {qid}/{doc_id}"
            )));
        }
        let q = self.judgments.entry(qid.to_string()).or_default();
        if q.insert(doc_id.to_string(), rel).is_some() {
            return Err(Error::Config(format!(
                "duplicate judgment for {qid}/{doc_id}"
            )));
        }
        Ok(())
    }

    pub fn parse(text: &str, name: &str) -> Result<Self> {
        let mut qrels = Qrels::default();
        for (i, line) in text.lines().enumerate() {
            let cols: Vec<&str> = line.split_whitespace().collect();
            if cols.is_empty() {
                continue;
            }
            if cols.len() != 4 {
                return Err(Error::parse(name, i + 1, "expected `qid 0 docno rel`"));
            }
            let rel: i32 = cols[3]
                .parse()
                .map_err(|_| Error::parse(name, i + 1, "relevance is not an integer"))?;
            // trec_eval treats negative grades as non-relevant
            qrels
                .insert(cols[0], cols[2], rel.max(0))
                .map_err(|e| Error::parse(name, i + 1, e.to_string()))?;
        }
        Ok(qrels)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn relevance(&self, qid: &str, doc_id: &str) -> i32 {
        self.judgments
            .get(qid)
            .and_then(|q| q.get(doc_id))
            .copied()
            .unwrap_or(0)
    }

    pub fn is_relevant(&self, qid: &str, doc_id: &str) -> bool {
        self.relevance(qid, doc_id) > 0
    }

    pub fn num_relevant(&self, qid: &str) -> usize {
        self.judgments
            .get(qid)
            .map_or(0, |q| q.values().filter(|&&r| r > 0).count())
    }

    /// Relevance grades of the relevant documents, descending.
    pub fn relevant_grades(&self, qid: &str) -> Vec<i32> {
        let mut g: Vec<i32> = self
            .judgments
            .get(qid)
            .map(|q| q.values().copied().filter(|&r| r > 0).collect())
            .unwrap_or_default();
        g.sort_unstable_by(|a, b| b.cmp(a));
        g
    }

    pub fn queries(&self) -> impl Iterator<Item = &str> {
        self.judgments.keys().map(String::as_str)
    }
}

/// Ranked documents per query, best first.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Run {
    rankings: BTreeMap<String, Vec<(String, f64)>>,
}

impl Run {
    /// Sets a query's ranking; it is sorted by score descending, doc id
    /// ascending.
    pub fn insert(&mut self, qid: &str, mut ranking: Vec<(String, f64)>) -> Result<()> {
        let mut seen = HashSet::new();
        for (d, s) in &ranking {
            if !seen.insert(d.as_str()) {
                return Err(Error::Config(format!(
                    "document {d} ranked twice for {qid}"
                )));
            }
            if s.is_nan() {
                return Err(Error::Domain(format!("NaN score for {qid}/{d}")));
            }
        }
        ranking.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        self.rankings.insert(qid.to_string(), ranking);
        Ok(())
    }

    pub fn get(&self, qid: &str) -> Option<&[(String, f64)]> {
        self.rankings.get(qid).map(Vec::as_slice)
    }

    pub fn doc_ids(&self, qid: &str) -> Vec<&str> {
        self.get(qid)
            .map(|r| r.iter().map(|(d, _)| d.as_str()).collect())
            .unwrap_or_default()
    }

    pub fn queries(&self) -> impl Iterator<Item = &str> {
        self.rankings.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.rankings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rankings.is_empty()
    }

    /// Parses a run file. Documents are ordered by score descending; equal
    /// scores keep the file's rank order.
    pub fn parse(text: &str, name: &str) -> Result<Self> {
        let mut rows: BTreeMap<String, Vec<(String, f64, u64)>> = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let cols: Vec<&str> = line.split_whitespace().collect();
            if cols.is_empty() {
                continue;
            }
            if cols.len() != 6 {
                return Err(Error::parse(
                    name,
                    i + 1,
                    "expected `qid Q0 docno rank score tag`",
                ));
            }
            let rank: u64 = cols[3]
                .parse()
                .map_err(|_| Error::parse(name, i + 1, "rank is not an integer"))?;
            let score: f64 = cols[4]
                .parse()
                .map_err(|_| Error::parse(name, i + 1, "score is not a number"))?;
            rows.entry(cols[0].to_string())
                .or_default()
                .push((cols[2].to_string(), score, rank));
        }
        let mut run = Run::default();
        for (qid, mut docs) in rows {
            let mut seen = HashSet::new();
            for (d, _, _) in &docs {
                if !seen.insert(d.clone()) {
                    return Err(Error::format(
                        name,
                        format!("document {d} ranked twice for {qid}"),
                    ));
                }
            }
            docs.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.2.cmp(&b.2)));
            run.rankings
                .insert(qid, docs.into_iter().map(|(d, s, _)| (d, s)).collect());
        }
        Ok(run)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    /// Writes `qid Q0 docno rank score tag`, ranks from 1, scores with six
    /// decimals, queries in ascending id order.
    pub fn write<W: Write>(&self, w: &mut W, tag: &str) -> std::io::Result<()> {
        for (qid, ranking) in &self.rankings {
            for (i, (doc, score)) in ranking.iter().enumerate() {
                writeln!(w, "{qid} Q0 {doc} {} {score:.6} {tag}", i + 1)?;
            }
        }
        Ok(())
    }

    pub fn save(&self, path: &Path, tag: &str) -> Result<()> {
        let mut buf = Vec::new();
        self.write(&mut buf, tag).map_err(|e| Error::io(path, e))?;
        fs::write(path, buf).map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn qrels_parse_and_duplicates() {
        let q = Qrels::parse("301 0 d1 1\n301 0 d2 0\n302 0 d9 2\n", "q").unwrap();
        assert!(q.is_relevant("301", "d1"));
        assert!(!q.is_relevant("301", "d2"));
        assert_eq!(q.num_relevant("301"), 1);
        assert_eq!(q.relevant_grades("302"), vec![2]);
        assert!(Qrels::parse("1 0 a 1\n1 0 a 0\n", "q").is_err());
        assert!(Qrels::parse("1 0 a\n", "q").is_err());
    }

    #[test]
    fn run_write_format_and_reparse() {
        let mut run = Run::default();
        run.insert(
            "q2",
            vec![("b".into(), -1.5), ("a".into(), -1.5), ("c".into(), 2.0)],
        )
        .unwrap();
        run.insert("q1", vec![("x".into(), 0.1234567)]).unwrap();
        let mut out = Vec::new();
        run.write(&mut out, "tag").unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(
            text,
            "q1 Q0 x 1 0.123457 tag\nq2 Q0 c 1 2.000000 tag\nq2 Q0 a 2 -1.500000 tag\nq2 Q0 b 3 -1.500000 tag\n"
        );
        let back = Run::parse(&text, "r").unwrap();
        assert_eq!(back.doc_ids("q2"), ["c", "a", "b"]);
    }

    #[test]
    fn equal_scores_keep_file_order() {
        let run = Run::parse("q Q0 z 1 1.0 t\nq Q0 a 2 1.0 t\n", "r").unwrap();
        assert_eq!(run.doc_ids("q"), ["z", "a"]);
    }

    #[test]
    fn run_rejects_duplicates() {
        let mut run = Run::default();
        assert!(run
            .insert("q", vec![("a".into(), 1.0), ("a".into(), 0.5)])
            .is_err());
        assert!(Run::parse("q Q0 a 1 1 t\nq Q0 a 2 0 t\n", "r").is_err());
    }
}
