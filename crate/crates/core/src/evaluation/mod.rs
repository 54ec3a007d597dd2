//! Effectiveness metrics over TREC runs and judgments.

mod significance;
mod trec;

use std::collections::BTreeMap;
use std::fmt::Write as _;

use log::warn;

use crate::error::{Error, Result};

pub use significance::{
    fisher_exact, fisher_randomization, DEFAULT_PERMUTATIONS, MAX_EXACT_QUERIES,
};
pub use trec::{Qrels, Run};

pub const DEFAULT_CUTOFF: usize = 20;
pub const SIGNIFICANCE_LEVEL: f64 = 0.05;

/// Average precision; `None` when the query has no relevant documents.
/// Unretrieved relevant documents count in the denominator.
pub fn average_precision(ranking: &[&str], qrels: &Qrels, qid: &str) -> Option<f64> {
    let total = qrels.num_relevant(qid);
    if total == 0 {
        return None;
    }
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (i, d) in ranking.iter().enumerate() {
        if qrels.is_relevant(qid, d) {
            hits += 1;
            sum += hits as f64 / (i + 1) as f64;
        }
    }
    Some(sum / total as f64)
}

/// NDCG@k with exponential gain `2^rel - 1` and `log2(i + 1)` discount.
pub fn ndcg_at_k(ranking: &[&str], qrels: &Qrels, qid: &str, k: usize) -> Option<f64> {
    let ideal_grades = qrels.relevant_grades(qid);
    if ideal_grades.is_empty() {
        return None;
    }
    let gain = |rel: i32| 2f64.powi(rel) - 1.0;
    let discount = |i: usize| ((i + 2) as f64).log2();
    let dcg: f64 = ranking
        .iter()
        .take(k)
        .enumerate()
        .map(|(i, d)| gain(qrels.relevance(qid, d)) / discount(i))
        .sum();
    let idcg: f64 = ideal_grades
        .iter()
        .take(k)
        .enumerate()
        .map(|(i, &r)| gain(r) / discount(i))
        .sum();
    Some(dcg / idcg)
}

/// Relevant documents in the top `k`, divided by `k`.
pub fn precision_at_k(ranking: &[&str], qrels: &Qrels, qid: &str, k: usize) -> f64 {
    if k == 0 {
        return 0.0;
    }
    let hits = ranking
        .iter()
        .take(k)
        .filter(|d| qrels.is_relevant(qid, d))
        .count();
    hits as f64 / k as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Map,
    Ndcg(usize),
    Precision(usize),
}

impl Metric {
    pub fn standard() -> [Metric; 3] {
        [
            Metric::Map,
            Metric::Ndcg(DEFAULT_CUTOFF),
            Metric::Precision(DEFAULT_CUTOFF),
        ]
    }

    pub fn name(&self) -> String {
        match self {
            Metric::Map => "map".into(),
            Metric::Ndcg(k) => format!("ndcg@{k}"),
            Metric::Precision(k) => format!("p@{k}"),
        }
    }

    fn eval(&self, ranking: &[&str], qrels: &Qrels, qid: &str) -> Option<f64> {
        match *self {
            Metric::Map => average_precision(ranking, qrels, qid),
            Metric::Ndcg(k) => ndcg_at_k(ranking, qrels, qid, k),
            Metric::Precision(k) => {
                (qrels.num_relevant(qid) > 0).then(|| precision_at_k(ranking, qrels, qid, k))
            }
        }
    }
}

/// Per-query values of `metric` for every run query that has at least one
/// relevant judgment.
pub fn per_query(run: &Run, qrels: &Qrels, metric: Metric) -> BTreeMap<String, f64> {
    let mut out = BTreeMap::new();
    for qid in run.queries() {
        let ranking = run.doc_ids(qid);
        match metric.eval(&ranking, qrels, qid) {
            Some(v) => {
                out.insert(qid.to_string(), v);
            }
            None => warn!(
                "query {qid} has no relevant documents; excluded from {}",
                metric.name()
            ),
        }
    }
    out
}

pub fn mean(values: &BTreeMap<String, f64>) -> f64 {
    if values.is_empty() {
        0.0
    } else {
        values.values().sum::<f64>() / values.len() as f64
    }
}

/// Mean average precision over judged run queries.
pub fn mean_average_precision(run: &Run, qrels: &Qrels) -> f64 {
    mean(&per_query(run, qrels, Metric::Map))
}

/// Per-query and mean metrics for one run.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub metrics: Vec<Metric>,
    pub per_query: BTreeMap<String, Vec<f64>>,
    pub means: Vec<f64>,
}

pub fn evaluate(run: &Run, qrels: &Qrels, metrics: &[Metric]) -> EvalReport {
    let columns: Vec<BTreeMap<String, f64>> =
        metrics.iter().map(|m| per_query(run, qrels, *m)).collect();
    let mut per_query: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for col in &columns {
        for (q, v) in col {
            per_query.entry(q.clone()).or_default().push(*v);
        }
    }
    EvalReport {
        metrics: metrics.to_vec(),
        per_query,
        means: columns.iter().map(mean).collect(),
    }
}

impl EvalReport {
    pub fn table(&self) -> String {
        let mut s = format!("{:<12}", "qid");
        for m in &self.metrics {
            let _ = write!(s, " {:>10}", m.name());
        }
        s.push('\n');
        for (q, vals) in &self.per_query {
            let _ = write!(s, "{q:<12}");
            for v in vals {
                let _ = write!(s, " {v:>10.4}");
            }
            s.push('\n');
        }
        let _ = write!(s, "{:<12}", "all");
        for v in &self.means {
            let _ = write!(s, " {v:>10.4}");
        }
        s.push('\n');
        s
    }

    pub fn csv(&self) -> String {
        let names: Vec<String> = self.metrics.iter().map(Metric::name).collect();
        let mut s = format!("qid,{}\n", names.join(","));
        let row = |vals: &[f64]| {
            vals.iter()
                .map(|v| format!("{v:.6}"))
                .collect::<Vec<_>>()
                .join(",")
        };
        for (q, vals) in &self.per_query {
            let _ = writeln!(s, "{q},{}", row(vals));
        }
        let _ = writeln!(s, "all,{}", row(&self.means));
        s
    }
}

/// One metric's paired comparison between two runs.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedResult {
    pub metric: Metric,
    pub mean_a: f64,
    pub mean_b: f64,
    pub p_value: f64,
}

impl PairedResult {
    pub fn significant(&self) -> bool {
        self.p_value < SIGNIFICANCE_LEVEL
    }
}

/// Compares two runs over the same judged queries with the randomization
/// test. Runs must contain exactly the same queries.
pub fn compare_runs(
    run_a: &Run,
    run_b: &Run,
    qrels: &Qrels,
    metrics: &[Metric],
    permutations: usize,
    seed: u64,
) -> Result<Vec<PairedResult>> {
    let qa: Vec<&str> = run_a.queries().collect();
    let qb: Vec<&str> = run_b.queries().collect();
    if qa != qb {
        let only_a = qa.iter().filter(|q| !qb.contains(q)).count();
        let only_b = qb.iter().filter(|q| !qa.contains(q)).count();
        return Err(Error::QueryMismatch(format!(
            "{only_a} queries only in the first run, {only_b} only in the second"
        )));
    }
    metrics
        .iter()
        .map(|&metric| {
            let a = per_query(run_a, qrels, metric);
            let b = per_query(run_b, qrels, metric);
            let av: Vec<f64> = a.values().copied().collect();
            let bv: Vec<f64> = a.keys().map(|q| b[q]).collect();
            let p_value = if av.is_empty() {
                1.0
            } else {
                fisher_randomization(&av, &bv, permutations, seed)?
            };
            Ok(PairedResult {
                metric,
                mean_a: mean(&a),
                mean_b: mean(&b),
                p_value,
            })
        })
        .collect()
}

pub fn paired_table(results: &[PairedResult]) -> String {
    let mut s = format!(
        "{:<10} {:>10} {:>10} {:>10} {:>10}\n",
        "metric", "run_a", "run_b", "diff", "p"
    );
    for r in results {
        let mark = if r.significant() { " *" } else { "" };
        let _ = writeln!(
            s,
            "{:<10} {:>10.4} {:>10.4} {:>10.4} {:>10.4}{mark}",
            r.metric.name(),
            r.mean_a,
            r.mean_b,
            r.mean_b - r.mean_a,
            r.p_value
        );
    }
    s
}

pub fn paired_csv(results: &[PairedResult]) -> String {
    let mut s = String::from("metric,run_a,run_b,diff,p_value,significant\n");
    for r in results {
        let _ = writeln!(
            s,
            "{},{:.6},{:.6},{:.6},{:.6},{}",
            r.metric.name(),
            r.mean_a,
            r.mean_b,
            r.mean_b - r.mean_a,
            r.p_value,
            r.significant()
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn qrels(rel: &[&str]) -> Qrels {
        let mut q = Qrels::default();
        for d in rel {
            q.insert("q", d, 1).unwrap();
        }
        q
    }

    #[test]
    fn ap_examples() {
        let q = qrels(&["r1", "r2"]);
        assert_abs_diff_eq!(
            average_precision(&["r1", "n", "r2"], &q, "q").unwrap(),
            5.0 / 6.0
        );
        assert_eq!(average_precision(&["r1", "r2"], &q, "q").unwrap(), 1.0);
        assert_eq!(average_precision(&["n1", "n2"], &q, "q").unwrap(), 0.0);
        assert_eq!(average_precision(&["r1"], &q, "other"), None);
    }

    #[test]
    fn ndcg_examples() {
        let q = qrels(&["r"]);
        let v = ndcg_at_k(&["n", "r"], &q, "q", 20).unwrap();
        assert_abs_diff_eq!(v, 1.0 / 3f64.log2(), epsilon = 1e-15);
        assert_abs_diff_eq!(v, 0.63093, epsilon = 1e-5);
        assert_eq!(ndcg_at_k(&["r", "n"], &q, "q", 20).unwrap(), 1.0);
        assert_eq!(ndcg_at_k(&["n", "r"], &q, "q", 1).unwrap(), 0.0);
    }

    #[test]
    fn precision_examples() {
        let rel: Vec<String> = (0..7).map(|i| format!("r{i}")).collect();
        let rel_refs: Vec<&str> = rel.iter().map(String::as_str).collect();
        let q = qrels(&rel_refs);
        let mut ranking: Vec<String> = (0..13).map(|i| format!("n{i}")).collect();
        ranking.extend(rel.iter().cloned());
        let r: Vec<&str> = ranking.iter().map(String::as_str).collect();
        assert_abs_diff_eq!(precision_at_k(&r, &q, "q", 20), 0.35);
        assert_eq!(precision_at_k(&[], &q, "q", 20), 0.0);
        assert_eq!(precision_at_k(&r[13..], &q, "q", 7), 1.0);
        // fixed denominator
        assert_abs_diff_eq!(precision_at_k(&["r0"], &q, "q", 20), 0.05);
    }

    #[test]
    fn unjudged_queries_are_excluded_from_means() {
        let q = qrels(&["a"]);
        let mut run = Run::default();
        run.insert("q", vec![("a".into(), 1.0)]).unwrap();
        run.insert("empty", vec![("a".into(), 1.0)]).unwrap();
        let rep = evaluate(&run, &q, &Metric::standard());
        assert_eq!(rep.per_query.len(), 1);
        assert_eq!(rep.means[0], 1.0);
        assert_abs_diff_eq!(rep.means[2], 0.05);
    }

    #[test]
    fn compare_identical_and_mismatched() {
        let q = qrels(&["a", "c"]);
        let mut run = Run::default();
        run.insert(
            "q",
            vec![("a".into(), 1.0), ("b".into(), 0.5), ("c".into(), 0.1)],
        )
        .unwrap();
        let res = compare_runs(&run, &run, &q, &Metric::standard(), 1000, 1).unwrap();
        assert!(res.iter().all(|r| r.p_value == 1.0 && r.mean_a == r.mean_b));
        let mut other = Run::default();
        other.insert("z", vec![("a".into(), 1.0)]).unwrap();
        assert!(matches!(
            compare_runs(&run, &other, &q, &Metric::standard(), 10, 1),
            Err(Error::QueryMismatch(_))
        ));
    }
}
