mod common;

use passnet::corpus::{Index, IndexBuilder, TokenizeConfig};
use passnet::evaluation::{
    average_precision, fisher_exact, fisher_randomization, ndcg_at_k, precision_at_k, Qrels,
};
use passnet::features::{aggregate, Standardizer};
use passnet::fusion::softmax;
use passnet::matching::MatchingMatrix;
use passnet::passages::{
    extract_passages, kernel_offset, kernel_score, lm_score, pool, FilterSpec, PassageSpan,
    Pooling, Smoothing,
};
use proptest::prelude::*;

fn index_of(docs: &[Vec<u8>]) -> Index {
    let mut b = IndexBuilder::new(TokenizeConfig::default());
    for (i, d) in docs.iter().enumerate() {
        b.add_tokens(&format!("d{i}"), d.iter().map(|t| format!("t{t}")))
            .unwrap();
    }
    b.finish().unwrap()
}

fn docs_strategy() -> impl Strategy<Value = Vec<Vec<u8>>> {
    prop::collection::vec(prop::collection::vec(0u8..12, 1..80), 1..8)
}

fn filter_strategy() -> impl Strategy<Value = FilterSpec> {
    prop_oneof![
        (1usize..40)
            .prop_flat_map(|m| (Just(m), 1..=m))
            .prop_map(|(m, t)| FilterSpec::with_stride(m, t).unwrap()),
        Just(FilterSpec::infinite()),
    ]
}

proptest! {
    #[test]
    fn corpus_counts_are_conserved(docs in docs_strategy()) {
        let index = index_of(&docs);
        let stats = index.stats();
        let total: usize = docs.iter().map(Vec::len).sum();
        prop_assert_eq!(stats.total_len(), total as u64);
        let cf_sum: u64 = (0..index.vocab().len() as u32).map(|t| stats.corpus_freq(Some(t))).sum();
        prop_assert_eq!(cf_sum, total as u64);
        for t in 0..index.vocab().len() as u32 {
            let df = stats.doc_freq(Some(t));
            prop_assert!(df >= 1 && df <= index.num_docs() as u64);
            prop_assert_eq!(df, index.postings(t).len() as u64);
        }
    }

    #[test]
    fn window_tf_is_monotone_and_bounded(doc in prop::collection::vec(0u8..5, 1..120), start in 0usize..130, len in 0usize..60) {
        let index = index_of(std::slice::from_ref(&doc));
        let q = index.resolve_query("q", vec!["t0".into(), "t1".into()]).unwrap();
        let m = MatchingMatrix::build(&q, index.doc(0));
        for row in 0..q.len() {
            let a = m.window_tf(row, start, len).unwrap();
            let b = m.window_tf(row, start, len + 1).unwrap();
            prop_assert!(a <= b);
            prop_assert!(a as usize <= len);
            prop_assert!(a <= m.row_sum(row).unwrap());
        }
    }

    #[test]
    fn passages_cover_the_document(n in 1usize..500, f in filter_strategy()) {
        let spans = extract_passages(n, &f);
        prop_assert!(!spans.is_empty());
        let mut covered = vec![false; n];
        for s in &spans {
            prop_assert!(s.len >= 1 && s.end() <= n);
            prop_assert!(s.len <= f.effective_window(n));
            covered[s.start..s.end()].iter_mut().for_each(|c| *c = true);
        }
        prop_assert!(covered.iter().all(|&c| c));
        prop_assert!(spans.windows(2).all(|w| w[0].start < w[1].start));
    }

    #[test]
    fn kernel_matches_language_model(
        docs in docs_strategy(),
        q in prop::collection::vec(0u8..15, 1..5),
        lambda in 0.01f64..0.99,
        pick in any::<prop::sample::Index>(),
        m_frac in 0.0f64..1.0,
        s_frac in 0.0f64..1.0,
    ) {
        let index = index_of(&docs);
        let doc = index.doc(pick.index(index.num_docs()));
        let s = Smoothing::new(lambda).unwrap();
        let query = index.resolve_query("q", q.iter().map(|t| format!("t{t}")).collect()).unwrap();
        let m = 1 + (m_frac * (doc.len() - 1) as f64) as usize;
        let start = (s_frac * (doc.len() - m) as f64) as usize;
        let span = PassageSpan { start, len: m };
        let matrix = MatchingMatrix::build(&query, doc);
        let k = kernel_score(&query, span, &matrix, index.stats(), &s, m).unwrap() - kernel_offset(query.len(), m, &s);
        let lm = lm_score(&query, span, doc, index.stats(), &s).unwrap();
        prop_assert!((k - lm).abs() <= 1e-9 * lm.abs());
    }

    #[test]
    fn max_pool_dominates_mean(v in prop::collection::vec(-500.0f64..50.0, 1..30)) {
        let max = pool(&v, Pooling::Max).unwrap();
        let mean = pool(&v, Pooling::Mean).unwrap();
        let min = v.iter().copied().fold(f64::INFINITY, f64::min);
        prop_assert!(max + 1e-12 >= mean);
        prop_assert!(mean + 1e-9 >= min);
    }

    #[test]
    fn softmax_is_a_shift_invariant_simplex(v in prop::collection::vec(-1e3f64..1e3, 1..8), c in -1e3f64..1e3) {
        let p = softmax(&v);
        prop_assert!(p.iter().all(|x| x.is_finite() && *x >= 0.0));
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let shifted: Vec<f64> = v.iter().map(|x| x + c).collect();
        for (a, b) in p.iter().zip(softmax(&shifted)) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn metrics_are_bounded(rels in prop::collection::vec(0i32..3, 1..40), extra in 0usize..3, k in 1usize..30) {
        let mut qrels = Qrels::default();
        let docs: Vec<String> = (0..rels.len()).map(|i| format!("d{i}")).collect();
        for (d, r) in docs.iter().zip(&rels) {
            qrels.insert("q", d, *r).unwrap();
        }
        for i in 0..extra {
            qrels.insert("q", &format!("x{i}"), 1).unwrap();
        }
        let ranking: Vec<&str> = docs.iter().map(String::as_str).collect();
        if let Some(ap) = average_precision(&ranking, &qrels, "q") {
            prop_assert!((0.0..=1.0).contains(&ap));
        }
        if let Some(n) = ndcg_at_k(&ranking, &qrels, "q", k) {
            prop_assert!((0.0..=1.0 + 1e-12).contains(&n));
        }
        prop_assert!((0.0..=1.0).contains(&precision_at_k(&ranking, &qrels, "q", k)));
    }

    #[test]
    fn promoting_a_relevant_document_never_lowers_ap(rels in prop::collection::vec(any::<bool>(), 2..30), at in any::<prop::sample::Index>()) {
        let mut qrels = Qrels::default();
        let docs: Vec<String> = (0..rels.len()).map(|i| format!("d{i}")).collect();
        for (d, r) in docs.iter().zip(&rels) {
            qrels.insert("q", d, i32::from(*r)).unwrap();
        }
        let mut ranking: Vec<&str> = docs.iter().map(String::as_str).collect();
        let Some(before) = average_precision(&ranking, &qrels, "q") else { return Ok(()); };
        let i = at.index(ranking.len() - 1) + 1;
        if qrels.is_relevant("q", ranking[i]) && !qrels.is_relevant("q", ranking[i - 1]) {
            ranking.swap(i, i - 1);
            prop_assert!(average_precision(&ranking, &qrels, "q").unwrap() >= before);
        }
    }

    #[test]
    fn fisher_is_symmetric_and_in_range(a in prop::collection::vec(0.0f64..1.0, 1..9), seed in any::<u64>()) {
        let b: Vec<f64> = a.iter().rev().copied().collect();
        let p1 = fisher_randomization(&a, &b, 500, seed).unwrap();
        let p2 = fisher_randomization(&b, &a, 500, seed).unwrap();
        prop_assert_eq!(p1, p2);
        prop_assert!(p1 > 0.0 && p1 <= 1.0);
        let e = fisher_exact(&a, &b).unwrap();
        prop_assert!(e >= 1.0 / (1u64 << a.len()) as f64 && e <= 1.0);
        prop_assert_eq!(e, fisher_exact(&b, &a).unwrap());
    }

    #[test]
    fn standardized_columns_have_zero_mean(rows in prop::collection::vec(prop::collection::vec(-1e3f64..1e3, 3), 2..30)) {
        let norm = Standardizer::fit(rows.iter().map(Vec::as_slice), 3).unwrap();
        let z: Vec<Vec<f64>> = rows.iter().map(|r| norm.apply(r).unwrap()).collect();
        for j in 0..3 {
            let mean = z.iter().map(|r| r[j]).sum::<f64>() / z.len() as f64;
            prop_assert!(mean.abs() < 1e-6);
        }
    }

    #[test]
    fn aggregate_orders_its_statistics(v in prop::collection::vec(0.01f64..50.0, 1..10)) {
        let [sum, std, ratio, max, mean, gmean, hmean, cv] = aggregate(&v);
        prop_assert!(std >= 0.0 && cv >= 0.0 && ratio >= 1.0);
        prop_assert!((sum / v.len() as f64 - mean).abs() < 1e-9);
        prop_assert!(max + 1e-9 >= mean && mean + 1e-9 >= gmean && gmean + 1e-9 >= hmean);
    }
}

#[test]
fn synthetic_pipeline_is_deterministic() {
    let a = common::random_corpus(5, 50, 100, (5, 60), 5);
    let b = common::random_corpus(5, 50, 100, (5, 60), 5);
    assert_eq!(a.index(), b.index());
    assert_eq!(a.topics, b.topics);
}
