//! Pairwise hinge-loss training of the fusion network, fold assignment and
//! cross-validation.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use log::{info, warn};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::corpus::{Index, Query};
use crate::error::{Error, Result};
use crate::evaluation::{average_precision, Qrels, Run};
use crate::features::{
    self, fuse_features, query_features, FeatureSet, HomogeneityScores, Standardizer,
};
use crate::fusion::FusionModel;
use crate::passages::{likelihood_vector, FilterSpec, Pooling, Smoothing};

pub const DEFAULT_FOLDS: usize = 5;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrainingTriple {
    pub query_id: String,
    pub pos_doc_id: String,
    pub neg_doc_id: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub negatives_per_positive: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.05,
            batch_size: 64,
            max_epochs: 50,
            patience: 5,
            seed: 42,
            negatives_per_positive: 5,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(Error::Config(format!(
                "learning_rate must be finite and non-negative, got {}",
                self.learning_rate
            )));
        }
        for (name, v) in [
            ("batch_size", self.batch_size),
            ("max_epochs", self.max_epochs),
            ("patience", self.patience),
            ("negatives_per_positive", self.negatives_per_positive),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        Ok(())
    }
}

pub fn hinge_loss(s_pos: f64, s_neg: f64) -> f64 {
    (1.0 - s_pos + s_neg).max(0.0)
}

/// One re-ranking candidate with its cached raw passage scores and raw
/// fusion features.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub doc_id: String,
    pub scores: Vec<f64>,
    pub features: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueryData {
    pub qid: String,
    pub candidates: Vec<Candidate>,
}

/// Cached inputs of the fusion network for every candidate of every query.
#[derive(Debug, Clone, PartialEq)]
pub struct RerankData {
    pub filters: Vec<FilterSpec>,
    pub queries: Vec<QueryData>,
}

/// Settings for computing [`RerankData`].
#[derive(Debug, Clone, PartialEq)]
pub struct PrecomputeConfig {
    pub filters: Vec<FilterSpec>,
    pub smoothing: Smoothing,
    pub pooling: Pooling,
    pub list_depth: usize,
    pub homogeneity_filter: FilterSpec,
}

/// Smallest finite filter, or `50:25` when every filter is infinite.
pub fn homogeneity_filter(filters: &[FilterSpec]) -> FilterSpec {
    filters
        .iter()
        .filter(|f| f.is_finite())
        .min_by_key(|f| f.effective_window(usize::MAX))
        .copied()
        .unwrap_or_else(|| FilterSpec::finite(50).expect("valid default filter"))
}

impl PrecomputeConfig {
    pub fn new(filters: Vec<FilterSpec>, smoothing: Smoothing) -> Self {
        let homogeneity_filter = homogeneity_filter(&filters);
        PrecomputeConfig {
            filters,
            smoothing,
            pooling: Pooling::Max,
            list_depth: features::DEFAULT_LIST_DEPTH,
            homogeneity_filter,
        }
    }
}

impl RerankData {
    /// Scores every candidate in `run` for the given queries. Queries
    /// absent from the run are skipped; unknown documents are an error.
    pub fn compute(
        index: &Index,
        queries: &[Query],
        run: &Run,
        cfg: &PrecomputeConfig,
    ) -> Result<Self> {
        let stats = index.stats();
        let mut needed: Vec<usize> = Vec::new();
        let mut seen = vec![false; index.num_docs()];
        let mut lists = Vec::new();
        for q in queries {
            let Some(ranking) = run.get(&q.id) else {
                warn!("query {} has no candidates in the run; skipped", q.id);
                continue;
            };
            let docs = ranking
                .iter()
                .map(|(d, _)| index.require_doc(d))
                .collect::<Result<Vec<_>>>()?;
            for &d in &docs {
                if !seen[d] {
                    seen[d] = true;
                    needed.push(d);
                }
            }
            lists.push((q, docs));
        }

        let homog: Vec<HomogeneityScores> = needed
            .par_iter()
            .map(|&d| features::homogeneity(index.doc(d), stats, &cfg.homogeneity_filter))
            .collect::<Result<_>>()?;
        let homog: HashMap<usize, HomogeneityScores> = needed.into_iter().zip(homog).collect();

        let queries = lists
            .par_iter()
            .map(|(q, docs)| {
                let qf = query_features(q, stats);
                let list = features::list_feature(index, q, &cfg.smoothing, cfg.list_depth)?;
                let candidates = docs
                    .iter()
                    .map(|&d| {
                        let doc = index.doc(d);
                        let r = likelihood_vector(
                            q,
                            doc,
                            &cfg.filters,
                            stats,
                            &cfg.smoothing,
                            cfg.pooling,
                        )?;
                        Ok(Candidate {
                            doc_id: doc.doc_id.clone(),
                            scores: r.0,
                            features: fuse_features(&homog[&d], &qf, list).0,
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(QueryData {
                    qid: q.id.clone(),
                    candidates,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(RerankData {
            filters: cfg.filters.clone(),
            queries,
        })
    }

    pub fn query(&self, qid: &str) -> Option<&QueryData> {
        self.queries.iter().find(|q| q.qid == qid)
    }

    pub fn query_ids(&self) -> Vec<String> {
        self.queries.iter().map(|q| q.qid.clone()).collect()
    }

    /// Writes the raw feature matrix as TSV.
    pub fn write_features<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        let rows = self.queries.iter().flat_map(|q| {
            q.candidates
                .iter()
                .map(move |c| (q.qid.as_str(), c.doc_id.as_str(), c.features.as_slice()))
        });
        features::write_feature_matrix(w, &features::feature_names(), rows)
    }
}

// (query, positive, negative) as indices into a query slice
type IndexedTriple = (usize, usize, usize);

fn sample_indexed<R: Rng>(
    qrels: &Qrels,
    queries: &[&QueryData],
    npp: usize,
    rng: &mut R,
) -> Result<Vec<IndexedTriple>> {
    let mut out = Vec::new();
    for (qi, q) in queries.iter().enumerate() {
        let (pos, neg): (Vec<usize>, Vec<usize>) = (0..q.candidates.len())
            .partition(|&i| qrels.is_relevant(&q.qid, &q.candidates[i].doc_id));
        if pos.is_empty() || neg.is_empty() {
            warn!(
                "query {} has {} relevant and {} non-relevant candidates; no triples",
                q.qid,
                pos.len(),
                neg.len()
            );
            continue;
        }
        for &p in &pos {
            for &n in neg.choose_multiple(rng, npp.min(neg.len())) {
                out.push((qi, p, n));
            }
        }
    }
    if out.is_empty() {
        return Err(Error::NoTrainableQueries);
    }
    Ok(out)
}

/// For each relevant candidate, draws `negatives_per_positive` distinct
/// non-relevant candidates of the same query.
pub fn sample_triples(
    qrels: &Qrels,
    queries: &[&QueryData],
    cfg: &TrainConfig,
) -> Result<Vec<TrainingTriple>> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let triples = sample_indexed(qrels, queries, cfg.negatives_per_positive, &mut rng)?;
    Ok(triples
        .into_iter()
        .map(|(q, p, n)| TrainingTriple {
            query_id: queries[q].qid.clone(),
            pos_doc_id: queries[q].candidates[p].doc_id.clone(),
            neg_doc_id: queries[q].candidates[n].doc_id.clone(),
        })
        .collect())
}

/// Query-to-fold assignment. Fold `i` is tested on, fold `(i + 1) % k` is
/// its validation fold and the rest train.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Folds {
    k: usize,
    assignment: BTreeMap<String, usize>,
}

pub fn make_folds(query_ids: &[String], k: usize, seed: u64) -> Result<Folds> {
    if k < 3 {
        return Err(Error::Config(format!("need at least 3 folds, got {k}")));
    }
    let mut ids: Vec<String> = query_ids.to_vec();
    ids.sort();
    ids.dedup();
    if ids.len() < k {
        return Err(Error::TooFewQueries {
            need: k,
            got: ids.len(),
        });
    }
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n = ids.len();
    let assignment = ids
        .into_iter()
        .enumerate()
        .map(|(i, q)| (q, i * k / n))
        .collect();
    Ok(Folds { k, assignment })
}

impl Folds {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn fold_of(&self, qid: &str) -> Option<usize> {
        self.assignment.get(qid).copied()
    }

    pub fn validation_fold(&self, fold: usize) -> usize {
        (fold + 1) % self.k
    }

    fn members(&self, pred: impl Fn(usize) -> bool) -> Vec<String> {
        self.assignment
            .iter()
            .filter(|(_, &f)| pred(f))
            .map(|(q, _)| q.clone())
            .collect()
    }

    pub fn test(&self, fold: usize) -> Vec<String> {
        self.members(|f| f == fold)
    }

    pub fn validation(&self, fold: usize) -> Vec<String> {
        let v = self.validation_fold(fold);
        self.members(|f| f == v)
    }

    pub fn training(&self, fold: usize) -> Vec<String> {
        let v = self.validation_fold(fold);
        self.members(|f| f != fold && f != v)
    }

    /// `qid<TAB>fold` lines, sorted by query id.
    pub fn manifest(&self) -> String {
        let mut s = format!("# folds {}\n", self.k);
        for (q, f) in &self.assignment {
            let _ = writeln!(s, "{q}\t{f}");
        }
        s
    }

    pub fn parse_manifest(text: &str, name: &str) -> Result<Self> {
        let mut k = None;
        let mut assignment = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if let Some(rest) = line.strip_prefix("# folds") {
                k = Some(
                    rest.trim()
                        .parse::<usize>()
                        .map_err(|e| Error::parse(name, i + 1, format!("bad fold count: {e}")))?,
                );
                continue;
            }
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (q, f) = line
                .split_once('\t')
                .ok_or_else(|| Error::parse(name, i + 1, "expected qid<TAB>fold"))?;
            let f: usize = f
                .trim()
                .parse()
                .map_err(|e| Error::parse(name, i + 1, format!("bad fold: {e}")))?;
            assignment.insert(q.to_string(), f);
        }
        let k = k.ok_or_else(|| Error::parse(name, 1, "missing '# folds k' header"))?;
        if let Some(f) = assignment.values().find(|&&f| f >= k) {
            return Err(Error::parse(
                name,
                1,
                format!("fold {f} out of range for k={k}"),
            ));
        }
        Ok(Folds { k, assignment })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_manifest(&text, &path.display().to_string())
    }
}

/// Hinge loss of one pair and its gradient with respect to the model's
/// weights (row-major) and bias. The gradient is zero when the margin is
/// met, including exactly at the kink.
pub fn pair_gradient(
    model: &FusionModel,
    r_pos: &[f64],
    h_pos: &[f64],
    r_neg: &[f64],
    h_neg: &[f64],
) -> Result<(f64, Vec<f64>, f64)> {
    let (fp, mut dw, mut db) = model.gradient(r_pos, h_pos)?;
    let (fn_, dw_neg, db_neg) = model.gradient(r_neg, h_neg)?;
    let loss = hinge_loss(fp.score, fn_.score);
    if loss <= 0.0 {
        dw.iter_mut().for_each(|g| *g = 0.0);
        return Ok((loss, dw, 0.0));
    }
    for (g, n) in dw.iter_mut().zip(&dw_neg) {
        *g = n - *g;
    }
    db = db_neg - db;
    Ok((loss, dw, db))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub mean_loss: f64,
    pub val_map: f64,
}

pub fn log_csv(log: &[EpochLog]) -> String {
    let mut s = String::from("epoch,mean_loss,val_map\n");
    for e in log {
        let _ = writeln!(s, "{},{:.6},{:.6}", e.epoch, e.mean_loss, e.val_map);
    }
    s
}

/// A trained model, its per-epoch log and the epoch it was restored from.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub model: FusionModel,
    pub log: Vec<EpochLog>,
    pub best_epoch: usize,
}

impl TrainOutcome {
    pub fn initial_val_map(&self) -> f64 {
        self.log[0].val_map
    }

    pub fn best_val_map(&self) -> f64 {
        self.log[self.best_epoch].val_map
    }
}

struct Prepared {
    qid: String,
    docs: Vec<String>,
    r: Vec<Vec<f64>>,
    h: Vec<Vec<f64>>,
}

fn prepare_all(model: &FusionModel, queries: &[&QueryData]) -> Result<Vec<Prepared>> {
    queries
        .iter()
        .map(|q| {
            let mut p = Prepared {
                qid: q.qid.clone(),
                docs: Vec::with_capacity(q.candidates.len()),
                r: Vec::with_capacity(q.candidates.len()),
                h: Vec::with_capacity(q.candidates.len()),
            };
            for c in &q.candidates {
                let (r, h) = model.prepare(&c.scores, &c.features)?;
                p.docs.push(c.doc_id.clone());
                p.r.push(r);
                p.h.push(h);
            }
            Ok(p)
        })
        .collect()
}

fn mean_ap(model: &FusionModel, queries: &[Prepared], qrels: &Qrels) -> Result<f64> {
    let mut sum = 0.0;
    let mut n = 0usize;
    for q in queries {
        let mut scored = Vec::with_capacity(q.docs.len());
        for (i, d) in q.docs.iter().enumerate() {
            scored.push((d.as_str(), model.forward(&q.r[i], &q.h[i])?.logit));
        }
        scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        let ranking: Vec<&str> = scored.iter().map(|(d, _)| *d).collect();
        if let Some(ap) = average_precision(&ranking, qrels, &q.qid) {
            sum += ap;
            n += 1;
        }
    }
    Ok(if n == 0 { 0.0 } else { sum / n as f64 })
}

/// Seed for fold `fold`'s initialization and sampling.
pub fn fold_seed(seed: u64, fold: usize) -> u64 {
    seed ^ (fold as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Fits the normalizations on `train`, initializes the weights and runs
/// SGD with early stopping on `validation` MAP.
pub fn train_model(
    filters: &[FilterSpec],
    feature_set: FeatureSet,
    train: &[&QueryData],
    validation: &[&QueryData],
    qrels: &Qrels,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let alpha = filters.len();
    let cand = || train.iter().flat_map(|q| q.candidates.iter());
    let score_norm = Standardizer::fit(cand().map(|c| c.scores.as_slice()), alpha)?;
    let selected = cand()
        .map(|c| feature_set.select(&c.features))
        .collect::<Result<Vec<_>>>()?;
    let beta = feature_set.names().len();
    let feature_norm = Standardizer::fit(selected.iter().map(Vec::as_slice), beta)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let model = FusionModel::init(
        filters.to_vec(),
        feature_set,
        feature_norm,
        score_norm,
        &mut rng,
    )?;
    train_from(model, train, validation, qrels, cfg, &mut rng)
}

/// Runs SGD starting from `model`, whose normalizations are kept.
pub fn train_from<R: Rng>(
    mut model: FusionModel,
    train: &[&QueryData],
    validation: &[&QueryData],
    qrels: &Qrels,
    cfg: &TrainConfig,
    rng: &mut R,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let train_p = prepare_all(&model, train)?;
    let val_p = prepare_all(&model, validation)?;
    if !validation.iter().any(|q| qrels.num_relevant(&q.qid) > 0) {
        warn!("validation queries have no relevance judgments; early stopping keeps the initial model");
    }
    let mut triples = sample_indexed(qrels, train, cfg.negatives_per_positive, rng)?;

    let pair_loss = |m: &FusionModel, &(q, p, n): &IndexedTriple| -> Result<(f64, Vec<f64>, f64)> {
        let t = &train_p[q];
        pair_gradient(m, &t.r[p], &t.h[p], &t.r[n], &t.h[n])
    };

    let mut init_loss = 0.0;
    for t in &triples {
        init_loss += pair_loss(&model, t)?.0;
    }
    let mut log = vec![EpochLog {
        epoch: 0,
        mean_loss: init_loss / triples.len() as f64,
        val_map: mean_ap(&model, &val_p, qrels)?,
    }];
    let mut best = (
        0usize,
        log[0].val_map,
        model.weights().to_vec(),
        model.bias(),
    );

    for epoch in 1..=cfg.max_epochs {
        triples.shuffle(rng);
        let mut loss_sum = 0.0;
        for batch in triples.chunks(cfg.batch_size) {
            let mut gw = vec![0.0; model.weights().len()];
            let mut gb = 0.0;
            for t in batch {
                let (loss, dw, db) = pair_loss(&model, t)?;
                loss_sum += loss;
                for (g, d) in gw.iter_mut().zip(&dw) {
                    *g += d;
                }
                gb += db;
            }
            let step = cfg.learning_rate / batch.len() as f64;
            let (w, b) = model.params_mut();
            for (wi, g) in w.iter_mut().zip(&gw) {
                *wi -= step * g;
            }
            *b -= step * gb;
        }
        let mean_loss = loss_sum / triples.len() as f64;
        let params_ok = model.weights().iter().all(|v| v.is_finite()) && model.bias().is_finite();
        if !mean_loss.is_finite() || !params_ok {
            return Err(Error::Divergence {
                epoch,
                detail: format!(
                    "mean loss {mean_loss}, learning rate {}; try a smaller learning rate",
                    cfg.learning_rate
                ),
            });
        }
        let val_map = mean_ap(&model, &val_p, qrels)?;
        info!("epoch {epoch}: loss {mean_loss:.6} val_map {val_map:.6}");
        log.push(EpochLog {
            epoch,
            mean_loss,
            val_map,
        });
        if val_map > best.1 {
            best = (epoch, val_map, model.weights().to_vec(), model.bias());
        } else if epoch - best.0 >= cfg.patience {
            break;
        }
    }
    model.set_params(&best.2, best.3);
    Ok(TrainOutcome {
        model,
        log,
        best_epoch: best.0,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoldResult {
    pub fold: usize,
    pub outcome: TrainOutcome,
    pub test_queries: Vec<String>,
}

/// Trains one model per fold. Training folds are fitted with
/// `fold_seed(cfg.seed, fold)`.
pub fn cross_validate(
    data: &RerankData,
    qrels: &Qrels,
    folds: &Folds,
    feature_set: FeatureSet,
    cfg: &TrainConfig,
) -> Result<Vec<FoldResult>> {
    cfg.validate()?;
    let pick = |ids: Vec<String>| -> Vec<&QueryData> {
        ids.iter().filter_map(|q| data.query(q)).collect()
    };
    (0..folds.k())
        .map(|fold| {
            let train = pick(folds.training(fold));
            let val = pick(folds.validation(fold));
            let fold_cfg = TrainConfig {
                seed: fold_seed(cfg.seed, fold),
                ..cfg.clone()
            };
            let outcome = train_model(&data.filters, feature_set, &train, &val, qrels, &fold_cfg)?;
            info!(
                "fold {fold}: best epoch {} val_map {:.4} (initial {:.4})",
                outcome.best_epoch,
                outcome.best_val_map(),
                outcome.initial_val_map()
            );
            Ok(FoldResult {
                fold,
                outcome,
                test_queries: folds.test(fold),
            })
        })
        .collect()
}

/// Re-ranks one query's candidates with `model`. Scores are the pre-`tanh`
/// fusion output, which orders documents identically.
pub fn rerank_query(model: &FusionModel, query: &QueryData) -> Result<Vec<(String, f64)>> {
    query
        .candidates
        .iter()
        .map(|c| {
            let (r, h) = model.prepare(&c.scores, &c.features)?;
            Ok((c.doc_id.clone(), model.forward(&r, &h)?.logit))
        })
        .collect()
}

/// Fold summary: one row per fold with sizes, best epoch and MAPs.
pub fn fold_summary(results: &[FoldResult]) -> String {
    let mut s = format!(
        "{:<5} {:>6} {:>10} {:>12} {:>12}\n",
        "fold", "test", "best_epoch", "init_valmap", "best_valmap"
    );
    for r in results {
        let _ = writeln!(
            s,
            "{:<5} {:>6} {:>10} {:>12.4} {:>12.4}",
            r.fold,
            r.test_queries.len(),
            r.outcome.best_epoch,
            r.outcome.initial_val_map(),
            r.outcome.best_val_map()
        );
    }
    s
}
