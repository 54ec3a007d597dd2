//! Command-line front end.

pub mod config;

use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};
use rayon::prelude::*;

use crate::corpus::{
    read_corpus, read_stoplist, read_topics, Index, IndexBuilder, Query, TokenizeConfig,
    TrecTextConfig,
};
use crate::error::{Error, Result};
use crate::evaluation::{self, compare_runs, evaluate, Metric, Qrels, Run};
use crate::fusion::{report_weights_multi, FusionModel};
use crate::passages::{msp_rank, Homogeneity};
use crate::retrieval::retrieve;
use crate::training::{
    cross_validate, fold_summary, log_csv, make_folds, rerank_query, Folds, RerankData,
};

pub use config::ExperimentConfig;

#[derive(Debug, Parser)]
#[command(name = "passnet", version, about = "Passage-based document re-ranking")]
pub struct Cli {
    /// Experiment config file (`key = value` lines).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for sampling, initialization and significance tests.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; 0 uses every core.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build an index from a TREC text file or directory.
    Index {
        #[arg(long)]
        corpus: Option<PathBuf>,
        /// Output index file.
        #[arg(long)]
        index: Option<PathBuf>,
        #[arg(long)]
        stopwords: Option<PathBuf>,
    },
    /// Initial query-likelihood retrieval.
    Retrieve {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        top_k: Option<usize>,
        /// Output run file.
        #[arg(long)]
        out: PathBuf,
    },
    /// Re-rank an initial run with an MSP baseline or a trained model.
    Rerank {
        #[command(flatten)]
        common: Common,
        /// Initial run whose candidates are re-scored.
        #[arg(long)]
        run: PathBuf,
        #[arg(long, value_enum)]
        mode: Mode,
        #[command(flatten)]
        models: ModelArgs,
        #[arg(long)]
        msp_filter: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Cross-validated training of the fusion model.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        qrels: Option<PathBuf>,
        #[arg(long)]
        run: PathBuf,
        /// Output directory for fold manifest, models and logs.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        filters: Option<String>,
        /// doc, query or doc+query
        #[arg(long)]
        features: Option<String>,
        #[arg(long)]
        folds: Option<usize>,
        #[arg(long)]
        learning_rate: Option<f64>,
        #[arg(long)]
        max_epochs: Option<usize>,
        /// Also write the raw feature matrix (TSV) here.
        #[arg(long)]
        dump_features: Option<PathBuf>,
    },
    /// Evaluate a run, optionally against a second run.
    Eval {
        #[arg(long)]
        qrels: Option<PathBuf>,
        #[arg(long)]
        run: PathBuf,
        /// Second run for a paired significance test.
        #[arg(long)]
        compare: Option<PathBuf>,
        #[arg(long)]
        permutations: Option<usize>,
        /// Also write the report as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Mean and spread of the fusion weights per filter.
    Weights {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        run: PathBuf,
        #[command(flatten)]
        models: ModelArgs,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct Common {
    #[arg(long)]
    index: Option<PathBuf>,
    #[arg(long)]
    topics: Option<PathBuf>,
    #[arg(long)]
    lambda: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// A single model used for every query.
    #[arg(long, conflicts_with = "models")]
    model: Option<PathBuf>,
    /// A training output directory; each query uses its test fold's model.
    #[arg(long)]
    models: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    MspBase,
    MspLength,
    MspEnt,
    MspIntpsg,
    MspDocpsg,
    Npm,
}

impl Mode {
    fn homogeneity(self) -> Option<Homogeneity> {
        Some(match self {
            Mode::MspBase => Homogeneity::None,
            Mode::MspLength => Homogeneity::Length,
            Mode::MspEnt => Homogeneity::Ent,
            Mode::MspIntpsg => Homogeneity::IntPsg,
            Mode::MspDocpsg => Homogeneity::DocPsg,
            Mode::Npm => return None,
        })
    }

    fn tag(self) -> String {
        self.to_possible_value()
            .map(|v| v.get_name().to_string())
            .unwrap_or_default()
    }
}

pub const MANIFEST_FILE: &str = "folds.tsv";

pub fn model_file(fold: usize) -> String {
    format!("fold{fold}.model")
}

fn here() -> &'static Path {
    Path::new(".")
}

fn set_path(cfg: &mut ExperimentConfig, key: &str, value: &Option<PathBuf>) -> Result<()> {
    if let Some(p) = value {
        cfg.set(key, &p.to_string_lossy(), here())?;
    }
    Ok(())
}

fn set_value<T: ToString>(cfg: &mut ExperimentConfig, key: &str, value: Option<T>) -> Result<()> {
    if let Some(v) = value {
        cfg.set(key, &v.to_string(), here())?;
    }
    Ok(())
}

impl Common {
    fn apply(&self, cfg: &mut ExperimentConfig) -> Result<()> {
        set_path(cfg, "index", &self.index)?;
        set_path(cfg, "topics", &self.topics)?;
        set_value(cfg, "lambda", self.lambda)
    }
}

/// Loads the config file and overlays every flag given on the command line.
pub fn resolve_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    set_value(&mut cfg, "seed", cli.seed)?;
    set_value(&mut cfg, "threads", cli.threads)?;
    match &cli.command {
        Command::Index {
            corpus,
            index,
            stopwords,
        } => {
            set_path(&mut cfg, "corpus", corpus)?;
            set_path(&mut cfg, "index", index)?;
            set_path(&mut cfg, "stopwords", stopwords)?;
        }
        Command::Retrieve { common, top_k, .. } => {
            common.apply(&mut cfg)?;
            set_value(&mut cfg, "top_k", *top_k)?;
        }
        Command::Rerank {
            common, msp_filter, ..
        } => {
            common.apply(&mut cfg)?;
            set_value(&mut cfg, "msp_filter", msp_filter.as_ref())?;
        }
        Command::Train {
            common,
            qrels,
            filters,
            features,
            folds,
            learning_rate,
            max_epochs,
            ..
        } => {
            common.apply(&mut cfg)?;
            set_path(&mut cfg, "qrels", qrels)?;
            set_value(&mut cfg, "filters", filters.as_ref())?;
            set_value(&mut cfg, "features", features.as_ref())?;
            set_value(&mut cfg, "folds", *folds)?;
            set_value(&mut cfg, "learning_rate", *learning_rate)?;
            set_value(&mut cfg, "max_epochs", *max_epochs)?;
            cfg.train.validate()?;
        }
        Command::Eval {
            qrels,
            permutations,
            ..
        } => {
            set_path(&mut cfg, "qrels", qrels)?;
            set_value(&mut cfg, "permutations", *permutations)?;
        }
        Command::Weights { common, .. } => common.apply(&mut cfg)?,
    }
    Ok(cfg)
}

fn require_file(path: &Path, what: &str) -> Result<()> {
    if !path.exists() {
        return Err(Error::Config(format!(
            "{what} {} does not exist",
            path.display()
        )));
    }
    Ok(())
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Parses arguments and runs the command.
pub fn run(cli: Cli) -> Result<()> {
    let cfg = resolve_config(&cli)?;
    if cfg.threads > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.threads)
            .build_global()
        {
            warn!("thread pool already initialized: {e}");
        }
    }
    match &cli.command {
        Command::Index { .. } => cmd_index(&cfg),
        Command::Retrieve { out, .. } => cmd_retrieve(&cfg, out),
        Command::Rerank {
            run,
            mode,
            models,
            out,
            ..
        } => cmd_rerank(&cfg, run, *mode, models, out),
        Command::Train {
            run,
            out,
            dump_features,
            ..
        } => cmd_train(&cfg, run, out, dump_features.as_deref()),
        Command::Eval {
            run, compare, csv, ..
        } => cmd_eval(&cfg, run, compare.as_deref(), csv.as_deref()),
        Command::Weights {
            run, models, csv, ..
        } => cmd_weights(&cfg, run, models, csv.as_deref()),
    }
}

pub fn cmd_index(cfg: &ExperimentConfig) -> Result<()> {
    let corpus = cfg.require(&cfg.corpus, "corpus")?;
    let out = cfg.index.as_deref().ok_or_else(|| {
        Error::Config("missing 'index': pass --index with the output path".into())
    })?;
    let tokenizer = match &cfg.stopwords {
        Some(p) => TokenizeConfig::with_stopwords(read_stoplist(p)?),
        None => TokenizeConfig::default(),
    };
    let mut builder = IndexBuilder::new(tokenizer);
    read_corpus(corpus, &TrecTextConfig::default(), |doc| {
        builder.add_text(&doc.doc_id, &doc.text).map(|_| ())
    })?;
    let index = builder.finish()?;
    index.save(out)?;
    print!("{}", index.summary());
    Ok(())
}

fn load_index(cfg: &ExperimentConfig) -> Result<Index> {
    Index::load(cfg.require(&cfg.index, "index")?)
}

/// Topics resolved against the index vocabulary; topics with no terms
/// left after tokenization are skipped.
pub fn load_queries(index: &Index, topics: &Path) -> Result<Vec<Query>> {
    let mut out = Vec::new();
    for (id, text) in read_topics(topics)? {
        match index.query(&id, &text) {
            Ok(q) => out.push(q),
            Err(Error::EmptyQuery(_)) => warn!("topic {id} has no terms; skipped"),
            Err(e) => return Err(e),
        }
    }
    if out.is_empty() {
        return Err(Error::EmptyInput("no usable topics"));
    }
    Ok(out)
}

pub fn cmd_retrieve(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let topics = cfg.require(&cfg.topics, "topics")?;
    let index = load_index(cfg)?;
    let queries = load_queries(&index, topics)?;
    let ranked = queries
        .par_iter()
        .map(|q| retrieve(&index, q, &cfg.smoothing, cfg.top_k))
        .collect::<Result<Vec<_>>>()?;
    let mut run = Run::default();
    for (q, ranking) in queries.iter().zip(ranked) {
        let docs = ranking
            .into_iter()
            .map(|(d, s)| (index.doc(d).doc_id.clone(), s))
            .collect();
        run.insert(&q.id, docs)?;
    }
    run.save(out, &cfg.run_tag("ql"))?;
    info!("wrote {} queries to {}", run.len(), out.display());
    Ok(())
}

/// One model for all queries, or one per cross-validation fold.
pub enum Models {
    Single(FusionModel),
    Folds {
        folds: Folds,
        models: Vec<FusionModel>,
    },
}

impl Models {
    pub fn load(args: &ModelArgs) -> Result<Self> {
        match (&args.model, &args.models) {
            (Some(p), _) => Ok(Models::Single(FusionModel::load(p)?)),
            (None, Some(dir)) => {
                let manifest = dir.join(MANIFEST_FILE);
                require_file(&manifest, "fold manifest")?;
                let folds = Folds::load(&manifest)?;
                let models = (0..folds.k())
                    .map(|f| FusionModel::load(&dir.join(model_file(f))))
                    .collect::<Result<Vec<_>>>()?;
                for m in &models[1..] {
                    if m.filters() != models[0].filters()
                        || m.feature_set() != models[0].feature_set()
                    {
                        return Err(Error::Config(format!(
                            "fold models in {} disagree on filters or feature set",
                            dir.display()
                        )));
                    }
                }
                Ok(Models::Folds { folds, models })
            }
            (None, None) => Err(Error::Config("this mode needs --model or --models".into())),
        }
    }

    fn first(&self) -> &FusionModel {
        match self {
            Models::Single(m) => m,
            Models::Folds { models, .. } => &models[0],
        }
    }

    pub fn for_query(&self, qid: &str) -> Result<&FusionModel> {
        match self {
            Models::Single(m) => Ok(m),
            Models::Folds { folds, models } => folds
                .fold_of(qid)
                .map(|f| &models[f])
                .ok_or_else(|| Error::Config(format!("query {qid} is not in the fold manifest"))),
        }
    }
}

fn npm_data(
    cfg: &ExperimentConfig,
    index: &Index,
    queries: &[Query],
    run: &Run,
    models: &Models,
) -> Result<RerankData> {
    let pre = cfg.precompute(models.first().filters().to_vec());
    RerankData::compute(index, queries, run, &pre)
}

pub fn cmd_rerank(
    cfg: &ExperimentConfig,
    run_path: &Path,
    mode: Mode,
    models: &ModelArgs,
    out: &Path,
) -> Result<()> {
    let topics = cfg.require(&cfg.topics, "topics")?;
    require_file(run_path, "run")?;
    let models = match mode {
        Mode::Npm => Some(Models::load(models)?),
        _ => None,
    };
    let index = load_index(cfg)?;
    let queries = load_queries(&index, topics)?;
    let initial = Run::load(run_path)?;
    let mut reranked = Run::default();
    match (mode.homogeneity(), models) {
        (Some(h), _) => {
            let lists = queries
                .par_iter()
                .filter_map(|q| initial.get(&q.id).map(|r| (q, r)))
                .map(|(q, ranking)| {
                    let cands = ranking
                        .iter()
                        .map(|(d, _)| index.require_doc(d))
                        .collect::<Result<Vec<_>>>()?;
                    let ranked = msp_rank(q, &cands, &index, &cfg.msp_filter, h, &cfg.smoothing)?;
                    Ok((q.id.clone(), ranked))
                })
                .collect::<Result<Vec<_>>>()?;
            for (qid, ranked) in lists {
                let docs = ranked
                    .into_iter()
                    .map(|(d, s)| (index.doc(d).doc_id.clone(), s))
                    .collect();
                reranked.insert(&qid, docs)?;
            }
        }
        (None, Some(models)) => {
            let data = npm_data(cfg, &index, &queries, &initial, &models)?;
            for q in &data.queries {
                reranked.insert(&q.qid, rerank_query(models.for_query(&q.qid)?, q)?)?;
            }
        }
        (None, None) => unreachable!("model loaded for npm mode"),
    }
    reranked.save(out, &cfg.run_tag(&mode.tag()))?;
    info!("wrote {} queries to {}", reranked.len(), out.display());
    Ok(())
}

pub fn cmd_train(
    cfg: &ExperimentConfig,
    run_path: &Path,
    out: &Path,
    dump: Option<&Path>,
) -> Result<()> {
    let topics = cfg.require(&cfg.topics, "topics")?;
    let qrels_path = cfg.require(&cfg.qrels, "qrels")?;
    require_file(run_path, "run")?;
    let index = load_index(cfg)?;
    let queries = load_queries(&index, topics)?;
    if queries.len() < cfg.folds {
        return Err(Error::TooFewQueries {
            need: cfg.folds,
            got: queries.len(),
        });
    }
    let qrels = Qrels::load(qrels_path)?;
    let initial = Run::load(run_path)?;

    let pre = cfg.precompute(cfg.filters.clone());
    let data = RerankData::compute(&index, &queries, &initial, &pre)?;
    if let Some(path) = dump {
        let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        data.write_features(&mut BufWriter::new(file))
            .map_err(|e| Error::io(path, e))?;
    }

    let folds = make_folds(&data.query_ids(), cfg.folds, cfg.train.seed)?;
    let results = cross_validate(&data, &qrels, &folds, cfg.features, &cfg.train)?;

    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    write_file(&out.join(MANIFEST_FILE), &folds.manifest())?;
    for r in &results {
        r.outcome.model.save(&out.join(model_file(r.fold)))?;
        write_file(
            &out.join(format!("fold{}.log.csv", r.fold)),
            &log_csv(&r.outcome.log),
        )?;
    }
    let summary = fold_summary(&results);
    write_file(&out.join("summary.txt"), &summary)?;
    print!("{summary}");
    Ok(())
}

pub fn cmd_eval(
    cfg: &ExperimentConfig,
    run_path: &Path,
    compare: Option<&Path>,
    csv: Option<&Path>,
) -> Result<()> {
    let qrels_path = cfg.require(&cfg.qrels, "qrels")?;
    require_file(run_path, "run")?;
    if let Some(b) = compare {
        require_file(b, "run")?;
    }
    let qrels = Qrels::load(qrels_path)?;
    let run_a = Run::load(run_path)?;
    let metrics = Metric::standard();
    let (table, csv_text) = match compare {
        None => {
            let report = evaluate(&run_a, &qrels, &metrics);
            (report.table(), report.csv())
        }
        Some(b) => {
            let run_b = Run::load(b)?;
            let res = compare_runs(
                &run_a,
                &run_b,
                &qrels,
                &metrics,
                cfg.permutations,
                cfg.train.seed,
            )?;
            (evaluation::paired_table(&res), evaluation::paired_csv(&res))
        }
    };
    print!("{table}");
    if let Some(p) = csv {
        write_file(p, &csv_text)?;
    }
    Ok(())
}

pub fn cmd_weights(
    cfg: &ExperimentConfig,
    run_path: &Path,
    models: &ModelArgs,
    csv: Option<&Path>,
) -> Result<()> {
    let topics = cfg.require(&cfg.topics, "topics")?;
    require_file(run_path, "run")?;
    let models = Models::load(models)?;
    let index = load_index(cfg)?;
    let queries = load_queries(&index, topics)?;
    let initial = Run::load(run_path)?;
    let data = npm_data(cfg, &index, &queries, &initial, &models)?;
    let mut pairs = Vec::new();
    for q in &data.queries {
        let m = models.for_query(&q.qid)?;
        for c in &q.candidates {
            pairs.push((m, m.prepare(&c.scores, &c.features)?.1));
        }
    }
    let report = report_weights_multi(
        models.first().filters(),
        pairs.iter().map(|(m, h)| (*m, h.as_slice())),
    )?;
    print!("{}", report.table());
    if let Some(p) = csv {
        write_file(p, &report.csv())?;
    }
    Ok(())
}
