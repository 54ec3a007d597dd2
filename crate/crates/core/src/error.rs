use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{file}: input is not valid UTF-8 (document {doc})")]
    Decode { file: String, doc: String },
    #[error("{what}:{line}: {msg}")]
    Parse {
        what: String,
        line: usize,
        msg: String,
    },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("duplicate document id `{0}`")]
    DuplicateDoc(String),
    #[error("no indexable documents")]
    EmptyCorpus,
    #[error("unknown document id `{0}`")]
    UnknownDoc(String),
    #[error("query `{0}` has no terms after tokenization")]
    EmptyQuery(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("matching matrix row {row} out of range (n_q = {rows})")]
    RowOutOfRange { row: usize, rows: usize },
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("need at least {need} queries, got {got}")]
    TooFewQueries { need: usize, got: usize },
    #[error("no trainable queries (each needs a relevant and a non-relevant candidate)")]
    NoTrainableQueries,
    #[error("training diverged at epoch {epoch}: {detail}")]
    Divergence { epoch: usize, detail: String },
    #[error("runs do not cover the same queries: {0}")]
    QueryMismatch(String),
    #[error("bad file format in {path}: {msg}")]
    Format { path: String, msg: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(what: impl Into<String>, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            what: what.into(),
            line,
            msg: msg.into(),
        }
    }

    pub(crate) fn format(path: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            msg: msg.into(),
        }
    }
}
