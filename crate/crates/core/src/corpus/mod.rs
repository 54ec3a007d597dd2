//! Tokenization, document ingestion and corpus-level statistics.
//!
//! Every scorer downstream reads its collection statistics (`cf_t`, `D_t`,
//! `|C|`, `|D|`, document lengths) from [`CorpusStats`]. Documents are kept
//! as term-id sequences so the matching matrix can recover positions.

mod store;
mod trec;

use std::collections::{BTreeSet, HashMap, HashSet};

use log::warn;

use crate::error::{Error, Result};

pub use trec::{read_corpus, read_stoplist, read_topics, RawDoc, TrecTextConfig};

pub type TermId = u32;

/// Tokenizer settings. Lowercasing and splitting on non-alphanumerics is
/// always on; stopword removal only when a stoplist is given.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TokenizeConfig {
    pub stopwords: Option<HashSet<String>>,
}

impl TokenizeConfig {
    pub fn with_stopwords<I, S>(words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let set = words
            .into_iter()
            .map(|w| w.as_ref().to_lowercase())
            .filter(|w| !w.is_empty())
            .collect();
        TokenizeConfig {
            stopwords: Some(set),
        }
    }

    pub fn tokenize(&self, raw: &str) -> Vec<String> {
        tokenize(raw, self)
    }
}

/// Lowercased alphanumeric runs in document order.
pub fn tokenize(raw: &str, config: &TokenizeConfig) -> Vec<String> {
    raw.split(|c: char| !c.is_alphanumeric())
        .filter(|s| !s.is_empty())
        .map(str::to_lowercase)
        .filter(|t| match &config.stopwords {
            Some(stop) => !stop.contains(t),
            None => true,
        })
        .collect()
}

/// An indexed document: external id plus its term-id sequence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    pub doc_id: String,
    pub terms: Vec<TermId>,
}

impl Document {
    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }
}

/// A tokenized query resolved against an index vocabulary. Terms missing
/// from the vocabulary keep their surface form but resolve to `None`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Query {
    pub id: String,
    pub terms: Vec<String>,
    pub ids: Vec<Option<TermId>>,
}

impl Query {
    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }
}

/// Collection statistics consumed by the language model, the homogeneity
/// scores and the query features.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusStats {
    cf: Vec<u64>,
    df: Vec<u32>,
    doc_len: Vec<u32>,
    total_len: u64,
    min_log_len: f64,
    max_log_len: f64,
    oov_floor: u64,
}

pub const DEFAULT_OOV_FLOOR: u64 = 1;

impl CorpusStats {
    fn from_docs(vocab_len: usize, docs: &[Document], oov_floor: u64) -> Self {
        let mut cf = vec![0u64; vocab_len];
        let mut df = vec![0u32; vocab_len];
        let mut doc_len = Vec::with_capacity(docs.len());
        let mut total_len = 0u64;
        let mut seen: HashSet<TermId> = HashSet::new();
        for doc in docs {
            seen.clear();
            for &t in &doc.terms {
                cf[t as usize] += 1;
                if seen.insert(t) {
                    df[t as usize] += 1;
                }
            }
            doc_len.push(doc.terms.len() as u32);
            total_len += doc.terms.len() as u64;
        }
        let min_len = doc_len.iter().copied().min().unwrap_or(1).max(1);
        let max_len = doc_len.iter().copied().max().unwrap_or(1).max(1);
        CorpusStats {
            cf,
            df,
            doc_len,
            total_len,
            min_log_len: (min_len as f64).ln(),
            max_log_len: (max_len as f64).ln(),
            oov_floor,
        }
    }

    /// `|C|`, the number of tokens in the collection.
    pub fn total_len(&self) -> u64 {
        self.total_len
    }

    /// `|D|`, the number of indexed documents.
    pub fn num_docs(&self) -> usize {
        self.doc_len.len()
    }

    pub fn doc_len(&self, doc: usize) -> u32 {
        self.doc_len[doc]
    }

    pub fn min_log_len(&self) -> f64 {
        self.min_log_len
    }

    pub fn max_log_len(&self) -> f64 {
        self.max_log_len
    }

    pub fn oov_floor(&self) -> u64 {
        self.oov_floor
    }

    pub fn set_oov_floor(&mut self, floor: u64) {
        self.oov_floor = floor;
    }

    /// Corpus frequency of a term; unseen terms get the OOV floor.
    pub fn corpus_freq(&self, term: Option<TermId>) -> u64 {
        match term {
            Some(t) => self.cf[t as usize],
            None => self.oov_floor,
        }
    }

    /// Document frequency `D_t`, floored at 1 for unseen terms.
    pub fn doc_freq(&self, term: Option<TermId>) -> u64 {
        match term {
            Some(t) => u64::from(self.df[t as usize]),
            None => self.oov_floor.max(1),
        }
    }
}

/// In-memory index: vocabulary, documents, statistics and postings.
#[derive(Debug, Clone)]
pub struct Index {
    vocab: Vec<String>,
    lookup: HashMap<String, TermId>,
    docs: Vec<Document>,
    doc_lookup: HashMap<String, usize>,
    stats: CorpusStats,
    tokenizer: TokenizeConfig,
    // term -> (doc, tf), docs ascending
    postings: Vec<Vec<(u32, u32)>>,
}

impl PartialEq for Index {
    fn eq(&self, other: &Self) -> bool {
        self.vocab == other.vocab
            && self.docs == other.docs
            && self.stats == other.stats
            && self.tokenizer == other.tokenizer
    }
}

impl Index {
    fn assemble(
        vocab: Vec<String>,
        docs: Vec<Document>,
        tokenizer: TokenizeConfig,
        oov_floor: u64,
    ) -> Result<Self> {
        if docs.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let lookup: HashMap<String, TermId> = vocab
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as TermId))
            .collect();
        let mut doc_lookup = HashMap::with_capacity(docs.len());
        for (i, d) in docs.iter().enumerate() {
            if doc_lookup.insert(d.doc_id.clone(), i).is_some() {
                return Err(Error::DuplicateDoc(d.doc_id.clone()));
            }
        }
        let stats = CorpusStats::from_docs(vocab.len(), &docs, oov_floor);
        let mut postings: Vec<Vec<(u32, u32)>> = vec![Vec::new(); vocab.len()];
        let mut counts: HashMap<TermId, u32> = HashMap::new();
        for (di, d) in docs.iter().enumerate() {
            counts.clear();
            for &t in &d.terms {
                *counts.entry(t).or_insert(0) += 1;
            }
            for (&t, &tf) in &counts {
                postings[t as usize].push((di as u32, tf));
            }
        }
        Ok(Index {
            vocab,
            lookup,
            docs,
            doc_lookup,
            stats,
            tokenizer,
            postings,
        })
    }

    pub fn stats(&self) -> &CorpusStats {
        &self.stats
    }

    pub fn stats_mut(&mut self) -> &mut CorpusStats {
        &mut self.stats
    }

    pub fn tokenizer(&self) -> &TokenizeConfig {
        &self.tokenizer
    }

    pub fn vocab(&self) -> &[String] {
        &self.vocab
    }

    pub fn term_id(&self, term: &str) -> Option<TermId> {
        self.lookup.get(term).copied()
    }

    pub fn term(&self, id: TermId) -> &str {
        &self.vocab[id as usize]
    }

    pub fn docs(&self) -> &[Document] {
        &self.docs
    }

    pub fn doc(&self, idx: usize) -> &Document {
        &self.docs[idx]
    }

    pub fn num_docs(&self) -> usize {
        self.docs.len()
    }

    pub fn doc_index(&self, doc_id: &str) -> Option<usize> {
        self.doc_lookup.get(doc_id).copied()
    }

    pub fn require_doc(&self, doc_id: &str) -> Result<usize> {
        self.doc_index(doc_id)
            .ok_or_else(|| Error::UnknownDoc(doc_id.to_string()))
    }

    /// Postings of a term: `(doc index, tf)` in ascending doc order.
    pub fn postings(&self, term: TermId) -> &[(u32, u32)] {
        &self.postings[term as usize]
    }

    /// Tokenizes `text` with the index's own pipeline and resolves it.
    pub fn query(&self, id: &str, text: &str) -> Result<Query> {
        self.resolve_query(id, self.tokenizer.tokenize(text))
    }

    pub fn resolve_query(&self, id: &str, terms: Vec<String>) -> Result<Query> {
        if terms.is_empty() {
            return Err(Error::EmptyQuery(id.to_string()));
        }
        let ids = terms.iter().map(|t| self.term_id(t)).collect();
        Ok(Query {
            id: id.to_string(),
            terms,
            ids,
        })
    }

    /// Short human-readable summary, stable across runs.
    pub fn summary(&self) -> String {
        let s = &self.stats;
        format!(
            "documents\t{}\ntokens\t{}\nvocabulary\t{}\nmin_doc_len\t{}\nmax_doc_len\t{}\n",
            s.num_docs(),
            s.total_len(),
            self.vocab.len(),
            s.doc_len.iter().min().copied().unwrap_or(0),
            s.doc_len.iter().max().copied().unwrap_or(0),
        )
    }
}

/// Streaming index construction. Only the term-id sequences and the
/// vocabulary are held in memory, never the raw text.
#[derive(Debug, Default)]
pub struct IndexBuilder {
    tokenizer: TokenizeConfig,
    vocab: Vec<String>,
    lookup: HashMap<String, TermId>,
    docs: Vec<Document>,
    seen_ids: HashSet<String>,
    oov_floor: u64,
}

impl IndexBuilder {
    pub fn new(tokenizer: TokenizeConfig) -> Self {
        IndexBuilder {
            tokenizer,
            oov_floor: DEFAULT_OOV_FLOOR,
            ..Default::default()
        }
    }

    pub fn oov_floor(mut self, floor: u64) -> Self {
        self.oov_floor = floor;
        self
    }

    pub fn tokenizer(&self) -> &TokenizeConfig {
        &self.tokenizer
    }

    /// Tokenizes and adds a document. Returns `Ok(false)` when the document
    /// is empty after tokenization and was skipped.
    pub fn add_text(&mut self, doc_id: &str, text: &str) -> Result<bool> {
        let tokens = self.tokenizer.tokenize(text);
        self.add_tokens(doc_id, tokens)
    }

    pub fn add_tokens<I, S>(&mut self, doc_id: &str, tokens: I) -> Result<bool>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        if self.seen_ids.contains(doc_id) {
            return Err(Error::DuplicateDoc(doc_id.to_string()));
        }
        self.seen_ids.insert(doc_id.to_string());
        let mut terms = Vec::new();
        for tok in tokens {
            let tok = tok.as_ref();
            let id = match self.lookup.get(tok) {
                Some(&id) => id,
                None => {
                    let id = self.vocab.len() as TermId;
                    self.vocab.push(tok.to_string());
                    self.lookup.insert(tok.to_string(), id);
                    id
                }
            };
            terms.push(id);
        }
        if terms.is_empty() {
            warn!("skipping empty document `{doc_id}`");
            return Ok(false);
        }
        self.docs.push(Document {
            doc_id: doc_id.to_string(),
            terms,
        });
        Ok(true)
    }

    pub fn finish(self) -> Result<Index> {
        Index::assemble(self.vocab, self.docs, self.tokenizer, self.oov_floor)
    }
}

/// Builds an index from raw `(doc_id, text)` pairs.
pub fn build_index<I>(docs: I, tokenizer: TokenizeConfig) -> Result<Index>
where
    I: IntoIterator<Item = RawDoc>,
{
    let mut builder = IndexBuilder::new(tokenizer);
    for d in docs {
        builder.add_text(&d.doc_id, &d.text)?;
    }
    builder.finish()
}

pub(crate) fn sorted_stopwords(config: &TokenizeConfig) -> Option<Vec<String>> {
    config.stopwords.as_ref().map(|s| {
        s.iter()
            .cloned()
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    })
}
