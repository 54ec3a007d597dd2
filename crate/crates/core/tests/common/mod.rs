#![allow(dead_code)]

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use passnet::corpus::{Index, IndexBuilder, Query, TokenizeConfig};
use passnet::evaluation::Qrels;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A generated collection with topics and judgments.
#[derive(Debug, Clone, Default)]
pub struct Synthetic {
    pub docs: Vec<(String, Vec<String>)>,
    pub topics: Vec<(String, String)>,
    pub judgments: Vec<(String, String, i32)>,
}

pub struct TrecFiles {
    pub corpus: PathBuf,
    pub topics: PathBuf,
    pub qrels: PathBuf,
}

impl Synthetic {
    pub fn index(&self) -> Index {
        let mut b = IndexBuilder::new(TokenizeConfig::default());
        for (id, toks) in &self.docs {
            b.add_tokens(id, toks.iter().map(String::as_str)).unwrap();
        }
        b.finish().unwrap()
    }

    pub fn queries(&self, index: &Index) -> Vec<Query> {
        self.topics
            .iter()
            .map(|(id, text)| index.query(id, text).unwrap())
            .collect()
    }

    pub fn qrels(&self) -> Qrels {
        let mut q = Qrels::default();
        for (qid, doc, rel) in &self.judgments {
            q.insert(qid, doc, *rel).unwrap();
        }
        q
    }

    pub fn write_trec(&self, dir: &Path) -> TrecFiles {
        let mut corpus = String::new();
        for (id, toks) in &self.docs {
            let _ = writeln!(
                corpus,
                "<DOC>\n<DOCNO> {id} </DOCNO>\n<TEXT>\n{}\n</TEXT>\n</DOC>",
                toks.join(" ")
            );
        }
        let mut topics = String::new();
        for (id, text) in &self.topics {
            let _ = writeln!(topics, "{id} {text}");
        }
        let mut qrels = String::new();
        for (q, d, r) in &self.judgments {
            let _ = writeln!(qrels, "{q} 0 {d} {r}");
        }
        let files = TrecFiles {
            corpus: dir.join("corpus.trec"),
            topics: dir.join("topics.txt"),
            qrels: dir.join("qrels.txt"),
        };
        std::fs::write(&files.corpus, corpus).unwrap();
        std::fs::write(&files.topics, topics).unwrap();
        std::fs::write(&files.qrels, qrels).unwrap();
        files
    }
}

fn background<R: Rng>(rng: &mut R, vocab: usize) -> String {
    // skewed towards low ids, roughly like natural term frequencies
    let u: f64 = rng.gen();
    format!("w{}", ((u * u * u) * vocab as f64) as usize)
}

/// Random documents over a skewed vocabulary plus `n_queries` random
/// queries of 1 to 4 terms; no judgments.
pub fn random_corpus(
    seed: u64,
    n_docs: usize,
    vocab: usize,
    len: (usize, usize),
    n_queries: usize,
) -> Synthetic {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let docs = (0..n_docs)
        .map(|i| {
            let n = rng.gen_range(len.0..=len.1);
            (
                format!("doc{i:04}"),
                (0..n).map(|_| background(&mut rng, vocab)).collect(),
            )
        })
        .collect();
    let topics = (0..n_queries)
        .map(|j| {
            let n = rng.gen_range(1..=4);
            let terms: Vec<String> = (0..n)
                .map(|_| format!("w{}", rng.gen_range(0..vocab / 4)))
                .collect();
            (format!("q{j:03}"), terms.join(" "))
        })
        .collect();
    Synthetic {
        docs,
        topics,
        judgments: Vec::new(),
    }
}

/// Layout of a planted-passage collection.
#[derive(Debug, Clone)]
pub struct PlantedSpec {
    pub n_docs: usize,
    pub n_queries: usize,
    pub terms_per_query: usize,
    pub relevant: usize,
    pub distractors: usize,
    pub len: (usize, usize),
    /// Relevant documents hold every query term within this many tokens.
    pub window: usize,
    /// Distractors spread the terms at least this far apart.
    pub gap: usize,
    pub vocab: usize,
}

impl Default for PlantedSpec {
    fn default() -> Self {
        PlantedSpec {
            n_docs: 200,
            n_queries: 40,
            terms_per_query: 3,
            relevant: 20,
            distractors: 20,
            len: (600, 1400),
            window: 30,
            gap: 200,
            vocab: 2000,
        }
    }
}

fn place<R: Rng>(
    rng: &mut R,
    used: &mut HashSet<usize>,
    candidates: impl Fn(&mut R) -> Vec<usize>,
) -> Vec<usize> {
    for _ in 0..1000 {
        let pos = candidates(rng);
        if pos.iter().all(|p| !used.contains(p)) {
            used.extend(pos.iter().copied());
            return pos;
        }
    }
    panic!("could not place planted terms");
}

/// Each query's terms occur only in its relevant documents (inside one
/// short window) and in its distractors (far apart).
pub fn planted(seed: u64, spec: &PlantedSpec) -> Synthetic {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut docs: Vec<(String, Vec<String>)> = (0..spec.n_docs)
        .map(|i| {
            let n = rng.gen_range(spec.len.0..=spec.len.1);
            (
                format!("doc{i:04}"),
                (0..n).map(|_| background(&mut rng, spec.vocab)).collect(),
            )
        })
        .collect();
    let mut used: Vec<HashSet<usize>> = vec![HashSet::new(); spec.n_docs];
    let mut topics = Vec::new();
    let mut judgments = Vec::new();
    let k = spec.terms_per_query;
    for j in 0..spec.n_queries {
        let qid = format!("q{j:03}");
        let terms: Vec<String> = (0..k).map(|t| format!("p{j}x{t}")).collect();
        let mut picked: Vec<usize> = (0..spec.n_docs).collect();
        for i in 0..spec.relevant + spec.distractors {
            let r = rng.gen_range(i..spec.n_docs);
            picked.swap(i, r);
        }
        for (slot, &d) in picked[..spec.relevant + spec.distractors]
            .iter()
            .enumerate()
        {
            let n = docs[d].1.len();
            let relevant = slot < spec.relevant;
            let pos = if relevant {
                let (w, gap) = (spec.window, spec.window / k);
                place(&mut rng, &mut used[d], |rng| {
                    let start = rng.gen_range(0..n - w);
                    (0..k).map(|t| start + t * gap).collect()
                })
            } else {
                let (gap, tail) = (spec.gap, spec.window * 3);
                assert!(
                    (k - 1) * gap + tail < n,
                    "documents too short for the distractor gap"
                );
                place(&mut rng, &mut used[d], |rng| {
                    let slack = n - tail - (k - 1) * gap;
                    let mut p = rng.gen_range(0..slack / k);
                    (0..k)
                        .map(|t| {
                            if t > 0 {
                                p += gap + rng.gen_range(0..slack / k);
                            }
                            p
                        })
                        .collect()
                })
            };
            for (t, p) in pos.into_iter().enumerate() {
                docs[d].1[p] = terms[t].clone();
            }
            if relevant {
                judgments.push((qid.clone(), docs[d].0.clone(), 1));
            }
        }
        topics.push((qid, terms.join(" ")));
    }
    Synthetic {
        docs,
        topics,
        judgments,
    }
}
