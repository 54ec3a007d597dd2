//! On-disk index format, version 1. All integers little-endian.
//!
//! ```text
//! magic        4 bytes  "PNIX"
//! version      u32      1
//! oov_floor    u64
//! has_stop     u8       0 | 1
//! [n_stop u32, then n_stop strings]   when has_stop = 1, sorted ascending
//! n_vocab      u32, then n_vocab strings (term id = position)
//! n_docs       u32, then per document:
//!              doc_id string, n_d u32, n_d x u32 term ids
//! string       u32 byte length + UTF-8 bytes
//! ```
//!
//! Statistics and postings are derived from the stored documents on load,
//! so a save/load cycle reproduces them exactly.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{sorted_stopwords, Document, Index, TokenizeConfig};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"PNIX";
const VERSION: u32 = 1;

impl Index {
    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        self.write_to(&mut w).map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Index> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut r = BufReader::new(file);
        Self::read_from(&mut r, &path.display().to_string())
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&self.stats.oov_floor().to_le_bytes())?;
        match sorted_stopwords(&self.tokenizer) {
            Some(stop) => {
                w.write_all(&[1])?;
                w.write_all(&(stop.len() as u32).to_le_bytes())?;
                for s in &stop {
                    write_str(w, s)?;
                }
            }
            None => w.write_all(&[0])?,
        }
        w.write_all(&(self.vocab.len() as u32).to_le_bytes())?;
        for t in &self.vocab {
            write_str(w, t)?;
        }
        w.write_all(&(self.docs.len() as u32).to_le_bytes())?;
        for d in &self.docs {
            write_str(w, &d.doc_id)?;
            w.write_all(&(d.terms.len() as u32).to_le_bytes())?;
            for &t in &d.terms {
                w.write_all(&t.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R, name: &str) -> Result<Index> {
        let bad = |msg: &str| Error::format(name, msg);
        let io = |e: std::io::Error| Error::format(name, e.to_string());
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(io)?;
        if &magic != MAGIC {
            return Err(bad("not an index file"));
        }
        let version = read_u32(r).map_err(io)?;
        if version != VERSION {
            return Err(bad(&format!("unsupported index version {version}")));
        }
        let oov_floor = read_u64(r).map_err(io)?;
        let mut flag = [0u8; 1];
        r.read_exact(&mut flag).map_err(io)?;
        let tokenizer = match flag[0] {
            0 => TokenizeConfig::default(),
            1 => {
                let n = read_u32(r).map_err(io)?;
                let mut words = Vec::with_capacity(n as usize);
                for _ in 0..n {
                    words.push(read_str(r).map_err(io)?);
                }
                TokenizeConfig::with_stopwords(words)
            }
            _ => return Err(bad("bad stoplist flag")),
        };
        let n_vocab = read_u32(r).map_err(io)? as usize;
        let mut vocab = Vec::with_capacity(n_vocab);
        for _ in 0..n_vocab {
            vocab.push(read_str(r).map_err(io)?);
        }
        let n_docs = read_u32(r).map_err(io)? as usize;
        let mut docs = Vec::with_capacity(n_docs);
        for _ in 0..n_docs {
            let doc_id = read_str(r).map_err(io)?;
            let n = read_u32(r).map_err(io)? as usize;
            let mut terms = Vec::with_capacity(n);
            for _ in 0..n {
                let t = read_u32(r).map_err(io)?;
                if t as usize >= n_vocab {
                    return Err(bad("term id outside vocabulary"));
                }
                terms.push(t);
            }
            docs.push(Document { doc_id, terms });
        }
        let mut trailing = [0u8; 1];
        if r.read(&mut trailing).map_err(io)? != 0 {
            return Err(bad("trailing bytes"));
        }
        Index::assemble(vocab, docs, tokenizer, oov_floor)
    }
}

fn write_str<W: Write>(w: &mut W, s: &str) -> std::io::Result<()> {
    w.write_all(&(s.len() as u32).to_le_bytes())?;
    w.write_all(s.as_bytes())
}

fn read_u32<R: Read>(r: &mut R) -> std::io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> std::io::Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_str<R: Read>(r: &mut R) -> std::io::Result<String> {
    let n = read_u32(r)? as usize;
    let mut buf = vec![0u8; n];
    r.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
}
