//! Readers for TREC trectext documents, topic files and stoplists.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawDoc {
    pub doc_id: String,
    pub text: String,
}

/// Which tags inside a `<DOC>` record carry indexable text. Matching is
/// case-insensitive; contents of all matching tags are concatenated in
/// document order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrecTextConfig {
    pub fields: Vec<String>,
}

impl Default for TrecTextConfig {
    fn default() -> Self {
        TrecTextConfig {
            fields: vec!["HEADLINE".into(), "TITLE".into(), "TEXT".into()],
        }
    }
}

/// Parses every `<DOC>` record in `content`.
pub fn parse_trectext(content: &str, config: &TrecTextConfig, file: &str) -> Result<Vec<RawDoc>> {
    let fields: HashSet<String> = config
        .fields
        .iter()
        .map(|f| f.to_ascii_uppercase())
        .collect();
    let mut out = Vec::new();
    let mut rest = content;
    while let Some(open) = rest.find("<DOC>") {
        let body_start = open + "<DOC>".len();
        let Some(close) = rest[body_start..].find("</DOC>") else {
            return Err(Error::format(file, "unterminated <DOC> record"));
        };
        let body = &rest[body_start..body_start + close];
        let doc_id = tag_content(body, "DOCNO")
            .map(|s| s.trim().to_string())
            .filter(|s| !s.is_empty())
            .ok_or_else(|| Error::format(file, "<DOC> record without <DOCNO>"))?;
        out.push(RawDoc {
            doc_id,
            text: extract_fields(body, &fields),
        });
        rest = &rest[body_start + close + "</DOC>".len()..];
    }
    Ok(out)
}

fn tag_content<'a>(body: &'a str, tag: &str) -> Option<&'a str> {
    let open = format!("<{tag}>");
    let close = format!("</{tag}>");
    let s = body.find(&open)? + open.len();
    let e = body[s..].find(&close)? + s;
    Some(&body[s..e])
}

/// Walks the record's top-level tags and concatenates the text of the
/// selected ones, with any nested markup replaced by whitespace.
fn extract_fields(body: &str, fields: &HashSet<String>) -> String {
    let mut text = String::new();
    let mut pos = 0;
    while let Some(lt) = body[pos..].find('<') {
        let tag_start = pos + lt;
        let Some(gt) = body[tag_start..].find('>') else {
            break;
        };
        let inner = &body[tag_start + 1..tag_start + gt];
        pos = tag_start + gt + 1;
        if inner.starts_with('/') {
            continue;
        }
        let name = inner
            .split_whitespace()
            .next()
            .unwrap_or("")
            .to_ascii_uppercase();
        if !fields.contains(&name) {
            continue;
        }
        let close = format!("</{name}>");
        let end = find_ci(&body[pos..], &close)
            .map(|e| pos + e)
            .unwrap_or(body.len());
        if !text.is_empty() {
            text.push(' ');
        }
        text.push_str(&strip_markup(&body[pos..end]));
        pos = (end + close.len()).min(body.len());
    }
    text
}

fn find_ci(haystack: &str, needle: &str) -> Option<usize> {
    let hay = haystack.to_ascii_uppercase();
    hay.find(&needle.to_ascii_uppercase())
}

fn strip_markup(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut in_tag = false;
    for c in s.chars() {
        match c {
            '<' => {
                in_tag = true;
                out.push(' ');
            }
            '>' if in_tag => in_tag = false,
            _ if !in_tag => out.push(c),
            _ => {}
        }
    }
    out
}

/// Reads a trectext file or every regular file under a directory (sorted,
/// hidden files skipped) and hands each record to `sink`.
pub fn read_corpus<F>(path: &Path, config: &TrecTextConfig, mut sink: F) -> Result<()>
where
    F: FnMut(RawDoc) -> Result<()>,
{
    let meta = fs::metadata(path).map_err(|e| Error::io(path, e))?;
    let files = if meta.is_dir() {
        let mut files = Vec::new();
        collect_files(path, &mut files)?;
        files
    } else {
        vec![path.to_path_buf()]
    };
    for file in files {
        let bytes = fs::read(&file).map_err(|e| Error::io(&file, e))?;
        let name = file.display().to_string();
        let content = decode(&bytes, &name)?;
        for doc in parse_trectext(content, config, &name)? {
            sink(doc)?;
        }
    }
    Ok(())
}

fn collect_files(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .map(|e| e.map(|e| e.path()).map_err(|err| Error::io(dir, err)))
        .collect::<Result<_>>()?;
    entries.sort();
    for p in entries {
        let hidden = p
            .file_name()
            .and_then(|n| n.to_str())
            .is_some_and(|n| n.starts_with('.'));
        if hidden {
            continue;
        }
        if p.is_dir() {
            collect_files(&p, out)?;
        } else {
            out.push(p);
        }
    }
    Ok(())
}

fn decode<'a>(bytes: &'a [u8], file: &str) -> Result<&'a str> {
    std::str::from_utf8(bytes).map_err(|e| {
        let valid = std::str::from_utf8(&bytes[..e.valid_up_to()]).unwrap_or("");
        let doc = valid
            .rfind("<DOCNO>")
            .and_then(|i| {
                let s = &valid[i + "<DOCNO>".len()..];
                s.find("</DOCNO>").map(|j| s[..j].trim().to_string())
            })
            .unwrap_or_else(|| "<unknown>".to_string());
        Error::Decode {
            file: file.to_string(),
            doc,
        }
    })
}

/// Reads topics as `(query_id, title)` pairs. Accepts standard TREC
/// `<top>` blocks or, failing that, one `qid<whitespace>text` per line.
pub fn read_topics(path: &Path) -> Result<Vec<(String, String)>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let name = path.display().to_string();
    let content = decode(&bytes, &name)?;
    if content.contains("<top>") {
        parse_trec_topics(content, &name)
    } else {
        parse_line_topics(content, &name)
    }
}

pub(crate) fn parse_trec_topics(content: &str, name: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for block in content.split("<top>").skip(1) {
        let block = block.split("</top>").next().unwrap_or(block);
        let num = field_after(block, "<num>")
            .map(|s| s.trim().trim_start_matches("Number:").trim().to_string())
            .filter(|s| !s.is_empty())
            .ok_or_else(|| Error::format(name, "topic without <num>"))?;
        let title = field_after(block, "<title>")
            .map(|s| s.trim().trim_start_matches("Topic:").trim())
            .map(|s| s.split_whitespace().collect::<Vec<_>>().join(" "))
            .ok_or_else(|| Error::format(name, format!("topic {num} without <title>")))?;
        out.push((num, title));
    }
    Ok(out)
}

// Field text runs until the next tag; closing tags are optional in TREC topics.
fn field_after<'a>(block: &'a str, tag: &str) -> Option<&'a str> {
    let s = block.find(tag)? + tag.len();
    let rest = &block[s..];
    let e = rest.find('<').unwrap_or(rest.len());
    Some(&rest[..e])
}

fn parse_line_topics(content: &str, name: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, line) in content.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (qid, text) = line
            .split_once(['\t', ' '])
            .ok_or_else(|| Error::parse(name, i + 1, "expected `qid text`"))?;
        out.push((qid.to_string(), text.trim().to_string()));
    }
    Ok(out)
}

/// One term per line; blank lines ignored.
pub fn read_stoplist(path: &Path) -> Result<HashSet<String>> {
    let content = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(content
        .lines()
        .map(|l| l.trim().to_lowercase())
        .filter(|l| !l.is_empty())
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_records_and_fields() {
        let src = "<DOC>\n<DOCNO> FT-1 </DOCNO>\n<DATELINE>ignored</DATELINE>\n<HEADLINE>Big News</HEADLINE>\n<TEXT>\n<P>first para</P><P>second</P>\n</TEXT>\n</DOC>\n<DOC><DOCNO>FT-2</DOCNO><TEXT>plain</TEXT></DOC>";
        let docs = parse_trectext(src, &TrecTextConfig::default(), "t").unwrap();
        assert_eq!(docs.len(), 2);
        assert_eq!(docs[0].doc_id, "FT-1");
        let toks = crate::corpus::tokenize(&docs[0].text, &Default::default());
        assert_eq!(toks, ["big", "news", "first", "para", "second"]);
        assert_eq!(docs[1].text.trim(), "plain");
    }

    #[test]
    fn text_only_config() {
        let src = "<DOC><DOCNO>x</DOCNO><HEADLINE>h</HEADLINE><TEXT>t</TEXT></DOC>";
        let cfg = TrecTextConfig {
            fields: vec!["text".into()],
        };
        let docs = parse_trectext(src, &cfg, "t").unwrap();
        assert_eq!(docs[0].text.trim(), "t");
    }

    #[test]
    fn missing_docno_is_error() {
        let err = parse_trectext("<DOC><TEXT>a</TEXT></DOC>", &TrecTextConfig::default(), "f");
        assert!(err.is_err());
    }

    #[test]
    fn undecodable_names_document() {
        let mut bytes =
            b"<DOC><DOCNO>good</DOCNO><TEXT>a</TEXT></DOC><DOC><DOCNO>bad</DOCNO><TEXT>".to_vec();
        bytes.extend_from_slice(&[0xff, 0xfe]);
        match decode(&bytes, "f") {
            Err(Error::Decode { doc, .. }) => assert_eq!(doc, "bad"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn trec_topics() {
        let src = "<top>\n<num> Number: 301\n<title> International Organized Crime\n\n<desc> Description:\nfoo\n</top>\n<top>\n<num> Number: 302 <title> Poliomyelitis and Post-Polio\n</top>";
        let t = parse_trec_topics(src, "t").unwrap();
        assert_eq!(t[0], ("301".into(), "International Organized Crime".into()));
        assert_eq!(t[1], ("302".into(), "Poliomyelitis and Post-Polio".into()));
    }

    #[test]
    fn line_topics() {
        let t = parse_line_topics("q1\tlinux copy\n\nq2 hello world\n", "t").unwrap();
        assert_eq!(
            t,
            vec![
                ("q1".into(), "linux copy".into()),
                ("q2".into(), "hello world".into())
            ]
        );
    }
}
