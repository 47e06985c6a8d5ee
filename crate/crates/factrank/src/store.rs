//! Index persistence.
//!
//! An index directory holds `index.jsonl` and `documents.jsonl`. The index
//! file starts with a header object, followed by one `{"doc","len"}` line per
//! document and one `{"term","postings"}` line per term, all sorted, so an
//! identical corpus always serializes to identical bytes.

use std::collections::BTreeMap;
use std::path::Path;

use factrank_core::corpus::{Collection, InvertedIndex, Posting};
use serde::{Deserialize, Serialize};

use crate::formats::{corpus_lines, read_text, write_text, CorpusRecord};
use crate::AppError;

pub const FORMAT: &str = "factrank-index";
pub const VERSION: u32 = 1;
pub const INDEX_FILE: &str = "index.jsonl";
pub const DOCUMENTS_FILE: &str = "documents.jsonl";

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    doc_count: usize,
    terms: usize,
    avg_doc_length: f64,
}

#[derive(Serialize, Deserialize)]
struct DocLine {
    doc: String,
    len: usize,
}

#[derive(Serialize, Deserialize)]
struct TermLine {
    term: String,
    postings: Vec<(String, u32)>,
}

pub fn serialize_index(index: &InvertedIndex) -> String {
    let header = Header {
        format: FORMAT.into(),
        version: VERSION,
        doc_count: index.doc_count(),
        terms: index.vocabulary_size(),
        avg_doc_length: index.avg_doc_length(),
    };
    let mut out = serde_json::to_string(&header).expect("header serializes");
    out.push('\n');
    for (doc, &len) in index.doc_lengths() {
        out.push_str(&serde_json::to_string(&DocLine { doc: doc.clone(), len }).expect("doc line serializes"));
        out.push('\n');
    }
    for (term, postings) in index.postings() {
        let line = TermLine {
            term: term.clone(),
            postings: postings.iter().map(|p| (p.doc_id.clone(), p.tf)).collect(),
        };
        out.push_str(&serde_json::to_string(&line).expect("term line serializes"));
        out.push('\n');
    }
    out
}

pub fn parse_index(text: &str, path: &Path) -> Result<InvertedIndex, AppError> {
    let bad = |line: usize, reason: String| AppError::Format {
        path: path.to_path_buf(),
        line,
        reason,
    };
    let mut lines = text.lines().enumerate();
    let (_, first) = lines.next().ok_or_else(|| bad(1, "empty index file".into()))?;
    let header: Header = serde_json::from_str(first).map_err(|e| bad(1, e.to_string()))?;
    if header.format != FORMAT || header.version != VERSION {
        return Err(bad(
            1,
            format!("unsupported index format {} v{}", header.format, header.version),
        ));
    }
    let mut doc_lengths = BTreeMap::new();
    let mut postings = BTreeMap::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value = serde_json::from_str(line).map_err(|e| bad(i + 1, e.to_string()))?;
        if value.get("doc").is_some() {
            let d: DocLine = serde_json::from_value(value).map_err(|e| bad(i + 1, e.to_string()))?;
            doc_lengths.insert(d.doc, d.len);
        } else {
            let t: TermLine = serde_json::from_value(value).map_err(|e| bad(i + 1, e.to_string()))?;
            let list = t
                .postings
                .into_iter()
                .map(|(doc_id, tf)| Posting { doc_id, tf })
                .collect();
            postings.insert(t.term, list);
        }
    }
    let index = InvertedIndex::from_parts(postings, doc_lengths).map_err(|error| AppError::Input {
        context: path.display().to_string(),
        error,
    })?;
    if index.doc_count() != header.doc_count
        || index.vocabulary_size() != header.terms
        || (index.avg_doc_length() - header.avg_doc_length).abs() > 1e-9
    {
        return Err(bad(1, "header does not match index contents".into()));
    }
    Ok(index)
}

pub fn save(collection: &Collection, dir: &Path) -> Result<(), AppError> {
    write_text(&dir.join(INDEX_FILE), &serialize_index(collection.index()))?;
    let docs: Vec<_> = collection.documents().cloned().collect();
    write_text(&dir.join(DOCUMENTS_FILE), &corpus_lines(&docs))
}

pub fn load(dir: &Path) -> Result<Collection, AppError> {
    let index_path = dir.join(INDEX_FILE);
    let index = parse_index(&read_text(&index_path)?, &index_path)?;
    let docs_path = dir.join(DOCUMENTS_FILE);
    let docs = read_text(&docs_path)?
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str::<CorpusRecord>(l)
                .map(CorpusRecord::into_document)
                .map_err(|e| AppError::Format {
                    path: docs_path.clone(),
                    line: i + 1,
                    reason: e.to_string(),
                })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Collection::from_parts(docs, index).map_err(|error| AppError::Input {
        context: docs_path.display().to_string(),
        error,
    })
}
