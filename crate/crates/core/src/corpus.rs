//! Document collection, inverted index and BM25 topicality.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text::normalize_text;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dataset {
    Clef2020,
    Trec2020,
    Fixture,
}

impl Dataset {
    pub fn as_str(self) -> &'static str {
        match self {
            Dataset::Clef2020 => "clef2020",
            Dataset::Trec2020 => "trec2020",
            Dataset::Fixture => "fixture",
        }
    }
}

impl fmt::Display for Dataset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Dataset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "clef2020" => Ok(Dataset::Clef2020),
            "trec2020" => Ok(Dataset::Trec2020),
            "fixture" => Ok(Dataset::Fixture),
            other => Err(Error::InvalidInput(alloc::format!("unknown dataset `{other}`"))),
        }
    }
}

/// A retrievable corpus item.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub url: Option<String>,
    pub title: String,
    pub body: String,
    pub dataset: Dataset,
}

impl Document {
    /// Title and body as one text; this is what gets indexed and scored.
    pub fn full_text(&self) -> String {
        crate::text::join_nonempty([self.title.trim(), self.body.trim()], "\n")
    }
}

/// Answer attached to TREC topics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExpectedAnswer {
    Yes,
    No,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuerySpec {
    pub query_id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub narrative: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected_answer: Option<ExpectedAnswer>,
}

impl QuerySpec {
    pub fn new(query_id: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            query_id: query_id.into(),
            text: text.into(),
            narrative: None,
            expected_answer: None,
        }
    }

    /// Distinct normalized query terms, sorted. Only the query text is used,
    /// never the narrative.
    pub fn terms(&self) -> BTreeSet<String> {
        normalize_text(&self.text).into_iter().collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Self { k1: 1.2, b: 0.75 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Posting {
    pub doc_id: String,
    pub tf: u32,
}

/// Immutable term → postings map with per-document lengths.
///
/// Postings are sorted by `doc_id`; every iteration order is deterministic.
#[derive(Debug, Clone, PartialEq)]
pub struct InvertedIndex {
    postings: BTreeMap<String, Vec<Posting>>,
    doc_lengths: BTreeMap<String, usize>,
    avg_doc_length: f64,
}

impl InvertedIndex {
    /// Indexes the given documents. Documents whose text normalizes to no
    /// tokens are skipped; duplicate ids are an error.
    pub fn build<'a, I>(docs: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a Document>,
    {
        let mut postings: BTreeMap<String, BTreeMap<String, u32>> = BTreeMap::new();
        let mut doc_lengths = BTreeMap::new();
        for doc in docs {
            let tokens = normalize_text(&doc.full_text());
            if tokens.is_empty() {
                continue;
            }
            if doc_lengths.insert(doc.doc_id.clone(), tokens.len()).is_some() {
                return Err(Error::DuplicateDocument(doc.doc_id.clone()));
            }
            for token in tokens {
                *postings
                    .entry(token)
                    .or_default()
                    .entry(doc.doc_id.clone())
                    .or_insert(0) += 1;
            }
        }
        let postings = postings
            .into_iter()
            .map(|(term, docs)| {
                let list = docs.into_iter().map(|(doc_id, tf)| Posting { doc_id, tf }).collect();
                (term, list)
            })
            .collect();
        Self::from_parts(postings, doc_lengths)
    }

    /// Reassembles an index from its parts, checking every invariant:
    /// postings sorted and unique per term, positive term frequencies, each
    /// posted document known, and term frequencies summing to the document
    /// length.
    pub fn from_parts(postings: BTreeMap<String, Vec<Posting>>, doc_lengths: BTreeMap<String, usize>) -> Result<Self> {
        if doc_lengths.is_empty() {
            return Err(Error::EmptyCollection);
        }
        let mut tf_sums: BTreeMap<&str, usize> = BTreeMap::new();
        for (term, list) in &postings {
            if term.is_empty() || list.is_empty() {
                return Err(Error::InvalidInput(alloc::format!("empty posting list for `{term}`")));
            }
            for pair in list.windows(2) {
                if pair[0].doc_id >= pair[1].doc_id {
                    return Err(Error::InvalidInput(alloc::format!(
                        "postings for `{term}` not strictly sorted"
                    )));
                }
            }
            for p in list {
                if p.tf == 0 || !doc_lengths.contains_key(&p.doc_id) {
                    return Err(Error::InvalidInput(alloc::format!(
                        "bad posting ({}, {}) for `{term}`",
                        p.doc_id,
                        p.tf
                    )));
                }
                *tf_sums.entry(p.doc_id.as_str()).or_insert(0) += p.tf as usize;
            }
        }
        for (doc_id, &len) in &doc_lengths {
            if tf_sums.get(doc_id.as_str()).copied().unwrap_or(0) != len || len == 0 {
                return Err(Error::InvalidInput(alloc::format!(
                    "length of `{doc_id}` disagrees with its postings"
                )));
            }
        }
        let total: usize = doc_lengths.values().sum();
        let avg_doc_length = total as f64 / doc_lengths.len() as f64;
        Ok(Self {
            postings,
            doc_lengths,
            avg_doc_length,
        })
    }

    pub fn postings(&self) -> &BTreeMap<String, Vec<Posting>> {
        &self.postings
    }

    pub fn doc_lengths(&self) -> &BTreeMap<String, usize> {
        &self.doc_lengths
    }

    pub fn avg_doc_length(&self) -> f64 {
        self.avg_doc_length
    }

    pub fn doc_count(&self) -> usize {
        self.doc_lengths.len()
    }

    pub fn vocabulary_size(&self) -> usize {
        self.postings.len()
    }

    pub fn contains(&self, doc_id: &str) -> bool {
        self.doc_lengths.contains_key(doc_id)
    }

    /// Non-negative IDF: `ln(1 + (N - n + 0.5) / (n + 0.5))`.
    pub fn idf(&self, term: &str) -> f64 {
        let n = self.postings.get(term).map_or(0, Vec::len) as f64;
        let total = self.doc_count() as f64;
        libm::log(1.0 + (total - n + 0.5) / (n + 0.5))
    }

    fn term_weight(&self, params: Bm25Params, idf: f64, tf: u32, doc_len: usize) -> f64 {
        let tf = tf as f64;
        let length_norm = 1.0 - params.b + params.b * (doc_len as f64 / self.avg_doc_length);
        idf * (tf * (params.k1 + 1.0)) / (tf + params.k1 * length_norm)
    }

    /// Okapi BM25 of one document for the query's distinct terms.
    pub fn bm25_score(&self, params: Bm25Params, query: &QuerySpec, doc_id: &str) -> Result<f64> {
        self.bm25_terms(params, &query.terms(), doc_id)
    }

    pub fn bm25_terms(&self, params: Bm25Params, terms: &BTreeSet<String>, doc_id: &str) -> Result<f64> {
        let &doc_len = self
            .doc_lengths
            .get(doc_id)
            .ok_or_else(|| Error::UnknownDocument(doc_id.to_string()))?;
        let mut score = 0.0;
        for term in terms {
            let Some(list) = self.postings.get(term) else {
                continue;
            };
            if let Ok(pos) = list.binary_search_by(|p| p.doc_id.as_str().cmp(doc_id)) {
                score += self.term_weight(params, self.idf(term), list[pos].tf, doc_len);
            }
        }
        Ok(score)
    }

    /// Top `n` documents sharing at least one term with the query, by
    /// descending score then ascending `doc_id`.
    pub fn retrieve_topical(&self, params: Bm25Params, query: &QuerySpec, n: usize) -> Vec<(String, f64)> {
        self.retrieve_terms(params, &query.terms(), n)
    }

    pub fn retrieve_terms(&self, params: Bm25Params, terms: &BTreeSet<String>, n: usize) -> Vec<(String, f64)> {
        let mut scores: BTreeMap<&str, f64> = BTreeMap::new();
        // same term order as bm25_terms, so the sums are bit-identical
        for term in terms {
            let Some(list) = self.postings.get(term) else {
                continue;
            };
            let idf = self.idf(term);
            for p in list {
                let len = self.doc_lengths[&p.doc_id];
                *scores.entry(p.doc_id.as_str()).or_insert(0.0) += self.term_weight(params, idf, p.tf, len);
            }
        }
        let mut ranked: Vec<(String, f64)> = scores.into_iter().map(|(d, s)| (d.to_string(), s)).collect();
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        ranked.truncate(n);
        ranked
    }
}

/// Outcome of ingesting a batch of documents.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IngestReport {
    /// Ids of documents rejected because they normalize to no tokens.
    pub empty: Vec<String>,
    /// Ids seen more than once; the first occurrence is kept.
    pub duplicates: Vec<String>,
    /// Records with an empty id.
    pub missing_id: usize,
}

/// Indexed documents together with their stored text.
#[derive(Debug, Clone)]
pub struct Collection {
    docs: BTreeMap<String, Document>,
    index: InvertedIndex,
}

impl Collection {
    /// Ingests documents, skipping (and reporting) empty or duplicate ones.
    pub fn ingest<I>(docs: I) -> Result<(Self, IngestReport)>
    where
        I: IntoIterator<Item = Document>,
    {
        let mut report = IngestReport::default();
        let mut kept: BTreeMap<String, Document> = BTreeMap::new();
        for doc in docs {
            if doc.doc_id.trim().is_empty() {
                report.missing_id += 1;
            } else if kept.contains_key(&doc.doc_id) {
                report.duplicates.push(doc.doc_id);
            } else if normalize_text(&doc.full_text()).is_empty() {
                report.empty.push(doc.doc_id);
            } else {
                kept.insert(doc.doc_id.clone(), doc);
            }
        }
        let index = InvertedIndex::build(kept.values())?;
        Ok((Self { docs: kept, index }, report))
    }

    /// Pairs stored documents with a previously built index. Every indexed
    /// document must be present.
    pub fn from_parts(docs: Vec<Document>, index: InvertedIndex) -> Result<Self> {
        let docs: BTreeMap<String, Document> = docs.into_iter().map(|d| (d.doc_id.clone(), d)).collect();
        if let Some(missing) = index.doc_lengths().keys().find(|id| !docs.contains_key(*id)) {
            return Err(Error::UnknownDocument(missing.clone()));
        }
        Ok(Self { docs, index })
    }

    pub fn index(&self) -> &InvertedIndex {
        &self.index
    }

    pub fn get(&self, doc_id: &str) -> Option<&Document> {
        self.docs.get(doc_id)
    }

    pub fn documents(&self) -> impl Iterator<Item = &Document> {
        self.docs.values()
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }
}
