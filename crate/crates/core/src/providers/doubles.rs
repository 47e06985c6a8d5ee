//! Deterministic offline stand-ins for every provider role.
//!
//! Each double is a pure function of its inputs and of the data bundled with
//! this crate, so results are bit-reproducible across runs and platforms.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::corpus::{Bm25Params, Dataset, Document, InvertedIndex};
use crate::error::{Error, ProviderError, Result};
use crate::evidence::Article;
use crate::gentext::{citation_markers, REFERENCE_LABEL};
use crate::providers::{
    EmbeddingProvider, Entity, EntityKind, GenerationProvider, KnowledgeBase, NerProvider, StanceProvider,
};
use crate::text::{normalize_text, word_count};

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// 64-bit FNV-1a.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(FNV_OFFSET, |h, &b| (h ^ u64::from(b)).wrapping_mul(FNV_PRIME))
}

/// Hashed bag-of-words embedding.
///
/// Every normalized token adds ±1 to bucket `fnv1a64(token) mod D`; the
/// sign is the top bit of `fnv1a64(token ++ [0xff])` (set means −1). The
/// sum is L2-normalized.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashEmbedder {
    pub dimension: usize,
}

impl Default for HashEmbedder {
    fn default() -> Self {
        Self { dimension: 256 }
    }
}

impl HashEmbedder {
    pub fn bucket_and_sign(&self, token: &str) -> (usize, f64) {
        let bucket = (fnv1a64(token.as_bytes()) % self.dimension as u64) as usize;
        let mut salted = Vec::with_capacity(token.len() + 1);
        salted.extend_from_slice(token.as_bytes());
        salted.push(0xff);
        let sign = if fnv1a64(&salted) >> 63 == 1 { -1.0 } else { 1.0 };
        (bucket, sign)
    }

    pub fn embed_one(&self, text: &str) -> Result<Vec<f64>, ProviderError> {
        let mut v = alloc::vec![0.0; self.dimension];
        for token in normalize_text(text) {
            let (bucket, sign) = self.bucket_and_sign(&token);
            v[bucket] += sign;
        }
        if !crate::vector::normalize_in_place(&mut v) {
            return Err(ProviderError::new("embed", "text has no embeddable tokens"));
        }
        Ok(v)
    }
}

impl EmbeddingProvider for HashEmbedder {
    fn embed(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, ProviderError> {
        if self.dimension == 0 {
            return Err(ProviderError::new("embed", "zero dimension"));
        }
        texts.iter().map(|t| self.embed_one(t)).collect()
    }

    fn fingerprint(&self) -> String {
        alloc::format!("hash-embed-{}", self.dimension)
    }
}

/// Extractive generator: cites the first three context passages of the
/// prompt, one sentence each, keeping the answer within the prompt's word
/// limit (at least one sentence is always emitted; a single over-long one is
/// cut at the limit).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TemplateGenerator;

impl TemplateGenerator {
    pub const PASSAGES: usize = 3;

    fn context_section(prompt: &str) -> Option<&str> {
        let start = prompt.find("Context:")? + "Context:".len();
        let rest = &prompt[start..];
        let end = rest.find("\n\n").unwrap_or(rest.len());
        Some(rest[..end].trim())
    }

    fn word_limit(prompt: &str) -> usize {
        prompt
            .find("ONLY ")
            .and_then(|i| prompt[i + 5..].split_whitespace().next())
            .and_then(|n| n.parse().ok())
            .unwrap_or(crate::defaults::WORD_LIMIT)
    }
}

impl GenerationProvider for TemplateGenerator {
    fn generate(&self, prompt: &str) -> Result<String, ProviderError> {
        let context = Self::context_section(prompt)
            .filter(|c| !c.is_empty())
            .ok_or_else(|| ProviderError::new("generate", "prompt has no context section"))?;
        let limit = Self::word_limit(prompt).max(1);

        let mut passages = Vec::new();
        let mut cursor = 0;
        for marker in citation_markers(context) {
            let text = context[cursor..marker.range.start]
                .trim_matches(|c: char| c.is_whitespace() || matches!(c, '.' | '!' | '?' | ',' | ';'));
            cursor = marker.range.end;
            if let (false, Some(id)) = (text.is_empty(), marker.ids.first()) {
                passages.push((text, id.clone()));
            }
            if passages.len() == Self::PASSAGES {
                break;
            }
        }
        if passages.is_empty() {
            return Err(ProviderError::new("generate", "context cites no passages"));
        }

        let mut out = String::new();
        let mut words = 0;
        for (i, (text, id)) in passages.iter().enumerate() {
            let n = word_count(text);
            let sentence: String = if i == 0 && n > limit {
                text.split_whitespace().take(limit).collect::<Vec<_>>().join(" ")
            } else if i > 0 && words + n > limit {
                break;
            } else {
                text.to_string()
            };
            words += word_count(&sentence);
            if !out.is_empty() {
                out.push(' ');
            }
            out.push_str(&alloc::format!("{sentence} ({REFERENCE_LABEL}: {id})."));
        }
        Ok(out)
    }

    fn fingerprint(&self) -> String {
        "template-generator".to_string()
    }
}

/// Tokens that flip the overlap score when only one side contains them.
pub const NEGATIONS: &[&str] = &["no", "not", "never", "cannot"];

/// Function words ignored by the overlap stance double.
pub const STOPWORDS: &[&str] = &[
    "a", "about", "after", "all", "also", "an", "and", "any", "are", "as", "at", "be", "been", "being", "but", "by",
    "can", "could", "did", "do", "does", "for", "from", "had", "has", "have", "how", "if", "in", "into", "is", "it",
    "its", "may", "might", "more", "most", "of", "on", "or", "other", "should", "so", "some", "such", "than", "that",
    "the", "their", "then", "there", "these", "they", "this", "those", "to", "was", "were", "what", "when", "which",
    "while", "who", "will", "with", "would",
];

/// Multiplier applied when exactly one side is negated.
pub const NEGATION_FACTOR: f64 = 0.2;

/// Jaccard overlap of content tokens with a negation flip.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct OverlapStance;

impl OverlapStance {
    /// Normalized tokens minus stopwords and negations, plus whether a
    /// negation was present.
    pub fn content_tokens(text: &str) -> (BTreeSet<String>, bool) {
        let mut negated = false;
        let mut content = BTreeSet::new();
        for token in normalize_text(text) {
            if NEGATIONS.contains(&token.as_str()) {
                negated = true;
            } else if !STOPWORDS.contains(&token.as_str()) {
                content.insert(token);
            }
        }
        (content, negated)
    }

    pub fn score(premise: &str, hypothesis: &str) -> f64 {
        let (a, neg_a) = Self::content_tokens(premise);
        let (b, neg_b) = Self::content_tokens(hypothesis);
        let union = a.union(&b).count();
        if union == 0 {
            return 0.0;
        }
        let jaccard = a.intersection(&b).count() as f64 / union as f64;
        if neg_a != neg_b {
            jaccard * NEGATION_FACTOR
        } else {
            jaccard
        }
    }
}

impl StanceProvider for OverlapStance {
    fn stance(&self, premise: &str, hypothesis: &str) -> Result<f64, ProviderError> {
        if premise.trim().is_empty() || hypothesis.trim().is_empty() {
            return Err(ProviderError::new("stance", "empty premise or hypothesis"));
        }
        Ok(Self::score(premise, hypothesis))
    }

    fn fingerprint(&self) -> String {
        "overlap-stance".to_string()
    }
}

const BUNDLED_MEDICINES: &str = include_str!("../../data/medicines.txt");
const BUNDLED_DISEASES: &str = include_str!("../../data/diseases.txt");

/// Longest-match, case-insensitive gazetteer tagger for medicines and
/// diseases. Terms are matched on their normalized token sequence, so
/// "COVID-19" and "covid 19" both hit the entry `covid-19`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GazetteerNer {
    terms: BTreeMap<Vec<String>, EntityKind>,
    longest: usize,
    fingerprint: String,
}

impl GazetteerNer {
    /// Builds from one-term-per-line lists. A term in both lists is tagged
    /// as a medicine.
    pub fn new(medicines: &str, diseases: &str) -> Self {
        let mut terms = BTreeMap::new();
        let lists = [(diseases, EntityKind::Disease), (medicines, EntityKind::Medicine)];
        for (list, kind) in lists {
            for line in list
                .lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#'))
            {
                let tokens = normalize_text(line);
                if !tokens.is_empty() {
                    terms.insert(tokens, kind);
                }
            }
        }
        let longest = terms.keys().map(Vec::len).max().unwrap_or(0);
        let mut fp_bytes = Vec::new();
        fp_bytes.extend_from_slice(medicines.as_bytes());
        fp_bytes.push(0);
        fp_bytes.extend_from_slice(diseases.as_bytes());
        let fingerprint = alloc::format!("gazetteer-{:016x}", fnv1a64(&fp_bytes));
        Self {
            terms,
            longest,
            fingerprint,
        }
    }

    pub fn bundled() -> Self {
        Self::new(BUNDLED_MEDICINES, BUNDLED_DISEASES)
    }

    pub fn term_count(&self) -> usize {
        self.terms.len()
    }

    pub fn tag(&self, text: &str) -> Vec<Entity> {
        let tokens = token_spans(text);
        let mut found = Vec::new();
        let mut i = 0;
        while i < tokens.len() {
            let max = self.longest.min(tokens.len() - i);
            let hit = (1..=max).rev().find_map(|len| {
                let key: Vec<String> = tokens[i..i + len].iter().map(|t| t.0.clone()).collect();
                self.terms.get(&key).map(|kind| (len, *kind))
            });
            match hit {
                Some((len, kind)) => {
                    let start = tokens[i].1;
                    let end = tokens[i + len - 1].2;
                    found.push(Entity {
                        text: text[start..end].to_string(),
                        kind,
                    });
                    i += len;
                }
                None => i += 1,
            }
        }
        found
    }
}

impl NerProvider for GazetteerNer {
    fn ner(&self, text: &str) -> Result<Vec<Entity>, ProviderError> {
        Ok(self.tag(text))
    }

    fn fingerprint(&self) -> String {
        self.fingerprint.clone()
    }
}

/// Lowercased alphanumeric runs with their byte spans.
fn token_spans(text: &str) -> Vec<(String, usize, usize)> {
    let mut out = Vec::new();
    let mut start: Option<usize> = None;
    for (i, ch) in text.char_indices() {
        match (ch.is_alphanumeric(), start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                out.push((text[s..i].to_lowercase(), s, i));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        out.push((text[s..].to_lowercase(), s, text.len()));
    }
    out
}

/// A local article dump ranked with BM25 over title and text.
#[derive(Debug, Clone)]
pub struct FixtureKnowledgeBase {
    articles: BTreeMap<String, Article>,
    index: Option<InvertedIndex>,
    params: Bm25Params,
}

impl FixtureKnowledgeBase {
    pub fn new(articles: Vec<Article>) -> Self {
        let articles: BTreeMap<String, Article> = articles.into_iter().map(|a| (a.ref_id.clone(), a)).collect();
        let docs: Vec<Document> = articles
            .values()
            .map(|a| Document {
                doc_id: a.ref_id.clone(),
                url: None,
                title: a.title.clone(),
                body: a.body.clone(),
                dataset: Dataset::Fixture,
            })
            .collect();
        let index = InvertedIndex::build(&docs).ok();
        Self {
            articles,
            index,
            params: Bm25Params::default(),
        }
    }

    pub fn len(&self) -> usize {
        self.articles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.articles.is_empty()
    }

    pub fn get(&self, ref_id: &str) -> Option<&Article> {
        self.articles.get(ref_id)
    }

    pub fn index(&self) -> Option<&InvertedIndex> {
        self.index.as_ref()
    }
}

impl KnowledgeBase for FixtureKnowledgeBase {
    fn search(&self, query_text: &str, m: usize) -> Result<Vec<Article>> {
        if m == 0 {
            return Err(Error::InvalidInput("m must be at least 1".into()));
        }
        let Some(index) = &self.index else {
            return Ok(Vec::new());
        };
        let terms = normalize_text(query_text).into_iter().collect();
        Ok(index
            .retrieve_terms(self.params, &terms, m)
            .into_iter()
            .filter_map(|(id, _)| self.articles.get(&id).cloned())
            .collect())
    }

    fn fingerprint(&self) -> String {
        let mut h = FNV_OFFSET;
        for a in self.articles.values() {
            for part in [&a.ref_id, &a.title, &a.body] {
                h = part
                    .bytes()
                    .fold(h ^ 0xff, |h, b| (h ^ u64::from(b)).wrapping_mul(FNV_PRIME));
            }
        }
        alloc::format!("fixture-kb-{h:016x}")
    }
}
