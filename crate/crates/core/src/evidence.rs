//! Evidence passages for a query.
//!
//! Articles come from the knowledge base, are split into one-sentence
//! passages and scored by cosine similarity to the query, discounted by
//! `d_NE` when the passage misses every medicine/disease the query names.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::corpus::QuerySpec;
use crate::error::{Error, ProviderError, Result};
use crate::providers::{embed_checked, EmbeddingProvider, Entity, EntityKind, KnowledgeBase, NerProvider};
use crate::text::{collapse_whitespace, lowercase_trimmed, normalized_key, SentenceSplitter};
use crate::vector::unit_cosine;

/// A knowledge-base article (e.g. a PMC paper).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Article {
    pub ref_id: String,
    #[serde(default)]
    pub title: String,
    #[serde(rename = "text")]
    pub body: String,
}

impl Article {
    pub fn new(ref_id: impl Into<String>, title: impl Into<String>, body: impl Into<String>) -> Self {
        Self {
            ref_id: ref_id.into(),
            title: title.into(),
            body: body.into(),
        }
    }
}

/// One sentence of an article.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Passage {
    pub ref_id: String,
    pub sentence: String,
    pub ordinal: usize,
    /// Unit-norm embedding; empty until the passage is embedded.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub embedding: Vec<f64>,
}

/// Medicine and disease mentions, lowercased and trimmed.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntitySet {
    pub medicines: BTreeSet<String>,
    pub diseases: BTreeSet<String>,
}

impl EntitySet {
    pub fn from_entities(entities: &[Entity]) -> Self {
        let mut set = Self::default();
        for e in entities {
            let name = lowercase_trimmed(&e.text);
            if name.is_empty() {
                continue;
            }
            match e.kind {
                EntityKind::Medicine => {
                    set.medicines.insert(name);
                }
                EntityKind::Disease => {
                    set.diseases.insert(name);
                }
                EntityKind::Other => {}
            }
        }
        set
    }

    pub fn is_empty(&self) -> bool {
        self.medicines.is_empty() && self.diseases.is_empty()
    }

    /// Token-normalized names of all medicines and diseases, so that
    /// "covid-19" and "covid 19" compare equal.
    pub fn keys(&self) -> BTreeSet<String> {
        self.medicines
            .iter()
            .chain(&self.diseases)
            .map(|e| normalized_key(e))
            .filter(|k| !k.is_empty())
            .collect()
    }

    /// Whether a passage with entities `passage` keeps its full similarity
    /// for a query with entities `self`: always when the query names no
    /// medicine or disease, otherwise when they share at least one.
    pub fn matches(&self, passage: &EntitySet) -> bool {
        let query = self.keys();
        query.is_empty() || !query.is_disjoint(&passage.keys())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredPassage {
    pub passage: Passage,
    /// Cosine similarity to the query, clamped to `[0, 1]`.
    pub sim: f64,
    pub discounted: bool,
    pub sigma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvidenceParams {
    /// Passages kept.
    pub k: usize,
    /// Discount for passages without a matching entity, in `(0, 1)`.
    pub d_ne: f64,
    /// Articles fetched from the knowledge base.
    pub articles: usize,
}

impl Default for EvidenceParams {
    fn default() -> Self {
        Self {
            k: crate::defaults::K,
            d_ne: crate::defaults::D_NE,
            articles: crate::defaults::ARTICLES,
        }
    }
}

impl EvidenceParams {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.articles == 0 {
            return Err(Error::InvalidInput("k and articles must be at least 1".into()));
        }
        if !(self.d_ne > 0.0 && self.d_ne < 1.0) {
            return Err(Error::Domain {
                name: "d_ne",
                value: self.d_ne,
            });
        }
        Ok(())
    }
}

/// Top `m` articles for the query text. No hit is [`Error::NoEvidenceFound`].
pub fn fetch_articles(query: &QuerySpec, kb: &dyn KnowledgeBase, m: usize) -> Result<Vec<Article>> {
    if m == 0 {
        return Err(Error::InvalidInput("m must be at least 1".into()));
    }
    let mut articles = kb.search(&query.text, m)?;
    articles.truncate(m);
    if articles.is_empty() {
        return Err(Error::NoEvidenceFound);
    }
    Ok(articles)
}

/// Splits the article body into whitespace-collapsed sentences numbered from 0.
pub fn segment_sentences(article: &Article, splitter: &SentenceSplitter) -> Vec<Passage> {
    splitter
        .split(&article.body)
        .into_iter()
        .enumerate()
        .map(|(ordinal, s)| Passage {
            ref_id: article.ref_id.clone(),
            sentence: collapse_whitespace(s),
            ordinal,
            embedding: Vec::new(),
        })
        .collect()
}

/// Medicine and disease entities of `text`; other entity types are dropped.
pub fn entity_extract(text: &str, ner: &dyn NerProvider) -> Result<EntitySet> {
    let entities = ner.ner(text).map_err(|e| {
        let snippet: String = text.chars().take(60).collect();
        ProviderError::new(e.operation, alloc::format!("{} (text: {snippet:?})", e.message))
    })?;
    Ok(EntitySet::from_entities(&entities))
}

/// Applies the entity discount to the query–passage cosine.
pub fn score_passage(
    query_embedding: &[f64],
    passage: Passage,
    query_entities: &EntitySet,
    passage_entities: &EntitySet,
    d_ne: f64,
) -> ScoredPassage {
    let sim = unit_cosine(query_embedding, &passage.embedding);
    let discounted = !query_entities.matches(passage_entities);
    let sigma = if discounted { d_ne * sim } else { sim };
    ScoredPassage {
        passage,
        sim,
        discounted,
        sigma,
    }
}

/// Orders by sigma descending, then `(ref_id, ordinal)` ascending.
pub fn passage_order(a: &ScoredPassage, b: &ScoredPassage) -> core::cmp::Ordering {
    b.sigma
        .total_cmp(&a.sigma)
        .then_with(|| a.passage.ref_id.cmp(&b.passage.ref_id))
        .then_with(|| a.passage.ordinal.cmp(&b.passage.ordinal))
}

/// Scores every sentence of `articles` against the query and keeps the top
/// `k`. Sentences with identical normalized text are kept once (the best
/// scored). Sentences without any alphanumeric token cannot be embedded and
/// are skipped.
pub fn top_k_passages(
    query: &QuerySpec,
    articles: &[Article],
    params: &EvidenceParams,
    splitter: &SentenceSplitter,
    embedding: &dyn EmbeddingProvider,
    ner: &dyn NerProvider,
) -> Result<Vec<ScoredPassage>> {
    params.validate()?;
    let passages: Vec<Passage> = articles
        .iter()
        .flat_map(|a| segment_sentences(a, splitter))
        .filter(|p| !normalized_key(&p.sentence).is_empty())
        .collect();
    if passages.is_empty() {
        return Err(Error::NoEvidenceFound);
    }

    let query_entities = entity_extract(&query.text, ner)?;
    let query_embedding = embed_checked(embedding, &[query.text.as_str()])?
        .pop()
        .ok_or_else(|| ProviderError::new("embed", "no query vector"))?;

    let texts: Vec<&str> = passages.iter().map(|p| p.sentence.as_str()).collect();
    let vectors = embed_checked(embedding, &texts)?;
    if vectors[0].len() != query_embedding.len() {
        return Err(ProviderError::new("embed", "query and passage dimensions differ").into());
    }

    let mut best: BTreeMap<String, ScoredPassage> = BTreeMap::new();
    for (mut passage, vector) in passages.into_iter().zip(vectors) {
        passage.embedding = vector;
        let passage_entities = entity_extract(&passage.sentence, ner)?;
        let scored = score_passage(
            &query_embedding,
            passage,
            &query_entities,
            &passage_entities,
            params.d_ne,
        );
        let key = normalized_key(&scored.passage.sentence);
        match best.get(&key) {
            Some(kept) if passage_order(kept, &scored).is_le() => {}
            _ => {
                best.insert(key, scored);
            }
        }
    }
    let mut ranked: Vec<ScoredPassage> = best.into_values().collect();
    ranked.sort_by(passage_order);
    ranked.truncate(params.k);
    Ok(ranked)
}

/// Reference ids cited by a passage list, in first-seen order.
pub fn reference_ids(passages: &[ScoredPassage]) -> Vec<String> {
    let mut seen = BTreeSet::new();
    passages
        .iter()
        .filter(|p| seen.insert(p.passage.ref_id.clone()))
        .map(|p| p.passage.ref_id.to_string())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::providers::doubles::{FixtureKnowledgeBase, GazetteerNer, HashEmbedder};
    use alloc::vec;

    fn passage(ref_id: &str, ordinal: usize, embedding: Vec<f64>) -> Passage {
        Passage {
            ref_id: ref_id.into(),
            sentence: "s".into(),
            ordinal,
            embedding,
        }
    }

    fn entities(medicines: &[&str], diseases: &[&str]) -> EntitySet {
        EntitySet {
            medicines: medicines.iter().map(|s| s.to_string()).collect(),
            diseases: diseases.iter().map(|s| s.to_string()).collect(),
        }
    }

    #[test]
    fn sigma_follows_the_discount_rule() {
        let q = [0.8, 0.6];
        let p = [1.0, 0.0]; // cosine 0.8
        let query = entities(&["ibuprofen"], &[]);
        let hit = score_passage(
            &q,
            passage("1", 0, p.to_vec()),
            &query,
            &entities(&["ibuprofen"], &[]),
            0.7,
        );
        assert!((hit.sim - 0.8).abs() < 1e-12);
        assert_eq!(hit.sigma, hit.sim);
        assert!(!hit.discounted);
        let miss = score_passage(&q, passage("1", 0, p.to_vec()), &query, &entities(&[], &["flu"]), 0.7);
        assert!(miss.discounted);
        assert!((miss.sigma - 0.56).abs() < 1e-12);
        let same = score_passage(&q, passage("1", 0, q.to_vec()), &query, &query, 0.7);
        assert!((same.sim - 1.0).abs() < 1e-12 && (same.sigma - 1.0).abs() < 1e-12);
    }

    #[test]
    fn query_without_entities_is_never_discounted() {
        assert!(EntitySet::default().matches(&EntitySet::default()));
        assert!(EntitySet::default().matches(&entities(&["aspirin"], &[])));
        assert!(!entities(&["aspirin"], &[]).matches(&EntitySet::default()));
        // matching crosses the medicine/disease split and punctuation
        assert!(entities(&[], &["covid 19"]).matches(&entities(&[], &["covid-19"])));
    }

    #[test]
    fn entity_extract_examples() {
        let ner = GazetteerNer::new("ibuprofen\n", "covid-19\n");
        let got = entity_extract("ibuprofen can worsen covid-19", &ner).unwrap();
        assert_eq!(got, entities(&["ibuprofen"], &["covid-19"]));
        assert!(entity_extract("the weather is nice", &ner).unwrap().is_empty());
        assert_eq!(
            entity_extract("IBUPROFEN", &ner).unwrap(),
            entities(&["ibuprofen"], &[])
        );
    }

    #[test]
    fn segment_numbers_sentences() {
        let a = Article::new("7", "", "A is true. B follows? C!");
        let ps = segment_sentences(&a, &SentenceSplitter::default());
        assert_eq!(ps.len(), 3);
        assert_eq!(ps.iter().map(|p| p.ordinal).collect::<Vec<_>>(), vec![0, 1, 2]);
        assert!(ps.iter().all(|p| p.ref_id == "7"));
    }

    #[test]
    fn fetch_articles_errors_when_nothing_matches() {
        let kb = FixtureKnowledgeBase::new(vec![Article::new("1", "t", "ibuprofen and covid")]);
        let q = QuerySpec::new("q", "ibuprofen covid");
        assert_eq!(fetch_articles(&q, &kb, 1).unwrap()[0].ref_id, "1");
        assert_eq!(
            fetch_articles(&QuerySpec::new("q", "weather"), &kb, 1).unwrap_err(),
            Error::NoEvidenceFound
        );
    }

    #[test]
    fn duplicate_sentences_are_kept_once() {
        let articles = vec![Article::new(
            "1",
            "",
            "Ibuprofen is safe for covid. Ibuprofen is safe for covid. Rain falls.",
        )];
        let params = EvidenceParams {
            k: 10,
            ..Default::default()
        };
        let got = top_k_passages(
            &QuerySpec::new("q", "ibuprofen covid"),
            &articles,
            &params,
            &SentenceSplitter::default(),
            &HashEmbedder::default(),
            &GazetteerNer::bundled(),
        )
        .unwrap();
        assert_eq!(got.len(), 2);
        assert_eq!(got[0].passage.ordinal, 0);
    }

    #[test]
    fn invalid_params_are_rejected() {
        let bad = EvidenceParams {
            d_ne: 1.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = EvidenceParams {
            k: 0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
