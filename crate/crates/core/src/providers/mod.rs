//! Model and knowledge-base contracts.
//!
//! Four model roles (embedding, generation, stance, NER) and the evidence
//! knowledge base are reached through these traits. Remote HTTP adapters
//! live in the `factrank` crate; [`doubles`] holds deterministic offline
//! implementations that satisfy the same contracts.

use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{ProviderError, Result};
use crate::evidence::Article;
use crate::vector;

pub mod doubles;

pub trait EmbeddingProvider: Send + Sync {
    /// One vector per input text, all of the same dimension.
    fn embed(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, ProviderError>;

    /// Identifies the backing model; part of cache keys.
    fn fingerprint(&self) -> String;
}

pub trait GenerationProvider: Send + Sync {
    fn generate(&self, prompt: &str) -> Result<String, ProviderError>;

    fn fingerprint(&self) -> String;
}

pub trait StanceProvider: Send + Sync {
    /// Support of `premise` for `hypothesis`, in `[0, 1]`.
    fn stance(&self, premise: &str, hypothesis: &str) -> Result<f64, ProviderError>;

    fn fingerprint(&self) -> String;
}

pub trait NerProvider: Send + Sync {
    fn ner(&self, text: &str) -> Result<Vec<Entity>, ProviderError>;

    fn fingerprint(&self) -> String;
}

pub trait KnowledgeBase: Send + Sync {
    /// Top `m` articles by the knowledge base's own lexical ranking. An
    /// empty result is not an error at this layer; transport failures are
    /// [`crate::Error::KnowledgeBaseUnavailable`].
    fn search(&self, query_text: &str, m: usize) -> Result<Vec<Article>>;

    fn fingerprint(&self) -> String;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EntityKind {
    Medicine,
    Disease,
    Other,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Entity {
    pub text: String,
    #[serde(rename = "type")]
    pub kind: EntityKind,
}

/// The provider set one pipeline runs against.
#[derive(Clone)]
pub struct Providers {
    pub embedding: Arc<dyn EmbeddingProvider>,
    pub generation: Arc<dyn GenerationProvider>,
    pub stance: Arc<dyn StanceProvider>,
    pub ner: Arc<dyn NerProvider>,
    pub knowledge_base: Arc<dyn KnowledgeBase>,
}

impl fmt::Debug for Providers {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Providers")
            .field("fingerprint", &self.fingerprint())
            .finish()
    }
}

impl Providers {
    /// Every provider backed by its offline double, with the bundled
    /// gazetteer and the given knowledge-base articles.
    pub fn doubles(articles: Vec<Article>) -> Self {
        Self {
            embedding: Arc::new(doubles::HashEmbedder::default()),
            generation: Arc::new(doubles::TemplateGenerator),
            stance: Arc::new(doubles::OverlapStance),
            ner: Arc::new(doubles::GazetteerNer::bundled()),
            knowledge_base: Arc::new(doubles::FixtureKnowledgeBase::new(articles)),
        }
    }

    /// Stable identity of the whole set; changes whenever any backend does.
    pub fn fingerprint(&self) -> String {
        alloc::format!(
            "{}|{}|{}|{}|{}",
            self.embedding.fingerprint(),
            self.generation.fingerprint(),
            self.stance.fingerprint(),
            self.ner.fingerprint(),
            self.knowledge_base.fingerprint()
        )
    }
}

/// Calls `provider` and enforces the embedding contract: one vector per
/// text, a single shared dimension, finite values, unit norm (vectors are
/// re-normalized here, zero vectors are rejected).
pub fn embed_checked(provider: &dyn EmbeddingProvider, texts: &[&str]) -> Result<Vec<Vec<f64>>, ProviderError> {
    if texts.is_empty() {
        return Ok(Vec::new());
    }
    let mut vectors = provider.embed(texts)?;
    if vectors.len() != texts.len() {
        return Err(ProviderError::new(
            "embed",
            alloc::format!("expected {} vectors, got {}", texts.len(), vectors.len()),
        ));
    }
    let dim = vectors[0].len();
    for v in &mut vectors {
        if v.len() != dim || dim == 0 {
            return Err(ProviderError::new("embed", "inconsistent vector dimensions"));
        }
        if !vector::normalize_in_place(v) {
            return Err(ProviderError::new("embed", "zero or non-finite vector"));
        }
    }
    Ok(vectors)
}

/// Calls `provider` and rejects scores outside `[0, 1]`.
pub fn stance_checked(provider: &dyn StanceProvider, premise: &str, hypothesis: &str) -> Result<f64, ProviderError> {
    let score = provider.stance(premise, hypothesis)?;
    if (0.0..=1.0).contains(&score) {
        Ok(score)
    } else {
        Err(ProviderError::new(
            "stance",
            alloc::format!("score {score} outside [0, 1]"),
        ))
    }
}
