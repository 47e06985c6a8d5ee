//! How well a document agrees with the GenText.
//!
//! The factual score mixes a stance score (does the document support the
//! GenText?) with the cosine between their embeddings:
//! `f = alpha * stance + (1 - alpha) * similarity`.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{check_unit, ProviderError, Result};
use crate::gentext::GenText;
use crate::providers::{embed_checked, stance_checked, EmbeddingProvider, StanceProvider};
use crate::text::{normalize_text, SentenceSplitter};
use crate::vector::{mean_unit, unit_cosine};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactualScore {
    pub doc_id: String,
    /// `None` when the stance provider failed for this document.
    pub stance: Option<f64>,
    /// `None` when the embedding provider failed for this document.
    pub similarity: Option<f64>,
    pub alpha: f64,
    pub f: f64,
    /// A component was missing and `f` fell back to the other one.
    pub degraded: bool,
}

impl FactualScore {
    /// Combines possibly-missing components. A missing stance makes
    /// `f = similarity`, a missing similarity makes `f = stance`, both
    /// missing gives 0. Any missing component sets `degraded`.
    pub fn combine(doc_id: String, stance: Option<f64>, similarity: Option<f64>, alpha: f64) -> Result<Self> {
        check_unit("alpha", alpha)?;
        let (f, degraded) = match (stance, similarity) {
            (Some(s), Some(c)) => (factual_accuracy(s, c, alpha)?, false),
            (None, Some(c)) => (check_unit("similarity", c)?, true),
            (Some(s), None) => (check_unit("stance", s)?, true),
            (None, None) => (0.0, true),
        };
        Ok(Self {
            doc_id,
            stance,
            similarity,
            alpha,
            f,
            degraded,
        })
    }
}

/// `alpha * stance + (1 - alpha) * similarity`, all inputs in `[0, 1]`.
pub fn factual_accuracy(stance: f64, similarity: f64, alpha: f64) -> Result<f64> {
    let stance = check_unit("stance", stance)?;
    let similarity = check_unit("similarity", similarity)?;
    let alpha = check_unit("alpha", alpha)?;
    Ok(alpha * stance + (1.0 - alpha) * similarity)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StanceMode {
    /// One call per chunk with the whole GenText as hypothesis.
    #[default]
    Whole,
    /// One call per chunk and valid GenText sentence; sentence scores are
    /// averaged per chunk.
    PerSentence,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FactualityParams {
    pub alpha: f64,
    /// Upper bound on normalized tokens per stance chunk.
    pub chunk_tokens: usize,
    /// Chunk scores averaged into the document stance (best first).
    pub top_chunks: usize,
    /// Leading sentences mean-pooled into the document embedding.
    pub embed_sentences: usize,
    pub stance_mode: StanceMode,
}

impl Default for FactualityParams {
    fn default() -> Self {
        Self {
            alpha: crate::defaults::ALPHA,
            chunk_tokens: 400,
            top_chunks: 2,
            embed_sentences: 64,
            stance_mode: StanceMode::Whole,
        }
    }
}

/// Groups consecutive sentences into chunks of at most `max_tokens`
/// normalized tokens. A sentence longer than the budget is cut into
/// word-aligned pieces.
pub fn chunk_document(text: &str, splitter: &SentenceSplitter, max_tokens: usize) -> Vec<String> {
    let max_tokens = max_tokens.max(1);
    let mut chunks = Vec::new();
    let mut current = String::new();
    let mut current_tokens = 0;
    let flush = |current: &mut String, count: &mut usize, chunks: &mut Vec<String>| {
        if !current.is_empty() {
            chunks.push(core::mem::take(current));
        }
        *count = 0;
    };
    for sentence in splitter.split(text) {
        let tokens = normalize_text(sentence).len();
        if tokens == 0 {
            continue;
        }
        if tokens > max_tokens {
            flush(&mut current, &mut current_tokens, &mut chunks);
            let mut piece = String::new();
            let mut piece_tokens = 0;
            for word in sentence.split_whitespace() {
                let n = normalize_text(word).len();
                if piece_tokens + n > max_tokens && !piece.is_empty() {
                    chunks.push(core::mem::take(&mut piece));
                    piece_tokens = 0;
                }
                if !piece.is_empty() {
                    piece.push(' ');
                }
                piece.push_str(word);
                piece_tokens += n;
            }
            if !piece.is_empty() {
                chunks.push(piece);
            }
            continue;
        }
        if current_tokens + tokens > max_tokens {
            flush(&mut current, &mut current_tokens, &mut chunks);
        }
        if !current.is_empty() {
            current.push(' ');
        }
        current.push_str(sentence);
        current_tokens += tokens;
    }
    flush(&mut current, &mut current_tokens, &mut chunks);
    chunks
}

/// Mean of the `m` largest scores (of all scores when there are fewer).
/// The result does not depend on input order.
pub fn mean_of_top(scores: &[f64], m: usize) -> Option<f64> {
    if scores.is_empty() || m == 0 {
        return None;
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    sorted.truncate(m);
    Some(sorted.iter().sum::<f64>() / sorted.len() as f64)
}

/// Support of `doc_text` (premise, chunked) for the GenText's valid
/// sentences (hypothesis).
pub fn stance_score(
    doc_text: &str,
    gentext: &GenText,
    provider: &dyn StanceProvider,
    params: &FactualityParams,
    splitter: &SentenceSplitter,
) -> Result<f64, ProviderError> {
    let hypothesis = gentext.factual_text();
    if hypothesis.is_empty() {
        return Err(ProviderError::new("stance", "GenText has no valid sentence"));
    }
    let chunks = chunk_document(doc_text, splitter, params.chunk_tokens);
    let mut scores = Vec::with_capacity(chunks.len());
    for chunk in &chunks {
        let score = match params.stance_mode {
            StanceMode::Whole => stance_checked(provider, chunk, &hypothesis)?,
            StanceMode::PerSentence => {
                let mut sum = 0.0;
                let mut n = 0usize;
                for s in gentext.valid_sentences() {
                    sum += stance_checked(provider, chunk, &s.text)?;
                    n += 1;
                }
                sum / n as f64
            }
        };
        scores.push(score);
    }
    mean_of_top(&scores, params.top_chunks).ok_or_else(|| ProviderError::new("stance", "document has no text"))
}

/// Unit-norm mean of the embeddings of the first `max_sentences` sentences.
pub fn document_embedding(
    doc_text: &str,
    provider: &dyn EmbeddingProvider,
    max_sentences: usize,
    splitter: &SentenceSplitter,
) -> Result<Vec<f64>, ProviderError> {
    let sentences: Vec<&str> = splitter
        .split(doc_text)
        .into_iter()
        .filter(|s| !normalize_text(s).is_empty())
        .take(max_sentences.max(1))
        .collect();
    if sentences.is_empty() {
        return Err(ProviderError::new("embed", "document has no text"));
    }
    let vectors = embed_checked(provider, &sentences)?;
    mean_unit(&vectors).ok_or_else(|| ProviderError::new("embed", "degenerate document embedding"))
}

/// Cosine between the document and GenText embeddings, clamped to `[0, 1]`.
pub fn semantic_similarity(
    doc_text: &str,
    gentext: &GenText,
    provider: &dyn EmbeddingProvider,
    params: &FactualityParams,
    splitter: &SentenceSplitter,
) -> Result<f64, ProviderError> {
    if gentext.embedding.is_empty() {
        return Err(ProviderError::new("embed", "GenText is not embedded"));
    }
    let doc = document_embedding(doc_text, provider, params.embed_sentences, splitter)?;
    if doc.len() != gentext.embedding.len() {
        return Err(ProviderError::new("embed", "document and GenText dimensions differ"));
    }
    Ok(unit_cosine(&doc, &gentext.embedding))
}

/// Full factual score of one document. Provider failures never drop the
/// document; they mark the component missing and the score degraded.
pub fn score_document(
    doc_id: &str,
    doc_text: &str,
    gentext: &GenText,
    stance: &dyn StanceProvider,
    embedding: &dyn EmbeddingProvider,
    params: &FactualityParams,
    splitter: &SentenceSplitter,
) -> Result<FactualScore> {
    let s = stance_score(doc_text, gentext, stance, params, splitter).ok();
    let c = semantic_similarity(doc_text, gentext, embedding, params, splitter).ok();
    FactualScore::combine(doc_id.into(), s, c, params.alpha)
}
