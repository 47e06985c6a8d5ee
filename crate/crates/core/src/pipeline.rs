//! End-to-end ranking of one query. Both the interactive search and batch
//! runs go through [`Pipeline::prepare`] followed by [`PreparedQuery::rank`].

use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::corpus::{Bm25Params, Collection, QuerySpec};
use crate::error::{check_unit, Error, Result};
use crate::evidence::{fetch_articles, top_k_passages, EvidenceParams, ScoredPassage};
use crate::factuality::{semantic_similarity, stance_score, FactualScore, FactualityParams};
use crate::fusion::{normalize_topicality, rank, RankParams, RankedList, ScoredDoc};
use crate::gentext::{
    build_prompt, context_references, fallback_gentext, generate, parse_gentext, GenText, PromptTemplate,
};
use crate::providers::Providers;
use crate::text::SentenceSplitter;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Topicality,
    Evidence,
    Generation,
    Scoring,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Topicality => "topicality",
            Stage::Evidence => "evidence",
            Stage::Generation => "generation",
            Stage::Scoring => "scoring",
        }
    }
}

impl core::fmt::Display for Stage {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A failure attributed to the stage that raised it.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{stage} stage failed: {error}")]
pub struct PipelineError {
    pub stage: Stage,
    pub error: Error,
}

impl PipelineError {
    fn at(stage: Stage) -> impl FnOnce(Error) -> Self {
        move |error| Self { stage, error }
    }
}

/// Hook for timing or tracing; called around every stage.
pub trait StageObserver {
    fn enter(&mut self, _stage: Stage) {}
    fn exit(&mut self, _stage: Stage) {}
}

impl StageObserver for () {}

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub bm25: Bm25Params,
    pub evidence: EvidenceParams,
    pub factuality: FactualityParams,
    pub beta: f64,
    /// BM25 candidates re-ranked per query.
    pub candidate_pool: usize,
    pub word_limit: usize,
    pub retries: usize,
    pub template: PromptTemplate,
    pub splitter: SentenceSplitter,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            bm25: Bm25Params::default(),
            evidence: EvidenceParams::default(),
            factuality: FactualityParams::default(),
            beta: crate::defaults::BETA,
            candidate_pool: crate::defaults::CANDIDATE_POOL,
            word_limit: crate::defaults::WORD_LIMIT,
            retries: crate::defaults::RETRIES,
            template: PromptTemplate::default(),
            splitter: SentenceSplitter::default(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.evidence.validate()?;
        check_unit("alpha", self.factuality.alpha)?;
        check_unit("beta", self.beta)?;
        if self.candidate_pool == 0 || self.word_limit == 0 {
            return Err(Error::InvalidInput(
                "candidate pool and word limit must be positive".into(),
            ));
        }
        if self.factuality.chunk_tokens == 0 || self.factuality.top_chunks == 0 {
            return Err(Error::InvalidInput(
                "chunk size and chunk count must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn rank_params(&self) -> RankParams {
        RankParams {
            k: self.evidence.k,
            alpha: self.factuality.alpha,
            beta: self.beta,
            d_ne: self.evidence.d_ne,
        }
    }
}

/// A BM25 candidate with its raw factuality components.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub doc_id: String,
    pub t_raw: f64,
    pub t_norm: f64,
    pub stance: Option<f64>,
    pub similarity: Option<f64>,
}

/// Everything about a query that does not depend on `alpha` or `beta`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreparedQuery {
    pub query: QuerySpec,
    pub k: usize,
    pub d_ne: f64,
    pub candidates: Vec<Candidate>,
    pub evidence: Vec<ScoredPassage>,
    /// `None` when the knowledge base had no evidence for the query.
    pub gentext: Option<GenText>,
}

impl PreparedQuery {
    pub fn rank(&self, alpha: f64, beta: f64) -> Result<RankedList> {
        check_unit("alpha", alpha)?;
        check_unit("beta", beta)?;
        let scored = self
            .candidates
            .iter()
            .map(|c| {
                let factual = FactualScore::combine(c.doc_id.clone(), c.stance, c.similarity, alpha)?;
                ScoredDoc::new(c.doc_id.clone(), c.t_raw, c.t_norm, factual, beta)
            })
            .collect::<Result<Vec<_>>>()?;
        let params = RankParams {
            k: self.k,
            alpha,
            beta,
            d_ne: self.d_ne,
        };
        rank(&self.query.query_id, scored, self.gentext.clone(), params)
    }
}

#[derive(Debug, Clone)]
pub struct Pipeline {
    collection: Arc<Collection>,
    providers: Providers,
    config: PipelineConfig,
}

impl Pipeline {
    pub fn new(collection: Arc<Collection>, providers: Providers, config: PipelineConfig) -> Result<Self> {
        config.validate()?;
        if collection.is_empty() {
            return Err(Error::EmptyCollection);
        }
        Ok(Self {
            collection,
            providers,
            config,
        })
    }

    pub fn collection(&self) -> &Collection {
        &self.collection
    }

    pub fn providers(&self) -> &Providers {
        &self.providers
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    /// Ranks with the configured parameters.
    pub fn search(&self, query: &QuerySpec) -> core::result::Result<RankedList, PipelineError> {
        let prepared = self.prepare(query, self.config.evidence.k)?;
        prepared
            .rank(self.config.factuality.alpha, self.config.beta)
            .map_err(PipelineError::at(Stage::Scoring))
    }

    /// BM25 top `n` with scores.
    pub fn topical(&self, query: &QuerySpec, n: usize) -> Vec<(String, f64)> {
        self.collection.index().retrieve_topical(self.config.bm25, query, n)
    }

    pub fn prepare(&self, query: &QuerySpec, k: usize) -> core::result::Result<PreparedQuery, PipelineError> {
        self.prepare_observed(query, k, &mut ())
    }

    pub fn prepare_observed(
        &self,
        query: &QuerySpec,
        k: usize,
        observer: &mut dyn StageObserver,
    ) -> core::result::Result<PreparedQuery, PipelineError> {
        if crate::text::normalize_text(&query.text).is_empty() {
            return Err(PipelineError::at(Stage::Topicality)(Error::InvalidInput(
                "query has no searchable terms".into(),
            )));
        }
        let params = EvidenceParams {
            k,
            ..self.config.evidence
        };
        params.validate().map_err(PipelineError::at(Stage::Evidence))?;

        observer.enter(Stage::Topicality);
        let topical = self.topical(query, self.config.candidate_pool);
        let normalized = normalize_topicality(&topical);
        observer.exit(Stage::Topicality);

        observer.enter(Stage::Evidence);
        let evidence = self.evidence(query, &params);
        observer.exit(Stage::Evidence);
        let evidence = evidence.map_err(PipelineError::at(Stage::Evidence))?;

        let gentext = if evidence.is_empty() {
            None
        } else {
            observer.enter(Stage::Generation);
            let g = self.gentext(query, &evidence);
            observer.exit(Stage::Generation);
            Some(g.map_err(PipelineError::at(Stage::Generation))?)
        };

        observer.enter(Stage::Scoring);
        let candidates = topical
            .iter()
            .zip(normalized)
            .map(|((doc_id, t_raw), (_, t_norm))| {
                let (stance, similarity) = match (&gentext, self.collection.get(doc_id)) {
                    (Some(g), Some(doc)) => self.components(&doc.full_text(), g),
                    _ => (None, None),
                };
                Candidate {
                    doc_id: doc_id.clone(),
                    t_raw: *t_raw,
                    t_norm,
                    stance,
                    similarity,
                }
            })
            .collect();
        observer.exit(Stage::Scoring);

        Ok(PreparedQuery {
            query: query.clone(),
            k,
            d_ne: params.d_ne,
            candidates,
            evidence,
            gentext,
        })
    }

    /// Top-k evidence passages; empty when the knowledge base has nothing.
    fn evidence(&self, query: &QuerySpec, params: &EvidenceParams) -> Result<Vec<ScoredPassage>> {
        let found =
            fetch_articles(query, self.providers.knowledge_base.as_ref(), params.articles).and_then(|articles| {
                top_k_passages(
                    query,
                    &articles,
                    params,
                    &self.config.splitter,
                    self.providers.embedding.as_ref(),
                    self.providers.ner.as_ref(),
                )
            });
        match found {
            Err(Error::NoEvidenceFound) => Ok(Vec::new()),
            other => other,
        }
    }

    /// Generated GenText, or the extractive fallback when every attempt
    /// produced an unusable paragraph.
    fn gentext(&self, query: &QuerySpec, evidence: &[ScoredPassage]) -> Result<GenText> {
        let prompt = build_prompt(&query.text, evidence, self.config.word_limit, &self.config.template)?;
        let refs = context_references(evidence);
        let mut gentext = match generate(&prompt, self.providers.generation.as_ref(), self.config.retries, &refs) {
            Ok(raw) => parse_gentext(&raw, &refs)?,
            Err(Error::GenerationFailed { .. }) => fallback_gentext(evidence, self.config.word_limit)?,
            Err(e) => return Err(e),
        };
        gentext.flag_length(self.config.word_limit);
        gentext.embed(self.providers.embedding.as_ref())?;
        Ok(gentext)
    }

    fn components(&self, doc_text: &str, gentext: &GenText) -> (Option<f64>, Option<f64>) {
        let params = &self.config.factuality;
        let splitter = &self.config.splitter;
        let stance = stance_score(doc_text, gentext, self.providers.stance.as_ref(), params, splitter).ok();
        let similarity =
            semantic_similarity(doc_text, gentext, self.providers.embedding.as_ref(), params, splitter).ok();
        (stance, similarity)
    }
}
