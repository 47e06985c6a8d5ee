//! HTTP search service.
//!
//! ```text
//! POST /api/search         SearchRequest -> SearchResponse
//! GET  /api/document/{id}  stored document
//! GET  /api/config         effective parameters and provider modes
//! GET  /api/health         liveness and index status
//! ```

use std::collections::BTreeMap;
use std::sync::{Arc, Mutex};
use std::time::Instant;

use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use dashmap::DashMap;
use factrank_core::corpus::{Dataset, QuerySpec};
use factrank_core::fusion::RankedList;
use factrank_core::gentext::{GenText, Origin};
use factrank_core::pipeline::{Pipeline, PipelineError, PreparedQuery, Stage, StageObserver};
use factrank_core::text::{collapse_whitespace, normalize_text};
use factrank_core::Error;
use serde::{Deserialize, Serialize};

use crate::config::Config;

fn default_top_n() -> usize {
    10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchRequest {
    pub query: String,
    #[serde(default = "default_top_n")]
    pub top_n: usize,
    #[serde(default)]
    pub alpha: Option<f64>,
    #[serde(default)]
    pub beta: Option<f64>,
    #[serde(default)]
    pub k: Option<usize>,
    #[serde(default)]
    pub include_breakdown: bool,
}

impl SearchRequest {
    pub fn new(query: impl Into<String>) -> Self {
        Self {
            query: query.into(),
            top_n: default_top_n(),
            alpha: None,
            beta: None,
            k: None,
            include_breakdown: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntryView {
    pub rank: usize,
    pub doc_id: String,
    pub title: String,
    pub url: Option<String>,
    pub rsv: f64,
    pub t_raw: f64,
    pub t_norm: f64,
    pub f: f64,
    pub stance: Option<f64>,
    pub similarity: Option<f64>,
    pub degraded: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentenceView {
    pub text: String,
    pub citations: Vec<String>,
    pub valid: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenTextView {
    pub sentences: Vec<SentenceView>,
    pub references: Vec<String>,
    pub origin: Origin,
    pub raw: String,
    pub word_count: usize,
    pub overlong: bool,
}

impl From<&GenText> for GenTextView {
    fn from(g: &GenText) -> Self {
        Self {
            sentences: g
                .sentences
                .iter()
                .map(|s| SentenceView {
                    text: s.text.clone(),
                    citations: s.citations.iter().cloned().collect(),
                    valid: s.valid,
                })
                .collect(),
            references: g.references().into_iter().collect(),
            origin: g.origin,
            raw: g.raw.clone(),
            word_count: g.word_count,
            overlong: g.overlong,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PassageView {
    pub ref_id: String,
    pub ordinal: usize,
    pub sentence: String,
    pub sim: f64,
    pub sigma: f64,
    pub discounted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamsView {
    pub k: usize,
    pub alpha: f64,
    pub beta: f64,
    pub d_ne: f64,
    pub top_n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResponse {
    pub query: String,
    pub entries: Vec<EntryView>,
    pub gentext: Option<GenTextView>,
    /// Evidence passages, only with `include_breakdown`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub evidence: Option<Vec<PassageView>>,
    pub params: ParamsView,
    /// Milliseconds per stage; stages served from the cache are absent.
    pub timing_ms: BTreeMap<String, f64>,
    pub cached: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocumentView {
    pub doc_id: String,
    pub url: Option<String>,
    pub title: String,
    pub body: String,
    pub dataset: Dataset,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiError {
    pub error: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stage: Option<Stage>,
}

fn api_error(status: StatusCode, error: impl Into<String>, stage: Option<Stage>) -> Response {
    (
        status,
        Json(ApiError {
            error: error.into(),
            stage,
        }),
    )
        .into_response()
}

/// HTTP status for a pipeline failure.
pub fn status_for(err: &PipelineError) -> StatusCode {
    match err.error {
        Error::Provider(_) | Error::KnowledgeBaseUnavailable(_) => StatusCode::BAD_GATEWAY,
        Error::InvalidInput(_) | Error::Domain { .. } => StatusCode::BAD_REQUEST,
        _ => StatusCode::INTERNAL_SERVER_ERROR,
    }
}

/// Token bucket: `per_minute` capacity, refilled continuously.
#[derive(Debug)]
struct RateLimiter {
    capacity: f64,
    tokens: f64,
    last: Instant,
}

impl RateLimiter {
    fn new(per_minute: u32) -> Self {
        Self {
            capacity: f64::from(per_minute),
            tokens: f64::from(per_minute),
            last: Instant::now(),
        }
    }

    fn try_take(&mut self) -> bool {
        let now = Instant::now();
        let refill = now.duration_since(self.last).as_secs_f64() * self.capacity / 60.0;
        self.tokens = (self.tokens + refill).min(self.capacity);
        self.last = now;
        if self.tokens >= 1.0 {
            self.tokens -= 1.0;
            true
        } else {
            false
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct CacheKey {
    query: String,
    k: usize,
    fingerprint: String,
}

/// Shared service state. The pipeline (and its index) is read-only; the
/// prepared-query cache is a concurrent map, last write wins.
pub struct AppState {
    pipeline: Option<Arc<Pipeline>>,
    config: Config,
    fingerprint: String,
    cache: DashMap<CacheKey, Arc<PreparedQuery>>,
    k_limiter: Mutex<RateLimiter>,
}

impl AppState {
    pub fn new(pipeline: Option<Pipeline>, config: Config) -> Self {
        let fingerprint = pipeline
            .as_ref()
            .map(|p| p.providers().fingerprint())
            .unwrap_or_default();
        Self {
            pipeline: pipeline.map(Arc::new),
            k_limiter: Mutex::new(RateLimiter::new(config.k_overrides_per_minute)),
            config,
            fingerprint,
            cache: DashMap::new(),
        }
    }

    pub fn cached_queries(&self) -> usize {
        self.cache.len()
    }
}

#[derive(Default)]
struct Timer {
    started: Option<Instant>,
    ms: BTreeMap<String, f64>,
}

impl StageObserver for Timer {
    fn enter(&mut self, _stage: Stage) {
        self.started = Some(Instant::now());
    }

    fn exit(&mut self, stage: Stage) {
        if let Some(t) = self.started.take() {
            self.ms.insert(stage.as_str().into(), t.elapsed().as_secs_f64() * 1e3);
        }
    }
}

/// Entries and GenText view of a ranked list, cut to `top_n`.
pub fn response_body(
    pipeline: &Pipeline,
    ranked: &RankedList,
    prepared: &PreparedQuery,
    top_n: usize,
    include_breakdown: bool,
) -> (Vec<EntryView>, Option<GenTextView>, Option<Vec<PassageView>>) {
    let entries = ranked
        .entries
        .iter()
        .take(top_n)
        .enumerate()
        .map(|(i, e)| {
            let doc = pipeline.collection().get(&e.doc_id);
            EntryView {
                rank: i + 1,
                doc_id: e.doc_id.clone(),
                title: doc.map(|d| d.title.clone()).unwrap_or_default(),
                url: doc.and_then(|d| d.url.clone()),
                rsv: e.rsv,
                t_raw: e.t_raw,
                t_norm: e.t_norm,
                f: e.factual.f,
                stance: e.factual.stance,
                similarity: e.factual.similarity,
                degraded: e.degraded,
            }
        })
        .collect();
    let evidence = include_breakdown.then(|| {
        prepared
            .evidence
            .iter()
            .map(|p| PassageView {
                ref_id: p.passage.ref_id.clone(),
                ordinal: p.passage.ordinal,
                sentence: p.passage.sentence.clone(),
                sim: p.sim,
                sigma: p.sigma,
                discounted: p.discounted,
            })
            .collect()
    });
    (entries, ranked.gentext.as_ref().map(GenTextView::from), evidence)
}

async fn search(State(state): State<Arc<AppState>>, Json(req): Json<SearchRequest>) -> Response {
    let Some(pipeline) = state.pipeline.clone() else {
        return api_error(StatusCode::SERVICE_UNAVAILABLE, "no index loaded", None);
    };
    let query = collapse_whitespace(&req.query);
    if normalize_text(&query).is_empty() {
        return api_error(StatusCode::BAD_REQUEST, "query is empty", None);
    }
    if req.top_n == 0 {
        return api_error(StatusCode::BAD_REQUEST, "top_n must be at least 1", None);
    }
    let cfg = &state.config;
    let alpha = req.alpha.unwrap_or(cfg.alpha);
    let beta = req.beta.unwrap_or(cfg.beta);
    let k = req.k.unwrap_or(cfg.k);
    for (name, v) in [("alpha", alpha), ("beta", beta)] {
        if !(0.0..=1.0).contains(&v) {
            return api_error(StatusCode::BAD_REQUEST, format!("{name} must be in [0, 1]"), None);
        }
    }
    if k == 0 {
        return api_error(StatusCode::BAD_REQUEST, "k must be at least 1", None);
    }

    let key = CacheKey {
        query: query.clone(),
        k,
        fingerprint: state.fingerprint.clone(),
    };
    let mut timing = BTreeMap::new();
    let cached = state.cache.get(&key).map(|e| Arc::clone(e.value()));
    let prepared = match cached.clone() {
        Some(p) => p,
        None => {
            if k != cfg.k && !state.k_limiter.lock().unwrap_or_else(|e| e.into_inner()).try_take() {
                return api_error(StatusCode::TOO_MANY_REQUESTS, "too many k overrides, retry later", None);
            }
            let p = Arc::clone(&pipeline);
            let spec = QuerySpec::new("api", query.clone());
            let outcome = tokio::task::spawn_blocking(move || {
                let mut timer = Timer::default();
                p.prepare_observed(&spec, k, &mut timer).map(|prep| (prep, timer.ms))
            })
            .await;
            match outcome {
                Ok(Ok((prep, ms))) => {
                    timing = ms;
                    let prep = Arc::new(prep);
                    state.cache.insert(key, Arc::clone(&prep));
                    prep
                }
                Ok(Err(e)) => {
                    log::warn!("search failed: {e}");
                    return api_error(status_for(&e), e.error.to_string(), Some(e.stage));
                }
                Err(e) => return api_error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string(), None),
            }
        }
    };

    let fusion_start = Instant::now();
    let ranked = match prepared.rank(alpha, beta) {
        Ok(r) => r,
        Err(e) => return api_error(StatusCode::BAD_REQUEST, e.to_string(), Some(Stage::Scoring)),
    };
    timing.insert("fusion".into(), fusion_start.elapsed().as_secs_f64() * 1e3);
    let (entries, gentext, evidence) = response_body(&pipeline, &ranked, &prepared, req.top_n, req.include_breakdown);
    Json(SearchResponse {
        query,
        entries,
        gentext,
        evidence,
        params: ParamsView {
            k,
            alpha,
            beta,
            d_ne: ranked.params.d_ne,
            top_n: req.top_n,
        },
        timing_ms: timing,
        cached: cached.is_some(),
    })
    .into_response()
}

async fn document(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Response {
    let Some(pipeline) = &state.pipeline else {
        return api_error(StatusCode::SERVICE_UNAVAILABLE, "no index loaded", None);
    };
    match pipeline.collection().get(&id) {
        Some(d) => Json(DocumentView {
            doc_id: d.doc_id.clone(),
            url: d.url.clone(),
            title: d.title.clone(),
            body: d.body.clone(),
            dataset: d.dataset,
        })
        .into_response(),
        None => api_error(StatusCode::NOT_FOUND, format!("unknown document `{id}`"), None),
    }
}

async fn config(State(state): State<Arc<AppState>>) -> Response {
    let mut value = serde_json::to_value(&state.config).unwrap_or_default();
    value["fingerprint"] = serde_json::Value::String(state.fingerprint.clone());
    Json(value).into_response()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub index_loaded: bool,
    pub documents: usize,
    pub cached_queries: usize,
}

async fn health(State(state): State<Arc<AppState>>) -> Json<Health> {
    Json(Health {
        status: "ok".into(),
        index_loaded: state.pipeline.is_some(),
        documents: state.pipeline.as_ref().map_or(0, |p| p.collection().len()),
        cached_queries: state.cached_queries(),
    })
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/api/search", post(search))
        .route("/api/document/{id}", get(document))
        .route("/api/config", get(config))
        .route("/api/health", get(health))
        .with_state(state)
}
