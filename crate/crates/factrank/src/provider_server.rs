//! Serves a provider set over the provider protocol (see [`crate::wire`]).
//! With the offline doubles this gives a local stand-in for model services.

use std::sync::Arc;

use axum::extract::{Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use factrank_core::providers::{embed_checked, Providers};
use factrank_core::Error;

use crate::wire::*;

fn failure(status: StatusCode, message: impl Into<String>) -> Response {
    (status, Json(ErrorBody { error: message.into() })).into_response()
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> T + Send + 'static) -> Result<T, Response> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| failure(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))
}

async fn embed(State(p): State<Arc<Providers>>, Json(req): Json<EmbedRequest>) -> Response {
    if req.texts.is_empty() || req.texts.iter().any(|t| t.trim().is_empty()) {
        return failure(StatusCode::BAD_REQUEST, "texts must be non-empty");
    }
    let result = blocking(move || {
        let texts: Vec<&str> = req.texts.iter().map(String::as_str).collect();
        embed_checked(p.embedding.as_ref(), &texts)
    })
    .await;
    match result {
        Ok(Ok(vectors)) => Json(EmbedResponse { vectors }).into_response(),
        Ok(Err(e)) => failure(StatusCode::UNPROCESSABLE_ENTITY, e.to_string()),
        Err(r) => r,
    }
}

async fn generate(State(p): State<Arc<Providers>>, Json(req): Json<GenerateRequest>) -> Response {
    if req.prompt.trim().is_empty() {
        return failure(StatusCode::BAD_REQUEST, "prompt must be non-empty");
    }
    match blocking(move || p.generation.generate(&req.prompt)).await {
        Ok(Ok(text)) => Json(GenerateResponse { text }).into_response(),
        Ok(Err(e)) => failure(StatusCode::UNPROCESSABLE_ENTITY, e.to_string()),
        Err(r) => r,
    }
}

async fn stance(State(p): State<Arc<Providers>>, Json(req): Json<StanceRequest>) -> Response {
    if req.premise.trim().is_empty() || req.hypothesis.trim().is_empty() {
        return failure(StatusCode::BAD_REQUEST, "premise and hypothesis must be non-empty");
    }
    match blocking(move || p.stance.stance(&req.premise, &req.hypothesis)).await {
        Ok(Ok(score)) => Json(StanceResponse { score }).into_response(),
        Ok(Err(e)) => failure(StatusCode::UNPROCESSABLE_ENTITY, e.to_string()),
        Err(r) => r,
    }
}

async fn ner(State(p): State<Arc<Providers>>, Json(req): Json<NerRequest>) -> Response {
    match blocking(move || p.ner.ner(&req.text)).await {
        Ok(Ok(entities)) => Json(NerResponse { entities }).into_response(),
        Ok(Err(e)) => failure(StatusCode::UNPROCESSABLE_ENTITY, e.to_string()),
        Err(r) => r,
    }
}

async fn kb_search(State(p): State<Arc<Providers>>, Query(q): Query<KbQuery>) -> Response {
    if q.m == 0 {
        return failure(StatusCode::BAD_REQUEST, "m must be at least 1");
    }
    match blocking(move || p.knowledge_base.search(&q.q, q.m)).await {
        Ok(Ok(articles)) => Json(KbResponse { articles }).into_response(),
        Ok(Err(Error::KnowledgeBaseUnavailable(m))) => failure(StatusCode::SERVICE_UNAVAILABLE, m),
        Ok(Err(e)) => failure(StatusCode::UNPROCESSABLE_ENTITY, e.to_string()),
        Err(r) => r,
    }
}

pub fn router(providers: Arc<Providers>) -> Router {
    Router::new()
        .route("/embed", post(embed))
        .route("/generate", post(generate))
        .route("/stance", post(stance))
        .route("/ner", post(ner))
        .route("/kb/search", get(kb_search))
        .with_state(providers)
}
