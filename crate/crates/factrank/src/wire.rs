//! JSON bodies of the provider protocol.
//!
//! ```text
//! POST /embed     {"texts":[...]}                  -> {"vectors":[[...],...]}
//! POST /generate  {"prompt":"..."}                 -> {"text":"..."}
//! POST /stance    {"premise":"...","hypothesis":"..."} -> {"score":0.0..1.0}
//! POST /ner       {"text":"..."}                   -> {"entities":[{"text":"...","type":"medicine|disease|other"}]}
//! GET  /kb/search?q=...&m=N                        -> {"articles":[{"ref_id","title","text"}]}
//! ```
//!
//! Requests may carry an `options` object that is passed through untouched.
//! Failures answer with a non-2xx status and `{"error":"..."}`.

use std::collections::BTreeMap;

use factrank_core::evidence::Article;
use factrank_core::providers::Entity;
use serde::{Deserialize, Serialize};

pub type Options = BTreeMap<String, serde_json::Value>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedRequest {
    pub texts: Vec<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub options: Options,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedResponse {
    pub vectors: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerateRequest {
    pub prompt: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub options: Options,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerateResponse {
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StanceRequest {
    pub premise: String,
    pub hypothesis: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub options: Options,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StanceResponse {
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NerRequest {
    pub text: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub options: Options,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NerResponse {
    pub entities: Vec<Entity>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KbQuery {
    pub q: String,
    pub m: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KbResponse {
    pub articles: Vec<Article>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
}
