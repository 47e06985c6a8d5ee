//! HTTP adapters for remote providers, and assembly of the provider set
//! from configuration.

use std::sync::{Arc, Condvar, Mutex};
use std::thread;
use std::time::Duration;

use factrank_core::evidence::Article;
use factrank_core::providers::doubles::{
    FixtureKnowledgeBase, GazetteerNer, HashEmbedder, OverlapStance, TemplateGenerator,
};
use factrank_core::providers::{
    EmbeddingProvider, Entity, GenerationProvider, KnowledgeBase, NerProvider, Providers, StanceProvider,
};
use factrank_core::{Error, ProviderError};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::config::{Config, ProviderConfig, ProviderKind, ProviderMode};
use crate::formats::{read_articles, read_gazetteer};
use crate::wire::*;
use crate::AppError;

/// Counting gate bounding concurrent requests.
#[derive(Debug)]
struct Gate {
    free: Mutex<usize>,
    cond: Condvar,
}

struct Permit<'a>(&'a Gate);

impl Gate {
    fn new(n: usize) -> Self {
        Self {
            free: Mutex::new(n.max(1)),
            cond: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut free = self.free.lock().unwrap_or_else(|e| e.into_inner());
        while *free == 0 {
            free = self.cond.wait(free).unwrap_or_else(|e| e.into_inner());
        }
        *free -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().unwrap_or_else(|e| e.into_inner()) += 1;
        self.0.cond.notify_one();
    }
}

enum Failure {
    /// Worth one more attempt (transport error, 5xx, 429).
    Transient(String),
    Permanent(String),
}

/// Blocking JSON client shared by the adapters: per-request timeout, one
/// retry with backoff, optional bearer token, bounded in-flight requests.
#[derive(Debug)]
pub struct HttpClient {
    agent: ureq::Agent,
    endpoint: String,
    token: Option<String>,
    options: Options,
    batch_size: usize,
    backoff: Duration,
    gate: Gate,
}

impl HttpClient {
    pub fn new(config: &ProviderConfig) -> Result<Self, AppError> {
        config.validate()?;
        let endpoint = config
            .endpoint
            .clone()
            .ok_or_else(|| AppError::Config(format!("{} has no endpoint", config.kind.key())))?;
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(config.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(Self {
            agent,
            endpoint: endpoint.trim_end_matches('/').to_string(),
            token: config.token.clone(),
            options: config.options.clone(),
            batch_size: config.batch_size,
            backoff: Duration::from_millis(200),
            gate: Gate::new(config.max_in_flight),
        })
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }

    fn url(&self, path: &str) -> String {
        format!("{}{}", self.endpoint, path)
    }

    fn with_retry<T>(&self, mut attempt: impl FnMut() -> Result<T, Failure>) -> Result<T, String> {
        let mut delay = self.backoff;
        for tries_left in (0..2).rev() {
            let outcome = {
                let _permit = self.gate.acquire();
                attempt()
            };
            match outcome {
                Ok(v) => return Ok(v),
                Err(Failure::Permanent(msg)) => return Err(msg),
                Err(Failure::Transient(msg)) if tries_left == 0 => return Err(msg),
                Err(Failure::Transient(msg)) => {
                    log::warn!("retrying after transient failure: {msg}");
                }
            }
            thread::sleep(delay);
            delay *= 2;
        }
        unreachable!("loop returns on the last attempt")
    }

    fn read<T: DeserializeOwned>(
        response: Result<ureq::http::Response<ureq::Body>, ureq::Error>,
    ) -> Result<T, Failure> {
        let mut response = response.map_err(|e| Failure::Transient(e.to_string()))?;
        let status = response.status().as_u16();
        if !(200..300).contains(&status) {
            let detail = response
                .body_mut()
                .read_json::<ErrorBody>()
                .map(|b| b.error)
                .unwrap_or_default();
            let msg = format!("HTTP {status} {detail}").trim_end().to_string();
            return Err(if status >= 500 || status == 429 {
                Failure::Transient(msg)
            } else {
                Failure::Permanent(msg)
            });
        }
        response
            .body_mut()
            .read_json::<T>()
            .map_err(|e| Failure::Permanent(format!("malformed response: {e}")))
    }

    pub fn post<B: Serialize, T: DeserializeOwned>(&self, path: &str, body: &B) -> Result<T, String> {
        let url = self.url(path);
        self.with_retry(|| {
            let mut req = self.agent.post(&url);
            if let Some(token) = &self.token {
                req = req.header("Authorization", &format!("Bearer {token}"));
            }
            Self::read(req.send_json(body))
        })
    }

    pub fn get<T: DeserializeOwned>(&self, path: &str, query: &[(&str, String)]) -> Result<T, String> {
        let url = self.url(path);
        self.with_retry(|| {
            let mut req = self.agent.get(&url);
            for (k, v) in query {
                req = req.query(*k, v);
            }
            if let Some(token) = &self.token {
                req = req.header("Authorization", &format!("Bearer {token}"));
            }
            Self::read(req.call())
        })
    }
}

#[derive(Debug)]
pub struct RemoteEmbedding(pub HttpClient);

impl EmbeddingProvider for RemoteEmbedding {
    fn embed(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, ProviderError> {
        let mut vectors = Vec::with_capacity(texts.len());
        for batch in texts.chunks(self.0.batch_size) {
            let body = EmbedRequest {
                texts: batch.iter().map(|t| t.to_string()).collect(),
                options: self.0.options.clone(),
            };
            let resp: EmbedResponse = self
                .0
                .post("/embed", &body)
                .map_err(|m| ProviderError::new("embed", m))?;
            if resp.vectors.len() != batch.len() {
                return Err(ProviderError::new(
                    "embed",
                    format!("{} vectors for {} texts", resp.vectors.len(), batch.len()),
                ));
            }
            vectors.extend(resp.vectors);
        }
        Ok(vectors)
    }

    fn fingerprint(&self) -> String {
        format!("remote-embed@{}", self.0.endpoint())
    }
}

#[derive(Debug)]
pub struct RemoteGeneration(pub HttpClient);

impl GenerationProvider for RemoteGeneration {
    fn generate(&self, prompt: &str) -> Result<String, ProviderError> {
        let body = GenerateRequest {
            prompt: prompt.to_string(),
            options: self.0.options.clone(),
        };
        let resp: GenerateResponse = self
            .0
            .post("/generate", &body)
            .map_err(|m| ProviderError::new("generate", m))?;
        Ok(resp.text)
    }

    fn fingerprint(&self) -> String {
        format!("remote-generate@{}", self.0.endpoint())
    }
}

#[derive(Debug)]
pub struct RemoteStance(pub HttpClient);

impl StanceProvider for RemoteStance {
    fn stance(&self, premise: &str, hypothesis: &str) -> Result<f64, ProviderError> {
        let body = StanceRequest {
            premise: premise.to_string(),
            hypothesis: hypothesis.to_string(),
            options: self.0.options.clone(),
        };
        let resp: StanceResponse = self
            .0
            .post("/stance", &body)
            .map_err(|m| ProviderError::new("stance", m))?;
        Ok(resp.score)
    }

    fn fingerprint(&self) -> String {
        format!("remote-stance@{}", self.0.endpoint())
    }
}

#[derive(Debug)]
pub struct RemoteNer(pub HttpClient);

impl NerProvider for RemoteNer {
    fn ner(&self, text: &str) -> Result<Vec<Entity>, ProviderError> {
        let body = NerRequest {
            text: text.to_string(),
            options: self.0.options.clone(),
        };
        let resp: NerResponse = self.0.post("/ner", &body).map_err(|m| ProviderError::new("ner", m))?;
        Ok(resp.entities)
    }

    fn fingerprint(&self) -> String {
        format!("remote-ner@{}", self.0.endpoint())
    }
}

#[derive(Debug)]
pub struct RemoteKnowledgeBase(pub HttpClient);

impl KnowledgeBase for RemoteKnowledgeBase {
    fn search(&self, query_text: &str, m: usize) -> factrank_core::Result<Vec<Article>> {
        let query = [("q", query_text.to_string()), ("m", m.to_string())];
        let resp: KbResponse = self
            .0
            .get("/kb/search", &query)
            .map_err(|msg| Error::KnowledgeBaseUnavailable(format!("{}: {msg}", self.0.endpoint())))?;
        Ok(resp
            .articles
            .into_iter()
            .filter(|a| !a.ref_id.trim().is_empty() && !a.body.trim().is_empty())
            .collect())
    }

    fn fingerprint(&self) -> String {
        format!("remote-kb@{}", self.0.endpoint())
    }
}

/// Offline knowledge base from the configured article dump (empty if none).
pub fn fixture_kb(config: &Config) -> Result<FixtureKnowledgeBase, AppError> {
    let articles = match &config.kb {
        Some(path) => read_articles(path)?,
        None => Vec::new(),
    };
    Ok(FixtureKnowledgeBase::new(articles))
}

/// Gazetteer from the configured directory, else the bundled lists.
pub fn gazetteer(config: &Config) -> Result<GazetteerNer, AppError> {
    match &config.gazetteer {
        Some(dir) => read_gazetteer(dir),
        None => Ok(GazetteerNer::bundled()),
    }
}

fn client(config: &Config, kind: ProviderKind) -> Result<Option<HttpClient>, AppError> {
    let p = config.provider(kind);
    match p.mode {
        ProviderMode::Double => Ok(None),
        ProviderMode::Remote => HttpClient::new(p).map(Some),
    }
}

/// Builds every provider in its configured mode.
pub fn build_providers(config: &Config) -> Result<Providers, AppError> {
    let embedding: Arc<dyn EmbeddingProvider> = match client(config, ProviderKind::Embedding)? {
        Some(c) => Arc::new(RemoteEmbedding(c)),
        None => Arc::new(HashEmbedder::default()),
    };
    let generation: Arc<dyn GenerationProvider> = match client(config, ProviderKind::Generation)? {
        Some(c) => Arc::new(RemoteGeneration(c)),
        None => Arc::new(TemplateGenerator),
    };
    let stance: Arc<dyn StanceProvider> = match client(config, ProviderKind::Stance)? {
        Some(c) => Arc::new(RemoteStance(c)),
        None => Arc::new(OverlapStance),
    };
    let ner: Arc<dyn NerProvider> = match client(config, ProviderKind::Ner)? {
        Some(c) => Arc::new(RemoteNer(c)),
        None => Arc::new(gazetteer(config)?),
    };
    let knowledge_base: Arc<dyn KnowledgeBase> = match client(config, ProviderKind::KnowledgeBase)? {
        Some(c) => Arc::new(RemoteKnowledgeBase(c)),
        None => Arc::new(fixture_kb(config)?),
    };
    Ok(Providers {
        embedding,
        generation,
        stance,
        ner,
        knowledge_base,
    })
}
