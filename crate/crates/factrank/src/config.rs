//! Key-value configuration file.
//!
//! ```text
//! # comment
//! index = index
//! kb = kb.jsonl
//! alpha = 0.65
//! embedding.mode = remote
//! embedding.endpoint = http://127.0.0.1:8700
//! generation.option.temperature = 0
//! ```
//!
//! Relative paths resolve against the file's directory. Provider endpoints
//! and tokens can be overridden with `FACTRANK_<KIND>_ENDPOINT` and
//! `FACTRANK_<KIND>_TOKEN` (`KIND` is `EMBEDDING`, `GENERATION`, `STANCE`,
//! `NER`, `KB` or `PROVIDERS` for all of them); an endpoint override
//! switches that provider to remote mode.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Duration;

use factrank_core::corpus::Bm25Params;
use factrank_core::defaults;
use factrank_core::evidence::EvidenceParams;
use factrank_core::factuality::{FactualityParams, StanceMode};
use factrank_core::gentext::PromptTemplate;
use factrank_core::pipeline::PipelineConfig;
use factrank_core::text::SentenceSplitter;
use serde::Serialize;

use crate::formats::{read_splitter, read_template, read_text, resolve};
use crate::AppError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderKind {
    Embedding,
    Generation,
    Stance,
    Ner,
    KnowledgeBase,
}

impl ProviderKind {
    pub const ALL: [ProviderKind; 5] = [
        ProviderKind::Embedding,
        ProviderKind::Generation,
        ProviderKind::Stance,
        ProviderKind::Ner,
        ProviderKind::KnowledgeBase,
    ];

    pub fn key(self) -> &'static str {
        match self {
            ProviderKind::Embedding => "embedding",
            ProviderKind::Generation => "generation",
            ProviderKind::Stance => "stance",
            ProviderKind::Ner => "ner",
            ProviderKind::KnowledgeBase => "kb",
        }
    }

    fn from_key(key: &str) -> Option<Self> {
        match key {
            "knowledge_base" => Some(ProviderKind::KnowledgeBase),
            _ => Self::ALL.into_iter().find(|k| k.key() == key),
        }
    }

    fn env_name(self) -> String {
        self.key().to_ascii_uppercase()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ProviderMode {
    #[default]
    Double,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProviderConfig {
    pub kind: ProviderKind,
    pub mode: ProviderMode,
    pub endpoint: Option<String>,
    #[serde(serialize_with = "as_secs")]
    pub timeout: Duration,
    pub batch_size: usize,
    /// Concurrent requests allowed per adapter.
    pub max_in_flight: usize,
    /// Sent as `Authorization: Bearer <token>`; never echoed.
    #[serde(skip)]
    pub token: Option<String>,
    /// Passed through verbatim in every request body as `options`.
    pub options: BTreeMap<String, serde_json::Value>,
}

fn as_secs<S: serde::Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_f64(d.as_secs_f64())
}

impl ProviderConfig {
    pub fn new(kind: ProviderKind) -> Self {
        Self {
            kind,
            mode: ProviderMode::Double,
            endpoint: None,
            timeout: Duration::from_secs(30),
            batch_size: 32,
            max_in_flight: 8,
            token: None,
            options: BTreeMap::new(),
        }
    }

    pub fn remote(kind: ProviderKind, endpoint: &str) -> Self {
        Self {
            mode: ProviderMode::Remote,
            endpoint: Some(endpoint.to_string()),
            ..Self::new(kind)
        }
    }

    pub fn validate(&self) -> Result<(), AppError> {
        if self.mode == ProviderMode::Remote && self.endpoint.as_deref().is_none_or(|e| e.trim().is_empty()) {
            return Err(AppError::Config(format!(
                "{} is remote but has no endpoint",
                self.kind.key()
            )));
        }
        if self.batch_size == 0 || self.max_in_flight == 0 {
            return Err(AppError::Config(format!(
                "{}: batch_size and max_in_flight must be at least 1",
                self.kind.key()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Config {
    #[serde(skip)]
    pub base_dir: PathBuf,
    pub index: Option<PathBuf>,
    /// Article dump served by the offline knowledge base.
    pub kb: Option<PathBuf>,
    /// Directory with `medicines.txt` and `diseases.txt`; bundled lists otherwise.
    pub gazetteer: Option<PathBuf>,
    pub abbreviations: Option<PathBuf>,
    pub prompt_template: Option<PathBuf>,
    pub k1: f64,
    pub b: f64,
    pub k: usize,
    pub alpha: f64,
    pub beta: f64,
    pub d_ne: f64,
    pub articles: usize,
    pub candidate_pool: usize,
    pub word_limit: usize,
    pub retries: usize,
    pub lambda: f64,
    pub stance_mode: StanceMode,
    pub chunk_tokens: usize,
    pub top_chunks: usize,
    pub embed_sentences: usize,
    /// Requests with a `k` override that miss the cache, per minute.
    pub k_overrides_per_minute: u32,
    pub providers: BTreeMap<ProviderKind, ProviderConfig>,
}

impl Default for Config {
    fn default() -> Self {
        let fact = FactualityParams::default();
        let bm25 = Bm25Params::default();
        Self {
            base_dir: PathBuf::from("."),
            index: None,
            kb: None,
            gazetteer: None,
            abbreviations: None,
            prompt_template: None,
            k1: bm25.k1,
            b: bm25.b,
            k: defaults::K,
            alpha: defaults::ALPHA,
            beta: defaults::BETA,
            d_ne: defaults::D_NE,
            articles: defaults::ARTICLES,
            candidate_pool: defaults::CANDIDATE_POOL,
            word_limit: defaults::WORD_LIMIT,
            retries: defaults::RETRIES,
            lambda: defaults::LAMBDA,
            stance_mode: fact.stance_mode,
            chunk_tokens: fact.chunk_tokens,
            top_chunks: fact.top_chunks,
            embed_sentences: fact.embed_sentences,
            k_overrides_per_minute: 30,
            providers: ProviderKind::ALL
                .into_iter()
                .map(|k| (k, ProviderConfig::new(k)))
                .collect(),
        }
    }
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T, AppError> {
    value
        .parse()
        .map_err(|_| AppError::Config(format!("invalid value `{value}` for `{key}`")))
}

fn parse_stance_mode(key: &str, value: &str) -> Result<StanceMode, AppError> {
    match value {
        "whole" => Ok(StanceMode::Whole),
        "per_sentence" | "per-sentence" => Ok(StanceMode::PerSentence),
        _ => Err(AppError::Config(format!("invalid value `{value}` for `{key}`"))),
    }
}

impl Config {
    /// Reads the file and applies the process environment overrides.
    pub fn load(path: &Path) -> Result<Self, AppError> {
        let text = read_text(path)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let mut config = Self::parse_entries(&text, &base)?;
        config.apply_process_env()?;
        Ok(config)
    }

    pub fn parse(text: &str, base_dir: &Path) -> Result<Self, AppError> {
        let config = Self::parse_entries(text, base_dir)?;
        config.validate()?;
        Ok(config)
    }

    fn parse_entries(text: &str, base_dir: &Path) -> Result<Self, AppError> {
        let mut config = Self {
            base_dir: base_dir.to_path_buf(),
            ..Self::default()
        };
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| AppError::Config(format!("line {}: expected `key = value`", i + 1)))?;
            config.set(key.trim(), value.trim())?;
        }
        Ok(config)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), AppError> {
        let path = |v: &str| Some(resolve(&self.base_dir, v));
        match key {
            "index" => self.index = path(value),
            "kb" | "knowledge_base" => self.kb = path(value),
            "gazetteer" => self.gazetteer = path(value),
            "abbreviations" => self.abbreviations = path(value),
            "prompt_template" => self.prompt_template = path(value),
            "k1" => self.k1 = parse_value(key, value)?,
            "b" => self.b = parse_value(key, value)?,
            "k" => self.k = parse_value(key, value)?,
            "alpha" => self.alpha = parse_value(key, value)?,
            "beta" => self.beta = parse_value(key, value)?,
            "d_ne" => self.d_ne = parse_value(key, value)?,
            "articles" => self.articles = parse_value(key, value)?,
            "candidate_pool" => self.candidate_pool = parse_value(key, value)?,
            "word_limit" => self.word_limit = parse_value(key, value)?,
            "retries" => self.retries = parse_value(key, value)?,
            "lambda" => self.lambda = parse_value(key, value)?,
            "stance_mode" => self.stance_mode = parse_stance_mode(key, value)?,
            "chunk_tokens" => self.chunk_tokens = parse_value(key, value)?,
            "top_chunks" => self.top_chunks = parse_value(key, value)?,
            "embed_sentences" => self.embed_sentences = parse_value(key, value)?,
            "k_overrides_per_minute" => self.k_overrides_per_minute = parse_value(key, value)?,
            _ => return self.set_provider(key, value),
        }
        Ok(())
    }

    fn set_provider(&mut self, key: &str, value: &str) -> Result<(), AppError> {
        let unknown = || AppError::Config(format!("unknown key `{key}`"));
        let (prefix, field) = key.split_once('.').ok_or_else(unknown)?;
        let kinds: Vec<ProviderKind> = if prefix == "providers" {
            ProviderKind::ALL.to_vec()
        } else {
            vec![ProviderKind::from_key(prefix).ok_or_else(unknown)?]
        };
        for kind in kinds {
            let p = self.providers.get_mut(&kind).expect("every kind configured");
            match field {
                "mode" => {
                    p.mode = match value {
                        "remote" => ProviderMode::Remote,
                        "double" => ProviderMode::Double,
                        _ => return Err(AppError::Config(format!("invalid mode `{value}` for `{key}`"))),
                    }
                }
                "endpoint" => p.endpoint = Some(value.trim_end_matches('/').to_string()),
                "timeout_secs" => p.timeout = Duration::from_secs_f64(parse_value(key, value)?),
                "batch_size" => p.batch_size = parse_value(key, value)?,
                "max_in_flight" => p.max_in_flight = parse_value(key, value)?,
                "token" => p.token = Some(value.to_string()),
                _ => {
                    let name = field.strip_prefix("option.").ok_or_else(unknown)?;
                    let parsed =
                        serde_json::from_str(value).unwrap_or_else(|_| serde_json::Value::String(value.into()));
                    p.options.insert(name.to_string(), parsed);
                }
            }
        }
        Ok(())
    }

    /// Applies `FACTRANK_*` overrides read through `lookup`.
    pub fn apply_env(&mut self, lookup: impl Fn(&str) -> Option<String>) -> Result<(), AppError> {
        let mut prefixes: Vec<(String, Vec<ProviderKind>)> = vec![("PROVIDERS".into(), ProviderKind::ALL.to_vec())];
        prefixes.extend(ProviderKind::ALL.into_iter().map(|k| (k.env_name(), vec![k])));
        for (name, kinds) in prefixes {
            let endpoint = lookup(&format!("FACTRANK_{name}_ENDPOINT")).filter(|v| !v.trim().is_empty());
            let token = lookup(&format!("FACTRANK_{name}_TOKEN")).filter(|v| !v.trim().is_empty());
            for kind in kinds {
                let p = self.providers.get_mut(&kind).expect("every kind configured");
                if let Some(e) = &endpoint {
                    p.endpoint = Some(e.trim_end_matches('/').to_string());
                    p.mode = ProviderMode::Remote;
                }
                if let Some(t) = &token {
                    p.token = Some(t.clone());
                }
            }
        }
        self.validate()
    }

    pub fn apply_process_env(&mut self) -> Result<(), AppError> {
        self.apply_env(|name| std::env::var(name).ok())
    }

    pub fn validate(&self) -> Result<(), AppError> {
        for p in self.providers.values() {
            p.validate()?;
        }
        self.pipeline_params()
            .validate()
            .map_err(|e| AppError::Config(e.to_string()))?;
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(AppError::Config(format!("lambda = {} is outside [0, 1]", self.lambda)));
        }
        Ok(())
    }

    pub fn provider(&self, kind: ProviderKind) -> &ProviderConfig {
        &self.providers[&kind]
    }

    /// Pipeline parameters with the default template and splitter.
    fn pipeline_params(&self) -> PipelineConfig {
        PipelineConfig {
            bm25: Bm25Params { k1: self.k1, b: self.b },
            evidence: EvidenceParams {
                k: self.k,
                d_ne: self.d_ne,
                articles: self.articles,
            },
            factuality: FactualityParams {
                alpha: self.alpha,
                chunk_tokens: self.chunk_tokens,
                top_chunks: self.top_chunks,
                embed_sentences: self.embed_sentences,
                stance_mode: self.stance_mode,
            },
            beta: self.beta,
            candidate_pool: self.candidate_pool,
            word_limit: self.word_limit,
            retries: self.retries,
            template: PromptTemplate::default(),
            splitter: SentenceSplitter::default(),
        }
    }

    /// Full pipeline configuration, reading the template and abbreviation
    /// files when configured.
    pub fn pipeline_config(&self) -> Result<PipelineConfig, AppError> {
        let mut config = self.pipeline_params();
        if let Some(path) = &self.prompt_template {
            config.template = read_template(path)?;
        }
        if let Some(path) = &self.abbreviations {
            config.splitter = read_splitter(path)?;
        }
        Ok(config)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_tuned_values() {
        let c = Config::default();
        assert_eq!(
            (c.k, c.alpha, c.beta, c.d_ne, c.candidate_pool, c.lambda),
            (10, 0.65, 0.45, 0.7, 100, 0.5)
        );
        assert!(c.providers.values().all(|p| p.mode == ProviderMode::Double));
    }

    #[test]
    fn parses_keys_and_provider_fields() {
        let text = "# c\nalpha = 0.5\nindex = idx\nembedding.mode = remote\nembedding.endpoint = http://h:1/\n\
                    generation.option.temperature = 0.2\ngeneration.option.model = llama\nstance_mode = per_sentence\n";
        let c = Config::parse(text, Path::new("/base")).unwrap();
        assert_eq!(c.alpha, 0.5);
        assert_eq!(c.index, Some(PathBuf::from("/base/idx")));
        let e = c.provider(ProviderKind::Embedding);
        assert_eq!(
            (e.mode, e.endpoint.as_deref()),
            (ProviderMode::Remote, Some("http://h:1"))
        );
        let g = c.provider(ProviderKind::Generation);
        assert_eq!(g.options["temperature"], serde_json::json!(0.2));
        assert_eq!(g.options["model"], serde_json::json!("llama"));
        assert_eq!(c.stance_mode, StanceMode::PerSentence);
    }

    #[test]
    fn rejects_bad_config() {
        assert!(Config::parse("nope = 1", Path::new(".")).is_err());
        assert!(Config::parse("alpha = 2", Path::new(".")).is_err());
        assert!(Config::parse("d_ne = 1", Path::new(".")).is_err());
        assert!(Config::parse("ner.mode = remote", Path::new(".")).is_err());
        assert!(Config::parse("just words", Path::new(".")).is_err());
    }

    #[test]
    fn env_overrides_endpoints() {
        let mut c = Config::default();
        c.apply_env(|name| match name {
            "FACTRANK_PROVIDERS_ENDPOINT" => Some("http://all:9".into()),
            "FACTRANK_KB_ENDPOINT" => Some("http://kb:1".into()),
            "FACTRANK_STANCE_TOKEN" => Some("secret".into()),
            _ => None,
        })
        .unwrap();
        assert_eq!(c.provider(ProviderKind::Ner).endpoint.as_deref(), Some("http://all:9"));
        assert_eq!(
            c.provider(ProviderKind::KnowledgeBase).endpoint.as_deref(),
            Some("http://kb:1")
        );
        assert_eq!(c.provider(ProviderKind::Stance).token.as_deref(), Some("secret"));
        assert!(!serde_json::to_string(&c).unwrap().contains("secret"));
    }
}
