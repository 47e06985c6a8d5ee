//! File formats, provider adapters, search service and command-line tool
//! around [`factrank_core`].
//!
//! Exit codes of the `factrank` binary:
//!
//! | code | meaning |
//! |------|---------|
//! | 0 | success |
//! | 1 | internal or server error |
//! | 2 | bad command-line usage |
//! | 3 | unreadable or malformed input file, invalid configuration |
//! | 4 | corpus has no ingestible document |
//! | 5 | provider or knowledge-base failure |
//! | 6 | malformed run or qrels, or nothing to evaluate |
//! | 7 | tuning and test queries overlap |

use std::path::PathBuf;
use std::sync::Arc;

use factrank_core::corpus::{Collection, QuerySpec};
use factrank_core::fusion::emit_run;
use factrank_core::pipeline::{Pipeline, PipelineError};
use factrank_core::Error;

pub mod cli;
pub mod config;
pub mod formats;
pub mod provider_server;
pub mod remote;
pub mod service;
pub mod store;
pub mod wire;

pub use config::Config;

#[derive(Debug, thiserror::Error)]
pub enum AppError {
    #[error("{0}")]
    Usage(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}:{line}: {reason}", path.display())]
    Format { path: PathBuf, line: usize, reason: String },
    #[error("config: {0}")]
    Config(String),
    #[error("{context}: {error}")]
    Input { context: String, error: Error },
    #[error("query {query_id}: {source}")]
    Pipeline {
        query_id: String,
        #[source]
        source: PipelineError,
    },
    #[error("{0}")]
    Server(String),
}

fn error_code(error: &Error) -> i32 {
    match error {
        Error::EmptyCollection => 4,
        Error::Provider(_) | Error::KnowledgeBaseUnavailable(_) => 5,
        Error::MalformedRun { .. } | Error::MalformedQrels { .. } | Error::NoLabels => 6,
        Error::Overlap(_) => 7,
        _ => 3,
    }
}

impl AppError {
    pub fn exit_code(&self) -> i32 {
        match self {
            AppError::Usage(_) => 2,
            AppError::Io { .. } | AppError::Format { .. } | AppError::Config(_) => 3,
            AppError::Input { error, .. } => error_code(error),
            AppError::Pipeline { source, .. } => error_code(&source.error),
            AppError::Server(_) => 1,
        }
    }

    pub(crate) fn input(context: impl Into<String>) -> impl FnOnce(Error) -> Self {
        let context = context.into();
        move |error| AppError::Input { context, error }
    }
}

/// Pipeline over the index named in `config`, with providers in their
/// configured modes.
pub fn load_pipeline(config: &Config) -> Result<Pipeline, AppError> {
    let dir = config
        .index
        .as_ref()
        .ok_or_else(|| AppError::Config("no index directory configured".into()))?;
    let collection = store::load(dir)?;
    pipeline_for(Arc::new(collection), config)
}

pub fn pipeline_for(collection: Arc<Collection>, config: &Config) -> Result<Pipeline, AppError> {
    let providers = remote::build_providers(config)?;
    Pipeline::new(collection, providers, config.pipeline_config()?).map_err(AppError::input("pipeline"))
}

/// Run-file lines for every topic, ranked with `alpha` and `beta`. Uses
/// the same prepare-then-rank path as the search service.
pub fn run_topics(
    pipeline: &Pipeline,
    topics: &[QuerySpec],
    alpha: f64,
    beta: f64,
    tag: &str,
) -> Result<Vec<String>, AppError> {
    let mut lines = Vec::new();
    for topic in topics {
        let prepared = pipeline
            .prepare(topic, pipeline.config().evidence.k)
            .map_err(|source| AppError::Pipeline {
                query_id: topic.query_id.clone(),
                source,
            })?;
        let ranked = prepared
            .rank(alpha, beta)
            .map_err(AppError::input(format!("query {}", topic.query_id)))?;
        lines.extend(emit_run(&ranked, tag));
    }
    Ok(lines)
}
