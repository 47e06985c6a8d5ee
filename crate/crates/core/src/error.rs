use alloc::string::String;
use alloc::vec::Vec;

pub type Result<T, E = Error> = core::result::Result<T, E>;

/// Failure reported by a model or knowledge-base backend.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{operation} provider failed: {message}")]
pub struct ProviderError {
    /// Provider operation that failed (`embed`, `generate`, `stance`, `ner`, `kb_search`).
    pub operation: &'static str,
    pub message: String,
}

impl ProviderError {
    pub fn new(operation: &'static str, message: impl Into<String>) -> Self {
        Self {
            operation,
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("collection has no ingestible documents")]
    EmptyCollection,
    #[error("unknown document `{0}`")]
    UnknownDocument(String),
    #[error("duplicate document `{0}`")]
    DuplicateDocument(String),
    #[error("knowledge base unavailable: {0}")]
    KnowledgeBaseUnavailable(String),
    #[error("no evidence found for query")]
    NoEvidenceFound,
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error("generation context is empty")]
    EmptyContext,
    #[error("generation failed after {attempts} attempt(s)")]
    GenerationFailed { attempts: usize },
    #[error("generated text has no validly cited sentence")]
    NoValidSentences,
    #[error("{name} = {value} is outside [0, 1]")]
    Domain { name: &'static str, value: f64 },
    #[error("malformed run line {line}: {reason}")]
    MalformedRun { line: usize, reason: String },
    #[error("malformed qrels line {line}: {reason}")]
    MalformedQrels { line: usize, reason: String },
    #[error("no relevance labels supplied")]
    NoLabels,
    #[error("tuning and test queries overlap: {0:?}")]
    Overlap(Vec<String>),
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

/// Rejects values outside the unit interval (NaN included).
pub(crate) fn check_unit(name: &'static str, value: f64) -> Result<f64> {
    if (0.0..=1.0).contains(&value) {
        Ok(value)
    } else {
        Err(Error::Domain { name, value })
    }
}
