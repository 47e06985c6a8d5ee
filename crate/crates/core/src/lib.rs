//! Health-search ranking that fuses BM25 topicality with a factual-accuracy
//! score measured against an evidence-grounded reference text ("GenText").
//!
//! The crate is `no_std` and only needs `alloc`. Everything that touches the
//! file system, the network, or the command line lives in the `factrank`
//! companion crate; model backends are reached through the traits in
//! [`providers`], which also ships deterministic offline doubles.
//!
//! The ranking pipeline has three stages:
//!
//! 1. [`evidence`]: fetch knowledge-base articles, split them into one-sentence
//!    passages, and keep the top-k by entity-discounted similarity.
//! 2. [`gentext`]: prompt a generation provider with those passages and parse
//!    the cited answer paragraph.
//! 3. [`factuality`] and [`fusion`]: score each BM25 candidate against the
//!    GenText and fuse both dimensions into the final ranking.
//!
//! [`pipeline`] wires the stages together, [`eval`] measures rankings with
//! CAM_MAP / CAM_NDCG and runs the parameter grid searches.

#![no_std]

extern crate alloc;

pub mod corpus;
pub mod error;
pub mod eval;
pub mod evidence;
pub mod factuality;
pub mod fusion;
pub mod gentext;
pub mod pipeline;
pub mod providers;
pub mod text;
pub mod vector;

pub use error::{Error, ProviderError, Result};

/// Tuned defaults shared by the pipeline, service and CLI.
pub mod defaults {
    /// Passages handed to the generator.
    pub const K: usize = 10;
    /// Weight of stance versus embedding similarity in the factual score.
    pub const ALPHA: f64 = 0.65;
    /// Weight of topicality versus factual accuracy in the final score.
    pub const BETA: f64 = 0.45;
    /// Similarity discount for passages whose entities miss the query's.
    pub const D_NE: f64 = 0.7;
    /// Knowledge-base articles fetched per query.
    pub const ARTICLES: usize = 1;
    /// BM25 candidates scored for factual accuracy.
    pub const CANDIDATE_POOL: usize = 100;
    /// Word limit stated in the generation prompt.
    pub const WORD_LIMIT: usize = 64;
    /// Generation retries on malformed output.
    pub const RETRIES: usize = 2;
    /// CAM weight on the topicality dimension.
    pub const LAMBDA: f64 = 0.5;
}
