//! Topicality normalization, score fusion, ranking and run files.

use alloc::collections::BTreeSet;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{check_unit, Error, Result};
use crate::factuality::FactualScore;
use crate::gentext::GenText;

/// Per-query min-max normalization of raw BM25 scores. When every score is
/// equal (including a single document) all normalized scores are 1.
pub fn normalize_topicality(scores: &[(String, f64)]) -> Vec<(String, f64)> {
    let min = scores.iter().map(|s| s.1).fold(f64::INFINITY, f64::min);
    let max = scores.iter().map(|s| s.1).fold(f64::NEG_INFINITY, f64::max);
    let span = max - min;
    scores
        .iter()
        .map(|(id, t)| {
            let norm = if span > 0.0 { (t - min) / span } else { 1.0 };
            (id.clone(), norm.clamp(0.0, 1.0))
        })
        .collect()
}

/// `beta * t_norm + (1 - beta) * f`.
pub fn fuse(t_norm: f64, f: f64, beta: f64) -> Result<f64> {
    let t_norm = check_unit("t_norm", t_norm)?;
    let f = check_unit("f", f)?;
    let beta = check_unit("beta", beta)?;
    Ok(beta * t_norm + (1.0 - beta) * f)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredDoc {
    pub doc_id: String,
    pub t_raw: f64,
    pub t_norm: f64,
    pub factual: FactualScore,
    pub rsv: f64,
    pub degraded: bool,
}

impl ScoredDoc {
    pub fn new(doc_id: String, t_raw: f64, t_norm: f64, factual: FactualScore, beta: f64) -> Result<Self> {
        let rsv = fuse(t_norm, factual.f, beta)?;
        Ok(Self {
            degraded: factual.degraded,
            doc_id,
            t_raw,
            t_norm,
            factual,
            rsv,
        })
    }
}

/// Parameters a ranking was produced with.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankParams {
    pub k: usize,
    pub alpha: f64,
    pub beta: f64,
    pub d_ne: f64,
}

impl Default for RankParams {
    fn default() -> Self {
        Self {
            k: crate::defaults::K,
            alpha: crate::defaults::ALPHA,
            beta: crate::defaults::BETA,
            d_ne: crate::defaults::D_NE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedList {
    pub query_id: String,
    pub entries: Vec<ScoredDoc>,
    /// `None` only when no evidence was found and the list is BM25-only.
    pub gentext: Option<GenText>,
    pub params: RankParams,
}

/// Final ordering: RSV descending, then `doc_id` ascending.
pub fn rank_order(a: &ScoredDoc, b: &ScoredDoc) -> Ordering {
    b.rsv.total_cmp(&a.rsv).then_with(|| a.doc_id.cmp(&b.doc_id))
}

pub fn rank(
    query_id: &str,
    mut scored: Vec<ScoredDoc>,
    gentext: Option<GenText>,
    params: RankParams,
) -> Result<RankedList> {
    let mut seen = BTreeSet::new();
    for d in &scored {
        if !seen.insert(d.doc_id.as_str()) {
            return Err(Error::DuplicateDocument(d.doc_id.clone()));
        }
    }
    scored.sort_by(rank_order);
    Ok(RankedList {
        query_id: query_id.to_string(),
        entries: scored,
        gentext,
        params,
    })
}

/// One line of a run file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunLine {
    pub query_id: String,
    pub doc_id: String,
    pub rank: usize,
    pub score: f64,
    pub tag: String,
}

impl core::fmt::Display for RunLine {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(
            f,
            "{} Q0 {} {} {:.6} {}",
            self.query_id, self.doc_id, self.rank, self.score, self.tag
        )
    }
}

/// `query_id Q0 doc_id rank score tag`, ranks from 1, six-decimal scores.
pub fn emit_run(ranked: &RankedList, tag: &str) -> Vec<String> {
    ranked
        .entries
        .iter()
        .enumerate()
        .map(|(i, e)| {
            RunLine {
                query_id: ranked.query_id.clone(),
                doc_id: e.doc_id.clone(),
                rank: i + 1,
                score: e.rsv,
                tag: tag.to_string(),
            }
            .to_string()
        })
        .collect()
}

/// Parses run-file text; blank lines are skipped.
pub fn parse_run(text: &str) -> Result<Vec<RunLine>> {
    let mut lines = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let malformed = |reason: &str| Error::MalformedRun {
            line: line_no,
            reason: reason.to_string(),
        };
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 6 {
            return Err(malformed("expected 6 fields"));
        }
        let rank = fields[3].parse::<usize>().map_err(|_| malformed("bad rank"))?;
        let score = fields[4].parse::<f64>().map_err(|_| malformed("bad score"))?;
        if !score.is_finite() {
            return Err(malformed("non-finite score"));
        }
        lines.push(RunLine {
            query_id: fields[0].to_string(),
            doc_id: fields[2].to_string(),
            rank,
            score,
            tag: fields[5].to_string(),
        });
    }
    Ok(lines)
}
