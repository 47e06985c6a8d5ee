//! Two-dimensional evaluation (topicality and credibility) with CAM_MAP and
//! CAM_NDCG, plus the parameter grid searches.
//!
//! Rankings are cut at each cutoff before scoring: AP@n divides by the
//! total number of relevant documents, so relevant documents outside the
//! cut count as misses.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::corpus::QuerySpec;
use crate::error::{check_unit, Error, Result};
use crate::evidence::{top_k_passages, Article, EvidenceParams};
use crate::fusion::RunLine;
use crate::pipeline::Pipeline;
use crate::providers::{EmbeddingProvider, NerProvider};
use crate::text::SentenceSplitter;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dimension {
    Topicality,
    Credibility,
}

impl Dimension {
    pub fn as_str(self) -> &'static str {
        match self {
            Dimension::Topicality => "topicality",
            Dimension::Credibility => "credibility",
        }
    }

    fn matches_label(self, label: &str) -> bool {
        let label = label.to_ascii_lowercase();
        match self {
            Dimension::Topicality => matches!(label.as_str(), "topicality" | "topical" | "usefulness" | "t"),
            Dimension::Credibility => matches!(label.as_str(), "credibility" | "credible" | "c"),
        }
    }
}

/// Binary judgments for one relevance dimension.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QrelSet {
    pub dimension: Dimension,
    pub judgments: BTreeMap<String, BTreeMap<String, u8>>,
}

impl QrelSet {
    pub fn new(dimension: Dimension) -> Self {
        Self {
            dimension,
            judgments: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, query_id: &str, doc_id: &str, relevant: bool) {
        self.judgments
            .entry(query_id.to_string())
            .or_default()
            .insert(doc_id.to_string(), u8::from(relevant));
    }

    /// Parses `query_id 0 doc_id label` lines, or the five-column
    /// `query_id 0 doc_id dimension label` form (rows for other dimensions
    /// are skipped). Graded labels are binarized: anything above 0 is
    /// relevant.
    pub fn parse(text: &str, dimension: Dimension) -> Result<Self> {
        let mut set = Self::new(dimension);
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let malformed = |reason: &str| Error::MalformedQrels {
                line: i + 1,
                reason: reason.to_string(),
            };
            let fields: Vec<&str> = line.split_whitespace().collect();
            let (qid, doc, label) = match fields.as_slice() {
                [q, _, d, l] => (*q, *d, *l),
                [q, _, d, dim, l] => {
                    if !dimension.matches_label(dim) {
                        continue;
                    }
                    (*q, *d, *l)
                }
                _ => return Err(malformed("expected 4 or 5 fields")),
            };
            let label: i64 = label.parse().map_err(|_| malformed("label is not an integer"))?;
            if label < 0 {
                return Err(malformed("negative label"));
            }
            set.insert(qid, doc, label > 0);
        }
        Ok(set)
    }

    pub fn contains_query(&self, query_id: &str) -> bool {
        self.judgments.contains_key(query_id)
    }

    pub fn relevant(&self, query_id: &str) -> BTreeSet<&str> {
        self.judgments
            .get(query_id)
            .map(|docs| docs.iter().filter(|(_, &l)| l > 0).map(|(d, _)| d.as_str()).collect())
            .unwrap_or_default()
    }

    pub fn query_ids(&self) -> impl Iterator<Item = &str> {
        self.judgments.keys().map(String::as_str)
    }
}

/// Mean of precision at the rank of each relevant document; relevant
/// documents never retrieved contribute 0. Empty `rels` gives 0.
pub fn average_precision<S: AsRef<str>>(ranking: &[S], rels: &BTreeSet<&str>) -> f64 {
    if rels.is_empty() {
        return 0.0;
    }
    let mut seen = BTreeSet::new();
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (i, doc) in ranking.iter().enumerate() {
        let doc = doc.as_ref();
        if !seen.insert(doc) {
            continue;
        }
        if rels.contains(doc) {
            hits += 1;
            sum += hits as f64 / (i + 1) as f64;
        }
    }
    sum / rels.len() as f64
}

/// Binary-gain NDCG@n with a `log2(rank + 1)` discount.
pub fn ndcg<S: AsRef<str>>(ranking: &[S], rels: &BTreeSet<&str>, n: usize) -> f64 {
    if rels.is_empty() || n == 0 {
        return 0.0;
    }
    let mut seen = BTreeSet::new();
    let mut dcg = 0.0;
    for (i, doc) in ranking.iter().take(n).enumerate() {
        let doc = doc.as_ref();
        if seen.insert(doc) && rels.contains(doc) {
            dcg += 1.0 / libm::log2((i + 2) as f64);
        }
    }
    let ideal: f64 = (0..n.min(rels.len())).map(|i| 1.0 / libm::log2((i + 2) as f64)).sum();
    dcg / ideal
}

/// Convex aggregation of the two dimensions: `lambda * topical + (1 - lambda) * credibility`.
pub fn cam(topical: f64, credibility: f64, lambda: f64) -> Result<f64> {
    let topical = check_unit("topical metric", topical)?;
    let credibility = check_unit("credibility metric", credibility)?;
    let lambda = check_unit("lambda", lambda)?;
    Ok(lambda * topical + (1.0 - lambda) * credibility)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryMetrics {
    pub query_id: String,
    pub cutoff: usize,
    pub ap_topicality: f64,
    pub ap_credibility: f64,
    pub ndcg_topicality: f64,
    pub ndcg_credibility: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CutoffReport {
    pub cutoff: usize,
    pub map_topicality: f64,
    pub map_credibility: f64,
    pub ndcg_topicality: f64,
    pub ndcg_credibility: f64,
    pub cam_map: f64,
    pub cam_ndcg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub lambda: f64,
    pub cutoffs: Vec<CutoffReport>,
    pub per_query: Vec<QueryMetrics>,
    /// Queries evaluated (each weighs equally in the means).
    pub evaluated: usize,
    /// Run queries missing from either qrel set; not evaluated.
    pub skipped: Vec<String>,
    /// Evaluated queries with no relevant document in the topicality set.
    pub no_relevant_topicality: Vec<String>,
    /// Evaluated queries with no relevant document in the credibility set.
    pub no_relevant_credibility: Vec<String>,
}

impl MetricReport {
    pub fn at(&self, cutoff: usize) -> Option<&CutoffReport> {
        self.cutoffs.iter().find(|c| c.cutoff == cutoff)
    }
}

/// Evaluates ranked doc-id lists keyed by query id.
pub fn evaluate_rankings(
    rankings: &BTreeMap<String, Vec<String>>,
    qrels_top: &QrelSet,
    qrels_cred: &QrelSet,
    cutoffs: &[usize],
    lambda: f64,
) -> Result<MetricReport> {
    check_unit("lambda", lambda)?;
    if cutoffs.is_empty() || cutoffs.contains(&0) {
        return Err(Error::InvalidInput("cutoffs must be non-empty and positive".into()));
    }
    let mut report = MetricReport {
        lambda,
        cutoffs: Vec::new(),
        per_query: Vec::new(),
        evaluated: 0,
        skipped: Vec::new(),
        no_relevant_topicality: Vec::new(),
        no_relevant_credibility: Vec::new(),
    };
    let mut evaluable = Vec::new();
    for (qid, ranking) in rankings {
        if qrels_top.contains_query(qid) && qrels_cred.contains_query(qid) {
            evaluable.push((qid, ranking));
        } else {
            report.skipped.push(qid.clone());
        }
    }
    if evaluable.is_empty() {
        return Err(Error::NoLabels);
    }
    report.evaluated = evaluable.len();
    for (qid, _) in &evaluable {
        if qrels_top.relevant(qid).is_empty() {
            report.no_relevant_topicality.push((*qid).clone());
        }
        if qrels_cred.relevant(qid).is_empty() {
            report.no_relevant_credibility.push((*qid).clone());
        }
    }
    let n = evaluable.len() as f64;
    for &cutoff in cutoffs {
        let mut sums = [0.0f64; 4];
        for (qid, ranking) in &evaluable {
            let cut = &ranking[..ranking.len().min(cutoff)];
            let rel_top = qrels_top.relevant(qid);
            let rel_cred = qrels_cred.relevant(qid);
            let m = QueryMetrics {
                query_id: (*qid).clone(),
                cutoff,
                ap_topicality: average_precision(cut, &rel_top),
                ap_credibility: average_precision(cut, &rel_cred),
                ndcg_topicality: ndcg(cut, &rel_top, cutoff),
                ndcg_credibility: ndcg(cut, &rel_cred, cutoff),
            };
            sums[0] += m.ap_topicality;
            sums[1] += m.ap_credibility;
            sums[2] += m.ndcg_topicality;
            sums[3] += m.ndcg_credibility;
            report.per_query.push(m);
        }
        let [map_t, map_c, ndcg_t, ndcg_c] = sums.map(|s| (s / n).clamp(0.0, 1.0));
        report.cutoffs.push(CutoffReport {
            cutoff,
            map_topicality: map_t,
            map_credibility: map_c,
            ndcg_topicality: ndcg_t,
            ndcg_credibility: ndcg_c,
            cam_map: cam(map_t, map_c, lambda)?,
            cam_ndcg: cam(ndcg_t, ndcg_c, lambda)?,
        });
    }
    Ok(report)
}

/// Groups run lines by query (ordered by the rank field, independent of
/// line order) and evaluates them.
pub fn evaluate_run(
    run: &[RunLine],
    qrels_top: &QrelSet,
    qrels_cred: &QrelSet,
    cutoffs: &[usize],
    lambda: f64,
) -> Result<MetricReport> {
    let mut grouped: BTreeMap<String, Vec<&RunLine>> = BTreeMap::new();
    for line in run {
        grouped.entry(line.query_id.clone()).or_default().push(line);
    }
    let rankings = grouped
        .into_iter()
        .map(|(qid, mut lines)| {
            lines.sort_by(|a, b| {
                a.rank
                    .cmp(&b.rank)
                    .then_with(|| b.score.total_cmp(&a.score))
                    .then_with(|| a.doc_id.cmp(&b.doc_id))
            });
            (qid, lines.into_iter().map(|l| l.doc_id.clone()).collect())
        })
        .collect();
    evaluate_rankings(&rankings, qrels_top, qrels_cred, cutoffs, lambda)
}

/// A query with passage-level relevance labels, for tuning `d_NE`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledQuery {
    pub query: QuerySpec,
    pub articles: Vec<Article>,
    /// Relevant passages as `(ref_id, ordinal)`.
    pub relevant: BTreeSet<(String, usize)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DneCell {
    pub d_ne: f64,
    /// Mean F1 over the queries.
    pub f1: f64,
    pub per_query: Vec<f64>,
}

/// F1 of a retrieved set against a labeled set.
pub fn f1_score<T: Ord>(retrieved: &BTreeSet<T>, relevant: &BTreeSet<T>) -> f64 {
    let hits = retrieved.intersection(relevant).count() as f64;
    if hits == 0.0 {
        return 0.0;
    }
    let precision = hits / retrieved.len() as f64;
    let recall = hits / relevant.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

/// Evaluates every `d_NE` candidate by the mean F1 of the top-`k` passages
/// against the labels and returns the best (ties go to the smaller value)
/// with the full table.
pub fn grid_search_dne(
    queries: &[LabeledQuery],
    grid: &[f64],
    k: usize,
    splitter: &SentenceSplitter,
    embedding: &dyn EmbeddingProvider,
    ner: &dyn NerProvider,
) -> Result<(f64, Vec<DneCell>)> {
    if grid.is_empty() {
        return Err(Error::InvalidInput("empty d_NE grid".into()));
    }
    if queries.is_empty() || queries.iter().any(|q| q.relevant.is_empty()) {
        return Err(Error::NoLabels);
    }
    let mut table = Vec::with_capacity(grid.len());
    for &d_ne in grid {
        let params = EvidenceParams { k, d_ne, articles: 1 };
        params.validate()?;
        let mut per_query = Vec::with_capacity(queries.len());
        for q in queries {
            let retrieved: BTreeSet<(String, usize)> =
                match top_k_passages(&q.query, &q.articles, &params, splitter, embedding, ner) {
                    Ok(passages) => passages
                        .into_iter()
                        .map(|p| (p.passage.ref_id, p.passage.ordinal))
                        .collect(),
                    Err(Error::NoEvidenceFound) => BTreeSet::new(),
                    Err(e) => return Err(e),
                };
            per_query.push(f1_score(&retrieved, &q.relevant));
        }
        let f1 = per_query.iter().sum::<f64>() / per_query.len() as f64;
        table.push(DneCell { d_ne, f1, per_query });
    }
    let best = table
        .iter()
        .reduce(|best, c| {
            if c.f1 > best.f1 || (c.f1 == best.f1 && c.d_ne < best.d_ne) {
                c
            } else {
                best
            }
        })
        .map(|c| c.d_ne)
        .unwrap_or(grid[0]);
    Ok((best, table))
}

/// Parameter grid for [`tune_params`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneGrid {
    pub k: Vec<usize>,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
}

impl Default for TuneGrid {
    /// k in {5, 10, 15, 20}; alpha and beta from 0 to 1 in steps of 0.05.
    fn default() -> Self {
        let unit: Vec<f64> = (0..=20).map(|i| i as f64 / 20.0).collect();
        Self {
            k: alloc::vec![5, 10, 15, 20],
            alpha: unit.clone(),
            beta: unit,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TuneCell {
    pub k: usize,
    pub alpha: f64,
    pub beta: f64,
    pub cam_map: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneResult {
    pub best: TuneCell,
    /// Every cell in grid order (k, then alpha, then beta).
    pub table: Vec<TuneCell>,
}

/// Exhaustive search for the `(k, alpha, beta)` maximizing CAM_MAP at
/// `cutoff` on the tuning queries. Tuning and test queries must be disjoint.
/// Ties keep the first cell in grid order.
#[allow(clippy::too_many_arguments)]
pub fn tune_params(
    pipeline: &Pipeline,
    tuning: &[QuerySpec],
    test_query_ids: &BTreeSet<String>,
    qrels_top: &QrelSet,
    qrels_cred: &QrelSet,
    grid: &TuneGrid,
    cutoff: usize,
    lambda: f64,
) -> Result<TuneResult> {
    let overlap: Vec<String> = tuning
        .iter()
        .filter(|q| test_query_ids.contains(&q.query_id))
        .map(|q| q.query_id.clone())
        .collect();
    if !overlap.is_empty() {
        return Err(Error::Overlap(overlap));
    }
    if tuning.is_empty() {
        return Err(Error::NoLabels);
    }
    if grid.k.is_empty() || grid.alpha.is_empty() || grid.beta.is_empty() {
        return Err(Error::InvalidInput("empty tuning grid".into()));
    }
    let mut table = Vec::with_capacity(grid.k.len() * grid.alpha.len() * grid.beta.len());
    for &k in &grid.k {
        let prepared = tuning
            .iter()
            .map(|q| pipeline.prepare(q, k).map_err(|e| e.error))
            .collect::<Result<Vec<_>>>()?;
        for &alpha in &grid.alpha {
            for &beta in &grid.beta {
                let mut rankings = BTreeMap::new();
                for p in &prepared {
                    let ranked = p.rank(alpha, beta)?;
                    rankings.insert(
                        ranked.query_id.clone(),
                        ranked.entries.into_iter().map(|e| e.doc_id).collect(),
                    );
                }
                let report = evaluate_rankings(&rankings, qrels_top, qrels_cred, &[cutoff], lambda)?;
                table.push(TuneCell {
                    k,
                    alpha,
                    beta,
                    cam_map: report.cutoffs[0].cam_map,
                });
            }
        }
    }
    let best = *table
        .iter()
        .reduce(|best, c| if c.cam_map > best.cam_map { c } else { best })
        .ok_or(Error::NoLabels)?;
    Ok(TuneResult { best, table })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn rels<'a>(ids: &[&'a str]) -> BTreeSet<&'a str> {
        ids.iter().copied().collect()
    }

    #[test]
    fn ap_examples() {
        let r = ["d1", "d2", "d3"];
        assert!((average_precision(&r, &rels(&["d1", "d3"])) - (1.0 + 2.0 / 3.0) / 2.0).abs() < 1e-12);
        assert_eq!(average_precision(&r, &rels(&["d1", "d2", "d3"])), 1.0);
        assert_eq!(average_precision(&r, &rels(&["d9"])), 0.0);
        assert_eq!(average_precision(&r, &rels(&[])), 0.0);
    }

    #[test]
    fn ndcg_examples() {
        let r = ["d1", "d2", "d3"];
        let expected = 1.5 / (1.0 + 1.0 / libm::log2(3.0));
        assert!((ndcg(&r, &rels(&["d1", "d3"]), 3) - expected).abs() < 1e-12);
        assert!((expected - 0.9197).abs() < 1e-4);
        assert_eq!(ndcg(&["d1", "d3", "d2"], &rels(&["d1", "d3"]), 3), 1.0);
        assert_eq!(ndcg(&r, &rels(&[]), 3), 0.0);
    }

    #[test]
    fn cam_examples() {
        assert!((cam(0.8, 0.4, 0.5).unwrap() - 0.6).abs() < 1e-15);
        assert_eq!(cam(0.3, 0.3, 0.9).unwrap(), 0.3);
        assert_eq!(cam(0.8, 0.4, 1.0).unwrap(), 0.8);
        assert!(cam(0.8, 0.4, 1.5).is_err());
    }

    #[test]
    fn qrels_formats() {
        let q = QrelSet::parse("q1 0 d1 1\nq1 0 d2 0\n# note\n\nq2 0 d3 2\n", Dimension::Topicality).unwrap();
        assert_eq!(q.relevant("q1"), rels(&["d1"]));
        assert_eq!(q.relevant("q2"), rels(&["d3"]));
        let five = "q1 0 d1 topicality 1\nq1 0 d1 credibility 0\nq1 0 d2 credibility 1\n";
        let c = QrelSet::parse(five, Dimension::Credibility).unwrap();
        assert_eq!(c.relevant("q1"), rels(&["d2"]));
        assert!(matches!(
            QrelSet::parse("q1 0 d1", Dimension::Topicality),
            Err(Error::MalformedQrels { line: 1, .. })
        ));
        assert!(QrelSet::parse("q1 0 d1 x", Dimension::Topicality).is_err());
    }

    fn line(q: &str, d: &str, rank: usize) -> RunLine {
        RunLine {
            query_id: q.into(),
            doc_id: d.into(),
            rank,
            score: 1.0 / rank as f64,
            tag: "t".into(),
        }
    }

    #[test]
    fn ideal_run_scores_one_and_order_is_irrelevant() {
        let mut top = QrelSet::new(Dimension::Topicality);
        let mut cred = QrelSet::new(Dimension::Credibility);
        top.insert("q", "a", true);
        top.insert("q", "b", true);
        cred.insert("q", "a", true);
        cred.insert("q", "b", false);
        let run = vec![line("q", "b", 2), line("q", "a", 1), line("q", "c", 3)];
        let report = evaluate_run(&run, &top, &cred, &[5, 10], 0.5).unwrap();
        assert_eq!(report.at(5).unwrap().cam_ndcg, 1.0);
        assert_eq!(report.at(10).unwrap().cam_map, 1.0);
        assert_eq!(report.evaluated, 1);
    }

    #[test]
    fn unknown_queries_are_skipped() {
        let mut top = QrelSet::new(Dimension::Topicality);
        let mut cred = QrelSet::new(Dimension::Credibility);
        top.insert("q", "a", true);
        cred.insert("q", "a", false);
        let run = vec![line("q", "a", 1), line("x", "a", 1)];
        let report = evaluate_run(&run, &top, &cred, &[5], 0.5).unwrap();
        assert_eq!(report.skipped, vec!["x".to_string()]);
        assert_eq!(report.no_relevant_credibility, vec!["q".to_string()]);
        assert_eq!(report.at(5).unwrap().map_credibility, 0.0);
        assert_eq!(
            evaluate_run(&[line("x", "a", 1)], &top, &cred, &[5], 0.5).unwrap_err(),
            Error::NoLabels
        );
    }

    #[test]
    fn f1_examples() {
        let a: BTreeSet<u8> = [1, 2].into_iter().collect();
        let b: BTreeSet<u8> = [2, 3, 4].into_iter().collect();
        assert!((f1_score(&a, &b) - 0.4).abs() < 1e-15);
        assert_eq!(f1_score(&a, &BTreeSet::new()), 0.0);
    }

    #[test]
    fn default_grid_shape() {
        let g = TuneGrid::default();
        assert_eq!(g.k, vec![5, 10, 15, 20]);
        assert_eq!(g.alpha.len(), 21);
        assert!(g.alpha.contains(&0.65) && g.beta.contains(&0.45));
    }
}
