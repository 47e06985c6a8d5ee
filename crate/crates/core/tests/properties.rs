use std::collections::{BTreeMap, BTreeSet};

use factrank_core::corpus::{Bm25Params, Collection, Dataset, Document, QuerySpec};
use factrank_core::evidence::{score_passage, Article, EntitySet, Passage};
use factrank_core::fusion::{fuse, normalize_topicality};
use factrank_core::providers::doubles::{FixtureKnowledgeBase, HashEmbedder};
use factrank_core::providers::{EmbeddingProvider, Entity, EntityKind, KnowledgeBase};
use factrank_core::vector::unit_cosine;
use proptest::prelude::*;

const WORDS: &[&str] = &[
    "covid", "vaccine", "flu", "mask", "zinc", "cold", "cure", "risk", "heart", "the",
];

fn doc(id: &str, body: &str) -> Document {
    Document {
        doc_id: id.into(),
        url: None,
        title: String::new(),
        body: body.into(),
        dataset: Dataset::Fixture,
    }
}

fn tokens(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

fn bodies() -> impl Strategy<Value = Vec<String>> {
    prop::collection::vec(prop::collection::vec(prop::sample::select(WORDS), 1..12), 1..15)
        .prop_map(|docs| docs.into_iter().map(|w| w.join(" ")).collect())
}

fn unit_vector(seed: &[f64]) -> Vec<f64> {
    let norm = seed.iter().map(|x| x * x).sum::<f64>().sqrt();
    seed.iter().map(|x| x / norm).collect()
}

fn entities(names: &[&str]) -> EntitySet {
    let list: Vec<Entity> = names
        .iter()
        .map(|n| Entity {
            text: n.to_string(),
            kind: EntityKind::Disease,
        })
        .collect();
    EntitySet::from_entities(&list)
}

proptest! {
    #[test]
    fn topical_lists_are_prefixes_of_longer_lists(docs in bodies(), q in prop::collection::vec(prop::sample::select(WORDS), 1..4), n in 1usize..10) {
        let docs: Vec<Document> = docs.iter().enumerate().map(|(i, b)| doc(&format!("d{i:02}"), b)).collect();
        let (collection, _) = Collection::ingest(docs).unwrap();
        let query = QuerySpec::new("q", q.join(" "));
        let short = collection.index().retrieve_topical(Bm25Params::default(), &query, n);
        let long = collection.index().retrieve_topical(Bm25Params::default(), &query, n + 5);
        prop_assert_eq!(&long[..short.len()], &short[..]);
        for w in long.windows(2) {
            prop_assert!(w[0].1 >= w[1].1);
        }
    }

    #[test]
    fn normalization_is_idempotent_and_bounded(raw in prop::collection::vec(0.0f64..50.0, 1..20)) {
        let scores: Vec<(String, f64)> = raw.iter().enumerate().map(|(i, s)| (format!("d{i}"), *s)).collect();
        let once = normalize_topicality(&scores);
        let twice = normalize_topicality(&once);
        prop_assert!(once.iter().all(|(_, t)| (0.0..=1.0).contains(t)));
        for (a, b) in once.iter().zip(&twice) {
            prop_assert!((a.1 - b.1).abs() < 1e-12);
        }
    }

    #[test]
    fn sigma_never_exceeds_sim(a in prop::collection::vec(-1.0f64..1.0, 4), b in prop::collection::vec(-1.0f64..1.0, 4), d_ne in 0.01f64..0.99, matched in any::<bool>()) {
        prop_assume!(a.iter().any(|x| x.abs() > 1e-3) && b.iter().any(|x| x.abs() > 1e-3));
        let (qa, pb) = (unit_vector(&a), unit_vector(&b));
        let passage = Passage { ref_id: "1".into(), sentence: "s".into(), ordinal: 0, embedding: pb };
        let query_entities = entities(&["flu"]);
        let passage_entities = if matched { entities(&["flu"]) } else { entities(&["cancer"]) };
        let scored = score_passage(&qa, passage, &query_entities, &passage_entities, d_ne);
        prop_assert!(scored.sigma <= scored.sim);
        prop_assert!((0.0..=1.0).contains(&scored.sim));
    }

    #[test]
    fn fusion_stays_between_its_inputs(t in 0.0f64..=1.0, f in 0.0f64..=1.0, beta in 0.0f64..=1.0) {
        let rsv = fuse(t, f, beta).unwrap();
        prop_assert!(rsv >= t.min(f) - 1e-12 && rsv <= t.max(f) + 1e-12);
    }
}

#[test]
fn fusion_rejects_values_outside_the_unit_interval() {
    assert!(fuse(1.5, 0.5, 0.5).is_err());
    assert!(fuse(0.5, -0.1, 0.5).is_err());
    assert!(fuse(0.5, 0.5, f64::NAN).is_err());
}

fn fnv(bytes: &[u8]) -> u64 {
    let mut h: u64 = 14695981039346656037;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(1099511628211);
    }
    h
}

#[test]
fn hash_embedding_matches_hand_computation() {
    let text = "Covid covid-19 vaccine";
    let mut expected = vec![0.0; 256];
    for t in ["covid", "covid", "19", "vaccine"] {
        let bucket = (fnv(t.as_bytes()) % 256) as usize;
        let mut salted = t.as_bytes().to_vec();
        salted.push(0xff);
        let sign = if fnv(&salted) >> 63 == 1 { -1.0 } else { 1.0 };
        expected[bucket] += sign;
    }
    let expected = unit_vector(&expected);
    let got = HashEmbedder::default().embed(&[text]).unwrap().remove(0);
    for (a, b) in got.iter().zip(&expected) {
        assert!((a - b).abs() < 1e-12);
    }
    assert!((unit_cosine(&got, &expected) - 1.0).abs() < 1e-12);
}

fn oracle_bm25(docs: &[(String, String)], query: &str) -> Vec<(String, f64)> {
    let toks: Vec<(String, Vec<String>)> = docs.iter().map(|(id, t)| (id.clone(), tokens(t))).collect();
    let n = toks.len() as f64;
    let avg = toks.iter().map(|(_, t)| t.len() as f64).sum::<f64>() / n;
    let terms: BTreeSet<String> = tokens(query).into_iter().collect();
    let mut out = Vec::new();
    for (id, dt) in &toks {
        let mut score = 0.0;
        let mut hit = false;
        for term in &terms {
            let tf = dt.iter().filter(|t| *t == term).count() as f64;
            if tf == 0.0 {
                continue;
            }
            hit = true;
            let df = toks.iter().filter(|(_, t)| t.contains(term)).count() as f64;
            let idf = (1.0 + (n - df + 0.5) / (df + 0.5)).ln();
            score += idf * tf * 2.2 / (tf + 1.2 * (0.25 + 0.75 * dt.len() as f64 / avg));
        }
        if hit {
            out.push((id.clone(), score));
        }
    }
    out.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    out
}

#[test]
fn knowledge_base_returns_the_bm25_top_articles() {
    let articles = vec![
        Article::new(
            "11",
            "Influenza vaccines",
            "Influenza vaccines reduce flu hospital visits.",
        ),
        Article::new("12", "Zinc", "Zinc lozenges shorten colds."),
        Article::new(
            "13",
            "Masks and flu",
            "Masks reduce influenza spread in households with flu.",
        ),
        Article::new("14", "Heart", "Exercise lowers heart disease risk."),
    ];
    let kb = FixtureKnowledgeBase::new(articles.clone());
    let texts: Vec<(String, String)> = articles
        .iter()
        .map(|a| (a.ref_id.clone(), format!("{}\n{}", a.title, a.body)))
        .collect();
    let query = "does the flu vaccine reduce influenza";
    let expected: Vec<String> = oracle_bm25(&texts, query)
        .into_iter()
        .take(2)
        .map(|(id, _)| id)
        .collect();
    let got: Vec<String> = kb.search(query, 2).unwrap().into_iter().map(|a| a.ref_id).collect();
    assert_eq!(got, expected);
    assert_eq!(got.len(), 2);
}

#[test]
fn collection_scores_match_the_oracle() {
    let bodies = ["flu vaccine flu", "cold zinc", "the flu mask risk risk", "heart"];
    let docs: Vec<Document> = bodies
        .iter()
        .enumerate()
        .map(|(i, b)| doc(&format!("d{i}"), b))
        .collect();
    let (collection, report) = Collection::ingest(docs).unwrap();
    assert!(report.empty.is_empty());
    let pairs: Vec<(String, String)> = bodies
        .iter()
        .enumerate()
        .map(|(i, b)| (format!("d{i}"), b.to_string()))
        .collect();
    let query = QuerySpec::new("q", "flu risk");
    let expected: BTreeMap<String, f64> = oracle_bm25(&pairs, &query.text).into_iter().collect();
    for (id, score) in collection.index().retrieve_topical(Bm25Params::default(), &query, 10) {
        assert!((score - expected[&id]).abs() < 1e-12, "{id}");
    }
}
