mod common;

use std::sync::Arc;

use factrank::service::{router, AppState};
use factrank_core::evidence::Article;
use factrank_core::pipeline::{Pipeline, PipelineConfig};
use factrank_core::providers::{KnowledgeBase, Providers};
use factrank_core::{Error, Result};
use serde_json::{json, Value};

const FIVE_G: &str = "can 5g antennas cause covid 19";

fn serve_fixture() -> String {
    common::serve(router(Arc::new(AppState::new(
        Some(common::pipeline()),
        common::config(),
    ))))
}

fn search(base: &str, body: Value) -> (u16, Value) {
    common::post(&format!("{base}/api/search"), &body)
}

fn doc_ids(body: &Value) -> Vec<String> {
    body["entries"]
        .as_array()
        .unwrap()
        .iter()
        .map(|e| e["doc_id"].as_str().unwrap().to_string())
        .collect()
}

#[test]
fn five_g_query_returns_cited_gentext_and_results() {
    let base = serve_fixture();
    let (status, body) = search(&base, json!({"query": FIVE_G, "include_breakdown": true}));
    assert_eq!(status, 200, "{body}");
    let entries = body["entries"].as_array().unwrap();
    assert!(!entries.is_empty());
    assert_eq!(entries[0]["doc_id"], "q01-a");
    let gentext = &body["gentext"];
    assert!(!gentext["sentences"].as_array().unwrap().is_empty());
    let cited: Vec<&str> = gentext["references"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_str().unwrap())
        .collect();
    let evidence: Vec<&str> = body["evidence"]
        .as_array()
        .unwrap()
        .iter()
        .map(|p| p["ref_id"].as_str().unwrap())
        .collect();
    assert!(cited.iter().all(|r| evidence.contains(r)));
    assert_eq!(body["params"]["beta"], 0.45);
    assert_eq!(body["cached"], false);
    for e in entries {
        let rsv = e["rsv"].as_f64().unwrap();
        let fused = 0.45 * e["t_norm"].as_f64().unwrap() + 0.55 * e["f"].as_f64().unwrap();
        assert!((rsv - fused).abs() < 1e-12);
    }
}

#[test]
fn beta_one_gives_bm25_order() {
    let base = serve_fixture();
    let (_, body) = search(&base, json!({"query": FIVE_G, "beta": 1.0, "top_n": 25}));
    let pipeline = common::pipeline();
    let spec = factrank_core::corpus::QuerySpec::new("q", FIVE_G);
    let bm25: Vec<String> = pipeline.topical(&spec, 25).into_iter().map(|(id, _)| id).collect();
    assert_eq!(doc_ids(&body), bm25);
    assert_eq!(body["cached"], false);
    let (_, again) = search(&base, json!({"query": FIVE_G, "beta": 0.45, "top_n": 25}));
    assert_eq!(again["cached"], true);
    assert_ne!(doc_ids(&again), bm25);
}

#[test]
fn identical_requests_give_identical_results() {
    let base = serve_fixture();
    let request = json!({"query": "does zinc shorten colds", "top_n": 5});
    let (_, mut a) = search(&base, request.clone());
    let (_, mut b) = search(&base, request);
    for body in [&mut a, &mut b] {
        body.as_object_mut().unwrap().remove("timing_ms");
        body.as_object_mut().unwrap().remove("cached");
    }
    assert_eq!(a, b);
}

#[test]
fn service_scores_match_the_run_file() {
    let base = serve_fixture();
    let pipeline = common::pipeline();
    let topics = factrank::formats::read_topics(&common::fixture("topics.tsv")).unwrap();
    let lines = factrank::run_topics(&pipeline, &topics[..1], 0.65, 0.45, "t").unwrap();
    let (_, body) = search(&base, json!({"query": topics[0].text, "top_n": 25}));
    for (line, entry) in lines.iter().zip(body["entries"].as_array().unwrap()) {
        let f: Vec<&str> = line.split_whitespace().collect();
        assert_eq!(f[2], entry["doc_id"].as_str().unwrap());
        assert_eq!(f[4], format!("{:.6}", entry["rsv"].as_f64().unwrap()));
    }
}

#[test]
fn bad_requests_are_rejected() {
    let base = serve_fixture();
    for body in [
        json!({"query": "  ?! "}),
        json!({"query": FIVE_G, "top_n": 0}),
        json!({"query": FIVE_G, "beta": 1.5}),
        json!({"query": FIVE_G, "alpha": -0.2}),
        json!({"query": FIVE_G, "k": 0}),
    ] {
        let (status, err) = search(&base, body.clone());
        assert_eq!(status, 400, "{body}");
        assert!(err["error"].is_string());
    }
}

#[test]
fn missing_index_is_service_unavailable() {
    let base = common::serve(router(Arc::new(AppState::new(None, common::config()))));
    assert_eq!(search(&base, json!({"query": FIVE_G})).0, 503);
    let (status, health) = common::get(&format!("{base}/api/health"));
    assert_eq!(status, 200);
    assert_eq!(health["index_loaded"], false);
}

struct DownKb;

impl KnowledgeBase for DownKb {
    fn search(&self, _query: &str, _m: usize) -> Result<Vec<Article>> {
        Err(Error::KnowledgeBaseUnavailable("connection refused".into()))
    }

    fn fingerprint(&self) -> String {
        "down".into()
    }
}

#[test]
fn provider_failure_is_a_bad_gateway_with_its_stage() {
    let mut providers = Providers::doubles(Vec::new());
    providers.knowledge_base = Arc::new(DownKb);
    let pipeline = Pipeline::new(common::collection(), providers, PipelineConfig::default()).unwrap();
    let base = common::serve(router(Arc::new(AppState::new(Some(pipeline), common::config()))));
    let (status, body) = search(&base, json!({"query": FIVE_G}));
    assert_eq!(status, 502);
    assert_eq!(body["stage"], "evidence");
    assert!(body["error"].as_str().unwrap().contains("connection refused"));
}

#[test]
fn document_config_and_health_endpoints() {
    let base = serve_fixture();
    let (status, doc) = common::get(&format!("{base}/api/document/q07-a"));
    assert_eq!(status, 200);
    assert_eq!(doc["title"], "Smoking and lung cancer");
    assert!(doc["body"].as_str().unwrap().starts_with("Smoking causes lung cancer."));
    assert_eq!(common::get(&format!("{base}/api/document/nope")).0, 404);

    let (status, config) = common::get(&format!("{base}/api/config"));
    assert_eq!(status, 200);
    assert_eq!(config["beta"], 0.45);
    assert!(config["fingerprint"].as_str().unwrap().contains("hash-embed-256"));

    search(&base, json!({"query": FIVE_G}));
    let (_, health) = common::get(&format!("{base}/api/health"));
    assert_eq!(health["status"], "ok");
    assert_eq!(health["documents"], 50);
    assert_eq!(health["cached_queries"], 1);
}

#[test]
fn k_overrides_are_rate_limited() {
    let config = factrank::Config {
        k_overrides_per_minute: 2,
        ..common::config()
    };
    let base = common::serve(router(Arc::new(AppState::new(Some(common::pipeline()), config))));
    let statuses: Vec<u16> = (3..6)
        .map(|k| search(&base, json!({"query": FIVE_G, "k": k})).0)
        .collect();
    assert_eq!(statuses, vec![200, 200, 429]);
    assert_eq!(search(&base, json!({"query": FIVE_G, "k": 3})).0, 200);
    assert_eq!(search(&base, json!({"query": FIVE_G})).0, 200);
}
