mod common;

use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::http::HeaderMap;
use axum::routing::post;
use axum::{Json, Router};
use factrank::config::{ProviderConfig, ProviderKind};
use factrank::provider_server;
use factrank::remote::{build_providers, HttpClient, RemoteKnowledgeBase, RemoteStance};
use factrank::wire::{StanceRequest, StanceResponse};
use factrank::Config;
use factrank_core::pipeline::{Pipeline, PipelineConfig};
use factrank_core::providers::{Providers, StanceProvider};
use factrank_core::{corpus::QuerySpec, providers::KnowledgeBase, Error};
use serde_json::json;

fn remote_config(base: &str) -> Config {
    let mut config = common::config();
    for kind in ProviderKind::ALL {
        config.providers.insert(kind, ProviderConfig::remote(kind, base));
    }
    config
}

#[test]
fn remote_adapters_agree_with_the_doubles() {
    let doubles = Providers::doubles(common::articles());
    let base = common::serve(provider_server::router(Arc::new(
        Providers::doubles(common::articles()),
    )));
    let remote = build_providers(&remote_config(&base)).unwrap();
    assert!(remote.fingerprint().contains("remote-embed@"));

    let texts = [
        "5G antennas and COVID-19",
        "zinc lozenges shorten colds",
        "honey for a cough",
    ];
    let a = doubles.embedding.embed(&texts).unwrap();
    let b = remote.embedding.embed(&texts).unwrap();
    for (x, y) in a.iter().zip(&b) {
        assert!(x.iter().zip(y).all(|(p, q)| (p - q).abs() < 1e-12));
    }

    let premise = "Garlic does not prevent the flu.";
    let hypothesis = "Eating garlic prevents influenza.";
    let s1 = doubles.stance.stance(premise, hypothesis).unwrap();
    let s2 = remote.stance.stance(premise, hypothesis).unwrap();
    assert!((s1 - s2).abs() < 1e-12);

    let text = "Can hydroxychloroquine treat covid 19 or the flu?";
    assert_eq!(doubles.ner.ner(text).unwrap(), remote.ner.ner(text).unwrap());

    let q = "can 5g antennas cause covid 19";
    let ids = |v: Vec<factrank_core::evidence::Article>| v.into_iter().map(|a| a.ref_id).collect::<Vec<_>>();
    assert_eq!(
        ids(doubles.knowledge_base.search(q, 3).unwrap()),
        ids(remote.knowledge_base.search(q, 3).unwrap())
    );

    let prompt = "Query: q\n\nContext: Zinc shortens colds (Reference: 7008).\n\nWrite ONLY 20 words.";
    assert_eq!(
        doubles.generation.generate(prompt).unwrap(),
        remote.generation.generate(prompt).unwrap()
    );
}

#[test]
fn remote_pipeline_ranks_like_the_local_one() {
    let base = common::serve(provider_server::router(Arc::new(
        Providers::doubles(common::articles()),
    )));
    let remote = build_providers(&remote_config(&base)).unwrap();
    let local = common::pipeline();
    let over_http = Pipeline::new(common::collection(), remote, PipelineConfig::default()).unwrap();
    let query = QuerySpec::new("q01", "can 5g antennas cause covid 19");
    let a = local.search(&query).unwrap();
    let b = over_http.search(&query).unwrap();
    let order = |r: &factrank_core::fusion::RankedList| r.entries.iter().map(|e| e.doc_id.clone()).collect::<Vec<_>>();
    assert_eq!(order(&a), order(&b));
    for (x, y) in a.entries.iter().zip(&b.entries) {
        assert!((x.rsv - y.rsv).abs() < 1e-9);
    }
    assert_eq!(a.gentext.unwrap().raw, b.gentext.unwrap().raw);
}

#[test]
fn bearer_token_and_options_reach_the_server() {
    let seen = Arc::new(Mutex::new(Vec::new()));
    let log = Arc::clone(&seen);
    let router = Router::new().route(
        "/stance",
        post(move |headers: HeaderMap, Json(req): Json<StanceRequest>| {
            let log = Arc::clone(&log);
            async move {
                let auth = headers
                    .get("authorization")
                    .and_then(|v| v.to_str().ok())
                    .unwrap_or("")
                    .to_string();
                log.lock()
                    .unwrap()
                    .push((auth, serde_json::to_value(&req.options).unwrap()));
                Json(StanceResponse { score: 0.25 })
            }
        }),
    );
    let base = common::serve(router);
    let mut cfg = ProviderConfig::remote(ProviderKind::Stance, &base);
    cfg.token = Some("s3cret".into());
    cfg.options.insert("model".into(), json!("nli-large"));
    let stance = RemoteStance(HttpClient::new(&cfg).unwrap());
    assert_eq!(stance.stance("a b", "c d").unwrap(), 0.25);
    let seen = seen.lock().unwrap();
    assert_eq!(seen.len(), 1);
    assert_eq!(seen[0].0, "Bearer s3cret");
    assert_eq!(seen[0].1, json!({"model": "nli-large"}));
}

#[test]
fn unreachable_knowledge_base_is_reported_as_unavailable() {
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let base = format!("http://{}", listener.local_addr().unwrap());
    drop(listener);
    let mut cfg = ProviderConfig::remote(ProviderKind::KnowledgeBase, &base);
    cfg.timeout = Duration::from_secs(2);
    let kb = RemoteKnowledgeBase(HttpClient::new(&cfg).unwrap());
    match kb.search("flu", 1) {
        Err(Error::KnowledgeBaseUnavailable(msg)) => assert!(msg.contains(&base)),
        other => panic!("expected unavailable, got {other:?}"),
    }
}

#[test]
fn provider_server_rejects_empty_input() {
    let base = common::serve(provider_server::router(Arc::new(
        Providers::doubles(common::articles()),
    )));
    assert_eq!(common::post(&format!("{base}/embed"), &json!({"texts": []})).0, 400);
    assert_eq!(
        common::post(&format!("{base}/generate"), &json!({"prompt": " "})).0,
        400
    );
    assert_eq!(
        common::post(&format!("{base}/generate"), &json!({"prompt": "no context here"})).0,
        422
    );
    assert_eq!(common::get(&format!("{base}/kb/search?q=flu&m=0")).0, 400);
    let (status, body) = common::get(&format!("{base}/kb/search?q=zinc%20colds&m=1"));
    assert_eq!(status, 200);
    assert_eq!(body["articles"][0]["ref_id"], "7008");
}
