#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::Arc;

use factrank::formats::{read_articles, read_corpus};
use factrank::Config;
use factrank_core::corpus::Collection;
use factrank_core::evidence::Article;
use factrank_core::pipeline::{Pipeline, PipelineConfig};
use factrank_core::providers::Providers;
use serde_json::Value;

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

pub fn collection() -> Arc<Collection> {
    let docs = read_corpus(&fixture("corpus.jsonl")).unwrap();
    Arc::new(Collection::ingest(docs).unwrap().0)
}

pub fn articles() -> Vec<Article> {
    read_articles(&fixture("kb.jsonl")).unwrap()
}

pub fn pipeline() -> Pipeline {
    Pipeline::new(collection(), Providers::doubles(articles()), PipelineConfig::default()).unwrap()
}

pub fn config() -> Config {
    Config {
        kb: Some(fixture("kb.jsonl")),
        ..Config::default()
    }
}

/// Serves `router` on an ephemeral local port from a background runtime
/// and returns the base URL.
pub fn serve(router: axum::Router) -> String {
    let (tx, rx) = std::sync::mpsc::channel();
    std::thread::spawn(move || {
        let rt = tokio::runtime::Builder::new_multi_thread()
            .worker_threads(2)
            .enable_all()
            .build()
            .unwrap();
        rt.block_on(async move {
            let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
            tx.send(listener.local_addr().unwrap()).unwrap();
            axum::serve(listener, router).await.unwrap();
        });
    });
    format!("http://{}", rx.recv().unwrap())
}

fn agent() -> ureq::Agent {
    ureq::Agent::config_builder().http_status_as_error(false).build().into()
}

pub fn post(url: &str, body: &Value) -> (u16, Value) {
    let mut resp = agent().post(url).send_json(body).unwrap();
    let status = resp.status().as_u16();
    (status, resp.body_mut().read_json().unwrap_or(Value::Null))
}

pub fn get(url: &str) -> (u16, Value) {
    let mut resp = agent().get(url).call().unwrap();
    let status = resp.status().as_u16();
    (status, resp.body_mut().read_json().unwrap_or(Value::Null))
}
