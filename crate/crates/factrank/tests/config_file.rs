mod common;

use factrank::config::{ProviderKind, ProviderMode};
use factrank::Config;

#[test]
fn bundled_config_loads_with_resolved_paths() {
    let path = common::fixture("factrank.conf");
    let config = Config::load(&path).unwrap();
    assert_eq!(config.index.as_deref(), Some(common::fixture("index").as_path()));
    assert_eq!(config.kb.as_deref(), Some(common::fixture("kb.jsonl").as_path()));
    assert_eq!(config.k, 10);
    assert_eq!(config.alpha, 0.65);
    assert_eq!(config.beta, 0.45);
    assert_eq!(config.d_ne, 0.7);
    for kind in ProviderKind::ALL {
        assert_eq!(config.provider(kind).mode, ProviderMode::Double);
    }
    let pipeline = config.pipeline_config().unwrap();
    assert_eq!(pipeline.evidence.k, 10);
    assert_eq!(pipeline.beta, 0.45);
}

#[test]
fn out_of_range_weights_are_rejected() {
    let dir = std::env::temp_dir();
    for bad in ["beta = 1.5", "alpha = -0.1", "d_ne = 1", "k = 0", "lambda = 2"] {
        let err = Config::parse(bad, &dir).unwrap_err();
        assert_eq!(err.exit_code(), 3, "{bad}");
    }
}

#[test]
fn environment_points_every_provider_at_one_endpoint() {
    let mut config = Config::default();
    config
        .apply_env(|key| match key {
            "FACTRANK_PROVIDERS_ENDPOINT" => Some("http://models.local:9000/".into()),
            "FACTRANK_STANCE_TOKEN" => Some("secret".into()),
            _ => None,
        })
        .unwrap();
    for kind in ProviderKind::ALL {
        let p = config.provider(kind);
        assert_eq!(p.mode, ProviderMode::Remote);
        assert_eq!(p.endpoint.as_deref(), Some("http://models.local:9000"));
    }
    assert_eq!(config.provider(ProviderKind::Stance).token.as_deref(), Some("secret"));
    let shown = serde_json::to_string(&config).unwrap();
    assert!(!shown.contains("secret"));
}
