//! Command-line interface.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use factrank_core::corpus::{Collection, QuerySpec};
use factrank_core::eval::{evaluate_run, grid_search_dne, tune_params, Dimension, MetricReport, TuneGrid};
use factrank_core::fusion::RunLine;
use factrank_core::pipeline::Pipeline;

use crate::config::Config;
use crate::formats::{read_corpus, read_passage_labels, read_qrels, read_run, read_topics, write_text};
use crate::service::{response_body, AppState};
use crate::{load_pipeline, provider_server, remote, run_topics, service, store, AppError};

#[derive(Debug, Parser)]
#[command(
    name = "factrank",
    version,
    about = "Fact-aware health search: index, search, run, evaluate, tune, serve"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Key-value configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Index directory (overrides the config file).
    #[arg(long)]
    pub index: Option<PathBuf>,
    /// Knowledge-base article dump for the offline knowledge base.
    #[arg(long)]
    pub kb: Option<PathBuf>,
}

impl Common {
    pub fn load(&self) -> Result<Config, AppError> {
        let mut config = match &self.config {
            Some(path) => Config::load(path)?,
            None => {
                let mut c = Config::default();
                c.apply_process_env()?;
                c
            }
        };
        if let Some(dir) = &self.index {
            config.index = Some(dir.clone());
        }
        if let Some(kb) = &self.kb {
            config.kb = Some(kb.clone());
        }
        Ok(config)
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build and persist an index from a JSON-lines corpus.
    Index {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Rank the collection for one query and print the breakdown.
    Search {
        #[command(flatten)]
        common: Common,
        #[arg(long = "q")]
        query: String,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        beta: Option<f64>,
        #[arg(long, default_value_t = 10)]
        top: usize,
        /// Print the service's JSON response instead of a table.
        #[arg(long)]
        json: bool,
    },
    /// Write a run file for every topic.
    Run {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        topics: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        beta: Option<f64>,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long, default_value = "factrank")]
        tag: String,
        /// BM25 scores only; no provider is called.
        #[arg(long)]
        baseline: bool,
    },
    /// Score a run against topicality and credibility qrels.
    Eval {
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        qrels_top: PathBuf,
        #[arg(long)]
        qrels_cred: PathBuf,
        #[arg(long, value_delimiter = ',', default_values_t = [5usize, 10])]
        cutoffs: Vec<usize>,
        #[arg(long, default_value_t = factrank_core::defaults::LAMBDA)]
        lambda: f64,
        #[arg(long)]
        json: bool,
    },
    /// Grid-search k, alpha and beta (and optionally d_NE) on tuning topics.
    Tune {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        topics: PathBuf,
        #[arg(long)]
        qrels_top: PathBuf,
        #[arg(long)]
        qrels_cred: PathBuf,
        /// Held-out topics; tuning fails if any id also appears in `--topics`.
        #[arg(long)]
        test_topics: Option<PathBuf>,
        #[arg(long, value_delimiter = ',')]
        k_grid: Option<Vec<usize>>,
        #[arg(long, value_delimiter = ',')]
        alpha_grid: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',')]
        beta_grid: Option<Vec<f64>>,
        #[arg(long, default_value_t = 10)]
        cutoff: usize,
        #[arg(long)]
        lambda: Option<f64>,
        /// Passage labels (JSON lines) for the d_NE search.
        #[arg(long)]
        dne_labels: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', default_values_t = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9])]
        dne_grid: Vec<f64>,
        /// Write the grid table here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Start the search service.
    Serve {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long, default_value_t = 8080)]
        port: u16,
    },
    /// Serve the offline provider doubles over the provider protocol.
    ServeProviders {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long, default_value_t = 8700)]
        port: u16,
    },
}

/// Runs a parsed command, writing its normal output to `out`.
pub fn execute(cli: Cli, out: &mut dyn std::io::Write) -> Result<(), AppError> {
    let text = match cli.command {
        Command::Index { corpus, out: dir } => index(&corpus, &dir)?,
        Command::Search {
            common,
            query,
            k,
            alpha,
            beta,
            top,
            json,
        } => search(&common, &query, k, alpha, beta, top, json)?,
        Command::Run {
            common,
            topics,
            out: run_path,
            alpha,
            beta,
            k,
            tag,
            baseline,
        } => {
            let mut config = common.load()?;
            if let Some(k) = k {
                config.k = k;
            }
            let pipeline = load_pipeline(&config)?;
            let topics = read_topics(&topics)?;
            let lines = if baseline {
                baseline_run(&pipeline, &topics, &tag)
            } else {
                run_topics(
                    &pipeline,
                    &topics,
                    alpha.unwrap_or(config.alpha),
                    beta.unwrap_or(config.beta),
                    &tag,
                )?
            };
            write_text(&run_path, &join_lines(&lines))?;
            format!(
                "wrote {} lines for {} topics to {}\n",
                lines.len(),
                topics.len(),
                run_path.display()
            )
        }
        Command::Eval {
            run,
            qrels_top,
            qrels_cred,
            cutoffs,
            lambda,
            json,
        } => {
            let run = read_run(&run)?;
            let top = read_qrels(&qrels_top, Dimension::Topicality)?;
            let cred = read_qrels(&qrels_cred, Dimension::Credibility)?;
            let report = evaluate_run(&run, &top, &cred, &cutoffs, lambda).map_err(AppError::input("eval"))?;
            if json {
                serde_json::to_string_pretty(&report).expect("report serializes") + "\n"
            } else {
                format_report(&report)
            }
        }
        Command::Tune {
            common,
            topics,
            qrels_top,
            qrels_cred,
            test_topics,
            k_grid,
            alpha_grid,
            beta_grid,
            cutoff,
            lambda,
            dne_labels,
            dne_grid,
            out: table_path,
        } => {
            let config = common.load()?;
            let tuning = read_topics(&topics)?;
            let test: BTreeSet<String> = match &test_topics {
                Some(p) => read_topics(p)?.into_iter().map(|q| q.query_id).collect(),
                None => BTreeSet::new(),
            };
            let defaults = TuneGrid::default();
            let grid = TuneGrid {
                k: k_grid.unwrap_or(defaults.k),
                alpha: alpha_grid.unwrap_or(defaults.alpha),
                beta: beta_grid.unwrap_or(defaults.beta),
            };
            let top = read_qrels(&qrels_top, Dimension::Topicality)?;
            let cred = read_qrels(&qrels_cred, Dimension::Credibility)?;
            let lambda = lambda.unwrap_or(config.lambda);
            let overlap: Vec<String> = tuning
                .iter()
                .filter(|q| test.contains(&q.query_id))
                .map(|q| q.query_id.clone())
                .collect();
            if !overlap.is_empty() {
                return Err(AppError::input("tune")(factrank_core::Error::Overlap(overlap)));
            }

            let mut summary = String::new();
            let mut config = config;
            if let Some(labels) = dne_labels {
                let labels = read_passage_labels(&labels)?;
                let providers = remote::build_providers(&config)?;
                let splitter = config.pipeline_config()?.splitter;
                let (best, table) = grid_search_dne(
                    &labels,
                    &dne_grid,
                    config.k,
                    &splitter,
                    providers.embedding.as_ref(),
                    providers.ner.as_ref(),
                )
                .map_err(AppError::input("tune d_ne"))?;
                summary.push_str("d_ne\tf1\n");
                for cell in &table {
                    let _ = writeln!(summary, "{}\t{}", cell.d_ne, cell.f1);
                }
                let _ = writeln!(summary, "best d_ne={best}");
                config.d_ne = best;
            }
            let pipeline = load_pipeline(&config)?;
            let result = tune_params(&pipeline, &tuning, &test, &top, &cred, &grid, cutoff, lambda)
                .map_err(AppError::input("tune"))?;
            let mut table = String::from("k\talpha\tbeta\tcam_map\n");
            for c in &result.table {
                let _ = writeln!(table, "{}\t{}\t{}\t{}", c.k, c.alpha, c.beta, c.cam_map);
            }
            match &table_path {
                Some(p) => write_text(p, &table)?,
                None => summary.push_str(&table),
            }
            let b = result.best;
            let _ = writeln!(
                summary,
                "best k={} alpha={} beta={} cam_map={}",
                b.k, b.alpha, b.beta, b.cam_map
            );
            summary
        }
        Command::Serve { common, host, port } => {
            let config = common.load()?;
            let pipeline = match &config.index {
                Some(dir) if dir.join(store::INDEX_FILE).exists() => Some(load_pipeline(&config)?),
                _ => {
                    log::warn!("no index found; /api/search will answer 503");
                    None
                }
            };
            let state = Arc::new(AppState::new(pipeline, config));
            serve_blocking(&host, port, service::router(state))?;
            String::new()
        }
        Command::ServeProviders { common, host, port } => {
            let config = common.load()?;
            let providers = factrank_core::providers::Providers {
                embedding: Arc::new(factrank_core::providers::doubles::HashEmbedder::default()),
                generation: Arc::new(factrank_core::providers::doubles::TemplateGenerator),
                stance: Arc::new(factrank_core::providers::doubles::OverlapStance),
                ner: Arc::new(remote::gazetteer(&config)?),
                knowledge_base: Arc::new(remote::fixture_kb(&config)?),
            };
            serve_blocking(&host, port, provider_server::router(Arc::new(providers)))?;
            String::new()
        }
    };
    out.write_all(text.as_bytes()).map_err(|source| AppError::Io {
        path: PathBuf::from("<stdout>"),
        source,
    })
}

fn join_lines(lines: &[String]) -> String {
    let mut s = lines.join("\n");
    if !s.is_empty() {
        s.push('\n');
    }
    s
}

fn index(corpus: &std::path::Path, dir: &std::path::Path) -> Result<String, AppError> {
    let docs = read_corpus(corpus)?;
    let total = docs.len();
    let (collection, report) = Collection::ingest(docs).map_err(AppError::input(corpus.display().to_string()))?;
    for id in &report.empty {
        log::warn!("skipped `{id}`: no indexable text");
    }
    for id in &report.duplicates {
        log::warn!("skipped duplicate `{id}`");
    }
    if report.missing_id > 0 {
        log::warn!("skipped {} records without id", report.missing_id);
    }
    store::save(&collection, dir)?;
    Ok(format!(
        "indexed {} of {} documents ({} terms) into {}\n",
        collection.len(),
        total,
        collection.index().vocabulary_size(),
        dir.display()
    ))
}

/// BM25-only run: raw topicality as the score.
pub fn baseline_run(pipeline: &Pipeline, topics: &[QuerySpec], tag: &str) -> Vec<String> {
    let pool = pipeline.config().candidate_pool;
    topics
        .iter()
        .flat_map(|t| {
            pipeline
                .topical(t, pool)
                .into_iter()
                .enumerate()
                .map(|(i, (doc_id, score))| {
                    RunLine {
                        query_id: t.query_id.clone(),
                        doc_id,
                        rank: i + 1,
                        score,
                        tag: tag.to_string(),
                    }
                    .to_string()
                })
                .collect::<Vec<_>>()
        })
        .collect()
}

fn search(
    common: &Common,
    query: &str,
    k: Option<usize>,
    alpha: Option<f64>,
    beta: Option<f64>,
    top: usize,
    json: bool,
) -> Result<String, AppError> {
    if top == 0 {
        return Err(AppError::Usage("--top must be at least 1".into()));
    }
    let config = common.load()?;
    let pipeline = load_pipeline(&config)?;
    let spec = QuerySpec::new("cli", query.trim());
    let k = k.unwrap_or(config.k);
    let (alpha, beta) = (alpha.unwrap_or(config.alpha), beta.unwrap_or(config.beta));
    let prepared = pipeline.prepare(&spec, k).map_err(|source| AppError::Pipeline {
        query_id: "cli".into(),
        source,
    })?;
    let ranked = prepared.rank(alpha, beta).map_err(AppError::input("search"))?;
    let (entries, gentext, evidence) = response_body(&pipeline, &ranked, &prepared, top, json);
    if json {
        let body = service::SearchResponse {
            query: spec.text.clone(),
            entries,
            gentext,
            evidence,
            params: service::ParamsView {
                k,
                alpha,
                beta,
                d_ne: ranked.params.d_ne,
                top_n: top,
            },
            timing_ms: Default::default(),
            cached: false,
        };
        return Ok(serde_json::to_string_pretty(&body).expect("response serializes") + "\n");
    }
    let opt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |v| format!("{v:.4}"));
    let mut s = format!("query: {}  (k={k} alpha={alpha} beta={beta})\n\n", spec.text);
    let _ = writeln!(
        s,
        "{:>4}  {:<16} {:>7} {:>7} {:>7} {:>7} {:>7}  title",
        "rank", "doc", "rsv", "t_norm", "f", "stance", "sim"
    );
    for e in &entries {
        let _ = writeln!(
            s,
            "{:>4}  {:<16} {:>7.4} {:>7.4} {:>7.4} {:>7} {:>7}  {}{}",
            e.rank,
            e.doc_id,
            e.rsv,
            e.t_norm,
            e.f,
            opt(e.stance),
            opt(e.similarity),
            e.title,
            if e.degraded { "  [degraded]" } else { "" }
        );
    }
    match gentext {
        Some(g) => {
            let _ = writeln!(s, "\nGenText ({:?}, {} words):", g.origin, g.word_count);
            for sentence in &g.sentences {
                let mark = if sentence.valid { " " } else { "!" };
                let _ = writeln!(s, " {mark} {} [{}]", sentence.text, sentence.citations.join(", "));
            }
        }
        None => s.push_str("\nno evidence found; ranking is BM25 only\n"),
    }
    Ok(s)
}

pub fn format_report(report: &MetricReport) -> String {
    let mut s = format!(
        "queries evaluated: {}  skipped: {}  lambda: {}\n",
        report.evaluated,
        report.skipped.len(),
        report.lambda
    );
    let _ = writeln!(
        s,
        "{:>6} {:>9} {:>9} {:>9} {:>9} {:>9} {:>9}",
        "cutoff", "MAP_top", "MAP_cred", "NDCG_top", "NDCG_cred", "CAM_MAP", "CAM_NDCG"
    );
    for c in &report.cutoffs {
        let _ = writeln!(
            s,
            "{:>6} {:>9.4} {:>9.4} {:>9.4} {:>9.4} {:>9.4} {:>9.4}",
            c.cutoff, c.map_topicality, c.map_credibility, c.ndcg_topicality, c.ndcg_credibility, c.cam_map, c.cam_ndcg
        );
    }
    if !report.skipped.is_empty() {
        let _ = writeln!(s, "skipped (no qrels): {}", report.skipped.join(" "));
    }
    s
}

fn serve_blocking(host: &str, port: u16, router: axum::Router) -> Result<(), AppError> {
    let addr: SocketAddr = format!("{host}:{port}")
        .parse()
        .map_err(|e| AppError::Usage(format!("bad address {host}:{port}: {e}")))?;
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| AppError::Server(e.to_string()))?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr)
            .await
            .map_err(|e| AppError::Server(format!("bind {addr}: {e}")))?;
        log::info!("listening on {addr}");
        axum::serve(listener, router)
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await
            .map_err(|e| AppError::Server(e.to_string()))
    })
}
