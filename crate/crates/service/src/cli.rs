use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use archsearch_core::context::Lexicon;
use archsearch_core::embed::{ProviderConfig, ProviderRegistry};
use archsearch_core::eval::{default_benchmark, load_benchmark, run_benchmark, Judgments};
use archsearch_core::imaging::{enhance, read_rgb, write_gray, BilateralParams};
use archsearch_core::index::persist;
use archsearch_core::ingest::{contextualize, ingest_dir, load_document, IngestOptions};
use archsearch_core::model::CorpusManifest;
use archsearch_core::retrieval::QueryResult;
use archsearch_core::{Modality, Query};
use clap::{Parser, Subcommand};
use log::{error, info, warn};

use crate::api::{router, AppState};
use crate::{open_engine, ServiceConfig, ServiceError};

#[derive(Debug, Parser)]
#[command(name = "archsearch", version, about = "Multimodal search over scanned archive documents")]
pub struct Cli {
    /// Key-value config file; `SARCH_*` environment variables override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse, contextualize, embed and index a directory of extraction files.
    Ingest {
        dir: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Word list for OCR spelling correction.
        #[arg(long)]
        lexicon: Option<PathBuf>,
        /// Replace upstream image kinds with the provider's classification.
        #[arg(long)]
        reclassify: bool,
    },
    /// Query a persisted index.
    Search {
        query: String,
        #[arg(long, short)]
        modality: Modality,
        #[arg(long, short, default_value = "hybrid")]
        pipeline: String,
        #[arg(long, short)]
        k: Option<usize>,
        #[arg(long)]
        index: Option<PathBuf>,
    },
    /// Score all pipelines on a benchmark and write the metrics report.
    Eval {
        /// Defaults to the shipped 30-query benchmark.
        #[arg(long)]
        benchmark: Option<PathBuf>,
        /// Without judgments every metric is zero.
        #[arg(long)]
        judgments: Option<PathBuf>,
        #[arg(long)]
        index: Option<PathBuf>,
        /// Where to write the JSON report.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Serve the HTTP API and the UI's static files.
    Serve,
    /// Grayscale, bilateral filter and Otsu-binarize a scan.
    Enhance {
        input: PathBuf,
        output: PathBuf,
        #[arg(long, default_value_t = 2.0)]
        sigma_spatial: f64,
        #[arg(long, default_value_t = 30.0)]
        sigma_range: f64,
        /// Defaults to ceil(3 * sigma_spatial).
        #[arg(long)]
        radius: Option<u32>,
    },
    /// Print an extraction file with a context object on every image and table.
    Contextualize {
        file: PathBuf,
        #[arg(long)]
        lexicon: Option<PathBuf>,
        #[arg(long)]
        reclassify: bool,
    },
}

fn ingest_options(lexicon: Option<&Path>, reclassify: bool) -> Result<IngestOptions, ServiceError> {
    Ok(IngestOptions {
        lexicon: lexicon.map(Lexicon::from_file).transpose()?,
        reclassify,
        ..Default::default()
    })
}

fn provider_for_ingest(config: &ServiceConfig) -> ProviderConfig {
    config.provider.clone().unwrap_or_default()
}

pub fn render_manifest(m: &CorpusManifest) -> String {
    let mut out = format!(
        "documents: {}\npages: {}\nimages: {}\ntables: {}\n",
        m.num_documents, m.num_pages, m.num_images, m.num_tables
    );
    for d in &m.documents {
        let _ = writeln!(
            out,
            "  {}  pages={} images={} tables={}  {}",
            d.doc_id, d.num_pages, d.num_images, d.num_tables, d.title
        );
    }
    out
}

pub fn render_results(results: &[QueryResult]) -> String {
    let mut out = format!(
        "{:>4}  {:>10}  {:<8}  {:<24}  {:>4}  {:<10}  {}\n",
        "rank", "score", "modality", "doc_id", "page", "block", "title"
    );
    for r in results {
        let _ = writeln!(
            out,
            "{:>4}  {:>10.6}  {:<8}  {:<24}  {:>4}  {:<10}  {}",
            r.rank,
            r.score,
            r.modality.to_string(),
            r.doc_id,
            r.page_no,
            r.block_id.as_deref().unwrap_or("-"),
            r.title
        );
    }
    if results.is_empty() {
        out.push_str("(no results)\n");
    }
    out
}

/// Writes to stdout; a closed pipe (`| head`) is not an error.
fn emit(text: &str) -> Result<(), ServiceError> {
    let mut stdout = std::io::stdout().lock();
    match stdout.write_all(text.as_bytes()).and_then(|()| stdout.flush()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(ServiceError::Io {
            path: PathBuf::from("<stdout>"),
            source: e,
        }),
        _ => Ok(()),
    }
}

/// Runs one subcommand, writing its normal output to stdout.
pub fn run(cli: Cli) -> Result<(), ServiceError> {
    let config = ServiceConfig::from_env(cli.config.as_deref())?;
    match cli.command {
        Command::Ingest {
            dir,
            out,
            lexicon,
            reclassify,
        } => {
            let out = out.unwrap_or_else(|| config.index_path.clone());
            let provider = ProviderRegistry::default().create(&provider_for_ingest(&config))?;
            let snapshot = ingest_dir(&dir, provider.as_ref(), &ingest_options(lexicon.as_deref(), reclassify)?)?;
            if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
                std::fs::create_dir_all(parent).map_err(|source| ServiceError::Io {
                    path: parent.to_owned(),
                    source,
                })?;
            }
            persist(&snapshot, &out)?;
            emit(&format!("{}index written to {}\n", render_manifest(&snapshot.manifest), out.display()))?;
        }
        Command::Search {
            query,
            modality,
            pipeline,
            k,
            index,
        } => {
            let index = index.unwrap_or_else(|| config.index_path.clone());
            let engine = open_engine(&index, config.provider.as_ref(), config.stopwords.as_deref())?;
            let q = Query::new(query, modality, pipeline, k.unwrap_or(config.default_k))?;
            emit(&render_results(&engine.search_results(&q)?))?;
        }
        Command::Eval {
            benchmark,
            judgments,
            index,
            out,
        } => {
            let index = index.unwrap_or_else(|| config.index_path.clone());
            let engine = open_engine(&index, config.provider.as_ref(), config.stopwords.as_deref())?;
            let queries = match benchmark {
                Some(p) => load_benchmark(&p)?,
                None => default_benchmark(),
            };
            let judgments = match judgments {
                Some(p) => Judgments::from_file(&p, engine.snapshot())?,
                None => Judgments::new(),
            };
            let report = run_benchmark(&queries, &judgments, &engine)?;
            for w in &report.warnings {
                warn!("{w}");
            }
            emit(&report.render_text())?;
            if let Some(out) = out {
                std::fs::write(&out, report.to_json() + "\n").map_err(|source| ServiceError::Io {
                    path: out.clone(),
                    source,
                })?;
                emit(&format!("report written to {}\n", out.display()))?;
            }
        }
        Command::Serve => {
            let runtime = tokio::runtime::Runtime::new().map_err(|source| ServiceError::Io {
                path: PathBuf::from("<runtime>"),
                source,
            })?;
            runtime.block_on(serve(config))?;
        }
        Command::Enhance {
            input,
            output,
            sigma_spatial,
            sigma_range,
            radius,
        } => {
            let params = BilateralParams::new(sigma_spatial, sigma_range, radius)?;
            let result = enhance(&read_rgb(&input)?, &params)?;
            write_gray(&result.binary, &output)?;
            emit(&format!("threshold {} -> {}\n", result.threshold, output.display()))?;
        }
        Command::Contextualize {
            file,
            lexicon,
            reclassify,
        } => {
            let doc = load_document(&file)?;
            let provider = ProviderRegistry::default().create(&provider_for_ingest(&config))?;
            let prepared = contextualize(&doc, provider.as_ref(), &ingest_options(lexicon.as_deref(), reclassify)?)?;
            emit(&(prepared.doc.to_json() + "\n"))?;
        }
    }
    Ok(())
}

/// Binds, then loads the index in the background; requests get 503 until it is ready.
pub async fn serve(config: ServiceConfig) -> Result<(), ServiceError> {
    if !config.index_path.is_file() {
        return Err(ServiceError::NoIndex(config.index_path.clone()));
    }
    let state = Arc::new(AppState::loading(config.default_k));
    let app = router(state.clone(), config.static_dir.as_deref(), config.cors_origin.as_deref());
    let io_err = |source| ServiceError::Io {
        path: PathBuf::from(config.listen.to_string()),
        source,
    };
    let listener = tokio::net::TcpListener::bind(config.listen).await.map_err(io_err)?;
    info!("listening on http://{}", listener.local_addr().map_err(io_err)?);

    let loader = {
        let (state, config) = (state.clone(), config.clone());
        tokio::task::spawn_blocking(move || {
            match open_engine(&config.index_path, config.provider.as_ref(), config.stopwords.as_deref()) {
                Ok(engine) => {
                    info!("index {} ready", config.index_path.display());
                    state.install(engine);
                }
                Err(e) => {
                    error!("{e}");
                    state.fail(e.to_string());
                }
            }
        })
    };
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(io_err)?;
    loader.abort();
    Ok(())
}
