//! HTTP service and command-line front end for the archive search engine.

pub mod api;
pub mod cli;
pub mod config;

use std::path::{Path, PathBuf};
use std::sync::Arc;

use archsearch_core::context::ContextError;
use archsearch_core::embed::{ProviderConfig, ProviderError, ProviderRegistry};
use archsearch_core::eval::EvalError;
use archsearch_core::imaging::ImagingError;
use archsearch_core::index::{self, IndexError};
use archsearch_core::ingest::IngestError;
use archsearch_core::retrieval::SearchError;
use archsearch_core::text::StopwordSet;
use archsearch_core::Engine;
use thiserror::Error;

pub use config::ServiceConfig;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("no index found at {0}; run `archsearch ingest <dir> --out <index>` first")]
    NoIndex(PathBuf),
    #[error("loading index {path}: {source}")]
    LoadIndex {
        path: PathBuf,
        #[source]
        source: IndexError,
    },
    #[error(transparent)]
    Config(#[from] config::ConfigError),
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error(transparent)]
    Search(#[from] SearchError),
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Imaging(#[from] ImagingError),
    #[error(transparent)]
    Context(#[from] ContextError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub fn load_stopwords(path: Option<&Path>) -> Result<StopwordSet, ServiceError> {
    match path {
        Some(p) => StopwordSet::from_file(p).map_err(|source| ServiceError::Io {
            path: p.to_owned(),
            source,
        }),
        None => Ok(StopwordSet::english()),
    }
}

/// Loads a persisted index and wires it to a provider.
///
/// `provider` defaults to the configuration recorded in the index.
pub fn open_engine(
    index_path: &Path,
    provider: Option<&ProviderConfig>,
    stopwords: Option<&Path>,
) -> Result<Engine, ServiceError> {
    if !index_path.is_file() {
        return Err(ServiceError::NoIndex(index_path.to_owned()));
    }
    let snapshot = index::load(index_path).map_err(|source| ServiceError::LoadIndex {
        path: index_path.to_owned(),
        source,
    })?;
    let provider_config = provider.cloned().unwrap_or_else(|| snapshot.provider.clone());
    let provider = ProviderRegistry::default().create(&provider_config)?;
    Ok(Engine::new(Arc::new(snapshot), provider)?.with_stopwords(load_stopwords(stopwords)?))
}
