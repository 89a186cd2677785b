//! Query pipelines: keyword (BM25), embedding (cosine) and hybrid (rank fusion).

mod engine;
mod pipeline;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embed::ProviderError;
use crate::index::IndexError;
use crate::model::Modality;
use crate::ranking::{RankedList, UnitId};
use crate::text::{tokenize, StopwordSet};

pub use engine::{Engine, HybridCandidates, QueryResult};
pub use pipeline::{
    EmbeddingPipeline, HybridPipeline, KeywordPipeline, PipelineRegistry, SearchContext, SearchPipeline,
    CANDIDATE_DEPTH,
};

#[derive(Debug, Error)]
pub enum SearchError {
    #[error("query text is empty")]
    EmptyQuery,
    #[error("k must be at least 1")]
    InvalidK,
    #[error("unknown pipeline `{0}`")]
    UnknownPipeline(String),
    #[error("no vector store for modality {0}")]
    MissingStore(Modality),
    #[error("index was built with provider {indexed}, engine configured with {configured}")]
    ProviderMismatch { indexed: String, configured: String },
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error(transparent)]
    Index(#[from] IndexError),
}

impl SearchError {
    pub fn is_retriable(&self) -> bool {
        matches!(self, SearchError::Provider(e) if e.is_retriable())
    }

    /// Whether the caller, rather than the engine or a provider, is at fault.
    pub fn is_client_error(&self) -> bool {
        matches!(
            self,
            SearchError::EmptyQuery | SearchError::InvalidK | SearchError::UnknownPipeline(_)
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Query {
    pub text: String,
    pub modality: Modality,
    /// Registry name, e.g. `keyword`, `embedding`, `hybrid`.
    pub pipeline: String,
    pub k: usize,
}

impl Query {
    pub fn new(text: impl Into<String>, modality: Modality, pipeline: impl Into<String>, k: usize) -> Result<Self, SearchError> {
        let q = Query {
            text: text.into(),
            modality,
            pipeline: pipeline.into(),
            k,
        };
        q.validate()?;
        Ok(q)
    }

    pub fn validate(&self) -> Result<(), SearchError> {
        if self.text.trim().is_empty() {
            return Err(SearchError::EmptyQuery);
        }
        if self.k == 0 {
            return Err(SearchError::InvalidK);
        }
        Ok(())
    }

    /// Same query at a different retrieval depth.
    pub fn with_k(&self, k: usize) -> Query {
        Query { k, ..self.clone() }
    }

    pub fn with_pipeline(self, pipeline: impl Into<String>) -> Query {
        Query {
            pipeline: pipeline.into(),
            ..self
        }
    }
}

/// Lowercased query tokens minus stopwords, order and duplicates kept.
/// A query made only of stopwords keeps all of its tokens.
pub fn extract_keywords(query_text: &str, stopwords: &StopwordSet) -> Vec<String> {
    let tokens = tokenize(query_text);
    let kept: Vec<String> = tokens.iter().filter(|t| !stopwords.contains(t)).cloned().collect();
    if kept.is_empty() {
        tokens
    } else {
        kept
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RrfParams {
    pub k_rrf: f64,
}

impl Default for RrfParams {
    fn default() -> Self {
        RrfParams { k_rrf: 60.0 }
    }
}

impl RrfParams {
    pub fn new(k_rrf: f64) -> Result<Self, SearchError> {
        if !(k_rrf > 0.0 && k_rrf.is_finite()) {
            return Err(SearchError::Index(IndexError::InvalidParams(format!("k_rrf={k_rrf}"))));
        }
        Ok(RrfParams { k_rrf })
    }
}

/// Reciprocal rank fusion: each unit scores `Σ 1/(k_rrf + rank)` over the lists
/// containing it. Only ranks are used, never the input scores.
pub fn rrf_fuse(lists: &[RankedList], p: &RrfParams, k: usize) -> RankedList {
    let mut parts: HashMap<UnitId, Vec<f64>> = HashMap::new();
    for list in lists {
        for e in list {
            parts.entry(e.unit_id).or_default().push(1.0 / (p.k_rrf + e.rank as f64));
        }
    }
    // Summed in a fixed order so the result does not depend on list order.
    let scored = parts
        .into_iter()
        .map(|(id, mut v)| {
            v.sort_by(|a, b| b.total_cmp(a));
            (id, v.iter().sum())
        })
        .collect();
    RankedList::from_scored(scored, k)
}
