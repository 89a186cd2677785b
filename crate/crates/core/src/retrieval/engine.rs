use std::sync::Arc;

use serde::Serialize;

use super::pipeline::{HybridPipeline, PipelineRegistry, SearchContext};
use super::{extract_keywords, rrf_fuse, Query, RrfParams, SearchError};
use crate::embed::{EmbeddingProvider, ProviderConfig};
use crate::index::{IndexSnapshot, UnitContent};
use crate::model::Modality;
use crate::ranking::{RankedList, UnitId};
use crate::text::StopwordSet;

/// One ranked hit with its provenance and display content.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QueryResult {
    pub unit_id: UnitId,
    pub rank: u32,
    pub score: f64,
    pub modality: Modality,
    pub doc_id: String,
    pub title: String,
    pub page_no: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub block_id: Option<String>,
    pub content: UnitContent,
}

/// Hybrid internals: both candidate lists and the untruncated fusion.
#[derive(Debug, Clone, PartialEq)]
pub struct HybridCandidates {
    pub keyword: RankedList,
    pub embedding: RankedList,
    pub fused: RankedList,
}

/// A queryable snapshot: index, provider, pipelines and query-time settings.
#[derive(Clone)]
pub struct Engine {
    snapshot: Arc<IndexSnapshot>,
    provider: Arc<dyn EmbeddingProvider>,
    pipelines: PipelineRegistry,
    stopwords: StopwordSet,
    rrf: RrfParams,
}

fn compatible(indexed: &ProviderConfig, configured: &ProviderConfig) -> bool {
    match (indexed, configured) {
        (ProviderConfig::DeterministicHash { dim: a }, ProviderConfig::DeterministicHash { dim: b }) => a == b,
        // Endpoints may move; the models must not.
        (ProviderConfig::ExternalService { models: a, .. }, ProviderConfig::ExternalService { models: b, .. }) => a == b,
        _ => false,
    }
}

impl Engine {
    /// Fails if `provider` would produce vectors incomparable with the indexed ones.
    pub fn new(snapshot: Arc<IndexSnapshot>, provider: Arc<dyn EmbeddingProvider>) -> Result<Self, SearchError> {
        let configured = provider.config();
        if !compatible(&snapshot.provider, &configured) {
            return Err(SearchError::ProviderMismatch {
                indexed: snapshot.provider.to_string(),
                configured: configured.to_string(),
            });
        }
        Ok(Engine {
            snapshot,
            provider,
            pipelines: PipelineRegistry::default(),
            stopwords: StopwordSet::english(),
            rrf: RrfParams::default(),
        })
    }

    pub fn with_stopwords(mut self, stopwords: StopwordSet) -> Self {
        self.stopwords = stopwords;
        self
    }

    pub fn with_rrf(mut self, rrf: RrfParams) -> Self {
        self.rrf = rrf;
        self
    }

    pub fn with_pipelines(mut self, pipelines: PipelineRegistry) -> Self {
        self.pipelines = pipelines;
        self
    }

    pub fn snapshot(&self) -> &Arc<IndexSnapshot> {
        &self.snapshot
    }

    pub fn provider(&self) -> &Arc<dyn EmbeddingProvider> {
        &self.provider
    }

    pub fn pipelines(&self) -> &PipelineRegistry {
        &self.pipelines
    }

    /// The query keywords the keyword pipeline would search for.
    pub fn keywords(&self, text: &str) -> Vec<String> {
        extract_keywords(text, &self.stopwords)
    }

    fn context(&self) -> SearchContext<'_> {
        SearchContext {
            snapshot: &self.snapshot,
            provider: self.provider.as_ref(),
            stopwords: &self.stopwords,
            rrf: self.rrf,
        }
    }

    pub fn search(&self, q: &Query) -> Result<RankedList, SearchError> {
        q.validate()?;
        self.pipelines.get(&q.pipeline)?.search(&self.context(), q)
    }

    /// Searches and attaches provenance and content to every hit.
    pub fn search_results(&self, q: &Query) -> Result<Vec<QueryResult>, SearchError> {
        let list = self.search(q)?;
        Ok(self.resolve(&list))
    }

    pub fn resolve(&self, list: &RankedList) -> Vec<QueryResult> {
        let snap = &self.snapshot;
        list.iter()
            .filter_map(|e| {
                let unit = snap.unit(e.unit_id)?;
                let content = snap.content(e.unit_id)?.clone();
                let title = snap
                    .manifest
                    .document(&unit.doc_id)
                    .map(|d| d.title.clone())
                    .unwrap_or_default();
                Some(QueryResult {
                    unit_id: e.unit_id,
                    rank: e.rank,
                    score: e.score,
                    modality: unit.modality,
                    doc_id: unit.doc_id.clone(),
                    title,
                    page_no: unit.page_no,
                    block_id: unit.block_id.clone(),
                    content,
                })
            })
            .collect()
    }

    /// The default hybrid pipeline's candidate lists and full fused ranking for `q`.
    pub fn hybrid_candidates(&self, q: &Query) -> Result<HybridCandidates, SearchError> {
        let ctx = self.context();
        let (keyword, embedding) = HybridPipeline::default().candidates(&ctx, q)?;
        let fused = rrf_fuse(&[keyword.clone(), embedding.clone()], &self.rrf, usize::MAX);
        Ok(HybridCandidates {
            keyword,
            embedding,
            fused,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed::HashProvider;
    use crate::index::{index_corpus, Bm25Params, ContextualizedDocument};
    use crate::model::{Block, ExtractedDocument, Page};
    use std::collections::BTreeSet;

    fn engine(pages: &[&str]) -> Engine {
        let mut doc = ExtractedDocument {
            doc_id: "d".into(),
            title: "Doc".into(),
            source_path: String::new(),
            pages: pages
                .iter()
                .enumerate()
                .map(|(i, t)| Page {
                    page_no: i as u32 + 1,
                    blocks: vec![Block::text_block(format!("b{i}"), *t)],
                })
                .collect(),
        };
        doc.validate().unwrap();
        let provider = Arc::new(HashProvider::new(64).unwrap());
        let snap = index_corpus(&[ContextualizedDocument { doc, bundles: vec![] }], provider.as_ref(), Bm25Params::default()).unwrap();
        Engine::new(Arc::new(snap), provider).unwrap()
    }

    #[test]
    fn keyword_toy_corpus() {
        let e = engine(&["harappan seal", "copper tools"]);
        let r = e.search(&Query::new("harappan", Modality::Text, "keyword", 5).unwrap()).unwrap();
        assert_eq!(r.unit_ids().collect::<Vec<_>>(), vec![UnitId(0)]);
        let none = e.search(&Query::new("zebu", Modality::Text, "keyword", 5).unwrap()).unwrap();
        assert!(none.is_empty());
        let img = e.search(&Query::new("harappan", Modality::Image, "keyword", 5).unwrap()).unwrap();
        assert!(img.is_empty());
    }

    #[test]
    fn embedding_self_similarity() {
        let e = engine(&["harappan seal", "copper tools", "burial pottery"]);
        let r = e.search(&Query::new("copper tools", Modality::Text, "embedding", 3).unwrap()).unwrap();
        assert_eq!(r.entries()[0].unit_id, UnitId(1));
        assert!((r.entries()[0].score - 1.0).abs() < 1e-6);
        let empty = e.search(&Query::new("x", Modality::Image, "embedding", 3).unwrap()).unwrap();
        assert!(empty.is_empty());
        let punct = e.search(&Query::new("?!", Modality::Text, "embedding", 3).unwrap()).unwrap();
        assert!(punct.is_empty());
    }

    #[test]
    fn hybrid_union_and_order() {
        let e = engine(&["harappan seal", "harappan copper", "seal impressions", "copper tools"]);
        let q = Query::new("harappan seal", Modality::Text, "hybrid", 2).unwrap();
        let c = e.hybrid_candidates(&q).unwrap();
        let union: BTreeSet<_> = c.keyword.unit_ids().chain(c.embedding.unit_ids()).collect();
        let fused: BTreeSet<_> = c.fused.unit_ids().collect();
        assert_eq!(union, fused);
        let r = e.search(&q).unwrap();
        assert_eq!(r.len(), 2);
        assert_eq!(r.entries()[0].unit_id, UnitId(0));
        assert_eq!(r.entries(), &c.fused.entries()[..2]);
    }

    #[test]
    fn unknown_pipeline_and_results() {
        let e = engine(&["harappan seal"]);
        let q = Query::new("seal", Modality::Text, "semantic", 1).unwrap();
        assert!(matches!(e.search(&q), Err(SearchError::UnknownPipeline(_))));
        let hits = e.search_results(&q.clone().with_pipeline("keyword")).unwrap();
        assert_eq!((hits[0].title.as_str(), hits[0].page_no), ("Doc", 1));
    }

    #[test]
    fn provider_mismatch_rejected() {
        let e = engine(&["x"]);
        let other = Arc::new(HashProvider::new(8).unwrap());
        assert!(matches!(
            Engine::new(e.snapshot().clone(), other),
            Err(SearchError::ProviderMismatch { .. })
        ));
    }
}
