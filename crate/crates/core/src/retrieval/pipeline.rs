use std::collections::BTreeMap;
use std::sync::Arc;

use super::{extract_keywords, rrf_fuse, Query, RrfParams, SearchError};
use crate::embed::{EmbeddingProvider, ProviderError};
use crate::index::{keyword_topk, vector_topk, IndexSnapshot};
use crate::ranking::RankedList;
use crate::text::StopwordSet;

/// Per-list depth fed into rank fusion when `k` is smaller.
pub const CANDIDATE_DEPTH: usize = 50;

/// Everything a pipeline reads; all of it is shared and immutable.
#[derive(Clone, Copy)]
pub struct SearchContext<'a> {
    pub snapshot: &'a IndexSnapshot,
    pub provider: &'a dyn EmbeddingProvider,
    pub stopwords: &'a StopwordSet,
    pub rrf: RrfParams,
}

pub trait SearchPipeline: Send + Sync {
    fn name(&self) -> &str;

    /// Top `q.k` units of `q.modality`.
    fn search(&self, ctx: &SearchContext<'_>, q: &Query) -> Result<RankedList, SearchError>;
}

#[derive(Debug, Default, Clone, Copy)]
pub struct KeywordPipeline;

impl KeywordPipeline {
    pub const NAME: &'static str = "keyword";
}

impl SearchPipeline for KeywordPipeline {
    fn name(&self) -> &str {
        Self::NAME
    }

    fn search(&self, ctx: &SearchContext<'_>, q: &Query) -> Result<RankedList, SearchError> {
        q.validate()?;
        let terms = extract_keywords(&q.text, ctx.stopwords);
        Ok(keyword_topk(&terms, q.modality, q.k, &ctx.snapshot.index, &ctx.snapshot.bm25)?)
    }
}

#[derive(Debug, Default, Clone, Copy)]
pub struct EmbeddingPipeline;

impl EmbeddingPipeline {
    pub const NAME: &'static str = "embedding";
}

impl SearchPipeline for EmbeddingPipeline {
    fn name(&self) -> &str {
        Self::NAME
    }

    fn search(&self, ctx: &SearchContext<'_>, q: &Query) -> Result<RankedList, SearchError> {
        q.validate()?;
        let store = ctx.snapshot.stores.get(q.modality).ok_or(SearchError::MissingStore(q.modality))?;
        let query_vec = match ctx.provider.embed_text(&q.text, q.modality) {
            Ok(v) => v,
            // Nothing embeddable (e.g. only punctuation) matches nothing.
            Err(ProviderError::NoTokens) => return Ok(RankedList::default()),
            Err(e) => return Err(e.into()),
        };
        Ok(vector_topk(&query_vec, q.k, store)?)
    }
}

/// Fuses two sub-pipelines by reciprocal rank, each searched to depth `max(k, 50)`.
#[derive(Clone)]
pub struct HybridPipeline {
    keyword: Arc<dyn SearchPipeline>,
    embedding: Arc<dyn SearchPipeline>,
}

impl Default for HybridPipeline {
    fn default() -> Self {
        HybridPipeline::new(Arc::new(KeywordPipeline), Arc::new(EmbeddingPipeline))
    }
}

impl HybridPipeline {
    pub const NAME: &'static str = "hybrid";

    pub fn new(keyword: Arc<dyn SearchPipeline>, embedding: Arc<dyn SearchPipeline>) -> Self {
        HybridPipeline { keyword, embedding }
    }

    /// Both candidate lists at fusion depth. The searches run in parallel and
    /// either failure fails the whole query.
    pub fn candidates(&self, ctx: &SearchContext<'_>, q: &Query) -> Result<(RankedList, RankedList), SearchError> {
        q.validate()?;
        let deep = q.with_k(q.k.max(CANDIDATE_DEPTH));
        let (kw, emb) = std::thread::scope(|s| {
            let kw = s.spawn(|| self.keyword.search(ctx, &deep));
            let emb = self.embedding.search(ctx, &deep);
            (kw.join().expect("keyword search panicked"), emb)
        });
        Ok((kw?, emb?))
    }
}

impl SearchPipeline for HybridPipeline {
    fn name(&self) -> &str {
        Self::NAME
    }

    fn search(&self, ctx: &SearchContext<'_>, q: &Query) -> Result<RankedList, SearchError> {
        let (kw, emb) = self.candidates(ctx, q)?;
        Ok(rrf_fuse(&[kw, emb], &ctx.rrf, q.k))
    }
}

/// Pipelines selectable by name at query time.
#[derive(Clone)]
pub struct PipelineRegistry {
    pipelines: BTreeMap<String, Arc<dyn SearchPipeline>>,
}

impl PipelineRegistry {
    pub fn empty() -> Self {
        PipelineRegistry {
            pipelines: BTreeMap::new(),
        }
    }

    pub fn register(&mut self, pipeline: Arc<dyn SearchPipeline>) {
        self.pipelines.insert(pipeline.name().to_owned(), pipeline);
    }

    pub fn get(&self, name: &str) -> Result<&Arc<dyn SearchPipeline>, SearchError> {
        self.pipelines
            .get(name)
            .ok_or_else(|| SearchError::UnknownPipeline(name.to_owned()))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.pipelines.keys().map(String::as_str)
    }
}

impl Default for PipelineRegistry {
    fn default() -> Self {
        let mut r = PipelineRegistry::empty();
        r.register(Arc::new(KeywordPipeline));
        r.register(Arc::new(EmbeddingPipeline));
        r.register(Arc::new(HybridPipeline::default()));
        r
    }
}
