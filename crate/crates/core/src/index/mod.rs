//! Keyword index, vector stores, and the immutable snapshot that bundles them.

mod inverted;
mod persist;
mod vector;

use std::collections::HashMap;

use log::debug;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embed::{EmbeddingProvider, ProviderConfig, ProviderError, MAX_BATCH};
use crate::model::{
    build_manifest, ContextBundle, CorpusManifest, ExtractedDocument, ImageKind, Modality, ModelError,
};
use crate::ranking::UnitId;
use crate::text::tokenize;

pub use inverted::{bm25_score, keyword_topk, Bm25Params, IndexUnit, InvertedIndex, Posting, PostingList};
pub use persist::{load, persist, read_snapshot, write_snapshot, FORMAT_VERSION, MAGIC};
pub use vector::{vector_topk, VectorStore, VectorStores};

#[derive(Debug, Error)]
pub enum IndexError {
    #[error("k must be at least 1")]
    InvalidK,
    #[error("unknown unit {0}")]
    UnknownUnit(UnitId),
    #[error("vector dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("unit for {doc_id} page {page_no} block {block_id:?} has no indexable text")]
    EmptyUnit {
        doc_id: String,
        page_no: u32,
        block_id: Option<String>,
    },
    #[error("{doc_id}: block `{block_id}` has no context bundle")]
    MissingBundle { doc_id: String, block_id: String },
    #[error("embedding failed for {doc_id} page {page_no} block {block_id:?}: {source}")]
    Embedding {
        doc_id: String,
        page_no: u32,
        block_id: Option<String>,
        #[source]
        source: Box<ProviderError>,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("index file is corrupt: {0}")]
    Corrupt(String),
    #[error("unsupported index format version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error("not an index file (bad magic header)")]
    BadMagic,
    #[error("index i/o: {0}")]
    Io(#[from] std::io::Error),
}

/// What a result displays, beyond its provenance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "modality", rename_all = "lowercase")]
pub enum UnitContent {
    Text {
        text: String,
    },
    Image {
        image_kind: ImageKind,
        caption: Option<String>,
        context: String,
    },
    Table {
        header: Vec<String>,
        rows: Vec<Vec<String>>,
        caption: Option<String>,
        context: String,
    },
}

/// A cleaned document together with the bundles of its image and table blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextualizedDocument {
    pub doc: ExtractedDocument,
    pub bundles: Vec<ContextBundle>,
}

/// Everything a query needs, immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct IndexSnapshot {
    pub index: InvertedIndex,
    pub stores: VectorStores,
    pub manifest: CorpusManifest,
    /// Indexed by unit id.
    pub contents: Vec<UnitContent>,
    pub bm25: Bm25Params,
    pub provider: ProviderConfig,
}

impl IndexSnapshot {
    pub fn empty(provider: ProviderConfig, dim: usize) -> Result<Self, IndexError> {
        Ok(IndexSnapshot {
            index: InvertedIndex::new(),
            stores: VectorStores::with_dim(dim)?,
            manifest: CorpusManifest::default(),
            contents: Vec::new(),
            bm25: Bm25Params::default(),
            provider,
        })
    }

    pub fn unit(&self, id: UnitId) -> Option<&IndexUnit> {
        self.index.unit(id)
    }

    pub fn content(&self, id: UnitId) -> Option<&UnitContent> {
        self.contents.get(id.index())
    }

    /// Resolves `(doc_id, page_no, block_id)`; `None` block means the page's text unit.
    pub fn find_unit(&self, doc_id: &str, page_no: u32, block_id: Option<&str>) -> Option<UnitId> {
        self.index
            .units()
            .iter()
            .find(|u| u.doc_id == doc_id && u.page_no == page_no && u.block_id.as_deref() == block_id)
            .map(|u| u.unit_id)
    }
}

struct PendingUnit {
    unit_id: UnitId,
    modality: Modality,
    text: String,
}

/// Builds the keyword index, per-modality vector stores and manifest.
///
/// One text unit per page (its text blocks joined), one unit per image or
/// table (its bundle's combined text). Units with no tokens are skipped.
pub fn index_corpus(
    docs: &[ContextualizedDocument],
    provider: &dyn EmbeddingProvider,
    bm25: Bm25Params,
) -> Result<IndexSnapshot, IndexError> {
    let plain: Vec<ExtractedDocument> = docs.iter().map(|d| d.doc.clone()).collect();
    let manifest = build_manifest(&plain)?;

    let mut index = InvertedIndex::new();
    let mut contents = Vec::new();
    let mut pending = Vec::new();

    for cdoc in docs {
        let doc = &cdoc.doc;
        let bundles: HashMap<&str, &ContextBundle> =
            cdoc.bundles.iter().map(|b| (b.target_block_id.as_str(), b)).collect();
        for page in &doc.pages {
            let page_text = page
                .blocks
                .iter()
                .filter(|b| b.kind == Modality::Text)
                .map(|b| b.text.trim())
                .filter(|t| !t.is_empty())
                .collect::<Vec<_>>()
                .join("\n");
            let tokens = tokenize(&page_text);
            if tokens.is_empty() {
                debug!("{} page {}: no text, not indexed", doc.doc_id, page.page_no);
            } else {
                let id = index.add_unit(Modality::Text, &doc.doc_id, page.page_no, None, &tokens)?;
                pending.push(PendingUnit { unit_id: id, modality: Modality::Text, text: page_text.clone() });
                contents.push(UnitContent::Text { text: page_text });
            }

            for block in page.blocks.iter().filter(|b| b.kind != Modality::Text) {
                let bundle = bundles.get(block.block_id.as_str()).ok_or_else(|| IndexError::MissingBundle {
                    doc_id: doc.doc_id.clone(),
                    block_id: block.block_id.clone(),
                })?;
                let tokens = tokenize(&bundle.combined_text);
                if tokens.is_empty() {
                    debug!("{} block {}: empty context, not indexed", doc.doc_id, block.block_id);
                    continue;
                }
                let id = index.add_unit(block.kind, &doc.doc_id, page.page_no, Some(&block.block_id), &tokens)?;
                pending.push(PendingUnit { unit_id: id, modality: block.kind, text: bundle.combined_text.clone() });
                contents.push(match (block.kind, &block.table) {
                    (Modality::Table, Some(t)) => UnitContent::Table {
                        header: t.header.clone(),
                        rows: t.rows.clone(),
                        caption: bundle.caption.clone(),
                        context: bundle.combined_text.clone(),
                    },
                    _ => UnitContent::Image {
                        image_kind: block.image_kind.unwrap_or(ImageKind::Figure),
                        caption: bundle.caption.clone(),
                        context: bundle.combined_text.clone(),
                    },
                });
            }
        }
    }

    let mut stores = VectorStores::new();
    for modality in Modality::ALL {
        let units: Vec<&PendingUnit> = pending.iter().filter(|u| u.modality == modality).collect();
        let mut store: Option<VectorStore> = None;
        for chunk in units.chunks(MAX_BATCH) {
            let texts: Vec<&str> = chunk.iter().map(|u| u.text.as_str()).collect();
            let embeddings = provider
                .embed_batch(&texts, modality)
                .map_err(|e| blame(chunk, &index, provider, e))?;
            for (unit, emb) in chunk.iter().zip(&embeddings) {
                let s = match &mut store {
                    Some(s) => s,
                    None => store.insert(VectorStore::new(modality, emb.dim())?),
                };
                s.insert(unit.unit_id, emb)?;
            }
        }
        let store = match store {
            Some(s) => s,
            None => VectorStore::new(modality, provider_dim(provider, &stores))?,
        };
        stores.insert_store(store);
    }

    Ok(IndexSnapshot {
        index,
        stores,
        manifest,
        contents,
        bm25,
        provider: provider.config(),
    })
}

// Dimension for a store that received no vectors: the configured one, else a sibling's.
fn provider_dim(provider: &dyn EmbeddingProvider, stores: &VectorStores) -> usize {
    match provider.config() {
        ProviderConfig::DeterministicHash { dim } => dim,
        ProviderConfig::ExternalService { .. } => stores.iter().map(|s| s.dim()).next().unwrap_or(1),
    }
}

// Narrows a batch failure down to the first unit that fails on its own.
fn blame(chunk: &[&PendingUnit], index: &InvertedIndex, provider: &dyn EmbeddingProvider, err: ProviderError) -> IndexError {
    let (unit, source) = chunk
        .iter()
        .find_map(|u| provider.embed_text(&u.text, u.modality).err().map(|e| (*u, e)))
        .unwrap_or((chunk[0], err));
    let meta = index.unit(unit.unit_id).expect("pending units are indexed");
    IndexError::Embedding {
        doc_id: meta.doc_id.clone(),
        page_no: meta.page_no,
        block_id: meta.block_id.clone(),
        source: Box::new(source),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed::HashProvider;
    use crate::model::{Block, Page, TableData};

    fn cdoc(id: &str, pages: Vec<Vec<Block>>, bundles: Vec<ContextBundle>) -> ContextualizedDocument {
        let mut doc = ExtractedDocument {
            doc_id: id.into(),
            title: id.into(),
            source_path: String::new(),
            pages: pages
                .into_iter()
                .enumerate()
                .map(|(i, blocks)| Page { page_no: i as u32 + 1, blocks })
                .collect(),
        };
        doc.validate().unwrap();
        ContextualizedDocument { doc, bundles }
    }

    #[test]
    fn empty_corpus() {
        let p = HashProvider::new(16).unwrap();
        let snap = index_corpus(&[], &p, Bm25Params::default()).unwrap();
        assert!(snap.index.units().is_empty());
        assert_eq!(snap.manifest, CorpusManifest::default());
        for m in Modality::ALL {
            assert!(snap.stores.get(m).unwrap().is_empty());
        }
    }

    #[test]
    fn stores_per_modality() {
        let table = TableData { header: vec!["Site".into()], rows: vec![vec!["Lothal".into()]], caption: None };
        let bundle = |id: &str, text: &str| ContextBundle::new(id, None, None, vec![], text.into());
        let d = cdoc(
            "d",
            vec![
                vec![Block::text_block("t1", "harappan seal harappan"), Block::image_block("i1", "", ImageKind::Map)],
                vec![Block::image_block("i2", "", ImageKind::Photograph), Block::table_block("tb", table)],
            ],
            vec![bundle("i1", "map of sites"), bundle("i2", "dancing girl"), bundle("tb", "Site Lothal")],
        );
        let p = HashProvider::new(16).unwrap();
        let snap = index_corpus(&[d], &p, Bm25Params::default()).unwrap();
        assert_eq!(snap.stores.get(Modality::Image).unwrap().len(), 2);
        assert_eq!(snap.stores.get(Modality::Table).unwrap().len(), 1);
        // Page 2 has no text blocks.
        assert_eq!(snap.stores.get(Modality::Text).unwrap().len(), 1);
        assert_eq!(snap.contents.len(), snap.index.units().len());
        assert_eq!(snap.find_unit("d", 2, Some("tb")), Some(UnitId(3)));
        assert_eq!(snap.find_unit("d", 1, None), Some(UnitId(0)));
        let (m, n) = (&snap.manifest, snap.manifest.num_images);
        assert_eq!((m.num_documents, m.num_pages, n, m.num_tables), (1, 2, 2, 1));
    }

    #[test]
    fn missing_bundle_is_an_error() {
        let d = cdoc("d", vec![vec![Block::image_block("i1", "x", ImageKind::Map)]], vec![]);
        let p = HashProvider::new(16).unwrap();
        assert!(matches!(
            index_corpus(&[d], &p, Bm25Params::default()),
            Err(IndexError::MissingBundle { .. })
        ));
    }

    #[test]
    fn duplicate_doc_ids_rejected() {
        let d = cdoc("d", vec![vec![Block::text_block("t", "x")]], vec![]);
        let p = HashProvider::new(16).unwrap();
        assert!(matches!(
            index_corpus(&[d.clone(), d], &p, Bm25Params::default()),
            Err(IndexError::Model(ModelError::DuplicateDocId(_)))
        ));
    }

    struct Failing;

    impl EmbeddingProvider for Failing {
        fn config(&self) -> ProviderConfig {
            ProviderConfig::DeterministicHash { dim: 4 }
        }

        fn embed_batch(&self, texts: &[&str], m: Modality) -> Result<Vec<crate::embed::Embedding>, ProviderError> {
            if texts.iter().any(|t| t.contains("poison")) {
                return Err(ProviderError::Transport { endpoint: "x".into(), status: Some(500), message: "boom".into() });
            }
            HashProvider::new(4).unwrap().embed_batch(texts, m)
        }

        fn classify_image_kind(&self, _: &str) -> Result<ImageKind, ProviderError> {
            Ok(ImageKind::Figure)
        }
    }

    #[test]
    fn provider_failure_names_unit() {
        let d = cdoc(
            "d",
            vec![vec![Block::text_block("a", "fine")], vec![Block::text_block("b", "poison pill")]],
            vec![],
        );
        match index_corpus(&[d], &Failing, Bm25Params::default()) {
            Err(IndexError::Embedding { doc_id, page_no, source, .. }) => {
                assert_eq!((doc_id.as_str(), page_no), ("d", 2));
                assert!(source.is_retriable());
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
