//! Offline pipeline: parse, clean, contextualize, classify, embed, index.

use std::fs;
use std::path::{Path, PathBuf};

use log::{info, warn};
use thiserror::Error;

use crate::context::{clean_document, contextualize_document, ContextError, Lexicon};
use crate::embed::{EmbeddingProvider, ProviderError};
use crate::index::{index_corpus, Bm25Params, ContextualizedDocument, IndexError, IndexSnapshot};
use crate::model::{parse_extraction_file, ExtractedDocument, Modality, ModelError, TableData};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("reading {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parsing {path}: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: ModelError,
    },
    #[error("contextualizing {doc_id}: {source}")]
    Context {
        doc_id: String,
        #[source]
        source: ContextError,
    },
    #[error("classifying {doc_id} block `{block_id}`: {source}")]
    Classify {
        doc_id: String,
        block_id: String,
        #[source]
        source: ProviderError,
    },
    #[error("indexing: {0}")]
    Index(#[from] IndexError),
}

#[derive(Debug, Clone, Default)]
pub struct IngestOptions {
    /// Domain lexicon for OCR spelling correction; none disables correction.
    pub lexicon: Option<Lexicon>,
    /// Replace upstream image kinds with the provider's classification.
    pub reclassify: bool,
    pub bm25: Bm25Params,
}

/// Every `*.json` file directly in `dir`, in file-name order.
pub fn load_corpus_dir(dir: &Path) -> Result<Vec<ExtractedDocument>, IngestError> {
    let io = |source| IngestError::Io {
        path: dir.to_owned(),
        source,
    };
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io)?
        .map(|e| e.map(|e| e.path()))
        .collect::<Result<_, _>>()
        .map_err(io)?;
    paths.retain(|p| p.is_file() && p.extension().is_some_and(|e| e == "json"));
    paths.sort();
    if paths.is_empty() {
        warn!("{}: no .json extraction files", dir.display());
    }
    paths.iter().map(|p| load_document(p)).collect()
}

pub fn load_document(path: &Path) -> Result<ExtractedDocument, IngestError> {
    let bytes = fs::read(path).map_err(|source| IngestError::Io {
        path: path.to_owned(),
        source,
    })?;
    parse_extraction_file(&bytes).map_err(|source| IngestError::Parse {
        path: path.to_owned(),
        source,
    })
}

/// Cleans a document and builds the context bundle of each image and table.
/// Image kinds are (re)classified from the bundle text when requested.
pub fn contextualize(
    doc: &ExtractedDocument,
    provider: &dyn EmbeddingProvider,
    opts: &IngestOptions,
) -> Result<ContextualizedDocument, IngestError> {
    let ctx_err = |source| IngestError::Context {
        doc_id: doc.doc_id.clone(),
        source,
    };
    let mut cleaned = clean_document(doc, opts.lexicon.as_ref()).map_err(ctx_err)?;
    let summarize = |t: &TableData| provider.summarize_table(t);
    let bundles = contextualize_document(&cleaned, Some(&summarize)).map_err(ctx_err)?;

    let mut bundle_iter = bundles.iter();
    for block in cleaned.pages.iter_mut().flat_map(|p| p.blocks.iter_mut()) {
        if block.kind == Modality::Text {
            continue;
        }
        let bundle = bundle_iter.next().expect("one bundle per non-text block");
        if block.kind == Modality::Image && opts.reclassify {
            let kind = provider
                .classify_image_kind(&bundle.combined_text)
                .map_err(|source| IngestError::Classify {
                    doc_id: doc.doc_id.clone(),
                    block_id: block.block_id.clone(),
                    source,
                })?;
            block.image_kind = Some(kind);
        }
        block.context = Some(bundle.clone());
    }
    Ok(ContextualizedDocument { doc: cleaned, bundles })
}

pub fn ingest_documents(
    docs: &[ExtractedDocument],
    provider: &dyn EmbeddingProvider,
    opts: &IngestOptions,
) -> Result<IndexSnapshot, IngestError> {
    let prepared = docs
        .iter()
        .map(|d| contextualize(d, provider, opts))
        .collect::<Result<Vec<_>, _>>()?;
    let snapshot = index_corpus(&prepared, provider, opts.bm25)?;
    let m = &snapshot.manifest;
    info!(
        "indexed {} documents, {} pages, {} images, {} tables ({} units)",
        m.num_documents,
        m.num_pages,
        m.num_images,
        m.num_tables,
        snapshot.index.units().len()
    );
    Ok(snapshot)
}

pub fn ingest_dir(dir: &Path, provider: &dyn EmbeddingProvider, opts: &IngestOptions) -> Result<IndexSnapshot, IngestError> {
    ingest_documents(&load_corpus_dir(dir)?, provider, opts)
}
