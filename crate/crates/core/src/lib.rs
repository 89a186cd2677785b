//! Multimodal search over scanned archive documents.
//!
//! Layout-parsed pages come in through [`model`], images and tables get their
//! surrounding text attached by [`context`], everything is embedded through
//! an [`embed::EmbeddingProvider`] and indexed by [`index`], and queries run
//! through the keyword, embedding and hybrid pipelines of [`retrieval`].
//! [`eval`] scores those pipelines against relevance judgments and
//! [`imaging`] holds the scan clean-up filters.

pub mod context;
pub mod embed;
pub mod eval;
pub mod imaging;
pub mod index;
pub mod ingest;
pub mod model;
pub mod ranking;
pub mod retrieval;
pub mod text;

pub use embed::{EmbeddingProvider, ProviderConfig, ProviderRegistry};
pub use index::IndexSnapshot;
pub use model::{ExtractedDocument, ImageKind, Modality};
pub use ranking::{RankedList, UnitId};
pub use retrieval::{Engine, Query};
