//! Embedding providers.
//!
//! Every modality-specific model (sentence encoder for pages, CLIP-style
//! encoder for images, table encoder) sits behind [`EmbeddingProvider`].
//! Providers are selected by name through [`ProviderRegistry`]; the built-in
//! ones are the offline [`HashProvider`] and the HTTP [`ExternalProvider`].

mod external;
mod hash;

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ImageKind, Modality, TableData};

pub use external::ExternalProvider;
pub use hash::{classify_by_keywords, fnv1a64, HashProvider, DEFAULT_HASH_DIM};

/// Maximum texts per request to an external provider.
pub const MAX_BATCH: usize = 64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProviderError {
    #[error("cannot embed empty text")]
    EmptyText,
    #[error("text has no tokens to embed")]
    NoTokens,
    #[error("embedding service {endpoint} failed (status {status:?}): {message}")]
    Transport {
        endpoint: String,
        status: Option<u16>,
        message: String,
    },
    #[error("embedding service {endpoint} returned an invalid response: {message}")]
    BadResponse { endpoint: String, message: String },
    #[error("unknown provider `{0}`")]
    UnknownProvider(String),
    #[error("invalid provider configuration: {0}")]
    Config(String),
}

impl ProviderError {
    /// Transport failures may succeed on retry; everything else will not.
    pub fn is_retriable(&self) -> bool {
        matches!(self, ProviderError::Transport { .. })
    }
}

/// A unit-norm embedding tagged with the modality it was produced for.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    pub vector: Vec<f32>,
    pub modality: Modality,
}

impl Embedding {
    /// L2-normalizes `raw`; fails if it is all zeros or not finite.
    pub fn normalized(raw: &[f64], modality: Modality) -> Option<Self> {
        let norm = raw.iter().map(|x| x * x).sum::<f64>().sqrt();
        if !(norm > 0.0 && norm.is_finite()) {
            return None;
        }
        Some(Embedding {
            vector: raw.iter().map(|x| (x / norm) as f32).collect(),
            modality,
        })
    }

    pub fn dim(&self) -> usize {
        self.vector.len()
    }

    pub fn dot(&self, other: &[f32]) -> f64 {
        dot(&self.vector, other)
    }
}

/// f32 inputs accumulated in f64, left to right.
pub fn dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(x, y)| *x as f64 * *y as f64).sum()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelNames {
    pub text: String,
    pub image: String,
    pub table: String,
}

impl Default for ModelNames {
    fn default() -> Self {
        ModelNames {
            text: "all-MiniLM-L6-v2".into(),
            image: "clip-vit-base-patch32".into(),
            table: "tapas-base".into(),
        }
    }
}

impl ModelNames {
    pub fn for_modality(&self, m: Modality) -> &str {
        match m {
            Modality::Text => &self.text,
            Modality::Image => &self.image,
            Modality::Table => &self.table,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProviderConfig {
    DeterministicHash { dim: usize },
    ExternalService { endpoint: String, models: ModelNames },
}

impl Default for ProviderConfig {
    fn default() -> Self {
        ProviderConfig::DeterministicHash {
            dim: DEFAULT_HASH_DIM,
        }
    }
}

impl ProviderConfig {
    /// Registry key of the provider this configures.
    pub fn provider_name(&self) -> &'static str {
        match self {
            ProviderConfig::DeterministicHash { .. } => HashProvider::NAME,
            ProviderConfig::ExternalService { .. } => ExternalProvider::NAME,
        }
    }
}

impl fmt::Display for ProviderConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProviderConfig::DeterministicHash { dim } => write!(f, "hash(dim={dim})"),
            ProviderConfig::ExternalService { endpoint, .. } => write!(f, "external({endpoint})"),
        }
    }
}

pub trait EmbeddingProvider: Send + Sync {
    fn config(&self) -> ProviderConfig;

    /// Embeds each text for `modality`; output order matches input order.
    fn embed_batch(&self, texts: &[&str], modality: Modality) -> Result<Vec<Embedding>, ProviderError>;

    fn embed_text(&self, text: &str, modality: Modality) -> Result<Embedding, ProviderError> {
        let mut out = self.embed_batch(&[text], modality)?;
        out.pop().ok_or(ProviderError::NoTokens)
    }

    fn classify_image_kind(&self, image_context: &str) -> Result<ImageKind, ProviderError>;

    /// Model-written caption for a table that has none. `None` keeps the
    /// deterministic summary.
    fn summarize_table(&self, _table: &TableData) -> Option<String> {
        None
    }
}

pub type ProviderFactory = fn(&ProviderConfig) -> Result<Arc<dyn EmbeddingProvider>, ProviderError>;

/// Provider constructors keyed by name.
#[derive(Clone)]
pub struct ProviderRegistry {
    factories: BTreeMap<String, ProviderFactory>,
}

impl ProviderRegistry {
    pub fn empty() -> Self {
        ProviderRegistry {
            factories: BTreeMap::new(),
        }
    }

    pub fn register(&mut self, name: impl Into<String>, factory: ProviderFactory) {
        self.factories.insert(name.into(), factory);
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.factories.keys().map(String::as_str)
    }

    pub fn create(&self, config: &ProviderConfig) -> Result<Arc<dyn EmbeddingProvider>, ProviderError> {
        let name = config.provider_name();
        let factory = self
            .factories
            .get(name)
            .ok_or_else(|| ProviderError::UnknownProvider(name.to_owned()))?;
        factory(config)
    }
}

impl Default for ProviderRegistry {
    fn default() -> Self {
        let mut r = ProviderRegistry::empty();
        r.register(HashProvider::NAME, |c| match c {
            ProviderConfig::DeterministicHash { dim } => Ok(Arc::new(HashProvider::new(*dim)?)),
            _ => Err(ProviderError::Config("expected a deterministic_hash config".into())),
        });
        r.register(ExternalProvider::NAME, |c| match c {
            ProviderConfig::ExternalService { endpoint, models } => {
                Ok(Arc::new(ExternalProvider::new(endpoint.clone(), models.clone())?))
            }
            _ => Err(ProviderError::Config("expected an external_service config".into())),
        });
        r
    }
}
