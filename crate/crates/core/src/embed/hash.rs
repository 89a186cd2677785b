use super::{Embedding, EmbeddingProvider, ProviderConfig, ProviderError};
use crate::model::{ImageKind, Modality};
use crate::text::tokenize;

pub const DEFAULT_HASH_DIM: usize = 256;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

pub fn fnv1a64(bytes: impl IntoIterator<Item = u8>) -> u64 {
    bytes.into_iter().fold(FNV_OFFSET, |h, b| {
        (h ^ b as u64).wrapping_mul(FNV_PRIME)
    })
}

fn modality_tag(m: Modality) -> u8 {
    match m {
        Modality::Text => 0x01,
        Modality::Image => 0x02,
        Modality::Table => 0x03,
    }
}

/// Signed feature hashing over lowercase tokens, seeded per modality.
///
/// Each token hashes as FNV-1a 64 over `tag ++ utf8(token)`; the slot is
/// `hash % dim` and the sign is `+1` for even hashes, `-1` for odd.
#[derive(Debug, Clone)]
pub struct HashProvider {
    dim: usize,
}

impl HashProvider {
    pub const NAME: &'static str = "hash";

    pub fn new(dim: usize) -> Result<Self, ProviderError> {
        if dim == 0 {
            return Err(ProviderError::Config("hash dimension must be positive".into()));
        }
        Ok(HashProvider { dim })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn embed(&self, text: &str, modality: Modality) -> Result<Embedding, ProviderError> {
        if text.trim().is_empty() {
            return Err(ProviderError::EmptyText);
        }
        let tag = modality_tag(modality);
        let mut acc = vec![0.0f64; self.dim];
        for token in tokenize(text) {
            let h = fnv1a64(std::iter::once(tag).chain(token.bytes()));
            let slot = (h % self.dim as u64) as usize;
            acc[slot] += if h % 2 == 0 { 1.0 } else { -1.0 };
        }
        Embedding::normalized(&acc, modality).ok_or(ProviderError::NoTokens)
    }
}

impl EmbeddingProvider for HashProvider {
    fn config(&self) -> ProviderConfig {
        ProviderConfig::DeterministicHash { dim: self.dim }
    }

    fn embed_batch(&self, texts: &[&str], modality: Modality) -> Result<Vec<Embedding>, ProviderError> {
        texts.iter().map(|t| self.embed(t, modality)).collect()
    }

    fn classify_image_kind(&self, image_context: &str) -> Result<ImageKind, ProviderError> {
        Ok(classify_by_keywords(image_context))
    }
}

// Listed in tie-break priority order.
const KIND_KEYWORDS: &[(ImageKind, &[&str])] = &[
    (
        ImageKind::Map,
        &["map", "maps", "sites", "scale", "river", "rivers", "region", "distribution", "route", "routes"],
    ),
    (
        ImageKind::Photograph,
        &["photograph", "photographs", "photo", "photos", "view", "closeup"],
    ),
    (
        ImageKind::SiteLayout,
        &["plan", "layout", "trench", "trenches", "excavated", "section", "grid", "stratigraphy"],
    ),
];

/// Keyword-vote stand-in for a zero-shot image classifier.
///
/// Most hits wins; ties go to the earlier class (Map, Photograph, SiteLayout);
/// no hits at all means `Figure`.
pub fn classify_by_keywords(image_context: &str) -> ImageKind {
    let tokens = tokenize(image_context);
    let mut best = (0usize, ImageKind::Figure);
    for (kind, words) in KIND_KEYWORDS {
        let hits = tokens.iter().filter(|t| words.contains(&t.as_str())).count();
        if hits > best.0 {
            best = (hits, *kind);
        }
    }
    best.1
}
