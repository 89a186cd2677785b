use std::collections::BTreeMap;

use super::IndexError;
use crate::embed::{dot, Embedding};
use crate::model::Modality;
use crate::ranking::{RankedList, UnitId};

const NORM_TOLERANCE: f64 = 1e-4;

/// Exhaustively searched collection of unit-norm vectors for one modality.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorStore {
    modality: Modality,
    dim: usize,
    ids: Vec<UnitId>,
    // Row-major, `ids.len() * dim` floats.
    data: Vec<f32>,
}

impl VectorStore {
    pub fn new(modality: Modality, dim: usize) -> Result<Self, IndexError> {
        if dim == 0 {
            return Err(IndexError::InvalidParams("vector dimension must be positive".into()));
        }
        Ok(VectorStore {
            modality,
            dim,
            ids: Vec::new(),
            data: Vec::new(),
        })
    }

    pub fn from_parts(modality: Modality, dim: usize, ids: Vec<UnitId>, data: Vec<f32>) -> Result<Self, IndexError> {
        let mut store = VectorStore::new(modality, dim)?;
        if data.len() != ids.len() * dim {
            return Err(IndexError::Corrupt(format!(
                "{modality} store: {} floats for {} vectors of dim {dim}",
                data.len(),
                ids.len()
            )));
        }
        for (id, row) in ids.iter().zip(data.chunks(dim)) {
            store.push_raw(*id, row)?;
        }
        Ok(store)
    }

    pub fn insert(&mut self, unit_id: UnitId, emb: &Embedding) -> Result<(), IndexError> {
        if emb.modality != self.modality {
            return Err(IndexError::InvalidParams(format!(
                "{} embedding inserted into {} store",
                emb.modality, self.modality
            )));
        }
        self.push_raw(unit_id, &emb.vector)
    }

    fn push_raw(&mut self, unit_id: UnitId, v: &[f32]) -> Result<(), IndexError> {
        if v.len() != self.dim {
            return Err(IndexError::DimMismatch {
                expected: self.dim,
                got: v.len(),
            });
        }
        let norm = dot(v, v).sqrt();
        if (norm - 1.0).abs() > NORM_TOLERANCE {
            return Err(IndexError::InvalidParams(format!("vector for unit {unit_id} has norm {norm}")));
        }
        self.ids.push(unit_id);
        self.data.extend_from_slice(v);
        Ok(())
    }

    pub fn modality(&self) -> Modality {
        self.modality
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[UnitId] {
        &self.ids
    }

    pub fn raw_data(&self) -> &[f32] {
        &self.data
    }

    pub fn iter(&self) -> impl Iterator<Item = (UnitId, &[f32])> {
        self.ids.iter().copied().zip(self.data.chunks(self.dim))
    }
}

/// Exact cosine top-`k` (dot product, since vectors are unit-norm), ties by unit id.
pub fn vector_topk(query: &Embedding, k: usize, store: &VectorStore) -> Result<RankedList, IndexError> {
    if query.dim() != store.dim {
        return Err(IndexError::DimMismatch {
            expected: store.dim,
            got: query.dim(),
        });
    }
    if k == 0 {
        return Err(IndexError::InvalidK);
    }
    let scored = store.iter().map(|(id, v)| (id, query.dot(v))).collect();
    Ok(RankedList::from_scored(scored, k))
}

/// One store per modality.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct VectorStores {
    stores: BTreeMap<Modality, VectorStore>,
}

impl VectorStores {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_dim(dim: usize) -> Result<Self, IndexError> {
        let mut s = Self::new();
        for m in Modality::ALL {
            s.insert_store(VectorStore::new(m, dim)?);
        }
        Ok(s)
    }

    pub fn insert_store(&mut self, store: VectorStore) {
        self.stores.insert(store.modality, store);
    }

    pub fn get(&self, m: Modality) -> Option<&VectorStore> {
        self.stores.get(&m)
    }

    pub fn get_mut(&mut self, m: Modality) -> Option<&mut VectorStore> {
        self.stores.get_mut(&m)
    }

    pub fn iter(&self) -> impl Iterator<Item = &VectorStore> {
        self.stores.values()
    }
}
