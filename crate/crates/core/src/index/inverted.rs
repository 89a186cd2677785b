use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::IndexError;
use crate::model::Modality;
use crate::ranking::{RankedList, UnitId};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Bm25Params { k1: 1.2, b: 0.75 }
    }
}

impl Bm25Params {
    pub fn new(k1: f64, b: f64) -> Result<Self, IndexError> {
        if !(k1 >= 0.0 && k1.is_finite()) || !(0.0..=1.0).contains(&b) {
            return Err(IndexError::InvalidParams(format!("k1={k1}, b={b}")));
        }
        Ok(Bm25Params { k1, b })
    }
}

/// Metadata of one retrievable unit. Text units are whole pages.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexUnit {
    pub unit_id: UnitId,
    pub modality: Modality,
    pub doc_id: String,
    pub page_no: u32,
    pub block_id: Option<String>,
    pub token_count: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Posting {
    pub unit_id: UnitId,
    pub tf: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PostingList {
    entries: Vec<Posting>,
    // Units containing the term, per modality partition.
    doc_freq: [u32; 3],
}

impl PostingList {
    pub fn entries(&self) -> &[Posting] {
        &self.entries
    }

    pub fn doc_freq(&self, modality: Modality) -> u32 {
        self.doc_freq[modality.index()]
    }

    fn tf(&self, unit: UnitId) -> Option<u32> {
        self.entries
            .binary_search_by_key(&unit, |p| p.unit_id)
            .ok()
            .map(|i| self.entries[i].tf)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
struct PartitionStats {
    units: u32,
    total_tokens: u64,
}

impl PartitionStats {
    fn avg_len(&self) -> f64 {
        if self.units == 0 {
            0.0
        } else {
            self.total_tokens as f64 / self.units as f64
        }
    }
}

/// Term → postings over all units, with BM25 statistics kept per modality.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct InvertedIndex {
    units: Vec<IndexUnit>,
    postings: BTreeMap<String, PostingList>,
    partitions: [PartitionStats; 3],
}

impl InvertedIndex {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a unit; ids are assigned densely in insertion order.
    pub fn add_unit(
        &mut self,
        modality: Modality,
        doc_id: &str,
        page_no: u32,
        block_id: Option<&str>,
        tokens: &[String],
    ) -> Result<UnitId, IndexError> {
        if tokens.is_empty() {
            return Err(IndexError::EmptyUnit {
                doc_id: doc_id.to_owned(),
                page_no,
                block_id: block_id.map(str::to_owned),
            });
        }
        let unit_id = UnitId(self.units.len() as u32);
        let mut tf: HashMap<&str, u32> = HashMap::new();
        for t in tokens {
            *tf.entry(t.as_str()).or_default() += 1;
        }
        for (term, count) in tf {
            let list = self.postings.entry(term.to_owned()).or_default();
            list.entries.push(Posting { unit_id, tf: count });
            list.doc_freq[modality.index()] += 1;
        }
        let stats = &mut self.partitions[modality.index()];
        stats.units += 1;
        stats.total_tokens += tokens.len() as u64;
        self.units.push(IndexUnit {
            unit_id,
            modality,
            doc_id: doc_id.to_owned(),
            page_no,
            block_id: block_id.map(str::to_owned),
            token_count: tokens.len() as u32,
        });
        Ok(unit_id)
    }

    /// Rebuilds an index from persisted units and postings, re-deriving statistics.
    pub fn from_parts(
        units: Vec<IndexUnit>,
        postings: Vec<(String, Vec<Posting>)>,
    ) -> Result<Self, IndexError> {
        let mut partitions = [PartitionStats::default(); 3];
        for (i, u) in units.iter().enumerate() {
            if u.unit_id.index() != i || u.token_count == 0 {
                return Err(IndexError::Corrupt(format!("bad unit record at position {i}")));
            }
            let p = &mut partitions[u.modality.index()];
            p.units += 1;
            p.total_tokens += u.token_count as u64;
        }
        let mut map = BTreeMap::new();
        for (term, entries) in postings {
            let mut doc_freq = [0u32; 3];
            for (i, p) in entries.iter().enumerate() {
                let unit = units
                    .get(p.unit_id.index())
                    .ok_or_else(|| IndexError::Corrupt(format!("posting for `{term}` references unknown unit {}", p.unit_id)))?;
                if p.tf == 0 || (i > 0 && entries[i - 1].unit_id >= p.unit_id) {
                    return Err(IndexError::Corrupt(format!("posting list for `{term}` is not strictly increasing")));
                }
                doc_freq[unit.modality.index()] += 1;
            }
            if map.insert(term.clone(), PostingList { entries, doc_freq }).is_some() {
                return Err(IndexError::Corrupt(format!("duplicate term `{term}`")));
            }
        }
        Ok(InvertedIndex {
            units,
            postings: map,
            partitions,
        })
    }

    pub fn units(&self) -> &[IndexUnit] {
        &self.units
    }

    pub fn unit(&self, id: UnitId) -> Option<&IndexUnit> {
        self.units.get(id.index())
    }

    pub fn postings(&self) -> impl Iterator<Item = (&str, &PostingList)> {
        self.postings.iter().map(|(t, p)| (t.as_str(), p))
    }

    pub fn posting_list(&self, term: &str) -> Option<&PostingList> {
        self.postings.get(term)
    }

    pub fn num_units(&self, modality: Modality) -> u32 {
        self.partitions[modality.index()].units
    }

    pub fn avg_len(&self, modality: Modality) -> f64 {
        self.partitions[modality.index()].avg_len()
    }

    fn idf(&self, list: &PostingList, modality: Modality) -> f64 {
        let n = self.num_units(modality) as f64;
        let nt = list.doc_freq(modality) as f64;
        (1.0 + (n - nt + 0.5) / (nt + 0.5)).ln()
    }

    fn term_weight(&self, idf: f64, tf: u32, unit: &IndexUnit, p: &Bm25Params) -> f64 {
        let tf = tf as f64;
        let norm = 1.0 - p.b + p.b * unit.token_count as f64 / self.avg_len(unit.modality);
        idf * tf * (p.k1 + 1.0) / (tf + p.k1 * norm)
    }
}

/// BM25 of one unit, with corpus statistics from the unit's modality partition.
///
/// Every occurrence in `query_terms` contributes, so repeated terms count repeatedly.
pub fn bm25_score(
    query_terms: &[String],
    unit_id: UnitId,
    index: &InvertedIndex,
    p: &Bm25Params,
) -> Result<f64, IndexError> {
    let unit = index.unit(unit_id).ok_or(IndexError::UnknownUnit(unit_id))?;
    let mut score = 0.0;
    for term in query_terms {
        let Some(list) = index.posting_list(term) else {
            continue;
        };
        if let Some(tf) = list.tf(unit_id) {
            score += index.term_weight(index.idf(list, unit.modality), tf, unit, p);
        }
    }
    Ok(score)
}

/// Top-`k` units of `modality` by BM25, ties broken by lower unit id; zero scores dropped.
pub fn keyword_topk(
    query_terms: &[String],
    modality: Modality,
    k: usize,
    index: &InvertedIndex,
    p: &Bm25Params,
) -> Result<RankedList, IndexError> {
    if k == 0 {
        return Err(IndexError::InvalidK);
    }
    let mut acc: HashMap<UnitId, f64> = HashMap::new();
    for term in query_terms {
        let Some(list) = index.posting_list(term) else {
            continue;
        };
        if list.doc_freq(modality) == 0 {
            continue;
        }
        let idf = index.idf(list, modality);
        for posting in list.entries() {
            let unit = &index.units[posting.unit_id.index()];
            if unit.modality == modality {
                *acc.entry(posting.unit_id).or_insert(0.0) += index.term_weight(idf, posting.tf, unit, p);
            }
        }
    }
    let scored = acc.into_iter().filter(|(_, s)| *s > 0.0).collect();
    Ok(RankedList::from_scored(scored, k))
}
