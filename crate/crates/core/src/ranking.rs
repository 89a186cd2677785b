use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

/// Dense identifier of an index unit (a page, image or table).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct UnitId(pub u32);

impl UnitId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for UnitId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankedEntry {
    pub unit_id: UnitId,
    pub score: f64,
    /// 1-based.
    pub rank: u32,
}

/// Results ordered by score (descending), ranks consecutive from 1.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RankedList {
    entries: Vec<RankedEntry>,
}

/// Score descending, then unit id ascending.
pub fn by_score_then_id(a: &(UnitId, f64), b: &(UnitId, f64)) -> Ordering {
    b.1.total_cmp(&a.1).then(a.0.cmp(&b.0))
}

impl RankedList {
    /// Sorts, truncates to `k` and assigns ranks.
    pub fn from_scored(mut scored: Vec<(UnitId, f64)>, k: usize) -> Self {
        scored.sort_by(by_score_then_id);
        scored.truncate(k);
        RankedList {
            entries: scored
                .into_iter()
                .enumerate()
                .map(|(i, (unit_id, score))| RankedEntry {
                    unit_id,
                    score,
                    rank: i as u32 + 1,
                })
                .collect(),
        }
    }

    pub fn entries(&self) -> &[RankedEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn unit_ids(&self) -> impl Iterator<Item = UnitId> + '_ {
        self.entries.iter().map(|e| e.unit_id)
    }

    pub fn rank_of(&self, unit: UnitId) -> Option<u32> {
        self.entries.iter().find(|e| e.unit_id == unit).map(|e| e.rank)
    }

    pub fn truncated(mut self, k: usize) -> Self {
        self.entries.truncate(k);
        self
    }

    pub fn iter(&self) -> std::slice::Iter<'_, RankedEntry> {
        self.entries.iter()
    }
}

impl<'a> IntoIterator for &'a RankedList {
    type Item = &'a RankedEntry;
    type IntoIter = std::slice::Iter<'a, RankedEntry>;

    fn into_iter(self) -> Self::IntoIter {
        self.entries.iter()
    }
}
