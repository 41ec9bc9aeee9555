use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedEntry {
    pub passage_id: String,
    pub score: f64,
}

/// Results in descending score order, ties broken by ascending passage id.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RankedList {
    pub entries: Vec<RankedEntry>,
}

/// Total order used by every ranked list: higher score first, then smaller id.
pub fn rank_order(a_score: f64, a_id: &str, b_score: f64, b_id: &str) -> Ordering {
    b_score.total_cmp(&a_score).then_with(|| a_id.cmp(b_id))
}

impl RankedList {
    /// Sorts arbitrary `(id, score)` candidates and keeps the best `k`.
    pub fn top_k(candidates: impl IntoIterator<Item = (String, f64)>, k: usize) -> Self {
        let mut entries: Vec<RankedEntry> = candidates
            .into_iter()
            .map(|(passage_id, score)| RankedEntry { passage_id, score })
            .collect();
        entries.sort_by(|a, b| rank_order(a.score, &a.passage_id, b.score, &b.passage_id));
        entries.truncate(k);
        RankedList { entries }
    }

    /// Wraps entries that are already in rank order (e.g. read from a run file).
    pub fn from_ordered(entries: Vec<RankedEntry>) -> Self {
        RankedList { entries }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.passage_id.as_str())
    }

    pub fn iter(&self) -> std::slice::Iter<'_, RankedEntry> {
        self.entries.iter()
    }
}
