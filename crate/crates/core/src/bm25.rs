//! Lexical retrieval: inverted index, Okapi BM25 scoring, top-k search and
//! exhaustive parameter tuning.
//!
//! ```text
//! score(q, d) = Σ_{t ∈ q} idf(t) · tf·(k1 + 1) / (tf + k1·(1 − b + b·dl/avgdl))
//! idf(t)      = ln(1 + (N − df + 0.5) / (df + 0.5))
//! ```
//!
//! Query terms are summed once per occurrence in the query, so repeated terms
//! weigh proportionally more.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{tokenize, PassageStore, TokenizedText};
use crate::error::{Error, Result};
use crate::eval::{judge, reciprocal_rank, Query};
use crate::ranking::RankedList;

const INDEX_FORMAT: &str = "okret-bm25";
const INDEX_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    /// The conventional defaults `k1 = 1.2`, `b = 0.75`.
    fn default() -> Self {
        Bm25Params { k1: 1.2, b: 0.75 }
    }
}

impl Bm25Params {
    pub fn new(k1: f64, b: f64) -> Result<Self> {
        if !(k1.is_finite() && k1 >= 0.0) {
            return Err(Error::InvalidArgument(format!("k1 must be >= 0, got {k1}")));
        }
        if !(0.0..=1.0).contains(&b) {
            return Err(Error::InvalidArgument(format!("b must be in [0, 1], got {b}")));
        }
        Ok(Bm25Params { k1, b })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Posting {
    pub doc: u32,
    pub tf: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InvertedIndex {
    postings: BTreeMap<String, Vec<Posting>>,
    doc_lengths: Vec<u32>,
    doc_ids: Vec<String>,
    avg_doc_len: f64,
}

#[inline]
pub fn idf(doc_count: usize, doc_freq: usize) -> f64 {
    let n = doc_count as f64;
    let df = doc_freq as f64;
    (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
}

#[inline]
fn term_weight(idf: f64, tf: u32, doc_len: u32, avg_doc_len: f64, params: Bm25Params) -> f64 {
    let tf = f64::from(tf);
    let norm = 1.0 - params.b + params.b * f64::from(doc_len) / avg_doc_len;
    idf * tf * (params.k1 + 1.0) / (tf + params.k1 * norm)
}

impl InvertedIndex {
    /// Indexes every passage of `store` in store order.
    pub fn build(store: &PassageStore) -> Result<Self> {
        if store.is_empty() {
            return Err(Error::Empty("cannot index an empty passage store"));
        }
        let mut postings: BTreeMap<String, Vec<Posting>> = BTreeMap::new();
        let mut doc_lengths = Vec::with_capacity(store.len());
        let mut doc_ids = Vec::with_capacity(store.len());
        for (ordinal, passage) in store.iter().enumerate() {
            let tokens = tokenize(&passage.text);
            let mut counts: BTreeMap<&str, u32> = BTreeMap::new();
            for t in tokens.iter() {
                *counts.entry(t).or_default() += 1;
            }
            for (term, tf) in counts {
                postings.entry(term.to_string()).or_default().push(Posting {
                    doc: ordinal as u32,
                    tf,
                });
            }
            doc_lengths.push(tokens.len() as u32);
            doc_ids.push(passage.id.clone());
        }
        Ok(Self::from_parts(postings, doc_lengths, doc_ids))
    }

    fn from_parts(
        postings: BTreeMap<String, Vec<Posting>>,
        doc_lengths: Vec<u32>,
        doc_ids: Vec<String>,
    ) -> Self {
        let total: u64 = doc_lengths.iter().map(|&l| u64::from(l)).sum();
        let avg_doc_len = total as f64 / doc_lengths.len() as f64;
        InvertedIndex {
            postings,
            doc_lengths,
            doc_ids,
            avg_doc_len,
        }
    }

    pub fn doc_count(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn avg_doc_len(&self) -> f64 {
        self.avg_doc_len
    }

    pub fn doc_len(&self, doc: usize) -> u32 {
        self.doc_lengths[doc]
    }

    pub fn doc_id(&self, doc: usize) -> &str {
        &self.doc_ids[doc]
    }

    pub fn postings(&self, term: &str) -> &[Posting] {
        self.postings.get(term).map_or(&[], Vec::as_slice)
    }

    pub fn doc_freq(&self, term: &str) -> usize {
        self.postings(term).len()
    }

    pub fn vocabulary(&self) -> impl Iterator<Item = &str> {
        self.postings.keys().map(String::as_str)
    }

    pub fn term_freq(&self, term: &str, doc: usize) -> u32 {
        let list = self.postings(term);
        list.binary_search_by_key(&(doc as u32), |p| p.doc)
            .map_or(0, |i| list[i].tf)
    }

    /// BM25 score of one document. Panics if `doc` is out of range.
    pub fn score(&self, params: Bm25Params, query: &TokenizedText, doc: usize) -> f64 {
        assert!(doc < self.doc_count(), "doc ordinal {doc} out of range");
        let n = self.doc_count();
        let dl = self.doc_lengths[doc];
        query
            .iter()
            .map(|term| match self.term_freq(term, doc) {
                0 => 0.0,
                tf => term_weight(idf(n, self.doc_freq(term)), tf, dl, self.avg_doc_len, params),
            })
            .sum()
    }

    /// Top-`k` documents for `query_text`. Only documents with a positive
    /// score are returned.
    pub fn search(&self, params: Bm25Params, query_text: &str, k: usize) -> RankedList {
        self.search_tokens(params, &tokenize(query_text), k)
    }

    pub fn search_tokens(&self, params: Bm25Params, query: &TokenizedText, k: usize) -> RankedList {
        if k == 0 {
            return RankedList::default();
        }
        let n = self.doc_count();
        let mut acc = vec![0.0f64; n];
        let mut touched = Vec::new();
        for term in query.iter() {
            let list = self.postings(term);
            if list.is_empty() {
                continue;
            }
            let term_idf = idf(n, list.len());
            for p in list {
                let d = p.doc as usize;
                if acc[d] == 0.0 {
                    touched.push(d);
                }
                acc[d] += term_weight(term_idf, p.tf, self.doc_lengths[d], self.avg_doc_len, params);
            }
        }
        touched.sort_unstable();
        touched.dedup();
        RankedList::top_k(
            touched
                .into_iter()
                .filter(|&d| acc[d] > 0.0)
                .map(|d| (self.doc_ids[d].clone(), acc[d])),
            k,
        )
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = IndexFile {
            format: INDEX_FORMAT.to_string(),
            version: INDEX_VERSION,
            doc_ids: self.doc_ids.clone(),
            doc_lengths: self.doc_lengths.clone(),
            postings: self.postings.clone(),
        };
        let bytes = serde_json::to_vec(&file)?;
        fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let file: IndexFile = serde_json::from_slice(&bytes)?;
        if file.format != INDEX_FORMAT || file.version != INDEX_VERSION {
            return Err(Error::Format(format!(
                "expected {INDEX_FORMAT} v{INDEX_VERSION}, found {} v{}",
                file.format, file.version
            )));
        }
        if file.doc_ids.is_empty() || file.doc_ids.len() != file.doc_lengths.len() {
            return Err(Error::Format("document tables are empty or inconsistent".into()));
        }
        let n = file.doc_ids.len() as u32;
        for (term, list) in &file.postings {
            let ordered = list.windows(2).all(|w| w[0].doc < w[1].doc);
            if !ordered || list.iter().any(|p| p.doc >= n || p.tf == 0) {
                return Err(Error::Format(format!("corrupt postings for term `{term}`")));
            }
        }
        Ok(Self::from_parts(file.postings, file.doc_lengths, file.doc_ids))
    }
}

#[derive(Serialize, Deserialize)]
struct IndexFile {
    format: String,
    version: u32,
    doc_ids: Vec<String>,
    doc_lengths: Vec<u32>,
    postings: BTreeMap<String, Vec<Posting>>,
}

/// Lexical run over `queries`. The query text is the question, followed by
/// the caption when one is given.
pub fn retrieve_bm25(
    index: &InvertedIndex,
    params: Bm25Params,
    queries: &[Query],
    k: usize,
) -> BTreeMap<String, RankedList> {
    queries
        .iter()
        .map(|q| {
            let text = match &q.caption {
                Some(c) => format!("{} {c}", q.question),
                None => q.question.clone(),
            };
            (q.query_id.clone(), index.search(params, &text, k))
        })
        .collect()
}

/// Grid `start/10, (start+step)/10, …, end/10`, endpoints inclusive.
///
/// Values are built from integer tenths so that they carry no accumulated
/// rounding error.
pub fn grid_tenths(start: u32, end: u32, step: u32) -> Vec<f64> {
    assert!(step > 0, "grid step must be positive");
    (start..=end)
        .step_by(step as usize)
        .map(|i| f64::from(i) / 10.0)
        .collect()
}

/// `k1 ∈ {0.5, 0.7, …, 1.5}`.
pub fn default_k1_grid() -> Vec<f64> {
    grid_tenths(5, 15, 2)
}

/// `b ∈ {0.2, 0.4, 0.6, 0.8}`.
pub fn default_b_grid() -> Vec<f64> {
    grid_tenths(2, 8, 2)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ValidationQuery {
    pub query_text: String,
    pub answers: Vec<String>,
}

/// Reads `{"query_text": …, "answers": […]}` lines.
pub fn load_validation(path: impl AsRef<Path>) -> Result<Vec<ValidationQuery>> {
    let path = path.as_ref();
    let content = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    content
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::MalformedRecord {
                path: path.to_path_buf(),
                line: i + 1,
                reason: e.to_string(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub k1: f64,
    pub b: f64,
    pub mrr: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TuningReport {
    pub best: Bm25Params,
    pub best_mrr: f64,
    pub cutoff: usize,
    /// Every evaluated cell, `k1`-major in grid order.
    pub cells: Vec<GridCell>,
}

/// MRR@`cutoff` of BM25 with `params` over `validation`.
pub fn validation_mrr(
    index: &InvertedIndex,
    store: &PassageStore,
    validation: &[ValidationQuery],
    params: Bm25Params,
    cutoff: usize,
) -> Result<f64> {
    let mut total = 0.0;
    for q in validation {
        let ranked = index.search(params, &q.query_text, cutoff);
        let mut relevance = Vec::with_capacity(ranked.len());
        for id in ranked.ids() {
            let text = store
                .text(id)
                .ok_or_else(|| Error::InvalidArgument(format!("index passage `{id}` not in store")))?;
            relevance.push(judge(text, &q.answers)?);
        }
        total += reciprocal_rank(&relevance, cutoff);
    }
    Ok(total / validation.len() as f64)
}

/// Exhaustive grid search for the BM25 parameters with the best MRR@`cutoff`.
///
/// Ties go to the smaller `k1`, then the smaller `b`. Cells are evaluated in
/// parallel; the result is identical to a sequential sweep.
pub fn tune_params(
    index: &InvertedIndex,
    store: &PassageStore,
    validation: &[ValidationQuery],
    k1_grid: &[f64],
    b_grid: &[f64],
    cutoff: usize,
) -> Result<TuningReport> {
    if validation.is_empty() {
        return Err(Error::Empty("validation set"));
    }
    if k1_grid.is_empty() || b_grid.is_empty() {
        return Err(Error::Empty("parameter grid"));
    }
    if cutoff == 0 {
        return Err(Error::InvalidArgument("cutoff must be >= 1".into()));
    }
    if let Some(q) = validation.iter().find(|q| q.answers.is_empty()) {
        return Err(Error::InvalidArgument(format!(
            "validation query `{}` has no answers",
            q.query_text
        )));
    }
    let mut params = Vec::with_capacity(k1_grid.len() * b_grid.len());
    for &k1 in k1_grid {
        for &b in b_grid {
            params.push(Bm25Params::new(k1, b)?);
        }
    }
    let cells = params
        .par_iter()
        .map(|&p| {
            validation_mrr(index, store, validation, p, cutoff).map(|mrr| GridCell {
                k1: p.k1,
                b: p.b,
                mrr,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let best = cells
        .iter()
        .copied()
        .reduce(|best, c| {
            let better = c.mrr > best.mrr
                || (c.mrr == best.mrr && (c.k1 < best.k1 || (c.k1 == best.k1 && c.b < best.b)));
            if better {
                c
            } else {
                best
            }
        })
        .expect("grid is nonempty");
    Ok(TuningReport {
        best: Bm25Params {
            k1: best.k1,
            b: best.b,
        },
        best_mrr: best.mrr,
        cutoff,
        cells,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Passage;
    use approx::assert_abs_diff_eq;

    fn store(texts: &[&str]) -> PassageStore {
        PassageStore::from_passages(
            texts
                .iter()
                .enumerate()
                .map(|(i, t)| Passage::new(format!("d{i}"), *t).unwrap()),
        )
        .unwrap()
    }

    #[test]
    fn build_small_index() {
        let index = InvertedIndex::build(&store(&["a b", "b c"])).unwrap();
        assert_eq!(index.postings("a"), [Posting { doc: 0, tf: 1 }]);
        assert_eq!(
            index.postings("b"),
            [Posting { doc: 0, tf: 1 }, Posting { doc: 1, tf: 1 }]
        );
        assert_eq!(index.postings("c"), [Posting { doc: 1, tf: 1 }]);
        assert_eq!(index.avg_doc_len(), 2.0);

        let index = InvertedIndex::build(&store(&["b b b"])).unwrap();
        assert_eq!(index.postings("b"), [Posting { doc: 0, tf: 3 }]);
    }

    #[test]
    fn build_empty_store_fails() {
        assert!(InvertedIndex::build(&PassageStore::new()).is_err());
    }

    #[test]
    fn two_doc_hand_computation() {
        let index = InvertedIndex::build(&store(&["cat cat dog", "dog"])).unwrap();
        let got = index.score(Bm25Params::default(), &tokenize("cat"), 0);
        // ln 2 · 2·2.2 / (2 + 1.2·(0.25 + 0.75·1.5)), worked by hand: 4.4 / 3.65
        let expected = std::f64::consts::LN_2 * 4.4 / 3.65;
        assert_abs_diff_eq!(got, expected, epsilon = 1e-12);
        assert_abs_diff_eq!(got, 0.835_574_7, epsilon = 1e-6);
    }

    #[test]
    fn absent_terms_score_zero() {
        let index = InvertedIndex::build(&store(&["cat dog", "bird"])).unwrap();
        let p = Bm25Params::default();
        assert_eq!(index.score(p, &tokenize("bird fish"), 0), 0.0);
        assert_eq!(index.score(p, &tokenize("zebra"), 1), 0.0);
        assert!(index.search(p, "zebra", 5).is_empty());
    }

    #[test]
    fn larger_b_penalizes_long_docs() {
        let index = InvertedIndex::build(&store(&["cat a b c d e", "x"])).unwrap();
        let q = tokenize("cat");
        let mut last = f64::INFINITY;
        for b in [0.0, 0.25, 0.5, 0.75, 1.0] {
            let s = index.score(Bm25Params::new(1.2, b).unwrap(), &q, 0);
            assert!(s < last);
            last = s;
        }
    }

    #[test]
    fn b_zero_ignores_length() {
        let index = InvertedIndex::build(&store(&["cat", "cat a b c d e f g"])).unwrap();
        let p = Bm25Params::new(1.2, 0.0).unwrap();
        let q = tokenize("cat");
        assert_eq!(index.score(p, &q, 0), index.score(p, &q, 1));
    }

    #[test]
    fn duplicate_query_terms_accumulate() {
        let index = InvertedIndex::build(&store(&["cat dog", "dog"])).unwrap();
        let p = Bm25Params::default();
        let once = index.score(p, &tokenize("cat"), 0);
        assert_abs_diff_eq!(index.score(p, &tokenize("cat cat"), 0), 2.0 * once, epsilon = 1e-12);
    }

    #[test]
    fn idf_is_positive() {
        for n in 1..50 {
            for df in 1..=n {
                assert!(idf(n, df) > 0.0);
            }
        }
    }

    #[test]
    fn search_boundaries_and_ties() {
        let index = InvertedIndex::build(&store(&["cat", "dog", "cat", "bird"])).unwrap();
        let list = index.search(Bm25Params::default(), "cat", 10);
        assert_eq!(list.ids().collect::<Vec<_>>(), ["d0", "d2"]);
        assert_eq!(list.entries[0].score, list.entries[1].score);
        assert_eq!(index.search(Bm25Params::default(), "cat", 1).len(), 1);
    }

    #[test]
    fn save_load_round_trip() {
        let index = InvertedIndex::build(&store(&["cat cat dog", "dog bird", "fish"])).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bm25.json");
        index.save(&path).unwrap();
        let loaded = InvertedIndex::load(&path).unwrap();
        assert_eq!(loaded, index);
        let p = Bm25Params::default();
        assert_eq!(loaded.search(p, "dog cat", 3), index.search(p, "dog cat", 3));

        std::fs::write(&path, br#"{"format":"other","version":1,"doc_ids":[],"doc_lengths":[],"postings":{}}"#).unwrap();
        assert!(matches!(InvertedIndex::load(&path), Err(Error::Format(_))));
    }

    #[test]
    fn grid_values() {
        assert_eq!(default_k1_grid(), [0.5, 0.7, 0.9, 1.1, 1.3, 1.5]);
        assert_eq!(default_b_grid(), [0.2, 0.4, 0.6, 0.8]);
    }

    #[test]
    fn tune_single_cell_and_errors() {
        let s = store(&["cat jumps", "dog runs"]);
        let index = InvertedIndex::build(&s).unwrap();
        let val = vec![ValidationQuery {
            query_text: "cat".into(),
            answers: vec!["jumps".into()],
        }];
        let report = tune_params(&index, &s, &val, &[0.9], &[0.3], 5).unwrap();
        assert_eq!(report.cells.len(), 1);
        assert_eq!(report.best, Bm25Params { k1: 0.9, b: 0.3 });
        assert_eq!(report.best_mrr, 1.0);

        assert!(tune_params(&index, &s, &[], &[0.9], &[0.3], 5).is_err());
        assert!(tune_params(&index, &s, &val, &[], &[0.3], 5).is_err());
    }

    #[test]
    fn tune_ties_prefer_small_params() {
        let s = store(&["cat jumps", "dog runs"]);
        let index = InvertedIndex::build(&s).unwrap();
        let val = vec![ValidationQuery {
            query_text: "cat".into(),
            answers: vec!["jumps".into()],
        }];
        let report =
            tune_params(&index, &s, &val, &default_k1_grid(), &default_b_grid(), 5).unwrap();
        assert_eq!(report.cells.len(), 24);
        assert_eq!(report.best, Bm25Params { k1: 0.5, b: 0.2 });
    }
}
