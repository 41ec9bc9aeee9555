//! Hashed bag-of-words features shared by the stub provider and the trainer.

use serde::{Deserialize, Serialize};

use crate::corpus::tokenize;

/// Sparse vector as `(index, value)` pairs, sorted by index, no duplicates.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SparseVector {
    entries: Vec<(usize, f64)>,
}

impl SparseVector {
    pub fn from_pairs(mut pairs: Vec<(usize, f64)>) -> Self {
        pairs.sort_by_key(|p| p.0);
        let mut entries: Vec<(usize, f64)> = Vec::with_capacity(pairs.len());
        for (i, v) in pairs {
            match entries.last_mut() {
                Some(last) if last.0 == i => last.1 += v,
                _ => entries.push((i, v)),
            }
        }
        entries.retain(|e| e.1 != 0.0);
        SparseVector { entries }
    }

    pub fn from_dense(values: &[f64]) -> Self {
        SparseVector {
            entries: values
                .iter()
                .enumerate()
                .filter(|(_, v)| **v != 0.0)
                .map(|(i, v)| (i, *v))
                .collect(),
        }
    }

    pub fn to_dense(&self, dim: usize) -> Vec<f64> {
        let mut v = vec![0.0; dim];
        for &(i, x) in &self.entries {
            v[i] = x;
        }
        v
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.entries.iter().copied()
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    /// Largest index + 1, or 0 when empty.
    pub fn min_dim(&self) -> usize {
        self.entries.last().map_or(0, |e| e.0 + 1)
    }

    pub fn entries_mut(&mut self) -> &mut [(usize, f64)] {
        &mut self.entries
    }
}

/// 64-bit FNV-1a over a seed prefix and the token bytes.
pub(crate) fn fnv1a(seed: u64, bytes: &[u8]) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0100_0000_01b3;
    let mut h = OFFSET;
    for b in seed.to_le_bytes().iter().chain(bytes) {
        h ^= u64::from(*b);
        h = h.wrapping_mul(PRIME);
    }
    h
}

/// Hashes tokens into `dim` buckets; the count vector is L2-normalized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HashFeaturizer {
    pub dim: usize,
    pub seed: u64,
}

impl HashFeaturizer {
    pub fn new(dim: usize, seed: u64) -> Self {
        assert!(dim > 0, "featurizer needs at least one bucket");
        HashFeaturizer { dim, seed }
    }

    pub fn bucket(&self, token: &str) -> usize {
        (fnv1a(self.seed, token.as_bytes()) % self.dim as u64) as usize
    }

    pub fn featurize<'a>(&self, tokens: impl IntoIterator<Item = &'a str>) -> SparseVector {
        let mut v = SparseVector::from_pairs(tokens.into_iter().map(|t| (self.bucket(t), 1.0)).collect());
        let norm = v.iter().map(|(_, x)| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            v.entries_mut().iter_mut().for_each(|e| e.1 /= norm);
        }
        v
    }

    pub fn featurize_text(&self, text: &str) -> SparseVector {
        self.featurize(tokenize(text).iter())
    }

    /// Question tokens plus one reserved token standing in for the image.
    pub fn featurize_query(&self, question: &str, image_ref: &str) -> SparseVector {
        let image_token = format!("\u{1}image:{image_ref}");
        let q = tokenize(question);
        self.featurize(q.iter().chain(std::iter::once(image_token.as_str())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalized_and_deterministic() {
        let f = HashFeaturizer::new(32, 7);
        let v = f.featurize_text("cats cats jump");
        let norm: f64 = v.iter().map(|(_, x)| x * x).sum();
        assert!((norm - 1.0).abs() < 1e-12);
        assert_eq!(v, f.featurize_text("CATS cats JUMP"));
        assert!(f.featurize_text("").nnz() == 0);
        assert_ne!(f.featurize_query("cats", "a"), f.featurize_query("cats", "b"));
    }

    #[test]
    fn sparse_merges_duplicates() {
        let v = SparseVector::from_pairs(vec![(3, 1.0), (1, 2.0), (3, 0.5)]);
        assert_eq!(v.to_dense(4), [0.0, 2.0, 0.0, 1.5]);
        assert_eq!(SparseVector::from_dense(&[0.0, 2.0, 0.0, 1.5]), v);
    }
}
