//! Dense retrieval: the embedding-provider contract, exact inner-product
//! search over passage vectors, and a deterministic hashing provider.

use std::collections::BTreeMap;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::corpus::PassageStore;
use crate::error::{Error, Result};
use crate::features::HashFeaturizer;
use crate::eval::Query;
use crate::ranking::RankedList;

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector(Vec<f32>);

impl EmbeddingVector {
    pub fn new(values: Vec<f32>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidArgument("embedding has zero dimensions".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("embedding"));
        }
        Ok(EmbeddingVector(values))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f32> {
        self.0
    }
}

#[derive(Debug, Clone, Error)]
#[error("{0}")]
pub struct ProviderError(pub String);

/// Query and passage encoders behind one contract. Implementations must be
/// deterministic for fixed inputs and always return `dim()`-length vectors.
pub trait EmbeddingProvider: Send + Sync {
    fn dim(&self) -> usize;
    fn embed_query(&self, question: &str, image_ref: &str) -> std::result::Result<EmbeddingVector, ProviderError>;
    fn embed_passage(&self, text: &str) -> std::result::Result<EmbeddingVector, ProviderError>;
}

#[inline]
fn dot(q: &[f32], p: &[f32]) -> f64 {
    q.iter().zip(p).map(|(&a, &b)| f64::from(a) * f64::from(b)).sum()
}

/// Inner product, accumulated in f64.
pub fn score(q: &EmbeddingVector, p: &EmbeddingVector) -> Result<f64> {
    if q.dim() != p.dim() {
        return Err(Error::DimensionMismatch {
            expected: q.dim(),
            actual: p.dim(),
        });
    }
    Ok(dot(&q.0, &p.0))
}

/// Model-free provider: hashed bag-of-words on both sides. Ignores the image.
#[derive(Debug, Clone, Copy)]
pub struct StubProvider {
    featurizer: HashFeaturizer,
}

impl StubProvider {
    pub const DEFAULT_SEED: u64 = 0x5eed;

    pub fn new(dim: usize) -> Self {
        Self::with_seed(dim, Self::DEFAULT_SEED)
    }

    pub fn with_seed(dim: usize, seed: u64) -> Self {
        StubProvider {
            featurizer: HashFeaturizer::new(dim, seed),
        }
    }

    fn embed(&self, text: &str) -> std::result::Result<EmbeddingVector, ProviderError> {
        let v = self.featurizer.featurize_text(text).to_dense(self.featurizer.dim);
        EmbeddingVector::new(v.into_iter().map(|x| x as f32).collect())
            .map_err(|e| ProviderError(e.to_string()))
    }
}

impl EmbeddingProvider for StubProvider {
    fn dim(&self) -> usize {
        self.featurizer.dim
    }

    fn embed_query(&self, question: &str, _image_ref: &str) -> std::result::Result<EmbeddingVector, ProviderError> {
        self.embed(question)
    }

    fn embed_passage(&self, text: &str) -> std::result::Result<EmbeddingVector, ProviderError> {
        self.embed(text)
    }
}

const DENSE_MAGIC: &[u8; 8] = b"OKRDENSE";
const DENSE_VERSION: u32 = 1;

/// Row-major passage embeddings, one row per passage in store order.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseIndex {
    dim: usize,
    ids: Vec<String>,
    vectors: Vec<f32>,
}

impl DenseIndex {
    pub fn build(provider: &dyn EmbeddingProvider, store: &PassageStore) -> Result<Self> {
        if store.is_empty() {
            return Err(Error::Empty("cannot index an empty passage store"));
        }
        let dim = provider.dim();
        let mut ids = Vec::with_capacity(store.len());
        let mut vectors = Vec::with_capacity(store.len() * dim);
        for passage in store {
            let v = provider.embed_passage(&passage.text).map_err(|e| Error::Embedding {
                id: passage.id.clone(),
                reason: e.0,
            })?;
            if v.dim() != dim {
                return Err(Error::Embedding {
                    id: passage.id.clone(),
                    reason: format!("expected dimension {dim}, got {}", v.dim()),
                });
            }
            ids.push(passage.id.clone());
            vectors.extend_from_slice(v.as_slice());
        }
        Ok(DenseIndex { dim, ids, vectors })
    }

    pub fn from_rows(dim: usize, rows: Vec<(String, Vec<f32>)>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("dimension must be > 0".into()));
        }
        let mut ids = Vec::with_capacity(rows.len());
        let mut vectors = Vec::with_capacity(rows.len() * dim);
        for (id, row) in rows {
            if row.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: row.len(),
                });
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("index row"));
            }
            ids.push(id);
            vectors.extend(row);
        }
        Ok(DenseIndex { dim, ids, vectors })
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

    pub fn row(&self, i: usize) -> &[f32] {
        &self.vectors[i * self.dim..(i + 1) * self.dim]
    }

    pub fn id(&self, i: usize) -> &str {
        &self.ids[i]
    }

    /// Exact top-`k` by inner product on one thread.
    pub fn search(&self, q: &EmbeddingVector, k: usize) -> Result<RankedList> {
        self.search_sharded(q, k, 1)
    }

    /// Exact top-`k` with rows split across `workers` threads. The result is
    /// identical for every worker count.
    pub fn search_sharded(&self, q: &EmbeddingVector, k: usize, workers: usize) -> Result<RankedList> {
        if q.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: q.dim(),
            });
        }
        if k == 0 {
            return Err(Error::InvalidArgument("k must be >= 1".into()));
        }
        let n = self.len();
        let workers = workers.clamp(1, n.max(1));
        let shard = n.div_ceil(workers).max(1);
        let shard_top = |start: usize| {
            let end = (start + shard).min(n);
            RankedList::top_k(
                (start..end).map(|i| (self.ids[i].clone(), dot(q.as_slice(), self.row(i)))),
                k,
            )
        };
        if workers == 1 {
            return Ok(shard_top(0));
        }
        let partials: Vec<RankedList> = std::thread::scope(|s| {
            let handles: Vec<_> = (0..n)
                .step_by(shard)
                .map(|start| s.spawn(move || shard_top(start)))
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("search shard panicked"))
                .collect()
        });
        Ok(RankedList::top_k(
            partials
                .into_iter()
                .flat_map(|l| l.entries.into_iter().map(|e| (e.passage_id, e.score))),
            k,
        ))
    }

    /// Binary layout, little-endian: magic `OKRDENSE`, version u32, dim u32,
    /// rows u64, then per row `len u32 + utf8 id`, then `rows × dim` f32 values.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut buf = Vec::with_capacity(24 + self.vectors.len() * 4);
        buf.extend_from_slice(DENSE_MAGIC);
        buf.extend_from_slice(&DENSE_VERSION.to_le_bytes());
        buf.extend_from_slice(&(self.dim as u32).to_le_bytes());
        buf.extend_from_slice(&(self.ids.len() as u64).to_le_bytes());
        for id in &self.ids {
            buf.extend_from_slice(&(id.len() as u32).to_le_bytes());
            buf.extend_from_slice(id.as_bytes());
        }
        for v in &self.vectors {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&buf).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut bytes = Vec::new();
        fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(path, e))?;
        let mut r = ByteReader { bytes: &bytes, pos: 0 };
        if r.take(8)? != DENSE_MAGIC {
            return Err(Error::Format("not a dense index file".into()));
        }
        let version = r.u32()?;
        if version != DENSE_VERSION {
            return Err(Error::Format(format!("unsupported dense index version {version}")));
        }
        let dim = r.u32()? as usize;
        let rows = r.u64()? as usize;
        let mut ids = Vec::with_capacity(rows);
        for _ in 0..rows {
            let len = r.u32()? as usize;
            let id = std::str::from_utf8(r.take(len)?)
                .map_err(|_| Error::Format("passage id is not UTF-8".into()))?;
            ids.push(id.to_string());
        }
        let payload = r.take(rows * dim * 4)?;
        if r.pos != bytes.len() {
            return Err(Error::Format("trailing bytes after dense index payload".into()));
        }
        let vectors = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Ok(DenseIndex { dim, ids, vectors })
    }
}

struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Format("dense index file is truncated".into()))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn u64(&mut self) -> Result<u64> {
        let mut a = [0u8; 8];
        a.copy_from_slice(self.take(8)?);
        Ok(u64::from_le_bytes(a))
    }
}

/// Runs every query against `index`; queries are embedded with `provider`.
pub fn retrieve_dense(
    provider: &dyn EmbeddingProvider,
    index: &DenseIndex,
    queries: &[Query],
    k: usize,
    workers: usize,
) -> Result<BTreeMap<String, RankedList>> {
    let mut run = BTreeMap::new();
    for q in queries {
        let v = provider.embed_query(&q.question, &q.image_id).map_err(|e| Error::Embedding {
            id: q.query_id.clone(),
            reason: e.0,
        })?;
        run.insert(q.query_id.clone(), index.search_sharded(&v, k, workers)?);
    }
    Ok(run)
}
