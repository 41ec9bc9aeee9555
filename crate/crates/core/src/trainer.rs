//! Contrastive training of an asymmetric bi-encoder with in-batch negatives.
//!
//! For a query with positive score `s⁺` and negative scores `s⁻`:
//!
//! ```text
//! L = −log( e^{s⁺} / (e^{s⁺} + Σ e^{s⁻}) )
//! ```
//!
//! Within a batch of `B` items every query is scored against all `2B`
//! passages (each item's positive and hard negative), so it sees its own hard
//! negative plus `2(B − 1)` in-batch negatives. The batch loss is the mean
//! over queries.
//!
//! The model is [`ToyEmbedder`]: two separate linear maps from hashed
//! features to embeddings, one for queries and one for passages.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::corpus::PassageStore;
use crate::dense::{EmbeddingProvider, EmbeddingVector, ProviderError};
use crate::error::{Error, Result};
use crate::features::{HashFeaturizer, SparseVector};
use crate::genpipeline::GeneratedExample;

/// Numerically stable contrastive loss. Always `> 0` for finite inputs
/// (it may underflow to exactly 0 when the positive dominates by > ~700).
pub fn contrastive_loss(pos_score: f64, neg_scores: &[f64]) -> Result<f64> {
    if neg_scores.is_empty() {
        return Err(Error::Empty("negative scores"));
    }
    if !pos_score.is_finite() || neg_scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFinite("contrastive loss scores"));
    }
    let max = neg_scores.iter().copied().fold(pos_score, f64::max);
    if max == pos_score {
        // log(1 + Σ e^{s⁻ − s⁺}) keeps precision when the positive dominates.
        let tail: f64 = neg_scores.iter().map(|s| (s - pos_score).exp()).sum();
        Ok(tail.ln_1p())
    } else {
        let sum: f64 = neg_scores.iter().map(|s| (s - max).exp()).sum::<f64>() + (pos_score - max).exp();
        Ok(max + sum.ln() - pos_score)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingItem {
    pub query: SparseVector,
    pub positive: SparseVector,
    pub hard_negative: SparseVector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingBatch {
    pub items: Vec<TrainingItem>,
}

impl TrainingBatch {
    pub fn new(items: Vec<TrainingItem>) -> Result<Self> {
        if items.is_empty() {
            return Err(Error::Empty("training batch"));
        }
        Ok(TrainingBatch { items })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// All `2B` passages in scoring order: `pos_0, neg_0, pos_1, neg_1, …`.
    fn passages(&self) -> impl Iterator<Item = &SparseVector> {
        self.items.iter().flat_map(|it| [&it.positive, &it.hard_negative])
    }
}

/// Positive of item `index` and its negatives: its own hard negative first,
/// then the positive and hard negative of every other item in batch order.
/// Yields `2B − 1` negatives.
pub fn in_batch_expand(batch: &TrainingBatch, index: usize) -> (&SparseVector, Vec<&SparseVector>) {
    assert!(index < batch.len(), "item {index} out of range for batch of {}", batch.len());
    let own = &batch.items[index];
    let mut negatives = Vec::with_capacity(2 * batch.len() - 1);
    negatives.push(&own.hard_negative);
    for (j, other) in batch.items.iter().enumerate() {
        if j != index {
            negatives.push(&other.positive);
            negatives.push(&other.hard_negative);
        }
    }
    (&own.positive, negatives)
}

const EMBEDDER_FORMAT: &str = "okret-toy-embedder";
const EMBEDDER_VERSION: u32 = 1;

/// Two linear maps `R^f → R^d`, stored feature-major: row `k` of a map is the
/// embedding contribution of feature `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyEmbedder {
    pub featurizer: HashFeaturizer,
    pub embed_dim: usize,
    pub seed: u64,
    pub query_map: Vec<f64>,
    pub passage_map: Vec<f64>,
}

/// Gradients with the same layout as the embedder's maps.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub query_map: Vec<f64>,
    pub passage_map: Vec<f64>,
}

impl ToyEmbedder {
    /// Gaussian initialization `N(0, init_std²)` from `seed`.
    pub fn new(feature_dim: usize, embed_dim: usize, seed: u64, init_std: f64) -> Result<Self> {
        if feature_dim == 0 || embed_dim == 0 {
            return Err(Error::InvalidArgument("embedder dimensions must be > 0".into()));
        }
        let normal = Normal::new(0.0, init_std)
            .map_err(|e| Error::InvalidArgument(format!("init_std: {e}")))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = feature_dim * embed_dim;
        let query_map = (0..n).map(|_| normal.sample(&mut rng)).collect();
        let passage_map = (0..n).map(|_| normal.sample(&mut rng)).collect();
        Ok(ToyEmbedder {
            featurizer: HashFeaturizer::new(feature_dim, seed),
            embed_dim,
            seed,
            query_map,
            passage_map,
        })
    }

    pub fn zeros(feature_dim: usize, embed_dim: usize, seed: u64) -> Result<Self> {
        Self::new(feature_dim, embed_dim, seed, 0.0)
    }

    pub fn feature_dim(&self) -> usize {
        self.featurizer.dim
    }

    fn project(&self, map: &[f64], x: &SparseVector) -> Vec<f64> {
        let d = self.embed_dim;
        let mut out = vec![0.0; d];
        for (k, v) in x.iter() {
            for (o, w) in out.iter_mut().zip(&map[k * d..(k + 1) * d]) {
                *o += v * w;
            }
        }
        out
    }

    pub fn encode_query(&self, x: &SparseVector) -> Vec<f64> {
        self.project(&self.query_map, x)
    }

    pub fn encode_passage(&self, y: &SparseVector) -> Vec<f64> {
        self.project(&self.passage_map, y)
    }

    pub fn check_features(&self, batch: &TrainingBatch) -> Result<()> {
        let f = self.feature_dim();
        for it in &batch.items {
            for v in [&it.query, &it.positive, &it.hard_negative] {
                if v.min_dim() > f {
                    return Err(Error::DimensionMismatch {
                        expected: f,
                        actual: v.min_dim(),
                    });
                }
            }
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = EmbedderFile {
            format: EMBEDDER_FORMAT.into(),
            version: EMBEDDER_VERSION,
            embedder: self.clone(),
        };
        fs::write(path, serde_json::to_vec(&file)?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let file: EmbedderFile = serde_json::from_slice(&bytes)?;
        if file.format != EMBEDDER_FORMAT || file.version != EMBEDDER_VERSION {
            return Err(Error::Format(format!(
                "expected {EMBEDDER_FORMAT} v{EMBEDDER_VERSION}, found {} v{}",
                file.format, file.version
            )));
        }
        let e = file.embedder;
        let n = e.feature_dim() * e.embed_dim;
        if e.embed_dim == 0 || e.query_map.len() != n || e.passage_map.len() != n {
            return Err(Error::Format("embedder matrices do not match their dimensions".into()));
        }
        if e.query_map.iter().chain(&e.passage_map).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("embedder parameters"));
        }
        Ok(e)
    }
}

#[derive(Serialize, Deserialize)]
struct EmbedderFile {
    format: String,
    version: u32,
    embedder: ToyEmbedder,
}

fn to_embedding(v: Vec<f64>) -> std::result::Result<EmbeddingVector, ProviderError> {
    EmbeddingVector::new(v.into_iter().map(|x| x as f32).collect()).map_err(|e| ProviderError(e.to_string()))
}

impl EmbeddingProvider for ToyEmbedder {
    fn dim(&self) -> usize {
        self.embed_dim
    }

    fn embed_query(&self, question: &str, image_ref: &str) -> std::result::Result<EmbeddingVector, ProviderError> {
        to_embedding(self.encode_query(&self.featurizer.featurize_query(question, image_ref)))
    }

    fn embed_passage(&self, text: &str) -> std::result::Result<EmbeddingVector, ProviderError> {
        to_embedding(self.encode_passage(&self.featurizer.featurize_text(text)))
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Mean in-batch contrastive loss and its exact gradient.
pub fn batch_loss_and_grad(embedder: &ToyEmbedder, batch: &TrainingBatch) -> Result<(f64, Gradients)> {
    if batch.is_empty() {
        return Err(Error::Empty("training batch"));
    }
    embedder.check_features(batch)?;
    let b = batch.len();
    let d = embedder.embed_dim;
    let queries: Vec<Vec<f64>> = batch.items.iter().map(|it| embedder.encode_query(&it.query)).collect();
    let passage_features: Vec<&SparseVector> = batch.passages().collect();
    let passages: Vec<Vec<f64>> = passage_features.iter().map(|y| embedder.encode_passage(y)).collect();

    let mut loss = 0.0;
    let mut grad_q = vec![vec![0.0; d]; b];
    let mut grad_p = vec![vec![0.0; d]; 2 * b];
    let scale = 1.0 / b as f64;
    for (i, q) in queries.iter().enumerate() {
        let scores: Vec<f64> = passages.iter().map(|p| dot(q, p)).collect();
        let pos = 2 * i;
        let negs: Vec<f64> = scores
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != pos)
            .map(|(_, s)| *s)
            .collect();
        loss += contrastive_loss(scores[pos], &negs)?;

        let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
        let z: f64 = exps.iter().sum();
        for (j, e) in exps.iter().enumerate() {
            // dL/ds_ij = softmax_ij − [j = pos], averaged over the batch.
            let g = scale * (e / z - if j == pos { 1.0 } else { 0.0 });
            for k in 0..d {
                grad_q[i][k] += g * passages[j][k];
                grad_p[j][k] += g * q[k];
            }
        }
    }
    loss *= scale;

    let n = embedder.feature_dim() * d;
    let mut grads = Gradients {
        query_map: vec![0.0; n],
        passage_map: vec![0.0; n],
    };
    for (it, gq) in batch.items.iter().zip(&grad_q) {
        accumulate_outer(&mut grads.query_map, &it.query, gq, d);
    }
    for (y, gp) in passage_features.iter().zip(&grad_p) {
        accumulate_outer(&mut grads.passage_map, y, gp, d);
    }
    if !loss.is_finite() || grads.query_map.iter().chain(&grads.passage_map).any(|g| !g.is_finite()) {
        return Err(Error::NonFinite("loss or gradient"));
    }
    Ok((loss, grads))
}

fn accumulate_outer(map_grad: &mut [f64], x: &SparseVector, g: &[f64], d: usize) {
    for (k, v) in x.iter() {
        for (slot, gk) in map_grad[k * d..(k + 1) * d].iter_mut().zip(g) {
            *slot += v * gk;
        }
    }
}

/// Parameter update rule. `slot` distinguishes the two parameter blocks so
/// stateful optimizers can keep per-block state.
pub trait Optimizer {
    fn step(&mut self, slot: usize, params: &mut [f64], grads: &[f64]);
}

/// Plain gradient descent with a fixed learning rate.
#[derive(Debug, Clone, Copy)]
pub struct Sgd {
    pub lr: f64,
}

impl Optimizer for Sgd {
    fn step(&mut self, _slot: usize, params: &mut [f64], grads: &[f64]) {
        for (p, g) in params.iter_mut().zip(grads) {
            *p -= self.lr * g;
        }
    }
}

pub fn apply_gradients(embedder: &mut ToyEmbedder, grads: &Gradients, optimizer: &mut dyn Optimizer) {
    optimizer.step(0, &mut embedder.query_map, &grads.query_map);
    optimizer.step(1, &mut embedder.passage_map, &grads.passage_map);
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
    pub feature_dim: usize,
    pub embed_dim: usize,
    pub init_std: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 1,
            batch_size: 16,
            lr: 2.0,
            seed: 13,
            feature_dim: 1024,
            embed_dim: 64,
            init_std: 0.1,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    /// Mean batch loss per epoch.
    pub epoch_loss: Vec<f64>,
    pub steps: usize,
}

/// Featurizes one example against the store.
pub fn featurize_example(
    featurizer: &HashFeaturizer,
    example: &GeneratedExample,
    store: &PassageStore,
) -> Result<TrainingItem> {
    let text = |id: &str| {
        store
            .text(id)
            .ok_or_else(|| Error::InvalidArgument(format!("example references unknown passage `{id}`")))
    };
    Ok(TrainingItem {
        query: featurizer.featurize_query(&example.question, &example.image_id),
        positive: featurizer.featurize_text(text(&example.positive_passage_id)?),
        hard_negative: featurizer.featurize_text(text(&example.negative_passage_id)?),
    })
}

/// Trains a fresh embedder initialized from `config.seed`. Deterministic for a
/// fixed dataset, store and config.
pub fn train_toy(
    dataset: &[GeneratedExample],
    store: &PassageStore,
    config: &TrainConfig,
    optimizer: &mut dyn Optimizer,
) -> Result<(ToyEmbedder, TrainLog)> {
    let embedder = ToyEmbedder::new(config.feature_dim, config.embed_dim, config.seed, config.init_std)?;
    train_from(embedder, dataset, store, config, optimizer)
}

/// Continues training `embedder`; shuffling is seeded by `config.seed`.
pub fn train_from(
    mut embedder: ToyEmbedder,
    dataset: &[GeneratedExample],
    store: &PassageStore,
    config: &TrainConfig,
    optimizer: &mut dyn Optimizer,
) -> Result<(ToyEmbedder, TrainLog)> {
    if dataset.is_empty() {
        return Err(Error::Empty("training dataset"));
    }
    if config.batch_size == 0 {
        return Err(Error::InvalidArgument("batch_size must be >= 1".into()));
    }
    let items = dataset
        .iter()
        .map(|ex| featurize_example(&embedder.featurizer, ex, store))
        .collect::<Result<Vec<_>>>()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(1));
    let mut order: Vec<usize> = (0..items.len()).collect();
    let mut log = TrainLog::default();
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(config.batch_size) {
            let batch = TrainingBatch::new(chunk.iter().map(|&i| items[i].clone()).collect())?;
            let (loss, grads) = batch_loss_and_grad(&embedder, &batch)?;
            apply_gradients(&mut embedder, &grads, optimizer);
            total += loss;
            batches += 1;
            log.steps += 1;
        }
        log.epoch_loss.push(total / batches as f64);
    }
    Ok((embedder, log))
}
