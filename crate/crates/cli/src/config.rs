//! TOML run configuration. Every key is optional; command-line flags win.
//!
//! ```toml
//! corpus = "data/corpus.tsv"
//! images = "data/images.jsonl"
//! adapters = "stub"            # or "remote:http://127.0.0.1:8000"
//! seed = 13
//! workers = 4
//!
//! [pipeline]
//! passages_per_image = 5
//! threshold = 0.5
//! negative_pool_size = 100
//!
//! [bm25]
//! k1 = 1.2
//! b = 0.75
//!
//! [train]
//! epochs = 1
//! batch_size = 16
//! lr = 2.0
//! ```
//!
//! Relative paths in the file resolve against the file's directory.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::args::FormatArg;
use crate::error::UsageError;

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub corpus: Option<PathBuf>,
    pub corpus_format: Option<FormatArg>,
    pub images: Option<PathBuf>,
    pub index: Option<PathBuf>,
    pub embedder: Option<String>,
    pub adapters: Option<String>,
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub cutoff: Option<usize>,
    pub pipeline: PipelineSection,
    pub bm25: Bm25Section,
    pub train: TrainSection,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineSection {
    pub passages_per_image: Option<usize>,
    pub threshold: Option<f64>,
    pub negative_pool_size: Option<usize>,
    pub max_phrases_per_passage: Option<usize>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Bm25Section {
    pub k1: Option<f64>,
    pub b: Option<f64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub lr: Option<f64>,
    pub feature_dim: Option<usize>,
    pub embed_dim: Option<usize>,
    pub init_std: Option<f64>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, UsageError> {
        let text = fs::read_to_string(path)
            .map_err(|e| UsageError(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg: FileConfig = toml::from_str(&text)
            .map_err(|e| UsageError(format!("invalid config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut cfg.corpus, &mut cfg.images, &mut cfg.index].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        if let Some(e) = &mut cfg.embedder {
            if !e.starts_with("stub") && Path::new(e.as_str()).is_relative() {
                *e = base.join(e.as_str()).to_string_lossy().into_owned();
            }
        }
        Ok(cfg)
    }
}

/// Flag value if given, else the config value.
pub fn pick<T>(flag: Option<T>, file: Option<T>) -> Option<T> {
    flag.or(file)
}

pub fn require<T>(value: Option<T>, name: &str) -> Result<T, UsageError> {
    value.ok_or_else(|| UsageError(format!("`{name}` must be given as a flag or in the config file")))
}

/// Required input path that must exist.
pub fn input_path(flag: Option<PathBuf>, file: Option<PathBuf>, name: &str) -> Result<PathBuf, UsageError> {
    let path = require(pick(flag, file), name)?;
    existing(path, name)
}

pub fn existing(path: PathBuf, name: &str) -> Result<PathBuf, UsageError> {
    if path.exists() {
        Ok(path)
    } else {
        Err(UsageError(format!("{name} `{}` does not exist", path.display())))
    }
}
