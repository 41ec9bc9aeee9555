//! Retrieval pretraining toolkit for knowledge-based visual question answering.
//!
//! Passage corpora, sparse (BM25) and dense retrieval, synthetic
//! question generation, contrastive training of a toy bi-encoder, and
//! evaluation with significance testing.

pub mod bm25;
pub mod corpus;
pub mod dense;
pub mod error;
pub mod eval;
pub mod features;
pub mod fixture;
pub mod genpipeline;
pub mod ranking;
pub mod textmetrics;
pub mod trainer;

pub use error::{Error, Result};
