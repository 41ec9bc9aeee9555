//! Reference implementations used as test oracles. They share no code with
//! the library paths they check beyond the tokenizer.

#![allow(dead_code)]

use std::collections::HashMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub const VOCAB: &[&str] = &[
    "cat", "dog", "bird", "tree", "river", "stone", "light", "cloud", "apple", "bread", "horse",
    "train", "clock", "table", "green", "blue", "seven", "feet", "run", "jump", "house", "road",
    "snow", "rain", "wind", "fire", "book", "door", "ship", "lamp",
];

/// Random document of 1..=max_len words from the first `vocab` entries of [`VOCAB`].
pub fn random_doc(rng: &mut ChaCha8Rng, vocab: usize, max_len: usize) -> Vec<&'static str> {
    let len = rng.random_range(1..=max_len);
    (0..len).map(|_| VOCAB[rng.random_range(0..vocab)]).collect()
}

/// BM25 computed from raw per-document counts, independent of the inverted index.
pub struct BruteBm25 {
    ids: Vec<String>,
    tf: Vec<HashMap<String, f64>>,
    lens: Vec<f64>,
    df: HashMap<String, f64>,
    avgdl: f64,
}

impl BruteBm25 {
    pub fn new(docs: &[(String, Vec<&str>)]) -> Self {
        let mut tf = Vec::with_capacity(docs.len());
        let mut df: HashMap<String, f64> = HashMap::new();
        for (_, d) in docs {
            let mut counts: HashMap<String, f64> = HashMap::new();
            for t in d {
                *counts.entry(t.to_string()).or_default() += 1.0;
            }
            for t in counts.keys() {
                *df.entry(t.clone()).or_default() += 1.0;
            }
            tf.push(counts);
        }
        let lens: Vec<f64> = docs.iter().map(|(_, d)| d.len() as f64).collect();
        let avgdl = lens.iter().sum::<f64>() / lens.len() as f64;
        BruteBm25 {
            ids: docs.iter().map(|(id, _)| id.clone()).collect(),
            tf,
            lens,
            df,
            avgdl,
        }
    }

    /// Score every document, sort by (score desc, id asc), keep positive
    /// scores, truncate to `k`.
    pub fn search(&self, query: &[&str], k1: f64, b: f64, k: usize) -> Vec<(String, f64)> {
        let n = self.ids.len() as f64;
        let mut scored: Vec<(String, f64)> = Vec::new();
        for (i, id) in self.ids.iter().enumerate() {
            let mut s = 0.0;
            for q in query {
                let Some(&tf) = self.tf[i].get(*q) else { continue };
                let n_t = self.df[*q];
                let idf = (1.0 + (n - n_t + 0.5) / (n_t + 0.5)).ln();
                s += idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * self.lens[i] / self.avgdl));
            }
            if s > 0.0 {
                scored.push((id.clone(), s));
            }
        }
        scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.cmp(&b.0)));
        scored.truncate(k);
        scored
    }
}

/// Reciprocal rank and precision of a relevance vector by direct loops.
pub fn reference_rr_p(relevance: &[bool], k: usize) -> (f64, f64) {
    let mut rr = 0.0;
    for (i, r) in relevance.iter().take(k).enumerate() {
        if *r {
            rr = 1.0 / (i as f64 + 1.0);
            break;
        }
    }
    let hits = relevance.iter().take(k).filter(|r| **r).count();
    (rr, hits as f64 / k as f64)
}

/// Student-t density with `df` degrees of freedom.
fn t_density(x: f64, df: f64) -> f64 {
    use statrs::function::gamma::ln_gamma;
    let c = ln_gamma((df + 1.0) / 2.0) - ln_gamma(df / 2.0) - 0.5 * (df * std::f64::consts::PI).ln();
    (c - (df + 1.0) / 2.0 * (1.0 + x * x / df).ln()).exp()
}

/// Two-tailed p-value by composite Simpson integration of the density on [0, |t|].
pub fn simpson_two_tailed(t: f64, df: f64) -> f64 {
    let t = t.abs();
    let n = 20_000;
    let h = t / n as f64;
    let mut acc = t_density(0.0, df) + t_density(t, df);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * t_density(i as f64 * h, df);
    }
    let half = acc * h / 3.0;
    (1.0 - 2.0 * half).max(0.0)
}

/// Two-tailed p-value from the statrs Student-t CDF.
pub fn statrs_two_tailed(t: f64, df: f64) -> f64 {
    use statrs::distribution::{ContinuousCDF, StudentsT};
    let dist = StudentsT::new(0.0, 1.0, df).unwrap();
    2.0 * dist.cdf(-t.abs())
}

/// Paired t statistic by textbook formulas.
pub fn reference_t(a: &[f64], b: &[f64]) -> f64 {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let n = d.len() as f64;
    let mean = d.iter().sum::<f64>() / n;
    let var = d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    mean / (var.sqrt() / n.sqrt())
}
