//! Retrieval evaluation: answer-based relevance judgment, MRR@k and P@k,
//! and two-tailed paired t-tests with Bonferroni correction.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{contains_answer, PassageStore};
use crate::error::{Error, Result};
use crate::ranking::{RankedEntry, RankedList};

pub const DEFAULT_CUTOFF: usize = 5;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Judgment {
    pub query_id: String,
    pub answers: Vec<String>,
}

/// A passage is relevant if it contains any of the answers (token-level,
/// case-insensitive exact match).
pub fn judge<S: AsRef<str>>(passage_text: &str, answers: &[S]) -> Result<bool> {
    if answers.is_empty() {
        return Err(Error::Empty("answer set"));
    }
    for a in answers {
        if contains_answer(passage_text, a.as_ref())? {
            return Ok(true);
        }
    }
    Ok(false)
}

/// `1/r` for the first relevant rank `r <= k`, else 0.
pub fn reciprocal_rank(relevance: &[bool], k: usize) -> f64 {
    relevance
        .iter()
        .take(k)
        .position(|&r| r)
        .map_or(0.0, |i| 1.0 / (i + 1) as f64)
}

/// Relevant share of the top `k`; short lists count as padded with non-relevant.
pub fn precision_at(relevance: &[bool], k: usize) -> f64 {
    relevance.iter().take(k).filter(|&&r| r).count() as f64 / k as f64
}

fn relevance_flags(ranked: &RankedList, answers: &[String], store: &PassageStore, k: usize) -> Result<Vec<bool>> {
    ranked
        .iter()
        .take(k)
        .map(|e| {
            let text = store
                .text(&e.passage_id)
                .ok_or_else(|| Error::InvalidArgument(format!("unknown passage `{}`", e.passage_id)))?;
            judge(text, answers)
        })
        .collect()
}

pub fn mrr_at_k(ranked: &RankedList, judgment: &Judgment, store: &PassageStore, k: usize) -> Result<f64> {
    check_cutoff(k)?;
    Ok(reciprocal_rank(&relevance_flags(ranked, &judgment.answers, store, k)?, k))
}

pub fn p_at_k(ranked: &RankedList, judgment: &Judgment, store: &PassageStore, k: usize) -> Result<f64> {
    check_cutoff(k)?;
    Ok(precision_at(&relevance_flags(ranked, &judgment.answers, store, k)?, k))
}

fn check_cutoff(k: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::InvalidArgument("cutoff must be >= 1".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QueryMetrics {
    pub reciprocal_rank: f64,
    pub precision: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub cutoff: usize,
    pub per_query: BTreeMap<String, QueryMetrics>,
    pub mrr: f64,
    pub precision: f64,
}

impl EvalResult {
    pub fn reciprocal_ranks(&self) -> Vec<f64> {
        self.per_query.values().map(|m| m.reciprocal_rank).collect()
    }

    pub fn precisions(&self) -> Vec<f64> {
        self.per_query.values().map(|m| m.precision).collect()
    }

    /// Aligned plain-text table, one row per query plus the mean.
    pub fn to_table(&self) -> String {
        let width = self
            .per_query
            .keys()
            .map(String::len)
            .chain(["query_id".len(), "mean".len()])
            .max()
            .unwrap_or(8);
        let k = self.cutoff;
        let mut out = String::new();
        let _ = writeln!(out, "{:<width$}  {:>8}  {:>8}", "query_id", format!("MRR@{k}"), format!("P@{k}"));
        for (q, m) in &self.per_query {
            let _ = writeln!(out, "{q:<width$}  {:>8.4}  {:>8.4}", m.reciprocal_rank, m.precision);
        }
        let _ = writeln!(out, "{:<width$}  {:>8.4}  {:>8.4}", "mean", self.mrr, self.precision);
        out
    }
}

/// Scores a run against judgments. Judged queries missing from the run score 0;
/// run queries without a judgment are an error.
pub fn evaluate(
    run: &BTreeMap<String, RankedList>,
    judgments: &[Judgment],
    store: &PassageStore,
    k: usize,
) -> Result<EvalResult> {
    check_cutoff(k)?;
    let by_id: BTreeMap<&str, &Judgment> =
        judgments.iter().map(|j| (j.query_id.as_str(), j)).collect();
    if let Some(q) = run.keys().find(|q| !by_id.contains_key(q.as_str())) {
        return Err(Error::MissingJudgment(q.clone()));
    }
    if by_id.is_empty() {
        return Err(Error::Empty("judgments"));
    }
    let mut per_query = BTreeMap::new();
    for (qid, judgment) in &by_id {
        let metrics = match run.get(*qid) {
            Some(ranked) => {
                let flags = relevance_flags(ranked, &judgment.answers, store, k)?;
                QueryMetrics {
                    reciprocal_rank: reciprocal_rank(&flags, k),
                    precision: precision_at(&flags, k),
                }
            }
            None => {
                if judgment.answers.is_empty() {
                    return Err(Error::Empty("answer set"));
                }
                QueryMetrics {
                    reciprocal_rank: 0.0,
                    precision: 0.0,
                }
            }
        };
        per_query.insert(qid.to_string(), metrics);
    }
    let n = per_query.len() as f64;
    let mrr = per_query.values().map(|m| m.reciprocal_rank).sum::<f64>() / n;
    let precision = per_query.values().map(|m| m.precision).sum::<f64>() / n;
    Ok(EvalResult {
        cutoff: k,
        per_query,
        mrr,
        precision,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTestResult {
    pub t: f64,
    pub df: usize,
    pub p: f64,
    pub p_corrected: f64,
    pub comparisons: usize,
    /// Differences are constant and nonzero, so the statistic is unbounded.
    pub degenerate: bool,
}

/// Two-tailed paired t-test on `a − b` with Bonferroni correction over
/// `comparisons` simultaneous tests.
pub fn paired_ttest(a: &[f64], b: &[f64], comparisons: usize) -> Result<TTestResult> {
    if a.len() != b.len() {
        return Err(Error::InvalidArgument(format!(
            "paired samples differ in length: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    if a.len() < 2 {
        return Err(Error::InvalidArgument("paired t-test needs n >= 2".into()));
    }
    if comparisons == 0 {
        return Err(Error::InvalidArgument("comparisons must be >= 1".into()));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("t-test sample"));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let n = d.len();
    let df = n - 1;
    let m = comparisons;

    if d.iter().all(|&x| x == d[0]) {
        return Ok(if d[0] == 0.0 {
            TTestResult { t: 0.0, df, p: 1.0, p_corrected: 1.0, comparisons: m, degenerate: false }
        } else {
            TTestResult {
                t: f64::INFINITY.copysign(d[0]),
                df,
                p: 0.0,
                p_corrected: 0.0,
                comparisons: m,
                degenerate: true,
            }
        });
    }

    let mean = d.iter().sum::<f64>() / n as f64;
    let var = d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / df as f64;
    let t = mean / (var.sqrt() / (n as f64).sqrt());
    let p = student_t_two_tailed(t, df as f64);
    Ok(TTestResult {
        t,
        df,
        p,
        p_corrected: bonferroni(p, m),
        comparisons: m,
        degenerate: false,
    })
}

pub fn bonferroni(p: f64, comparisons: usize) -> f64 {
    (p * comparisons as f64).min(1.0)
}

/// `P(|T| >= |t|)` for Student's t with `df` degrees of freedom,
/// i.e. `I_{df/(df+t²)}(df/2, 1/2)`.
pub fn student_t_two_tailed(t: f64, df: f64) -> f64 {
    if t.is_infinite() {
        return 0.0;
    }
    let x = df / (df + t * t);
    regularized_incomplete_beta(x, df / 2.0, 0.5).clamp(0.0, 1.0)
}

/// Regularized incomplete beta `I_x(a, b)` by Lentz's continued fraction.
pub fn regularized_incomplete_beta(x: f64, a: f64, b: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    // The fraction converges fast for x < (a+1)/(a+b+2); use the symmetry otherwise.
    if x < (a + 1.0) / (a + b + 2.0) {
        ln_front.exp() * beta_continued_fraction(x, a, b) / a
    } else {
        1.0 - ln_front.exp() * beta_continued_fraction(1.0 - x, b, a) / b
    }
}

fn beta_continued_fraction(x: f64, a: f64, b: f64) -> f64 {
    const MAX_ITER: usize = 500;
    const EPS: f64 = 1e-15;
    const TINY: f64 = 1e-300;

    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Lanczos approximation (g = 7, n = 9), accurate to ~1e-15 for x > 0.
pub fn ln_gamma(x: f64) -> f64 {
    const G: f64 = 7.0;
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        // Reflection.
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = COEF[0];
    for (i, c) in COEF.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + G + 0.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

// ---- file formats ----

/// Reads a run file: `query_id<TAB>passage_id<TAB>rank<TAB>score` per line.
/// Lines starting with `#` are header comments.
pub fn load_run(path: impl AsRef<Path>) -> Result<BTreeMap<String, RankedList>> {
    let path = path.as_ref();
    let content = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut rows: BTreeMap<String, Vec<(usize, RankedEntry)>> = BTreeMap::new();
    for (idx, line) in content.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let malformed = |reason: &str| Error::MalformedRecord {
            path: path.to_path_buf(),
            line: idx + 1,
            reason: reason.to_string(),
        };
        let fields: Vec<&str> = line.split('\t').collect();
        let [qid, pid, rank, score] = fields[..] else {
            return Err(malformed("expected 4 tab-separated fields"));
        };
        let rank: usize = rank.parse().map_err(|_| malformed("rank is not an integer"))?;
        let score: f64 = score.parse().map_err(|_| malformed("score is not a number"))?;
        rows.entry(qid.to_string()).or_default().push((
            rank,
            RankedEntry {
                passage_id: pid.to_string(),
                score,
            },
        ));
    }
    Ok(rows
        .into_iter()
        .map(|(q, mut entries)| {
            entries.sort_by_key(|(rank, _)| *rank);
            (q, RankedList::from_ordered(entries.into_iter().map(|(_, e)| e).collect()))
        })
        .collect())
}

pub fn write_run(
    mut out: impl std::io::Write,
    header: Option<&str>,
    run: &BTreeMap<String, RankedList>,
) -> std::io::Result<()> {
    if let Some(h) = header {
        for line in h.lines() {
            writeln!(out, "# {line}")?;
        }
    }
    for (qid, list) in run {
        for (i, e) in list.iter().enumerate() {
            writeln!(out, "{qid}\t{}\t{}\t{}", e.passage_id, i + 1, e.score)?;
        }
    }
    Ok(())
}

/// Reads `{"query_id": …, "answers": […]}` lines.
pub fn load_judgments(path: impl AsRef<Path>) -> Result<Vec<Judgment>> {
    let path = path.as_ref();
    let content = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for (idx, line) in content.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let malformed = |reason: String| Error::MalformedRecord {
            path: path.to_path_buf(),
            line: idx + 1,
            reason,
        };
        let j: Judgment = serde_json::from_str(line).map_err(|e| malformed(e.to_string()))?;
        if j.answers.is_empty() {
            return Err(malformed(format!("query `{}` has an empty answer set", j.query_id)));
        }
        if !seen.insert(j.query_id.clone()) {
            return Err(Error::DuplicateId(j.query_id));
        }
        out.push(j);
    }
    Ok(out)
}

/// A retrieval query: question text plus the image it is asked about.
/// `caption` is optional context for lexical retrieval.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Query {
    pub query_id: String,
    pub question: String,
    pub image_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub caption: Option<String>,
}

/// Reads `{"query_id", "question", "image_id", "caption"?}` lines.
pub fn load_queries(path: impl AsRef<Path>) -> Result<Vec<Query>> {
    let path = path.as_ref();
    let content = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for (idx, line) in content.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let q: Query = serde_json::from_str(line).map_err(|e| Error::MalformedRecord {
            path: path.to_path_buf(),
            line: idx + 1,
            reason: e.to_string(),
        })?;
        if !seen.insert(q.query_id.clone()) {
            return Err(Error::DuplicateId(q.query_id));
        }
        out.push(q);
    }
    Ok(out)
}

pub fn write_queries(mut out: impl std::io::Write, queries: &[Query]) -> Result<()> {
    for q in queries {
        serde_json::to_writer(&mut out, q)?;
        out.write_all(b"\n").map_err(|e| Error::io("<queries>", e))?;
    }
    Ok(())
}

pub fn write_judgments(mut out: impl std::io::Write, judgments: &[Judgment]) -> Result<()> {
    for j in judgments {
        serde_json::to_writer(&mut out, j)?;
        out.write_all(b"\n").map_err(|e| Error::io("<judgments>", e))?;
    }
    Ok(())
}
