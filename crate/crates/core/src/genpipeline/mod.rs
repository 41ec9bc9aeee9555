//! Weakly supervised training-data generation.
//!
//! For every image: caption it, retrieve the top-M passages for the caption
//! with BM25, take standalone noun phrases of those passages as candidate
//! answers, generate a question per answer from the `<hl>`-highlighted
//! passage, keep the question only if a QA model recovers the answer with
//! ROUGE-1 F1 above the threshold, and pair it with the best-ranked BM25
//! passage for the question that does not contain the answer.
//!
//! Per-item failures never abort a run; they are counted in the
//! [`PipelineReport`] under a skip reason.

mod adapters;
pub mod http;
pub mod stub;

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use tracing::debug;

pub use adapters::{
    AdapterError, AdapterResult, AnnotatedToken, CandidatePhrase, ModelAdapters, PhraseAnnotation, PosTag,
};
pub use http::HttpAdapters;
pub use stub::StubAdapters;

use crate::bm25::{Bm25Params, InvertedIndex};
use crate::corpus::{contains_answer, find_token_run, tokenize, tokenize_with_offsets, ImageRecord, Passage, PassageStore};
use crate::error::{Error, Result};
use crate::textmetrics::rouge1;

/// Answer highlight marker for the question generator input.
pub const HIGHLIGHT: &str = "<hl>";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    /// Passages retrieved per image caption (M).
    pub passages_per_image: usize,
    /// ROUGE-1 F1 a QA answer must strictly exceed (T).
    pub threshold: f64,
    /// BM25 depth searched for a hard negative.
    pub negative_pool_size: usize,
    pub max_phrases_per_passage: Option<usize>,
    pub bm25: Bm25Params,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            passages_per_image: 5,
            threshold: 0.5,
            negative_pool_size: 100,
            max_phrases_per_passage: None,
            bm25: Bm25Params::default(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.passages_per_image == 0 {
            return Err(Error::InvalidArgument("passages_per_image must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::InvalidArgument(format!(
                "threshold must be in [0, 1], got {}",
                self.threshold
            )));
        }
        if self.negative_pool_size == 0 {
            return Err(Error::InvalidArgument("negative_pool_size must be >= 1".into()));
        }
        Bm25Params::new(self.bm25.k1, self.bm25.b)?;
        Ok(())
    }
}

/// One training tuple: question, image, answer, positive and hard negative passage.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratedExample {
    pub question: String,
    pub image_id: String,
    pub answer: String,
    pub positive_passage_id: String,
    pub negative_passage_id: String,
}

impl GeneratedExample {
    /// The answer is in the positive passage, not in the negative one, and the
    /// question is nonempty.
    pub fn check(&self, store: &PassageStore) -> Result<bool> {
        let text = |id: &str| {
            store
                .text(id)
                .ok_or_else(|| Error::InvalidArgument(format!("unknown passage `{id}`")))
        };
        Ok(!self.question.trim().is_empty()
            && contains_answer(text(&self.positive_passage_id)?, &self.answer)?
            && !contains_answer(text(&self.negative_passage_id)?, &self.answer)?)
    }
}

/// Filter-time evidence kept next to each emitted example.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditRecord {
    pub image_id: String,
    pub positive_passage_id: String,
    pub question: String,
    pub answer: String,
    pub qa_answer: String,
    pub rouge1_f1: f64,
    pub threshold: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SkipReason {
    CaptionFailed,
    NoCaptionMatches,
    AnnotationFailed,
    MalformedPhrase,
    AnswerOffsetMismatch,
    QuestionGenerationFailed,
    EmptyQuestion,
    QuestionAnsweringFailed,
    BelowThreshold,
    NoNegative,
    InvariantViolation,
}

impl SkipReason {
    pub fn as_str(self) -> &'static str {
        match self {
            SkipReason::CaptionFailed => "caption_failed",
            SkipReason::NoCaptionMatches => "no_caption_matches",
            SkipReason::AnnotationFailed => "annotation_failed",
            SkipReason::MalformedPhrase => "malformed_phrase",
            SkipReason::AnswerOffsetMismatch => "answer_offset_mismatch",
            SkipReason::QuestionGenerationFailed => "question_generation_failed",
            SkipReason::EmptyQuestion => "empty_question",
            SkipReason::QuestionAnsweringFailed => "question_answering_failed",
            SkipReason::BelowThreshold => "below_threshold",
            SkipReason::NoNegative => "no_negative",
            SkipReason::InvariantViolation => "invariant_violation",
        }
    }
}

/// Caption-based matching: the image's caption (reused when present, otherwise
/// produced by the captioner) is the BM25 query; the top `m` hits are returned
/// in rank order.
pub fn match_passages<'s>(
    image: &ImageRecord,
    adapters: &dyn ModelAdapters,
    index: &InvertedIndex,
    store: &'s PassageStore,
    params: Bm25Params,
    m: usize,
) -> std::result::Result<(String, Vec<&'s Passage>), SkipReason> {
    let caption = match image.caption.as_deref().map(str::trim) {
        Some(c) if !c.is_empty() => c.to_string(),
        _ => match adapters.caption(&image.image_id) {
            Ok(c) if !c.trim().is_empty() => c,
            Ok(_) => {
                debug!(image = %image.image_id, "captioner returned an empty caption");
                return Err(SkipReason::CaptionFailed);
            }
            Err(e) => {
                debug!(image = %image.image_id, error = %e, "captioner failed");
                return Err(SkipReason::CaptionFailed);
            }
        },
    };
    let hits = index.search(params, &caption, m);
    if hits.is_empty() {
        debug!(image = %image.image_id, caption = %caption, "caption matches no passage");
        return Err(SkipReason::NoCaptionMatches);
    }
    let passages = hits
        .ids()
        .map(|id| store.get(id).expect("index built from this store"))
        .collect();
    Ok((caption, passages))
}

/// Drops phrases containing a pronoun or determiner and deduplicates the rest
/// case-insensitively, keeping the earliest occurrence. Output is in offset order.
pub fn select_answer_phrases(phrases: Vec<CandidatePhrase>) -> Vec<CandidatePhrase> {
    let mut kept: Vec<CandidatePhrase> = phrases
        .into_iter()
        .filter(|p| !p.has_referential_token())
        .collect();
    kept.sort_by_key(CandidatePhrase::offset);
    let mut seen = HashSet::new();
    kept.retain(|p| seen.insert(p.text.to_lowercase()));
    kept
}

/// Wraps the first token-level occurrence of `answer` in highlight markers.
pub fn highlight_answer(passage_text: &str, answer: &str) -> Option<String> {
    let spans = tokenize_with_offsets(passage_text);
    let passage_tokens: Vec<&str> = spans.iter().map(|s| s.token.as_str()).collect();
    let answer_tokens = tokenize(answer);
    let at = find_token_run(&passage_tokens, &answer_tokens.tokens)?;
    let start = spans[at].start;
    let end = spans[at + answer_tokens.len() - 1].end;
    Some(format!(
        "{}{HIGHLIGHT} {} {HIGHLIGHT}{}",
        &passage_text[..start],
        &passage_text[start..end],
        &passage_text[end..]
    ))
}

pub fn generate_question(
    adapters: &dyn ModelAdapters,
    passage: &Passage,
    answer: &CandidatePhrase,
) -> std::result::Result<String, SkipReason> {
    let offset = answer.offset();
    if passage.text.get(offset..offset + answer.text.len()) != Some(answer.text.as_str()) {
        debug!(passage = %passage.id, answer = %answer.text, offset, "answer not at recorded offset");
        return Err(SkipReason::AnswerOffsetMismatch);
    }
    let highlighted = highlight_answer(&passage.text, &answer.text).ok_or(SkipReason::AnswerOffsetMismatch)?;
    match adapters.generate_question(&highlighted) {
        Ok(q) if q.trim().is_empty() => Err(SkipReason::EmptyQuestion),
        Ok(q) => Ok(q),
        Err(e) => {
            debug!(passage = %passage.id, answer = %answer.text, error = %e, "question generation failed");
            Err(SkipReason::QuestionGenerationFailed)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterOutcome {
    pub keep: bool,
    /// `None` when the QA adapter failed.
    pub qa_answer: Option<String>,
    pub rouge1_f1: f64,
}

/// Keeps the question iff `rouge1(QA answer, answer).f1 > threshold`.
/// A failing QA adapter drops the question.
pub fn filter_question(
    adapters: &dyn ModelAdapters,
    question: &str,
    passage: &str,
    answer: &str,
    threshold: f64,
) -> FilterOutcome {
    match adapters.answer_question(question, passage) {
        Ok(qa_answer) => {
            let f1 = rouge1(&qa_answer, answer).f1;
            FilterOutcome {
                keep: f1 > threshold,
                qa_answer: Some(qa_answer),
                rouge1_f1: f1,
            }
        }
        Err(e) => {
            debug!(question, error = %e, "question answering failed");
            FilterOutcome {
                keep: false,
                qa_answer: None,
                rouge1_f1: 0.0,
            }
        }
    }
}

/// The highest-ranked BM25 passage for `question` (within `pool_size`) that
/// does not contain `answer`.
pub fn sample_negative<'s>(
    index: &InvertedIndex,
    store: &'s PassageStore,
    params: Bm25Params,
    question: &str,
    answer: &str,
    pool_size: usize,
) -> Option<&'s Passage> {
    index
        .search(params, question, pool_size)
        .ids()
        .map(|id| store.get(id).expect("index built from this store"))
        .find(|p| matches!(contains_answer(&p.text, answer), Ok(false)))
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub images: usize,
    pub captioned: usize,
    pub matched: usize,
    pub passages: usize,
    pub phrases: usize,
    pub generated: usize,
    pub kept_after_filter: usize,
    pub emitted: usize,
    pub skipped: BTreeMap<String, usize>,
}

impl PipelineReport {
    fn merge(&mut self, other: &PipelineReport) {
        self.images += other.images;
        self.captioned += other.captioned;
        self.matched += other.matched;
        self.passages += other.passages;
        self.phrases += other.phrases;
        self.generated += other.generated;
        self.kept_after_filter += other.kept_after_filter;
        self.emitted += other.emitted;
        for (k, v) in &other.skipped {
            *self.skipped.entry(k.clone()).or_default() += v;
        }
    }

    fn skip(&mut self, reason: SkipReason) {
        *self.skipped.entry(reason.as_str().to_string()).or_default() += 1;
    }
}

#[derive(Debug, Clone, Default)]
pub struct PipelineOutput {
    pub examples: Vec<GeneratedExample>,
    /// Parallel to `examples`.
    pub audit: Vec<AuditRecord>,
    pub report: PipelineReport,
}

pub struct Pipeline<'a> {
    pub store: &'a PassageStore,
    pub index: &'a InvertedIndex,
    pub adapters: &'a dyn ModelAdapters,
    pub config: PipelineConfig,
}

impl<'a> Pipeline<'a> {
    pub fn new(
        store: &'a PassageStore,
        index: &'a InvertedIndex,
        adapters: &'a dyn ModelAdapters,
        config: PipelineConfig,
    ) -> Result<Self> {
        config.validate()?;
        if index.doc_count() != store.len() {
            return Err(Error::InvalidArgument(
                "BM25 index and passage store differ in size".into(),
            ));
        }
        Ok(Pipeline {
            store,
            index,
            adapters,
            config,
        })
    }

    /// Runs every image. With `workers > 1` images are processed in parallel;
    /// results are reassembled in image order so the output is identical to a
    /// sequential run.
    pub fn run(&self, images: &[ImageRecord], workers: usize) -> Result<PipelineOutput> {
        let per_image: Vec<PipelineOutput> = if workers <= 1 {
            images.iter().map(|img| self.process_image(img)).collect()
        } else {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(workers)
                .build()
                .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
            pool.install(|| images.par_iter().map(|img| self.process_image(img)).collect())
        };
        let mut out = PipelineOutput::default();
        for part in per_image {
            out.report.merge(&part.report);
            out.examples.extend(part.examples);
            out.audit.extend(part.audit);
        }
        Ok(out)
    }

    pub fn process_image(&self, image: &ImageRecord) -> PipelineOutput {
        let cfg = &self.config;
        let mut out = PipelineOutput::default();
        let report = &mut out.report;
        report.images = 1;

        let (_caption, passages) = match match_passages(
            image,
            self.adapters,
            self.index,
            self.store,
            cfg.bm25,
            cfg.passages_per_image,
        ) {
            Ok(r) => r,
            Err(reason) => {
                if reason != SkipReason::CaptionFailed {
                    report.captioned = 1;
                }
                report.skip(reason);
                return out;
            }
        };
        report.captioned = 1;
        report.matched = 1;
        report.passages = passages.len();

        for passage in passages {
            let annotations = match self.adapters.annotate(&passage.text) {
                Ok(a) => a,
                Err(e) => {
                    debug!(passage = %passage.id, error = %e, "annotation failed");
                    report.skip(SkipReason::AnnotationFailed);
                    continue;
                }
            };
            let mut phrases = Vec::with_capacity(annotations.len());
            for a in annotations {
                let phrase = CandidatePhrase::from_annotation(a, &passage.id);
                if phrase.is_well_formed() && !tokenize(&phrase.text).is_empty() {
                    phrases.push(phrase);
                } else {
                    report.skip(SkipReason::MalformedPhrase);
                }
            }
            let mut selected = select_answer_phrases(phrases);
            if let Some(max) = cfg.max_phrases_per_passage {
                selected.truncate(max);
            }
            report.phrases += selected.len();

            for phrase in &selected {
                match self.process_phrase(image, passage, phrase, report) {
                    Ok((example, audit)) => {
                        report.emitted += 1;
                        out.examples.push(example);
                        out.audit.push(audit);
                    }
                    Err(reason) => report.skip(reason),
                }
            }
        }
        out
    }

    fn process_phrase(
        &self,
        image: &ImageRecord,
        passage: &Passage,
        phrase: &CandidatePhrase,
        report: &mut PipelineReport,
    ) -> std::result::Result<(GeneratedExample, AuditRecord), SkipReason> {
        let cfg = &self.config;
        let question = generate_question(self.adapters, passage, phrase)?;
        report.generated += 1;

        let verdict = filter_question(self.adapters, &question, &passage.text, &phrase.text, cfg.threshold);
        let Some(qa_answer) = verdict.qa_answer else {
            return Err(SkipReason::QuestionAnsweringFailed);
        };
        if !verdict.keep {
            return Err(SkipReason::BelowThreshold);
        }
        report.kept_after_filter += 1;

        let negative = sample_negative(
            self.index,
            self.store,
            cfg.bm25,
            &question,
            &phrase.text,
            cfg.negative_pool_size,
        )
        .ok_or_else(|| {
            debug!(question = %question, answer = %phrase.text, "no negative within pool");
            SkipReason::NoNegative
        })?;

        let example = GeneratedExample {
            question: question.clone(),
            image_id: image.image_id.clone(),
            answer: phrase.text.clone(),
            positive_passage_id: passage.id.clone(),
            negative_passage_id: negative.id.clone(),
        };
        if !matches!(example.check(self.store), Ok(true)) {
            return Err(SkipReason::InvariantViolation);
        }
        Ok((
            example,
            AuditRecord {
                image_id: image.image_id.clone(),
                positive_passage_id: passage.id.clone(),
                question,
                answer: phrase.text.clone(),
                qa_answer,
                rouge1_f1: verdict.rouge1_f1,
                threshold: cfg.threshold,
            },
        ))
    }
}

/// Convenience wrapper around [`Pipeline::run`].
pub fn run_pipeline(
    images: &[ImageRecord],
    store: &PassageStore,
    index: &InvertedIndex,
    adapters: &dyn ModelAdapters,
    config: PipelineConfig,
    workers: usize,
) -> Result<PipelineOutput> {
    Pipeline::new(store, index, adapters, config)?.run(images, workers)
}

pub fn write_jsonl<T: Serialize>(mut out: impl Write, items: &[T]) -> Result<()> {
    for item in items {
        serde_json::to_writer(&mut out, item)?;
        out.write_all(b"\n").map_err(|e| Error::io("<output>", e))?;
    }
    Ok(())
}

pub fn load_examples(path: impl AsRef<Path>) -> Result<Vec<GeneratedExample>> {
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

#[cfg(test)]
mod tests {
    use super::*;

    fn phrase(tokens: &[(&str, PosTag, usize)]) -> CandidatePhrase {
        let text = tokens.iter().map(|t| t.0).collect::<Vec<_>>().join(" ");
        CandidatePhrase {
            tokens: tokens
                .iter()
                .map(|&(t, tag, off)| AnnotatedToken {
                    text: t.into(),
                    pos_tag: tag,
                    offset: off,
                })
                .collect(),
            text,
            source_passage_id: "p".into(),
        }
    }

    #[test]
    fn selection_excludes_referential_and_dedups() {
        let phrases = vec![
            phrase(&[("tail", PosTag::Noun, 90)]),
            phrase(&[("the", PosTag::Det, 0), ("cat", PosTag::Noun, 4)]),
            phrase(&[("cats", PosTag::Noun, 20)]),
            phrase(&[("seven", PosTag::Num, 30), ("feet", PosTag::Noun, 36)]),
            phrase(&[("Tail", PosTag::Noun, 10)]),
            phrase(&[("its", PosTag::Pron, 50), ("fur", PosTag::Noun, 54)]),
        ];
        let kept = select_answer_phrases(phrases);
        let texts: Vec<_> = kept.iter().map(|p| (p.text.as_str(), p.offset())).collect();
        assert_eq!(texts, [("Tail", 10), ("cats", 20), ("seven feet", 30)]);
        assert!(select_answer_phrases(vec![]).is_empty());
    }

    #[test]
    fn highlight_first_occurrence() {
        assert_eq!(
            highlight_answer("Cats can jump seven feet.", "seven feet").unwrap(),
            "Cats can jump <hl> seven feet <hl>."
        );
        assert_eq!(
            highlight_answer("A tail, then a Tail.", "tail").unwrap(),
            "A <hl> tail <hl>, then a Tail."
        );
        assert!(highlight_answer("categories", "cat").is_none());
    }

    #[test]
    fn config_validation() {
        assert!(PipelineConfig::default().validate().is_ok());
        let bad = PipelineConfig {
            threshold: 1.5,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = PipelineConfig {
            passages_per_image: 0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        assert_eq!(PipelineConfig::default().passages_per_image, 5);
        assert_eq!(PipelineConfig::default().threshold, 0.5);
    }
}
