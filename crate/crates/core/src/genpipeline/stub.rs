//! Deterministic, model-free adapters.
//!
//! * captioner: looks the image up in a caption table.
//! * annotator: splits text at punctuation and closed-class words; each run of
//!   at most four tokens becomes a phrase. Determiners and pronouns stay inside
//!   the run so that the referential-phrase rule can see them.
//! * question generator: `what is <highlighted answer>?`
//! * question answerer: the longest run of passage tokens that all occur in
//!   the question (question words excluded), earliest first.

use std::collections::{BTreeMap, HashSet};

use super::adapters::{AdapterError, AdapterResult, AnnotatedToken, ModelAdapters, PhraseAnnotation, PosTag};
use super::HIGHLIGHT;
use crate::corpus::{tokenize, tokenize_with_offsets};

const MAX_PHRASE_TOKENS: usize = 4;

const DETERMINERS: &[&str] = &[
    "a", "an", "the", "this", "that", "these", "those", "some", "any", "every", "each", "no",
    "another", "either", "neither", "all", "both",
];

const PRONOUNS: &[&str] = &[
    "i", "me", "my", "mine", "you", "your", "yours", "he", "him", "his", "she", "her", "hers",
    "it", "its", "we", "us", "our", "ours", "they", "them", "their", "theirs", "itself",
    "themselves", "himself", "herself", "who", "whom", "whose", "which", "what",
];

/// Words that end a chunk and are never part of one.
pub const BREAK_WORDS: &[&str] = &[
    // prepositions
    "of", "in", "on", "at", "to", "for", "with", "from", "by", "as", "into", "onto", "over",
    "under", "about", "across", "after", "before", "between", "through", "during", "near",
    "above", "below", "around", "along", "among", "against", "behind", "beyond", "within",
    "without", "up", "down", "off", "out", "than", "like", "per", "via", "while",
    // conjunctions and adverbs
    "and", "or", "but", "nor", "so", "yet", "because", "although", "if", "when", "where",
    "whether", "how", "why", "then", "also", "often", "usually", "not", "very", "most", "more",
    // auxiliaries
    "is", "are", "was", "were", "be", "been", "being", "am", "has", "have", "had", "do", "does",
    "did", "can", "could", "will", "would", "shall", "should", "may", "might", "must",
    // common verbs
    "use", "uses", "used", "live", "lives", "lived", "eat", "eats", "ate", "found", "find",
    "reach", "reaches", "reached", "weigh", "weighs", "weighed", "run", "runs", "ran", "jump",
    "jumps", "jumped", "carry", "carries", "carried", "need", "needs", "needed", "make",
    "makes", "made", "become", "became", "known", "called", "named", "built", "travel",
    "travels", "traveled", "grow", "grows", "grew", "sit", "sits", "sat", "stand", "stands",
    "stood", "ride", "rides", "rode", "hold", "holds", "held", "play", "plays", "played",
    "appear", "appears", "appeared", "introduced", "recorded", "measured", "described",
    "sitting", "standing", "riding", "holding", "playing", "flying", "parked", "resting",
    "eating", "walking", "lying",
];

const NUMBER_WORDS: &[&str] = &[
    "zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten",
    "eleven", "twelve", "thirteen", "fourteen", "fifteen", "sixteen", "seventeen", "eighteen",
    "nineteen", "twenty", "thirty", "forty", "fifty", "sixty", "seventy", "eighty", "ninety",
    "hundred", "thousand", "million", "billion",
];

const QUESTION_WORDS: &[&str] = &[
    "what", "which", "who", "whom", "whose", "when", "where", "why", "how", "is", "are", "was",
    "were", "do", "does", "did",
];

#[derive(Debug, Clone, Default)]
pub struct StubAdapters {
    captions: BTreeMap<String, String>,
}

impl StubAdapters {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_captions(captions: impl IntoIterator<Item = (String, String)>) -> Self {
        StubAdapters {
            captions: captions.into_iter().collect(),
        }
    }

    pub fn add_caption(&mut self, image_ref: impl Into<String>, caption: impl Into<String>) {
        self.captions.insert(image_ref.into(), caption.into());
    }
}

pub fn stub_tag(token_lower: &str, surface: &str, sentence_initial: bool) -> PosTag {
    if DETERMINERS.contains(&token_lower) {
        PosTag::Det
    } else if PRONOUNS.contains(&token_lower) {
        PosTag::Pron
    } else if token_lower.chars().all(|c| c.is_ascii_digit()) || NUMBER_WORDS.contains(&token_lower) {
        PosTag::Num
    } else if !sentence_initial && surface.chars().next().is_some_and(char::is_uppercase) {
        PosTag::Propn
    } else {
        PosTag::Noun
    }
}

/// The stub chunker, exposed for reuse by test servers.
pub fn stub_annotate(text: &str) -> Vec<PhraseAnnotation> {
    let spans = tokenize_with_offsets(text);
    let mut phrases = Vec::new();
    let mut chunk: Vec<AnnotatedToken> = Vec::new();
    let mut prev_end = 0;
    let mut sentence_initial = true;

    let mut flush = |chunk: &mut Vec<AnnotatedToken>| {
        if !chunk.is_empty() && chunk.len() <= MAX_PHRASE_TOKENS {
            let start = chunk[0].offset;
            let last = chunk.last().expect("nonempty");
            let end = last.offset + last.text.len();
            phrases.push(PhraseAnnotation {
                text: text[start..end].to_string(),
                offset: start,
                tokens: std::mem::take(chunk),
            });
        }
        chunk.clear();
    };

    for span in spans {
        let gap = &text[prev_end..span.start];
        let punctuated = gap.chars().any(|c| !c.is_whitespace());
        if punctuated {
            flush(&mut chunk);
            if gap.contains(['.', '!', '?', ';']) {
                sentence_initial = true;
            }
        }
        prev_end = span.end;
        let surface = &text[span.start..span.end];
        if BREAK_WORDS.contains(&span.token.as_str()) {
            flush(&mut chunk);
            sentence_initial = false;
            continue;
        }
        chunk.push(AnnotatedToken {
            text: surface.to_string(),
            pos_tag: stub_tag(&span.token, surface, sentence_initial),
            offset: span.start,
        });
        sentence_initial = false;
    }
    flush(&mut chunk);
    phrases
}

/// Extracts the text between the first pair of highlight markers.
pub fn highlighted_span(passage_hl: &str) -> Option<&str> {
    let (_, rest) = passage_hl.split_once(HIGHLIGHT)?;
    let (inner, _) = rest.split_once(HIGHLIGHT)?;
    let inner = inner.trim();
    (!inner.is_empty()).then_some(inner)
}

pub fn stub_question(passage_hl: &str) -> AdapterResult<String> {
    highlighted_span(passage_hl)
        .map(|a| format!("what is {a}?"))
        .ok_or_else(|| AdapterError::failed("qg", "no highlighted answer in input"))
}

pub fn stub_answer(question: &str, passage: &str) -> String {
    let wanted: HashSet<String> = tokenize(question)
        .tokens
        .into_iter()
        .filter(|t| !QUESTION_WORDS.contains(&t.as_str()))
        .collect();
    let spans = tokenize_with_offsets(passage);
    let mut best: Option<(usize, usize)> = None;
    let mut i = 0;
    while i < spans.len() {
        if !wanted.contains(&spans[i].token) {
            i += 1;
            continue;
        }
        let mut j = i;
        while j + 1 < spans.len() && wanted.contains(&spans[j + 1].token) {
            j += 1;
        }
        if best.is_none_or(|(s, e)| j - i > e - s) {
            best = Some((i, j));
        }
        i = j + 1;
    }
    best.map_or_else(String::new, |(s, e)| passage[spans[s].start..spans[e].end].to_string())
}

impl ModelAdapters for StubAdapters {
    fn caption(&self, image_ref: &str) -> AdapterResult<String> {
        self.captions
            .get(image_ref)
            .cloned()
            .ok_or_else(|| AdapterError::failed("caption", format!("no caption for `{image_ref}`")))
    }

    fn annotate(&self, text: &str) -> AdapterResult<Vec<PhraseAnnotation>> {
        Ok(stub_annotate(text))
    }

    fn generate_question(&self, passage_hl: &str) -> AdapterResult<String> {
        stub_question(passage_hl)
    }

    fn answer_question(&self, question: &str, passage: &str) -> AdapterResult<String> {
        Ok(stub_answer(question, passage))
    }
}
