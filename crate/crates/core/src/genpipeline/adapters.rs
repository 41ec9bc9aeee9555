use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Coarse part-of-speech tags delivered by the annotator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum PosTag {
    Noun,
    Propn,
    Pron,
    Det,
    Adj,
    Num,
    Other,
}

impl PosTag {
    /// Parses a wire tag; unknown tags map to [`PosTag::Other`].
    pub fn from_wire(tag: &str) -> Self {
        match tag.to_ascii_uppercase().as_str() {
            "NOUN" => PosTag::Noun,
            "PROPN" => PosTag::Propn,
            "PRON" => PosTag::Pron,
            "DET" => PosTag::Det,
            "ADJ" => PosTag::Adj,
            "NUM" => PosTag::Num,
            _ => PosTag::Other,
        }
    }

    pub fn as_wire(self) -> &'static str {
        match self {
            PosTag::Noun => "NOUN",
            PosTag::Propn => "PROPN",
            PosTag::Pron => "PRON",
            PosTag::Det => "DET",
            PosTag::Adj => "ADJ",
            PosTag::Num => "NUM",
            PosTag::Other => "OTHER",
        }
    }

    /// Tags that disqualify a phrase as a standalone answer.
    pub fn is_referential(self) -> bool {
        matches!(self, PosTag::Pron | PosTag::Det)
    }
}

/// `offset` is a byte offset into the annotated text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotatedToken {
    pub text: String,
    pub pos_tag: PosTag,
    pub offset: usize,
}

/// A noun phrase as returned by the annotator, before it is tied to a passage.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhraseAnnotation {
    pub text: String,
    pub offset: usize,
    pub tokens: Vec<AnnotatedToken>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidatePhrase {
    pub tokens: Vec<AnnotatedToken>,
    pub text: String,
    pub source_passage_id: String,
}

impl CandidatePhrase {
    pub fn from_annotation(a: PhraseAnnotation, passage_id: &str) -> Self {
        CandidatePhrase {
            tokens: a.tokens,
            text: a.text,
            source_passage_id: passage_id.to_string(),
        }
    }

    /// Byte offset of the first token.
    pub fn offset(&self) -> usize {
        self.tokens.first().map_or(0, |t| t.offset)
    }

    /// Nonempty, with strictly increasing token offsets.
    pub fn is_well_formed(&self) -> bool {
        !self.tokens.is_empty()
            && !self.text.trim().is_empty()
            && self.tokens.windows(2).all(|w| w[0].offset < w[1].offset)
    }

    pub fn has_referential_token(&self) -> bool {
        self.tokens.iter().any(|t| t.pos_tag.is_referential())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AdapterError {
    #[error("{endpoint}: service unavailable: {reason}")]
    Unavailable { endpoint: String, reason: String },
    #[error("{endpoint}: {reason}")]
    Failed { endpoint: String, reason: String },
    #[error("{endpoint}: protocol error: {reason}")]
    Protocol { endpoint: String, reason: String },
}

impl AdapterError {
    pub fn failed(endpoint: &str, reason: impl Into<String>) -> Self {
        AdapterError::Failed {
            endpoint: endpoint.to_string(),
            reason: reason.into(),
        }
    }

    pub fn protocol(endpoint: &str, reason: impl Into<String>) -> Self {
        AdapterError::Protocol {
            endpoint: endpoint.to_string(),
            reason: reason.into(),
        }
    }
}

pub type AdapterResult<T> = std::result::Result<T, AdapterError>;

/// The four model roles used by data generation.
///
/// Implementations must be deterministic for fixed inputs within a run and
/// safe to call from several threads.
pub trait ModelAdapters: Send + Sync {
    /// Image → textual description.
    fn caption(&self, image_ref: &str) -> AdapterResult<String>;
    /// Noun phrases of `text`, with coarse tags and byte offsets.
    fn annotate(&self, text: &str) -> AdapterResult<Vec<PhraseAnnotation>>;
    /// Question for a passage whose answer is wrapped in `<hl>` markers.
    fn generate_question(&self, passage_hl: &str) -> AdapterResult<String>;
    /// Answer span for `question` in `passage`.
    fn answer_question(&self, question: &str, passage: &str) -> AdapterResult<String>;
}

impl<T: ModelAdapters + ?Sized> ModelAdapters for &T {
    fn caption(&self, image_ref: &str) -> AdapterResult<String> {
        (**self).caption(image_ref)
    }
    fn annotate(&self, text: &str) -> AdapterResult<Vec<PhraseAnnotation>> {
        (**self).annotate(text)
    }
    fn generate_question(&self, passage_hl: &str) -> AdapterResult<String> {
        (**self).generate_question(passage_hl)
    }
    fn answer_question(&self, question: &str, passage: &str) -> AdapterResult<String> {
        (**self).answer_question(question, passage)
    }
}
