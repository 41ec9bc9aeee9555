//! Remote adapters over the HTTP JSON wire protocol.
//!
//! | endpoint         | request                    | response                                   |
//! |------------------|----------------------------|--------------------------------------------|
//! | `POST /caption`  | `{image_ref}`              | `{caption}`                                |
//! | `POST /annotate` | `{text}`                   | `{phrases: [{text, offset, tags: [..]}]}`  |
//! | `POST /qg`       | `{passage_hl}`             | `{question}`                               |
//! | `POST /qa`       | `{question, passage}`      | `{answer}`                                 |
//! | `GET /healthz`   |                            | any 2xx                                    |
//!
//! Phrase offsets on the wire count Unicode scalar values (as a Python
//! service would); they are converted to byte offsets on receipt. `tags`
//! holds one tag per token of the phrase under the corpus tokenizer.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::adapters::{AdapterError, AdapterResult, AnnotatedToken, ModelAdapters, PhraseAnnotation, PosTag};
use crate::corpus::tokenize_with_offsets;

pub mod wire {
    use serde::{Deserialize, Serialize};

    #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
    pub struct CaptionRequest {
        pub image_ref: String,
    }
    #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
    pub struct CaptionResponse {
        pub caption: String,
    }
    #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
    pub struct AnnotateRequest {
        pub text: String,
    }
    #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
    pub struct WirePhrase {
        pub text: String,
        pub offset: usize,
        pub tags: Vec<String>,
    }
    #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
    pub struct AnnotateResponse {
        pub phrases: Vec<WirePhrase>,
    }
    #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
    pub struct QgRequest {
        pub passage_hl: String,
    }
    #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
    pub struct QgResponse {
        pub question: String,
    }
    #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
    pub struct QaRequest {
        pub question: String,
        pub passage: String,
    }
    #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
    pub struct QaResponse {
        pub answer: String,
    }
}

use wire::*;

/// Converts an in-process annotation to its wire form (byte → char offset).
pub fn phrase_to_wire(text: &str, phrase: &PhraseAnnotation) -> WirePhrase {
    WirePhrase {
        text: phrase.text.clone(),
        offset: text[..phrase.offset].chars().count(),
        tags: phrase.tokens.iter().map(|t| t.pos_tag.as_wire().to_string()).collect(),
    }
}

/// Rebuilds an annotation from its wire form, checking that the phrase sits
/// at the stated offset of `text` and carries one tag per token.
pub fn phrase_from_wire(text: &str, phrase: &WirePhrase) -> Result<PhraseAnnotation, String> {
    let byte_offset = if phrase.offset == text.chars().count() {
        text.len()
    } else {
        text.char_indices()
            .nth(phrase.offset)
            .map(|(b, _)| b)
            .ok_or_else(|| format!("offset {} beyond text", phrase.offset))?
    };
    let end = byte_offset + phrase.text.len();
    if text.get(byte_offset..end) != Some(phrase.text.as_str()) {
        return Err(format!("phrase `{}` not found at offset {}", phrase.text, phrase.offset));
    }
    let spans = tokenize_with_offsets(&phrase.text);
    if spans.len() != phrase.tags.len() {
        return Err(format!(
            "phrase `{}` has {} tokens but {} tags",
            phrase.text,
            spans.len(),
            phrase.tags.len()
        ));
    }
    let tokens = spans
        .iter()
        .zip(&phrase.tags)
        .map(|(s, tag)| AnnotatedToken {
            text: phrase.text[s.start..s.end].to_string(),
            pos_tag: PosTag::from_wire(tag),
            offset: byte_offset + s.start,
        })
        .collect();
    Ok(PhraseAnnotation {
        text: phrase.text.clone(),
        offset: byte_offset,
        tokens,
    })
}

#[derive(Debug, Clone)]
pub struct HttpAdapters {
    base_url: String,
    agent: ureq::Agent,
}

impl HttpAdapters {
    pub fn new(base_url: impl Into<String>) -> Self {
        Self::with_timeout(base_url, Duration::from_secs(120))
    }

    pub fn with_timeout(base_url: impl Into<String>, timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .build()
            .into();
        HttpAdapters {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            agent,
        }
    }

    pub fn base_url(&self) -> &str {
        &self.base_url
    }

    pub fn health(&self) -> AdapterResult<()> {
        let url = format!("{}/healthz", self.base_url);
        self.agent
            .get(&url)
            .call()
            .map(|_| ())
            .map_err(|e| classify("healthz", e))
    }

    fn post<Req: Serialize, Resp: for<'de> Deserialize<'de>>(&self, endpoint: &'static str, body: &Req) -> AdapterResult<Resp> {
        let url = format!("{}/{endpoint}", self.base_url);
        let mut response = self
            .agent
            .post(&url)
            .send_json(body)
            .map_err(|e| classify(endpoint, e))?;
        response
            .body_mut()
            .read_json::<Resp>()
            .map_err(|e| AdapterError::protocol(endpoint, e.to_string()))
    }
}

fn classify(endpoint: &str, e: ureq::Error) -> AdapterError {
    match e {
        ureq::Error::StatusCode(code) if code < 500 => {
            AdapterError::protocol(endpoint, format!("HTTP {code}"))
        }
        ureq::Error::StatusCode(code) => AdapterError::failed(endpoint, format!("HTTP {code}")),
        other => AdapterError::Unavailable {
            endpoint: endpoint.to_string(),
            reason: other.to_string(),
        },
    }
}

impl ModelAdapters for HttpAdapters {
    fn caption(&self, image_ref: &str) -> AdapterResult<String> {
        let r: CaptionResponse = self.post("caption", &CaptionRequest { image_ref: image_ref.into() })?;
        Ok(r.caption)
    }

    fn annotate(&self, text: &str) -> AdapterResult<Vec<PhraseAnnotation>> {
        let r: AnnotateResponse = self.post("annotate", &AnnotateRequest { text: text.into() })?;
        r.phrases
            .iter()
            .map(|p| phrase_from_wire(text, p).map_err(|e| AdapterError::protocol("annotate", e)))
            .collect()
    }

    fn generate_question(&self, passage_hl: &str) -> AdapterResult<String> {
        let r: QgResponse = self.post("qg", &QgRequest { passage_hl: passage_hl.into() })?;
        Ok(r.question)
    }

    fn answer_question(&self, question: &str, passage: &str) -> AdapterResult<String> {
        let r: QaResponse = self.post(
            "qa",
            &QaRequest {
                question: question.into(),
                passage: passage.into(),
            },
        )?;
        Ok(r.answer)
    }
}
