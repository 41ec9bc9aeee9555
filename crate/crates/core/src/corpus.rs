//! Passage collection, image records and the shared tokenizer.
//!
//! Tokens are lowercase maximal runs of Unicode alphanumeric characters.
//! The same tokenizer backs BM25 indexing, ROUGE-1 and relevance judgment,
//! so answer matching is done at token granularity: `cat` matches
//! "The CAT jumps" but not "categories".

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Passage {
    pub id: String,
    pub text: String,
}

impl Passage {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Result<Self> {
        let passage = Passage {
            id: id.into(),
            text: text.into(),
        };
        passage.validate()?;
        Ok(passage)
    }

    fn validate(&self) -> Result<()> {
        if self.id.is_empty() {
            return Err(Error::InvalidArgument("passage id is empty".into()));
        }
        if self.text.trim().is_empty() {
            return Err(Error::InvalidArgument(format!(
                "passage `{}` has empty text",
                self.id
            )));
        }
        Ok(())
    }
}

/// Insertion-ordered passage collection with id lookup. Immutable once loaded.
#[derive(Debug, Clone, Default)]
pub struct PassageStore {
    passages: Vec<Passage>,
    by_id: HashMap<String, usize>,
}

impl PassageStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_passages(passages: impl IntoIterator<Item = Passage>) -> Result<Self> {
        let mut store = Self::new();
        for p in passages {
            store.push(p)?;
        }
        Ok(store)
    }

    pub fn push(&mut self, passage: Passage) -> Result<()> {
        passage.validate()?;
        if self.by_id.contains_key(&passage.id) {
            return Err(Error::DuplicateId(passage.id));
        }
        self.by_id.insert(passage.id.clone(), self.passages.len());
        self.passages.push(passage);
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<&Passage> {
        self.by_id.get(id).map(|&i| &self.passages[i])
    }

    pub fn ordinal(&self, id: &str) -> Option<usize> {
        self.by_id.get(id).copied()
    }

    pub fn by_ordinal(&self, ordinal: usize) -> Option<&Passage> {
        self.passages.get(ordinal)
    }

    pub fn text(&self, id: &str) -> Option<&str> {
        self.get(id).map(|p| p.text.as_str())
    }

    pub fn len(&self) -> usize {
        self.passages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.passages.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Passage> {
        self.passages.iter()
    }

    pub fn passages(&self) -> &[Passage] {
        &self.passages
    }
}

impl<'a> IntoIterator for &'a PassageStore {
    type Item = &'a Passage;
    type IntoIter = std::slice::Iter<'a, Passage>;

    fn into_iter(self) -> Self::IntoIter {
        self.passages.iter()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorpusFormat {
    /// `id<TAB>text`, one passage per line.
    Tsv,
    /// `{"id": …, "text": …}`, one object per line.
    Jsonl,
}

impl CorpusFormat {
    /// Guesses the format from the file extension; anything but `.jsonl`/`.json` is TSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("jsonl") | Some("json") => CorpusFormat::Jsonl,
            _ => CorpusFormat::Tsv,
        }
    }
}

impl std::str::FromStr for CorpusFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tsv" => Ok(CorpusFormat::Tsv),
            "jsonl" => Ok(CorpusFormat::Jsonl),
            other => Err(Error::InvalidArgument(format!(
                "unknown corpus format `{other}`"
            ))),
        }
    }
}

/// Loads a passage file. Blank lines are skipped; every other line must be a record.
pub fn load_passages(path: impl AsRef<Path>, format: CorpusFormat) -> Result<PassageStore> {
    let path = path.as_ref();
    let content = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_passages(&content, format, path)
}

pub(crate) fn parse_passages(content: &str, format: CorpusFormat, path: &Path) -> Result<PassageStore> {
    let mut store = PassageStore::new();
    for (idx, line) in content.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let malformed = |reason: String| Error::MalformedRecord {
            path: path.to_path_buf(),
            line: line_no,
            reason,
        };
        let passage = match format {
            CorpusFormat::Tsv => {
                let (id, text) = line
                    .split_once('\t')
                    .ok_or_else(|| malformed("expected `id<TAB>text`".into()))?;
                Passage {
                    id: id.to_string(),
                    text: text.to_string(),
                }
            }
            CorpusFormat::Jsonl => {
                serde_json::from_str::<Passage>(line).map_err(|e| malformed(e.to_string()))?
            }
        };
        match store.push(passage) {
            Err(Error::InvalidArgument(reason)) => return Err(malformed(reason)),
            other => other?,
        }
    }
    Ok(store)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageRecord {
    pub image_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub caption: Option<String>,
}

impl ImageRecord {
    pub fn new(image_id: impl Into<String>) -> Self {
        ImageRecord {
            image_id: image_id.into(),
            caption: None,
        }
    }

    pub fn with_caption(image_id: impl Into<String>, caption: impl Into<String>) -> Self {
        ImageRecord {
            image_id: image_id.into(),
            caption: Some(caption.into()),
        }
    }
}

/// Loads image records from JSONL; `caption` is optional on input.
pub fn load_images(path: impl AsRef<Path>) -> Result<Vec<ImageRecord>> {
    let path = path.as_ref();
    let content = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut seen = std::collections::HashSet::new();
    let mut images = Vec::new();
    for (idx, line) in content.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let malformed = |reason: String| Error::MalformedRecord {
            path: path.to_path_buf(),
            line: idx + 1,
            reason,
        };
        let record: ImageRecord =
            serde_json::from_str(line).map_err(|e| malformed(e.to_string()))?;
        if record.image_id.is_empty() {
            return Err(malformed("empty image_id".into()));
        }
        if !seen.insert(record.image_id.clone()) {
            return Err(Error::DuplicateId(record.image_id));
        }
        images.push(record);
    }
    Ok(images)
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TokenizedText {
    pub tokens: Vec<String>,
}

impl TokenizedText {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.tokens.iter().map(String::as_str)
    }

    pub fn join(&self) -> String {
        self.tokens.join(" ")
    }
}

/// A token together with the byte span it occupies in the source text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSpan {
    pub token: String,
    pub start: usize,
    pub end: usize,
}

/// Tokenizes and keeps byte offsets into `text`.
pub fn tokenize_with_offsets(text: &str) -> Vec<TokenSpan> {
    let mut spans = Vec::new();
    let mut start: Option<usize> = None;
    for (i, c) in text.char_indices() {
        if c.is_alphanumeric() {
            start.get_or_insert(i);
        } else if let Some(s) = start.take() {
            spans.extend(span(text, s, i));
        }
    }
    if let Some(s) = start {
        spans.extend(span(text, s, text.len()));
    }
    spans
}

// Lowercasing can introduce combining marks (e.g. `İ`), which are dropped so
// that tokens stay alphanumeric and tokenization stays idempotent.
fn span(text: &str, start: usize, end: usize) -> Option<TokenSpan> {
    let token: String = text[start..end]
        .chars()
        .flat_map(char::to_lowercase)
        .filter(|c| c.is_alphanumeric())
        .collect();
    (!token.is_empty()).then_some(TokenSpan { token, start, end })
}

pub fn tokenize(text: &str) -> TokenizedText {
    TokenizedText {
        tokens: tokenize_with_offsets(text)
            .into_iter()
            .map(|s| s.token)
            .collect(),
    }
}

/// Position of the first contiguous occurrence of `needle` in `haystack`.
pub fn find_token_run<S: AsRef<str>, T: AsRef<str>>(haystack: &[S], needle: &[T]) -> Option<usize> {
    if needle.is_empty() || needle.len() > haystack.len() {
        return None;
    }
    haystack.windows(needle.len()).position(|w| {
        w.iter()
            .zip(needle)
            .all(|(a, b)| a.as_ref() == b.as_ref())
    })
}

/// Case-insensitive exact match of `answer` in `passage_text`, at token granularity.
pub fn contains_answer(passage_text: &str, answer: &str) -> Result<bool> {
    let answer_tokens = tokenize(answer);
    if answer_tokens.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "answer `{answer}` has no tokens"
        )));
    }
    Ok(find_token_run(&tokenize(passage_text).tokens, &answer_tokens.tokens).is_some())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toks(s: &str) -> Vec<String> {
        tokenize(s).tokens
    }

    #[test]
    fn tokenize_examples() {
        assert_eq!(toks("How far can CATS jump?"), ["how", "far", "can", "cats", "jump"]);
        assert!(toks("").is_empty());
        assert_eq!(toks("state-of-the-art"), ["state", "of", "the", "art"]);
        assert_eq!(toks("  Zürich, 1900s!"), ["zürich", "1900s"]);
    }

    #[test]
    fn offsets_point_into_source() {
        let text = "Über cats—jump 7 ft.";
        for span in tokenize_with_offsets(text) {
            assert_eq!(text[span.start..span.end].to_lowercase(), span.token);
        }
    }

    #[test]
    fn contains_answer_examples() {
        assert!(contains_answer("The CAT jumps far", "cat").unwrap());
        assert!(!contains_answer("categories of cats", "cat").unwrap());
        assert!(contains_answer("can jump seven feet", "jump seven").unwrap());
        assert!(!contains_answer("seven can jump feet", "seven feet").unwrap());
        assert!(contains_answer("x", "").is_err());
        assert!(contains_answer("x", " -- ").is_err());
    }

    #[test]
    fn load_tsv() {
        let store = parse_passages(
            "p1\tcats jump\np2\tdogs bark\np3\tbirds fly\n",
            CorpusFormat::Tsv,
            Path::new("c.tsv"),
        )
        .unwrap();
        assert_eq!(store.len(), 3);
        assert_eq!(store.get("p2").unwrap().id, "p2");
        let ids: Vec<_> = store.iter().map(|p| p.id.as_str()).collect();
        assert_eq!(ids, ["p1", "p2", "p3"]);
    }

    #[test]
    fn load_empty_file() {
        let store = parse_passages("", CorpusFormat::Tsv, Path::new("c.tsv")).unwrap();
        assert!(store.is_empty());
    }

    #[test]
    fn load_duplicate_id() {
        let err = parse_passages("p1\ta\np1\tb\n", CorpusFormat::Tsv, Path::new("c.tsv"))
            .unwrap_err();
        assert!(matches!(err, Error::DuplicateId(ref id) if id == "p1"), "{err}");
    }

    #[test]
    fn load_malformed_names_line() {
        let err = parse_passages("p1\ta\nnotab\n", CorpusFormat::Tsv, Path::new("c.tsv"))
            .unwrap_err();
        assert!(matches!(err, Error::MalformedRecord { line: 2, .. }), "{err}");

        let err = parse_passages(
            "{\"id\":\"a\",\"text\":\"x\"}\n{\"id\":\"b\"}\n",
            CorpusFormat::Jsonl,
            Path::new("c.jsonl"),
        )
        .unwrap_err();
        assert!(matches!(err, Error::MalformedRecord { line: 2, .. }), "{err}");

        let err = parse_passages("p1\t   \n", CorpusFormat::Tsv, Path::new("c.tsv")).unwrap_err();
        assert!(matches!(err, Error::MalformedRecord { line: 1, .. }), "{err}");
    }

    #[test]
    fn load_jsonl() {
        let store = parse_passages(
            "{\"id\":\"a\",\"text\":\"one\"}\n\n{\"id\":\"b\",\"text\":\"two\"}\n",
            CorpusFormat::Jsonl,
            Path::new("c.jsonl"),
        )
        .unwrap();
        assert_eq!(store.len(), 2);
        assert_eq!(store.text("b"), Some("two"));
    }

    #[test]
    fn load_images_optional_caption() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("images.jsonl");
        fs::write(
            &path,
            "{\"image_id\":\"i1\",\"caption\":\"a cat\"}\n{\"image_id\":\"i2\"}\n",
        )
        .unwrap();
        let images = load_images(&path).unwrap();
        assert_eq!(images[0].caption.as_deref(), Some("a cat"));
        assert_eq!(images[1].caption, None);

        fs::write(&path, "{\"image_id\":\"i1\"}\n{\"image_id\":\"i1\"}\n").unwrap();
        assert!(matches!(load_images(&path), Err(Error::DuplicateId(_))));
    }

    proptest! {
        #[test]
        fn tokenize_idempotent(text in "\\PC{0,60}") {
            let once = tokenize(&text);
            prop_assert_eq!(tokenize(&once.join()), once.clone());
            for t in once.iter() {
                prop_assert!(!t.is_empty());
                prop_assert!(!t.chars().any(char::is_whitespace));
            }
        }

        #[test]
        fn contains_answer_case_invariant(
            passage in "[a-zA-Z ]{0,40}",
            answer in "[a-zA-Z]{1,4}( [a-zA-Z]{1,4})?",
        ) {
            let base = contains_answer(&passage, &answer).unwrap();
            prop_assert_eq!(base, contains_answer(&passage.to_uppercase(), &answer).unwrap());
            prop_assert_eq!(base, contains_answer(&passage, &answer.to_lowercase()).unwrap());
            if base {
                let p = tokenize(&passage);
                for t in tokenize(&answer).iter() {
                    prop_assert!(p.iter().any(|x| x == t));
                }
            }
        }
    }
}
