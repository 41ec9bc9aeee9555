//! Deterministic desk-scale fixture: 200 templated encyclopedia-style
//! passages over 20 everyday object categories, and one captioned image per
//! category. Passages only use verbs the stub annotator treats as chunk
//! boundaries, so the stub pipeline yields short, clean answer phrases.

use std::fs;
use std::path::Path;

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::{ImageRecord, Passage, PassageStore};
use crate::error::{Error, Result};
use crate::eval::{Judgment, Query};
use crate::features::fnv1a;
use crate::genpipeline::GeneratedExample;

pub const DEFAULT_SEED: u64 = 20;
pub const PASSAGES_PER_TOPIC: usize = 10;

struct Topic {
    singular: &'static str,
    plural: &'static str,
    caption: &'static str,
}

const TOPICS: &[Topic] = &[
    Topic { singular: "giraffe", plural: "giraffes", caption: "a giraffe standing near tall trees" },
    Topic { singular: "zebra", plural: "zebras", caption: "two zebra grazing on dry grass" },
    Topic { singular: "elephant", plural: "elephants", caption: "an elephant walking along a river" },
    Topic { singular: "bear", plural: "bears", caption: "a brown bear sitting in the woods" },
    Topic { singular: "horse", plural: "horses", caption: "a horse running across a field" },
    Topic { singular: "cat", plural: "cats", caption: "a cat lying on a couch" },
    Topic { singular: "dog", plural: "dogs", caption: "a dog holding a frisbee" },
    Topic { singular: "sheep", plural: "lambs", caption: "a sheep resting on a hill" },
    Topic { singular: "bus", plural: "buses", caption: "a red bus parked on the street" },
    Topic { singular: "train", plural: "trains", caption: "a train riding over a bridge" },
    Topic { singular: "airplane", plural: "airplanes", caption: "an airplane flying above clouds" },
    Topic { singular: "boat", plural: "boats", caption: "a boat resting in a harbor" },
    Topic { singular: "bicycle", plural: "bicycles", caption: "a bicycle parked near a wall" },
    Topic { singular: "skateboard", plural: "skateboards", caption: "a man riding a skateboard" },
    Topic { singular: "surfboard", plural: "surfboards", caption: "a surfer holding a surfboard" },
    Topic { singular: "kite", plural: "kites", caption: "a kite flying over a beach" },
    Topic { singular: "pizza", plural: "pizzas", caption: "a pizza sitting on a table" },
    Topic { singular: "banana", plural: "bananas", caption: "a bunch of banana on a plate" },
    Topic { singular: "clock", plural: "clocks", caption: "a clock standing on a tower" },
    Topic { singular: "umbrella", plural: "umbrellas", caption: "a woman holding an umbrella" },
];

const NUMBERS: &[&str] = &[
    "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten", "twelve", "twenty", "forty",
];
const UNITS: &[&str] = &["feet", "meters", "pounds", "kilograms", "miles", "hours", "years", "days"];
const COLORS: &[&str] = &["red", "brown", "white", "black", "gray", "yellow", "green", "blue"];
const PLACES: &[&str] = &[
    "East Africa", "South America", "New Zealand", "North America", "Western Europe",
    "Southeast Asia", "Central Asia", "Northern Australia", "West Africa", "South Asia",
];
const YEARS: &[&str] = &["1850", "1903", "1927", "1965", "1972", "1988", "1994", "2001"];
const THINGS: &[&str] = &[
    "fresh grass", "small fish", "green leaves", "wheat bread", "ripe fruit", "dry seeds",
    "soft wood", "thin steel", "light cotton", "smooth plastic",
];
const NAMES: &[&str] = &[
    "Thomas Edison", "Marie Curie", "Carl Linnaeus", "Ada Lovelace", "Charles Darwin",
    "Jane Goodall", "Henry Ford", "Nikola Tesla",
];

/// Ten sentence pairs. `{S}` singular, `{P}` plural, `{Pc}` capitalized
/// plural, and filler slots drawn per passage.
const TEMPLATES: &[&str] = &[
    "{Pc} live in {place}. A wild {S} eats {thing} each morning.",
    "A typical {S} can weigh {n} {unit}. Most {P} are measured in {unit2}.",
    "The first {S} was recorded in {year} by {name}. It became known across {place}.",
    "Many {P} are {color}. A {color2} {S} is often called lucky.",
    "A {S} can travel {n} miles per day. {Pc} need {thing} after long trips.",
    "{name} described the {S} in {year}. Their notes are held in {place}.",
    "The oldest {S} lived {n} years. Such {P} are found near {place}.",
    "{Pc} are made from {thing}. A new {S} usually weighs {n} {unit}.",
    "Children often play with {P}. A {S} can appear in {color} paintings from {year}.",
    "Every {S} needs {thing}. Herds of {P} reach {place} by {year}.",
];

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    c.next()
        .map(|f| f.to_uppercase().chain(c).collect())
        .unwrap_or_default()
}

fn fill(template: &str, topic: &Topic, rng: &mut ChaCha8Rng) -> String {
    let mut pick = |pool: &[&'static str]| *pool.choose(rng).expect("nonempty pool");
    let slots = [
        ("{Pc}", capitalize(topic.plural)),
        ("{S}", topic.singular.to_string()),
        ("{P}", topic.plural.to_string()),
        ("{place}", pick(PLACES).to_string()),
        ("{thing}", pick(THINGS).to_string()),
        ("{n}", pick(NUMBERS).to_string()),
        ("{unit2}", pick(UNITS).to_string()),
        ("{unit}", pick(UNITS).to_string()),
        ("{year}", pick(YEARS).to_string()),
        ("{name}", pick(NAMES).to_string()),
        ("{color2}", pick(COLORS).to_string()),
        ("{color}", pick(COLORS).to_string()),
    ];
    let mut out = template.to_string();
    for (slot, value) in &slots {
        out = out.replace(slot, value);
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fixture {
    pub passages: Vec<Passage>,
    pub images: Vec<ImageRecord>,
}

impl Fixture {
    pub fn generate(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut passages = Vec::with_capacity(TOPICS.len() * PASSAGES_PER_TOPIC);
        let mut images = Vec::with_capacity(TOPICS.len());
        for (t, topic) in TOPICS.iter().enumerate() {
            for (k, template) in TEMPLATES.iter().enumerate().take(PASSAGES_PER_TOPIC) {
                passages.push(Passage {
                    id: format!("{}-{k:02}", topic.singular),
                    text: fill(template, topic, &mut rng),
                });
            }
            images.push(ImageRecord::with_caption(format!("img{t:02}"), topic.caption));
        }
        Fixture { passages, images }
    }

    pub fn store(&self) -> PassageStore {
        PassageStore::from_passages(self.passages.iter().cloned()).expect("fixture ids are unique")
    }

    /// Writes `corpus.tsv` and `images.jsonl` into `dir`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let corpus: String = self
            .passages
            .iter()
            .map(|p| format!("{}\t{}\n", p.id, p.text))
            .collect();
        let path = dir.join("corpus.tsv");
        fs::write(&path, corpus).map_err(|e| Error::io(&path, e))?;
        let mut images = String::new();
        for image in &self.images {
            images.push_str(&serde_json::to_string(image)?);
            images.push('\n');
        }
        let path = dir.join("images.jsonl");
        fs::write(&path, images).map_err(|e| Error::io(&path, e))
    }
}

/// Stable query id for a generated example: image id plus a hash of the question.
pub fn query_id(example: &GeneratedExample) -> String {
    format!(
        "{}:{:016x}",
        example.image_id,
        fnv1a(0, format!("{}\u{0}{}", example.question, example.answer).as_bytes())
    )
}

/// Deterministic held-out membership: roughly one example in `modulus`.
pub fn is_held_out(example: &GeneratedExample, modulus: u64) -> bool {
    fnv1a(1, example.question.as_bytes()).is_multiple_of(modulus)
}

/// Splits into (train, held_out) by [`is_held_out`].
pub fn split_held_out(examples: &[GeneratedExample], modulus: u64) -> (Vec<GeneratedExample>, Vec<GeneratedExample>) {
    examples.iter().cloned().partition(|e| !is_held_out(e, modulus))
}

/// One judgment per example, keyed by [`query_id`]. Examples sharing a query
/// id (same image, question and answer) collapse into one.
pub fn judgments_for(examples: &[GeneratedExample]) -> Vec<Judgment> {
    let mut seen = std::collections::BTreeMap::new();
    for e in examples {
        seen.entry(query_id(e)).or_insert_with(|| vec![e.answer.clone()]);
    }
    seen.into_iter()
        .map(|(query_id, answers)| Judgment { query_id, answers })
        .collect()
}

/// Queries matching [`judgments_for`], one per distinct query id.
pub fn queries_for(examples: &[GeneratedExample]) -> Vec<Query> {
    let mut seen = std::collections::BTreeMap::new();
    for e in examples {
        seen.entry(query_id(e)).or_insert_with(|| (e.question.clone(), e.image_id.clone()));
    }
    seen.into_iter()
        .map(|(query_id, (question, image_id))| Query {
            query_id,
            question,
            image_id,
            caption: None,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::tokenize;
    use crate::genpipeline::stub::BREAK_WORDS;

    #[test]
    fn shape_and_determinism() {
        let f = Fixture::generate(DEFAULT_SEED);
        assert_eq!(f.passages.len(), 200);
        assert_eq!(f.images.len(), 20);
        assert_eq!(f.store().len(), 200);
        assert_eq!(f, Fixture::generate(DEFAULT_SEED));
        assert_ne!(f, Fixture::generate(DEFAULT_SEED + 1));
    }

    #[test]
    fn every_passage_names_its_topic() {
        let f = Fixture::generate(DEFAULT_SEED);
        for (t, topic) in TOPICS.iter().enumerate() {
            for p in &f.passages[t * PASSAGES_PER_TOPIC..(t + 1) * PASSAGES_PER_TOPIC] {
                assert!(tokenize(&p.text).iter().any(|w| w == topic.singular), "{}", p.text);
                assert!(!p.text.contains('{'), "unfilled slot in {}", p.text);
            }
        }
    }

    #[test]
    fn topic_words_are_not_chunk_breaks() {
        for t in TOPICS {
            assert!(!BREAK_WORDS.contains(&t.singular) && !BREAK_WORDS.contains(&t.plural));
        }
    }

    #[test]
    fn write_round_trips() {
        let f = Fixture::generate(DEFAULT_SEED);
        let dir = tempfile::tempdir().unwrap();
        f.write(dir.path()).unwrap();
        let store = crate::corpus::load_passages(dir.path().join("corpus.tsv"), crate::corpus::CorpusFormat::Tsv).unwrap();
        assert_eq!(store.passages(), f.passages.as_slice());
        assert_eq!(crate::corpus::load_images(dir.path().join("images.jsonl")).unwrap(), f.images);
    }
}
