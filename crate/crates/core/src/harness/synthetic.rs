//! Synthetic title corpora with a rare topical class.
//!
//! A multinomial word model with three vocabularies, each Zipf-distributed:
//!
//! - topic words, split into subtopics. A positive title picks one subtopic
//!   and mixes its words into background text.
//! - background words, shared by every title.
//! - context words, used only by confusable negatives. These are titles on
//!   other subjects that borrow one topic word.
//!
//! Telling confusables from positives takes labeled examples of both, and the
//! context vocabulary is large enough that no small sample covers it.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Zipf};
use serde::{Deserialize, Serialize};

use crate::corpus::{CategorySpec, Document};

use super::HarnessError;

pub const SYNTHETIC_CATEGORY: &str = "synthetic";
const POSITIVE_KEYWORD: &str = "topic";
const NEGATIVE_KEYWORD: &str = "background";

const SYLLABLES: [&str; 16] = [
    "ka", "lo", "mi", "ne", "ru", "sa", "ti", "vo", "ba", "de", "fu", "go", "hi", "ja", "ku", "pe",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticCorpusSpec {
    pub size: usize,
    /// Probability that a document is positive, in (0, 0.5].
    pub prior: f64,
    /// Total topic words, divided evenly among the subtopics.
    pub topic_vocab: usize,
    pub subtopics: usize,
    pub background_vocab: usize,
    pub context_vocab: usize,
    pub title_len_min: usize,
    pub title_len_max: usize,
    /// Chance that each word of a positive title after the first is drawn
    /// from its subtopic. The first always is.
    pub topic_rate: f64,
    /// Chance that a negative title is a confusable.
    pub confusable_rate: f64,
    /// Chance that each word of a confusable after its topic word is a
    /// context word rather than a background word.
    pub context_rate: f64,
    pub zipf_exponent: f64,
    pub seed: u64,
}

impl Default for SyntheticCorpusSpec {
    fn default() -> Self {
        Self {
            size: 60_000,
            prior: 0.002,
            topic_vocab: 80,
            subtopics: 4,
            background_vocab: 20_000,
            context_vocab: 3000,
            title_len_min: 4,
            title_len_max: 12,
            topic_rate: 0.4,
            confusable_rate: 0.1,
            context_rate: 0.5,
            zipf_exponent: 1.0,
            seed: 0,
        }
    }
}

impl SyntheticCorpusSpec {
    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: &str| Err(HarnessError::Plan(format!("synthetic corpus: {m}")));
        if self.size == 0 {
            return bad("size must be positive");
        }
        if !(self.prior > 0.0 && self.prior <= 0.5) {
            return bad("prior must be in (0, 0.5]");
        }
        if self.subtopics == 0 || self.topic_vocab < self.subtopics {
            return bad("need at least one topic word per subtopic");
        }
        if self.background_vocab == 0 || self.context_vocab == 0 {
            return bad("vocabularies must be non-empty");
        }
        if self.title_len_min == 0 || self.title_len_min > self.title_len_max {
            return bad("title lengths need 1 <= min <= max");
        }
        for (name, r) in [
            ("topic_rate", self.topic_rate),
            ("confusable_rate", self.confusable_rate),
            ("context_rate", self.context_rate),
        ] {
            if !(0.0..=1.0).contains(&r) {
                return bad(&format!("{name} must be in [0, 1]"));
            }
        }
        if !(self.zipf_exponent >= 0.0 && self.zipf_exponent.is_finite()) {
            return bad("zipf_exponent must be finite and non-negative");
        }
        Ok(())
    }
}

/// Pronounceable word for a vocabulary index; distinct indices give
/// distinct words.
pub fn pseudo_word(mut n: usize) -> String {
    let mut digits = Vec::new();
    loop {
        digits.push(n % SYLLABLES.len());
        n /= SYLLABLES.len();
        if n == 0 {
            break;
        }
    }
    while digits.len() < 2 {
        digits.push(0);
    }
    digits.iter().rev().map(|&d| SYLLABLES[d]).collect()
}

fn title_case(word: &str) -> String {
    let mut chars = word.chars();
    match chars.next() {
        Some(c) => c.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

/// The category whose labels the generated keyword field encodes.
pub fn synthetic_category() -> CategorySpec {
    CategorySpec::new(SYNTHETIC_CATEGORY, vec![POSITIVE_KEYWORD.to_owned()])
        .expect("static category is valid")
}

/// Zipf ranks over `n` items, shifted to 0-based indices.
struct Ranks(Zipf<f64>);

impl Ranks {
    fn new(n: usize, exponent: f64) -> Result<Self, HarnessError> {
        Zipf::new(n as f64, exponent)
            .map(Self)
            .map_err(|e| HarnessError::Plan(format!("synthetic corpus: {e}")))
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> usize {
        self.0.sample(rng) as usize - 1
    }
}

/// Generates `spec.size` documents with ids `syn0000000`, `syn0000001`, ...
/// The keyword column is `topic` for positives and `background` otherwise,
/// so [`synthetic_category`] recovers the labels.
///
/// Word indices: topic words first (subtopic `s` owns one contiguous block),
/// then context words, then background words.
pub fn generate_synthetic_corpus(spec: &SyntheticCorpusSpec) -> Result<Vec<Document>, HarnessError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let per_subtopic = spec.topic_vocab / spec.subtopics;
    let subtopic = Ranks::new(spec.subtopics, spec.zipf_exponent)?;
    let topic = Ranks::new(per_subtopic, spec.zipf_exponent)?;
    let context = Ranks::new(spec.context_vocab, spec.zipf_exponent)?;
    let background = Ranks::new(spec.background_vocab, spec.zipf_exponent)?;
    let context_base = spec.topic_vocab;
    let background_base = spec.topic_vocab + spec.context_vocab;

    let mut docs = Vec::with_capacity(spec.size);
    for i in 0..spec.size {
        let positive = rng.random_bool(spec.prior);
        let len = rng.random_range(spec.title_len_min..=spec.title_len_max);
        let mut words: Vec<usize> = Vec::with_capacity(len);
        if positive {
            let base = subtopic.draw(&mut rng) * per_subtopic;
            words.push(base + topic.draw(&mut rng));
            for _ in 1..len {
                let w = if rng.random_bool(spec.topic_rate) {
                    base + topic.draw(&mut rng)
                } else {
                    background_base + background.draw(&mut rng)
                };
                words.push(w);
            }
        } else if rng.random_bool(spec.confusable_rate) {
            let base = subtopic.draw(&mut rng) * per_subtopic;
            words.push(base + topic.draw(&mut rng));
            for _ in 1..len {
                let w = if rng.random_bool(spec.context_rate) {
                    context_base + context.draw(&mut rng)
                } else {
                    background_base + background.draw(&mut rng)
                };
                words.push(w);
            }
        } else {
            for _ in 0..len {
                words.push(background_base + background.draw(&mut rng));
            }
        }
        let title = words
            .iter()
            .map(|&w| title_case(&pseudo_word(w)))
            .collect::<Vec<_>>()
            .join(" ");
        let keyword = if positive { POSITIVE_KEYWORD } else { NEGATIVE_KEYWORD };
        docs.push(Document::new(format!("syn{i:07}"), keyword, title));
    }
    Ok(docs)
}
