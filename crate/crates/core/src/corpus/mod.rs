//! Document model shared by every other module: tokens with character
//! offsets, label layers and inventories, token-aligned spans and the BIO
//! tag codec.
//!
//! All offsets are counted in Unicode scalar values (Rust `char`s) of the
//! NFC-normalized raw text, not in bytes.

mod bio;
mod segment;

use alloc::boxed::Box;
use alloc::collections::BTreeSet;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::ops::Range;
use core::str::FromStr;

use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

pub use bio::{bio_decode, bio_encode, repair};
pub use segment::{Segmenter, DEFAULT_ABBREVIATIONS};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CorpusError {
    #[error("text is empty or whitespace-only")]
    EmptyText,
    #[error("spans overlap in layer {layer}: {first} and {second}")]
    Overlap {
        layer: Layer,
        first: Box<Span>,
        second: Box<Span>,
    },
    #[error("invalid span {span}: {reason}")]
    InvalidSpan {
        span: Box<Span>,
        reason: &'static str,
    },
    #[error("class `{class}` is not in the {layer} inventory")]
    UnknownClass { layer: Layer, class: String },
    #[error("invalid tag `{0}`")]
    InvalidTag(String),
    #[error("invalid inventory: {0}")]
    InvalidInventory(&'static str),
}

/// The two independent annotation layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layer {
    EpistemicActivity,
    DiagnosticEntity,
}

impl Layer {
    pub const ALL: [Layer; 2] = [Layer::EpistemicActivity, Layer::DiagnosticEntity];

    pub fn as_str(self) -> &'static str {
        match self {
            Layer::EpistemicActivity => "epistemic_activity",
            Layer::DiagnosticEntity => "diagnostic_entity",
        }
    }
}

impl fmt::Display for Layer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Layer {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "epistemic_activity" | "epistemic" | "ea" => Ok(Layer::EpistemicActivity),
            "diagnostic_entity" | "entity" | "de" => Ok(Layer::DiagnosticEntity),
            _ => Err(CorpusError::InvalidInventory("unknown layer name")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuthorRole {
    Student,
    Pilot,
    Expert,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub surface: String,
    pub start: usize,
    pub end: usize,
}

impl Token {
    pub fn new(surface: impl Into<String>, start: usize, end: usize) -> Self {
        Token {
            surface: surface.into(),
            start,
            end,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    pub index: usize,
    pub tokens: Vec<Token>,
}

impl Sentence {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Character range covered by tokens `start..end`.
    pub fn char_range(&self, tokens: Range<usize>) -> Option<Range<usize>> {
        if tokens.start >= tokens.end || tokens.end > self.tokens.len() {
            return None;
        }
        Some(self.tokens[tokens.start].start..self.tokens[tokens.end - 1].end)
    }
}

/// A submitted diagnostic text, segmented into sentences and tokens.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    pub case_id: String,
    pub author_role: AuthorRole,
    pub raw_text: String,
    pub sentences: Vec<Sentence>,
}

impl Document {
    /// NFC-normalizes `raw_text` and segments it.
    pub fn new(
        doc_id: impl Into<String>,
        case_id: impl Into<String>,
        author_role: AuthorRole,
        raw_text: &str,
        segmenter: &Segmenter,
    ) -> Result<Self, CorpusError> {
        let raw_text: String = raw_text.nfc().collect();
        let sentences = segmenter.segment(&raw_text)?;
        Ok(Document {
            doc_id: doc_id.into(),
            case_id: case_id.into(),
            author_role,
            raw_text,
            sentences,
        })
    }

    pub fn char_len(&self) -> usize {
        self.raw_text.chars().count()
    }

    pub fn token_count(&self) -> usize {
        self.sentences.iter().map(Sentence::len).sum()
    }

    /// Character range of a span, derived from its token offsets.
    pub fn span_chars(&self, span: &Span) -> Option<Range<usize>> {
        self.sentences
            .get(span.sentence)?
            .char_range(span.token_start..span.token_end)
    }

    /// Checks that `span` addresses existing tokens of this document.
    pub fn check_span(&self, span: &Span) -> Result<(), CorpusError> {
        let sentence =
            self.sentences
                .get(span.sentence)
                .ok_or_else(|| CorpusError::InvalidSpan {
                    span: Box::new(span.clone()),
                    reason: "sentence index out of range",
                })?;
        span.check_bounds(sentence.len())
    }

    pub fn sentence_lengths(&self) -> Vec<usize> {
        self.sentences.iter().map(Sentence::len).collect()
    }
}

/// Ordered class set of one layer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelInventory {
    pub layer: Layer,
    pub classes: Vec<String>,
}

impl LabelInventory {
    pub const EPISTEMIC_CLASSES: [&'static str; 4] = ["HG", "EG", "EE", "DC"];

    /// Hypothesis generation, evidence generation, evidence evaluation and
    /// drawing conclusions.
    pub fn epistemic() -> Self {
        LabelInventory {
            layer: Layer::EpistemicActivity,
            classes: Self::EPISTEMIC_CLASSES
                .iter()
                .map(|c| c.to_string())
                .collect(),
        }
    }

    pub fn entities<I, S>(classes: I) -> Result<Self, CorpusError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self::new(
            Layer::DiagnosticEntity,
            classes.into_iter().map(Into::into).collect(),
        )
    }

    pub fn new(layer: Layer, classes: Vec<String>) -> Result<Self, CorpusError> {
        let inventory = LabelInventory { layer, classes };
        inventory.validate()?;
        Ok(inventory)
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        let unique: BTreeSet<&str> = self.classes.iter().map(String::as_str).collect();
        if unique.len() != self.classes.len() {
            return Err(CorpusError::InvalidInventory("duplicate class name"));
        }
        if self.classes.iter().any(|c| !valid_class_name(c)) {
            return Err(CorpusError::InvalidInventory(
                "class names must be non-empty without whitespace",
            ));
        }
        if self.layer == Layer::EpistemicActivity {
            let expected: BTreeSet<&str> = Self::EPISTEMIC_CLASSES.iter().copied().collect();
            if unique != expected {
                return Err(CorpusError::InvalidInventory(
                    "the epistemic layer holds exactly HG, EG, EE and DC",
                ));
            }
        }
        Ok(())
    }

    pub fn contains(&self, class: &str) -> bool {
        self.classes.iter().any(|c| c == class)
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    /// `O` first, then `B-`/`I-` per class in inventory order.
    pub fn tag_set(&self) -> Vec<Tag> {
        let mut tags = Vec::with_capacity(1 + 2 * self.classes.len());
        tags.push(Tag::Outside);
        for class in &self.classes {
            tags.push(Tag::Begin(class.clone()));
            tags.push(Tag::Inside(class.clone()));
        }
        tags
    }

    pub fn check_span(&self, span: &Span) -> Result<(), CorpusError> {
        if span.layer != self.layer || !self.contains(&span.class) {
            return Err(CorpusError::UnknownClass {
                layer: span.layer,
                class: span.class.clone(),
            });
        }
        Ok(())
    }
}

fn valid_class_name(class: &str) -> bool {
    !class.is_empty() && !class.chars().any(char::is_whitespace)
}

/// Labeled token range `token_start..token_end` in one sentence.
///
/// Ordering is (layer, sentence, token_start, token_end, class) so span sets
/// iterate in reading order per layer.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Span {
    pub layer: Layer,
    pub sentence: usize,
    pub token_start: usize,
    pub token_end: usize,
    pub class: String,
}

impl Span {
    pub fn new(
        layer: Layer,
        class: impl Into<String>,
        sentence: usize,
        token_start: usize,
        token_end: usize,
    ) -> Self {
        Span {
            layer,
            class: class.into(),
            sentence,
            token_start,
            token_end,
        }
    }

    pub fn len(&self) -> usize {
        self.token_end.saturating_sub(self.token_start)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn overlaps(&self, other: &Span) -> bool {
        self.layer == other.layer
            && self.sentence == other.sentence
            && self.token_start < other.token_end
            && other.token_start < self.token_end
    }

    pub fn check_bounds(&self, sentence_len: usize) -> Result<(), CorpusError> {
        let reason = if self.token_start >= self.token_end {
            "empty token range"
        } else if self.token_end > sentence_len {
            "token range exceeds sentence length"
        } else if !valid_class_name(&self.class) {
            "malformed class name"
        } else {
            return Ok(());
        };
        Err(CorpusError::InvalidSpan {
            span: Box::new(self.clone()),
            reason,
        })
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}[s{}:{}..{}]",
            self.class, self.sentence, self.token_start, self.token_end
        )
    }
}

/// Finds the first pair of overlapping spans (same layer and sentence).
pub fn find_overlap<'a, I>(spans: I) -> Option<(Span, Span)>
where
    I: IntoIterator<Item = &'a Span>,
{
    let mut sorted: Vec<&Span> = spans.into_iter().collect();
    sorted.sort();
    sorted
        .windows(2)
        .find(|w| w[0].overlaps(w[1]))
        .map(|w| (w[0].clone(), w[1].clone()))
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Tag {
    Outside,
    Begin(String),
    Inside(String),
}

impl Tag {
    pub fn class(&self) -> Option<&str> {
        match self {
            Tag::Outside => None,
            Tag::Begin(c) | Tag::Inside(c) => Some(c),
        }
    }
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tag::Outside => f.write_str("O"),
            Tag::Begin(c) => write!(f, "B-{c}"),
            Tag::Inside(c) => write!(f, "I-{c}"),
        }
    }
}

impl FromStr for Tag {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "O" => Ok(Tag::Outside),
            _ => match (s.get(..2), s.get(2..)) {
                (Some("B-"), Some(c)) if valid_class_name(c) => Ok(Tag::Begin(c.to_string())),
                (Some("I-"), Some(c)) if valid_class_name(c) => Ok(Tag::Inside(c.to_string())),
                _ => Err(CorpusError::InvalidTag(s.to_string())),
            },
        }
    }
}

impl Serialize for Tag {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Tag {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// One tag per token of a sentence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TagSequence {
    pub layer: Layer,
    pub tags: Vec<Tag>,
}

impl TagSequence {
    /// True when every `I-X` follows `B-X` or `I-X`.
    pub fn is_well_formed(&self) -> bool {
        let mut prev: Option<&str> = None;
        for tag in &self.tags {
            match tag {
                Tag::Outside => prev = None,
                Tag::Begin(c) => prev = Some(c),
                Tag::Inside(c) => {
                    if prev != Some(c.as_str()) {
                        return false;
                    }
                }
            }
        }
        true
    }
}

/// A document together with its instructor-validated spans (both layers).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotatedDocument {
    pub document: Document,
    pub gold_spans: BTreeSet<Span>,
}

impl AnnotatedDocument {
    pub fn new(document: Document, gold_spans: BTreeSet<Span>) -> Result<Self, CorpusError> {
        let annotated = AnnotatedDocument {
            document,
            gold_spans,
        };
        annotated.validate()?;
        Ok(annotated)
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        for span in &self.gold_spans {
            self.document.check_span(span)?;
        }
        if let Some((first, second)) = find_overlap(&self.gold_spans) {
            return Err(CorpusError::Overlap {
                layer: first.layer,
                first: Box::new(first),
                second: Box::new(second),
            });
        }
        Ok(())
    }

    pub fn spans_in(&self, layer: Layer) -> impl Iterator<Item = &Span> {
        self.gold_spans.iter().filter(move |s| s.layer == layer)
    }
}
