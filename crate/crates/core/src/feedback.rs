//! Case definitions, the expert-authored snippet store and report
//! generation.
//!
//! An aspect counts as covered as soon as one predicted span carries its
//! (layer, class); negation and the reasoning around a mention are not
//! inspected. The nuance lives in the snippets, which experts write per case.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::ops::Range;

use serde::{Deserialize, Serialize};

use crate::corpus::{Document, Layer, Span};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum FeedbackError {
    #[error("invalid case {case_id}: {reason}")]
    InvalidCase { case_id: String, reason: String },
    #[error("feedback db has no {status} snippet for {layer}/{class} in case {case_id}")]
    IncompleteDb {
        case_id: String,
        layer: Layer,
        class: String,
        status: Coverage,
    },
    #[error("duplicate feedback entry for {layer}/{class} ({status}) in case {case_id}")]
    DuplicateEntry {
        case_id: String,
        layer: Layer,
        class: String,
        status: Coverage,
    },
    #[error("span {0} does not fit the document")]
    InvalidSpan(Span),
    #[error("document belongs to case {found}, expected {expected}")]
    CaseMismatch { expected: String, found: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relevance {
    CorrectDiagnosis,
    Relevant,
    Misleading,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Coverage {
    Covered,
    Missing,
}

impl Coverage {
    pub const BOTH: [Coverage; 2] = [Coverage::Covered, Coverage::Missing];
}

impl fmt::Display for Coverage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Coverage::Covered => "covered",
            Coverage::Missing => "missing",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaseAspect {
    pub layer: Layer,
    pub class: String,
    pub relevance: Relevance,
    pub display_order: i32,
}

impl CaseAspect {
    pub fn key(&self) -> AspectKey {
        AspectKey {
            layer: self.layer,
            class: self.class.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct AspectKey {
    pub layer: Layer,
    pub class: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaseDefinition {
    pub case_id: String,
    pub title: String,
    /// Stimulus shown to students.
    pub case_text: String,
    pub aspects: Vec<CaseAspect>,
    /// Expert gold diagnosis returned while no model exists.
    pub default_feedback: String,
}

impl CaseDefinition {
    pub fn validate(&self) -> Result<(), FeedbackError> {
        let invalid = |reason: &str| FeedbackError::InvalidCase {
            case_id: self.case_id.clone(),
            reason: reason.into(),
        };
        if self.case_id.is_empty() {
            return Err(invalid("empty case id"));
        }
        if !self
            .aspects
            .iter()
            .any(|a| a.relevance == Relevance::CorrectDiagnosis)
        {
            return Err(invalid("no aspect marked correct_diagnosis"));
        }
        let orders: BTreeSet<i32> = self.aspects.iter().map(|a| a.display_order).collect();
        if orders.len() != self.aspects.len() {
            return Err(invalid("display_order values must be unique"));
        }
        let keys: BTreeSet<AspectKey> = self.aspects.iter().map(CaseAspect::key).collect();
        if keys.len() != self.aspects.len() {
            return Err(invalid("aspect classes must be unique per layer"));
        }
        Ok(())
    }

    /// Aspects sorted by `display_order`.
    pub fn ordered_aspects(&self) -> Vec<&CaseAspect> {
        let mut aspects: Vec<&CaseAspect> = self.aspects.iter().collect();
        aspects.sort_by_key(|a| a.display_order);
        aspects
    }

    pub fn aspect(&self, layer: Layer, class: &str) -> Option<&CaseAspect> {
        self.aspects
            .iter()
            .find(|a| a.layer == layer && a.class == class)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeedbackEntry {
    pub case_id: String,
    pub layer: Layer,
    pub class: String,
    pub status: Coverage,
    pub snippet: String,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
struct EntryKey {
    case_id: String,
    layer: Layer,
    class: String,
    status: Coverage,
}

impl From<&FeedbackEntry> for EntryKey {
    fn from(e: &FeedbackEntry) -> Self {
        EntryKey {
            case_id: e.case_id.clone(),
            layer: e.layer,
            class: e.class.clone(),
            status: e.status,
        }
    }
}

/// Snippet store keyed by (case, layer, class, status).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FeedbackDb {
    snippets: BTreeMap<EntryKey, String>,
}

impl FeedbackDb {
    pub fn from_entries<I>(entries: I) -> Result<Self, FeedbackError>
    where
        I: IntoIterator<Item = FeedbackEntry>,
    {
        let mut snippets = BTreeMap::new();
        for entry in entries {
            let key = EntryKey::from(&entry);
            if snippets.contains_key(&key) {
                return Err(FeedbackError::DuplicateEntry {
                    case_id: entry.case_id,
                    layer: entry.layer,
                    class: entry.class,
                    status: entry.status,
                });
            }
            snippets.insert(key, entry.snippet);
        }
        Ok(FeedbackDb { snippets })
    }

    pub fn snippet(
        &self,
        case_id: &str,
        layer: Layer,
        class: &str,
        status: Coverage,
    ) -> Option<&str> {
        let key = EntryKey {
            case_id: case_id.into(),
            layer,
            class: class.into(),
            status,
        };
        self.snippets.get(&key).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.snippets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snippets.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = FeedbackEntry> + '_ {
        self.snippets.iter().map(|(k, snippet)| FeedbackEntry {
            case_id: k.case_id.clone(),
            layer: k.layer,
            class: k.class.clone(),
            status: k.status,
            snippet: snippet.clone(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "finding", rename_all = "snake_case")]
pub enum Finding {
    /// A case aspect lacks the snippet for one status.
    MissingSnippet {
        case_id: String,
        layer: Layer,
        class: String,
        status: Coverage,
    },
    /// An entry whose case is unknown or whose class is not an aspect of it.
    Orphan {
        case_id: String,
        layer: Layer,
        class: String,
        status: Coverage,
    },
    /// The same (case, layer, class, status) appears more than once.
    Duplicate {
        case_id: String,
        layer: Layer,
        class: String,
        status: Coverage,
    },
}

impl fmt::Display for Finding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (kind, case_id, layer, class, status) = match self {
            Finding::MissingSnippet {
                case_id,
                layer,
                class,
                status,
            } => ("missing snippet", case_id, layer, class, status),
            Finding::Orphan {
                case_id,
                layer,
                class,
                status,
            } => ("orphan entry", case_id, layer, class, status),
            Finding::Duplicate {
                case_id,
                layer,
                class,
                status,
            } => ("duplicate entry", case_id, layer, class, status),
        };
        write!(f, "{kind}: case {case_id}, {layer}/{class} ({status})")
    }
}

/// Lists every aspect/status pair without a snippet and every entry that
/// does not belong to a case aspect. Never fails.
pub fn validate_feedback_db(entries: &[FeedbackEntry], cases: &[CaseDefinition]) -> Vec<Finding> {
    let mut findings = Vec::new();
    let mut seen = BTreeSet::new();
    for entry in entries {
        let key = EntryKey::from(entry);
        let known = cases
            .iter()
            .find(|c| c.case_id == entry.case_id)
            .is_some_and(|c| c.aspect(entry.layer, &entry.class).is_some());
        if !known {
            findings.push(Finding::Orphan {
                case_id: key.case_id.clone(),
                layer: key.layer,
                class: key.class.clone(),
                status: key.status,
            });
        } else if seen.contains(&key) {
            findings.push(Finding::Duplicate {
                case_id: key.case_id.clone(),
                layer: key.layer,
                class: key.class.clone(),
                status: key.status,
            });
        }
        seen.insert(key);
    }
    for case in cases {
        for aspect in case.ordered_aspects() {
            for status in Coverage::BOTH {
                let key = EntryKey {
                    case_id: case.case_id.clone(),
                    layer: aspect.layer,
                    class: aspect.class.clone(),
                    status,
                };
                if !seen.contains(&key) {
                    findings.push(Finding::MissingSnippet {
                        case_id: key.case_id,
                        layer: key.layer,
                        class: key.class,
                        status,
                    });
                }
            }
        }
    }
    findings
}

/// Covered iff at least one span carries the aspect's layer and class.
pub fn compute_coverage<'a, I>(case: &CaseDefinition, spans: I) -> BTreeMap<AspectKey, Coverage>
where
    I: IntoIterator<Item = &'a Span>,
{
    let present: BTreeSet<(Layer, &str)> = spans
        .into_iter()
        .map(|s| (s.layer, s.class.as_str()))
        .collect();
    case.aspects
        .iter()
        .map(|a| {
            let status = if present.contains(&(a.layer, a.class.as_str())) {
                Coverage::Covered
            } else {
                Coverage::Missing
            };
            (a.key(), status)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CharRange {
    pub start: usize,
    pub end: usize,
}

impl From<Range<usize>> for CharRange {
    fn from(r: Range<usize>) -> Self {
        CharRange {
            start: r.start,
            end: r.end,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeedbackItem {
    pub aspect: CaseAspect,
    pub status: Coverage,
    pub snippet: String,
    /// Character ranges into the student text, sorted; empty when missing.
    pub highlights: Vec<CharRange>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeedbackReport {
    pub case_id: String,
    pub doc_id: String,
    pub items: Vec<FeedbackItem>,
}

impl FeedbackReport {
    pub fn covered(&self) -> impl Iterator<Item = &FeedbackItem> {
        self.items.iter().filter(|i| i.status == Coverage::Covered)
    }

    pub fn missing(&self) -> impl Iterator<Item = &FeedbackItem> {
        self.items.iter().filter(|i| i.status == Coverage::Missing)
    }
}

/// One item per case aspect in display order, with the snippet for its
/// coverage status and the character ranges of the matching spans.
pub fn generate_feedback(
    case: &CaseDefinition,
    doc: &Document,
    spans: &BTreeSet<Span>,
    db: &FeedbackDb,
) -> Result<FeedbackReport, FeedbackError> {
    if doc.case_id != case.case_id {
        return Err(FeedbackError::CaseMismatch {
            expected: case.case_id.clone(),
            found: doc.case_id.clone(),
        });
    }
    let mut ranges: BTreeMap<(Layer, &str), Vec<(usize, usize)>> = BTreeMap::new();
    for span in spans {
        let chars = doc
            .span_chars(span)
            .ok_or_else(|| FeedbackError::InvalidSpan(span.clone()))?;
        ranges
            .entry((span.layer, span.class.as_str()))
            .or_default()
            .push((chars.start, chars.end));
    }

    let mut items = Vec::with_capacity(case.aspects.len());
    for aspect in case.ordered_aspects() {
        let mut highlights = ranges
            .get(&(aspect.layer, aspect.class.as_str()))
            .cloned()
            .unwrap_or_default();
        highlights.sort_unstable();
        highlights.dedup();
        let status = if highlights.is_empty() {
            Coverage::Missing
        } else {
            Coverage::Covered
        };
        let snippet = db
            .snippet(&case.case_id, aspect.layer, &aspect.class, status)
            .ok_or_else(|| FeedbackError::IncompleteDb {
                case_id: case.case_id.clone(),
                layer: aspect.layer,
                class: aspect.class.clone(),
                status,
            })?;
        items.push(FeedbackItem {
            aspect: aspect.clone(),
            status,
            snippet: snippet.into(),
            highlights: highlights
                .into_iter()
                .map(|(s, e)| CharRange { start: s, end: e })
                .collect(),
        });
    }
    Ok(FeedbackReport {
        case_id: case.case_id.clone(),
        doc_id: doc.doc_id.clone(),
        items,
    })
}
