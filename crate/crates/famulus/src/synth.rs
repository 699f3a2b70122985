//! Synthetic annotated corpora. Every sentence gets one epistemic trigger
//! phrase and, most of the time, one entity phrase, embedded in filler
//! words that never occur in a trigger. With `noise_rate` 0 the label of a
//! phrase is always its own class; otherwise each label is swapped for a
//! different class of the same layer with that probability.
//!
//! Randomness comes from ChaCha8 seeded with `seed`, so equal specs give
//! equal corpora on every platform.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use famulus_core::corpus::{AnnotatedDocument, AuthorRole, Document, Layer, Segmenter, Span};
use famulus_core::feedback::{CaseAspect, CaseDefinition, Coverage, FeedbackEntry, Relevance};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub seed: u64,
    pub n_documents: usize,
    pub sentences_per_document: usize,
    pub noise_rate: f64,
    pub case_id: String,
    /// Probability that a sentence also mentions an entity.
    pub entity_rate: f64,
    /// Trigger phrases per layer and class.
    pub triggers: BTreeMap<Layer, BTreeMap<String, Vec<String>>>,
    pub fillers: Vec<String>,
    pub doc_id_prefix: String,
}

fn phrases(list: &[(&str, &[&str])]) -> BTreeMap<String, Vec<String>> {
    list.iter()
        .map(|(class, p)| (class.to_string(), p.iter().map(|s| s.to_string()).collect()))
        .collect()
}

pub const DEFAULT_FILLERS: &[&str] = &[
    "die",
    "Patientin",
    "hat",
    "seit",
    "einer",
    "Woche",
    "Husten",
    "nach",
    "Reise",
    "aus",
    "Sansibar",
    "wir",
    "sehen",
    "deutlich",
    "leicht",
    "erhöht",
    "heute",
    "klinisch",
    "Befund",
    "Verlauf",
    "Beschwerden",
    "zusätzlich",
    "ohne",
    "mit",
    "bei",
    "starke",
    "Kopfschmerzen",
    "Gelenke",
    "Haut",
    "Appetit",
    "gering",
    "ausgeprägt",
    "wieder",
    "kaum",
    "eher",
    "sowie",
    "zunächst",
    "Müdigkeit",
    "Übelkeit",
    "Frau",
    "Hoffmann",
    "insgesamt",
    "unauffällig",
    "Tage",
    "schon",
    "auch",
    "noch",
    "sonst",
    "kein",
    "Hinweis",
];

impl Default for SynthSpec {
    fn default() -> Self {
        let mut triggers = BTreeMap::new();
        triggers.insert(
            Layer::EpistemicActivity,
            phrases(&[
                ("HG", &["vermutlich", "möglicherweise"]),
                ("EG", &["Labor zeigt", "Anamnese ergab"]),
                ("EE", &["spricht für", "passt zu"]),
                ("DC", &["daher", "folglich"]),
            ]),
        );
        triggers.insert(
            Layer::DiagnosticEntity,
            phrases(&[
                ("hepatitis_a", &["Hepatitis A"]),
                ("tropical_disease", &["Malaria", "Dengue"]),
                ("bowel_disease", &["Morbus Crohn", "Colitis"]),
                ("liver_values", &["Leberwerte", "Transaminasen"]),
            ]),
        );
        SynthSpec {
            seed: 7,
            n_documents: 10,
            sentences_per_document: 11,
            noise_rate: 0.0,
            case_id: "hoffmann".into(),
            entity_rate: 0.6,
            triggers,
            fillers: DEFAULT_FILLERS.iter().map(|s| s.to_string()).collect(),
            doc_id_prefix: "synth-".into(),
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(format!("synth spec: {m}")));
        if !(0.0..=1.0).contains(&self.noise_rate) || !(0.0..=1.0).contains(&self.entity_rate) {
            return fail("rates must lie in [0, 1]");
        }
        if self.sentences_per_document == 0 {
            return fail("sentences_per_document must be at least 1");
        }
        if self.fillers.len() < 2 {
            return fail("at least two filler words needed");
        }
        let ea = self.triggers.get(&Layer::EpistemicActivity);
        if ea.is_none_or(|c| c.is_empty()) {
            return fail("epistemic triggers are required");
        }
        let mut trigger_words = BTreeSet::new();
        for classes in self.triggers.values() {
            for (class, list) in classes {
                if list.is_empty() || list.iter().any(|p| p.split_whitespace().next().is_none()) {
                    return fail(&format!("class {class} needs non-empty phrases"));
                }
                for p in list {
                    trigger_words.extend(p.split_whitespace().map(str::to_lowercase));
                }
            }
        }
        if let Some(f) = self
            .fillers
            .iter()
            .find(|f| trigger_words.contains(&f.to_lowercase()))
        {
            return fail(&format!("filler {f} also appears in a trigger phrase"));
        }
        if self
            .fillers
            .iter()
            .any(|f| f.chars().any(|c| !c.is_alphanumeric()))
        {
            return fail("fillers must be plain words");
        }
        Ok(())
    }

    /// A case whose aspects are exactly the entity classes of the spec plus
    /// the DC epistemic class, with the first entity class as the correct
    /// diagnosis.
    pub fn case(&self) -> CaseDefinition {
        let mut aspects = Vec::new();
        if let Some(classes) = self.triggers.get(&Layer::DiagnosticEntity) {
            for (i, class) in classes.keys().enumerate() {
                aspects.push(CaseAspect {
                    layer: Layer::DiagnosticEntity,
                    class: class.clone(),
                    relevance: if class == "hepatitis_a"
                        || (i == 0 && !classes.contains_key("hepatitis_a"))
                    {
                        Relevance::CorrectDiagnosis
                    } else {
                        Relevance::Relevant
                    },
                    display_order: i as i32 + 1,
                });
            }
        }
        aspects.push(CaseAspect {
            layer: Layer::EpistemicActivity,
            class: "DC".into(),
            relevance: Relevance::Relevant,
            display_order: aspects.len() as i32 + 1,
        });
        CaseDefinition {
            case_id: self.case_id.clone(),
            title: "Müdigkeit nach Reise".into(),
            case_text: "Frau Hoffmann, 36, klagt seit einer Woche über Müdigkeit nach einer Reise nach Sansibar.".into(),
            aspects,
            default_feedback: "Die Patientin hat eine Hepatitis A, erworben auf der Reise.".into(),
        }
    }

    /// Both snippets for every aspect of [`SynthSpec::case`].
    pub fn feedback_entries(&self) -> Vec<FeedbackEntry> {
        let case = self.case();
        let mut entries = Vec::new();
        for aspect in &case.aspects {
            for status in Coverage::BOTH {
                let snippet = match status {
                    Coverage::Covered => format!("Gut: {} wurde bedacht.", aspect.class),
                    Coverage::Missing => format!("Bedenke auch {}.", aspect.class),
                };
                entries.push(FeedbackEntry {
                    case_id: case.case_id.clone(),
                    layer: aspect.layer,
                    class: aspect.class.clone(),
                    status,
                    snippet,
                });
            }
        }
        entries
    }
}

struct Piece {
    words: Vec<String>,
    label: Option<(Layer, String)>,
}

fn capitalize(word: &str) -> String {
    let mut chars = word.chars();
    match chars.next() {
        Some(c) => c.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

fn pick_class<'a>(
    rng: &mut ChaCha8Rng,
    classes: &'a BTreeMap<String, Vec<String>>,
) -> (&'a String, &'a Vec<String>) {
    let index = rng.random_range(0..classes.len());
    classes.iter().nth(index).expect("index in range")
}

fn noisy_label(
    rng: &mut ChaCha8Rng,
    class: &str,
    classes: &BTreeMap<String, Vec<String>>,
    rate: f64,
) -> String {
    if rate > 0.0 && classes.len() > 1 && rng.random_bool(rate) {
        let others: Vec<&String> = classes.keys().filter(|c| *c != class).collect();
        others
            .choose(rng)
            .map(|c| c.to_string())
            .expect("other class exists")
    } else {
        class.to_string()
    }
}

fn sentence(rng: &mut ChaCha8Rng, spec: &SynthSpec) -> Vec<Piece> {
    let mut pieces: Vec<Piece> = (0..rng.random_range(3..=7))
        .map(|_| Piece {
            words: vec![spec.fillers.choose(rng).expect("fillers").clone()],
            label: None,
        })
        .collect();
    let mut place =
        |rng: &mut ChaCha8Rng, layer: Layer, classes: &BTreeMap<String, Vec<String>>| {
            let (class, list) = pick_class(rng, classes);
            let phrase = list.choose(rng).expect("phrases");
            let label = noisy_label(rng, class, classes, spec.noise_rate);
            let at = rng.random_range(0..=pieces.len());
            pieces.insert(
                at,
                Piece {
                    words: phrase.split_whitespace().map(String::from).collect(),
                    label: Some((layer, label)),
                },
            );
        };
    place(
        rng,
        Layer::EpistemicActivity,
        &spec.triggers[&Layer::EpistemicActivity],
    );
    if let Some(entities) = spec
        .triggers
        .get(&Layer::DiagnosticEntity)
        .filter(|e| !e.is_empty())
    {
        if rng.random_bool(spec.entity_rate) {
            place(rng, Layer::DiagnosticEntity, entities);
        }
    }
    pieces
}

/// Generates `spec.n_documents` annotated documents.
pub fn generate_synthetic_corpus(spec: &SynthSpec) -> Result<Vec<AnnotatedDocument>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let segmenter = Segmenter::default();
    let mut docs = Vec::with_capacity(spec.n_documents);
    for d in 0..spec.n_documents {
        let mut text = String::new();
        let mut spans = BTreeSet::new();
        for s in 0..spec.sentences_per_document {
            let pieces = sentence(&mut rng, spec);
            let mut token = 0;
            let mut words = Vec::new();
            for piece in pieces {
                if let Some((layer, class)) = piece.label {
                    spans.insert(Span::new(layer, class, s, token, token + piece.words.len()));
                }
                token += piece.words.len();
                words.extend(piece.words);
            }
            if let Some(first) = words.first_mut() {
                *first = capitalize(first);
            }
            if !text.is_empty() {
                text.push(' ');
            }
            text.push_str(&words.join(" "));
            text.push('.');
        }
        let document = Document::new(
            format!("{}{:04}", spec.doc_id_prefix, d + 1),
            spec.case_id.as_str(),
            AuthorRole::Student,
            &text,
            &segmenter,
        )?;
        docs.push(AnnotatedDocument::new(document, spans)?);
    }
    Ok(docs)
}
