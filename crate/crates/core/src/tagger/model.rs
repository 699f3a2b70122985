use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::features::{extract_features, FeatureVector};
use super::viterbi::{sequence_score, viterbi, Transitions};
use super::TaggerError;
use crate::corpus::{
    bio_decode, repair, Document, LabelInventory, Layer, Sentence, Span, Tag, TagSequence,
};

/// Weights of one layer's linear-chain tagger.
///
/// `emission[feature][k]` is the weight of `feature` for `tag_set[k]`.
/// Features with all-zero weights are omitted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelState {
    pub version: u64,
    pub layer: Layer,
    pub classes: Vec<alloc::string::String>,
    pub tag_set: Vec<Tag>,
    pub averaged: bool,
    pub emission: BTreeMap<alloc::string::String, Vec<f64>>,
    pub transitions: Transitions,
}

impl ModelState {
    /// All-zero weights; decodes every sentence to `O`.
    pub fn zeros(inventory: &LabelInventory, version: u64) -> Self {
        let tag_set = inventory.tag_set();
        ModelState {
            version,
            layer: inventory.layer,
            classes: inventory.classes.clone(),
            transitions: Transitions::zeros(tag_set.len()),
            tag_set,
            averaged: false,
            emission: BTreeMap::new(),
        }
    }

    pub fn inventory(&self) -> LabelInventory {
        LabelInventory {
            layer: self.layer,
            classes: self.classes.clone(),
        }
    }

    pub fn num_tags(&self) -> usize {
        self.tag_set.len()
    }

    /// Structural checks for models read from outside.
    pub fn validate(&self) -> Result<(), TaggerError> {
        let inventory = self.inventory();
        inventory.validate().map_err(TaggerError::Corpus)?;
        if self.tag_set != inventory.tag_set() {
            return Err(TaggerError::MalformedModel(
                "tag set does not match classes",
            ));
        }
        if self.version == 0 {
            return Err(TaggerError::MalformedModel("versions start at 1"));
        }
        let n = self.num_tags();
        if self.transitions.num_tags() != n || !self.transitions.is_consistent() {
            return Err(TaggerError::MalformedModel("transition table shape"));
        }
        if self.emission.values().any(|w| w.len() != n) {
            return Err(TaggerError::MalformedModel("emission row length"));
        }
        let finite = self
            .emission
            .values()
            .flatten()
            .chain(&self.transitions.start)
            .chain(&self.transitions.end)
            .chain(self.transitions.matrix.iter().flatten())
            .all(|w| w.is_finite());
        if !finite {
            return Err(TaggerError::MalformedModel("non-finite weight"));
        }
        Ok(())
    }

    pub fn emission_scores(&self, features: &FeatureVector) -> Vec<f64> {
        let mut scores = vec![0.0; self.num_tags()];
        for (feature, count) in features.iter() {
            if let Some(weights) = self.emission.get(feature) {
                let count = f64::from(count);
                for (score, w) in scores.iter_mut().zip(weights) {
                    *score += count * w;
                }
            }
        }
        scores
    }

    /// Per-token emission scores of a sentence.
    pub fn emission_matrix(&self, sentence: &Sentence) -> Result<Vec<Vec<f64>>, TaggerError> {
        (0..sentence.len())
            .map(|i| extract_features(sentence, i).map(|f| self.emission_scores(&f)))
            .collect()
    }

    /// The unrepaired argmax path (tag indices) and its score.
    pub fn decode_scored(&self, sentence: &Sentence) -> Result<(Vec<usize>, f64), TaggerError> {
        if sentence.is_empty() {
            return Err(TaggerError::EmptySentence);
        }
        if self.num_tags() == 0 {
            return Err(TaggerError::MalformedModel("empty tag set"));
        }
        let emissions = self.emission_matrix(sentence)?;
        viterbi(&emissions, &self.transitions).ok_or(TaggerError::EmptySentence)
    }

    pub fn path_score(&self, sentence: &Sentence, path: &[usize]) -> Result<f64, TaggerError> {
        let emissions = self.emission_matrix(sentence)?;
        Ok(sequence_score(&emissions, &self.transitions, path))
    }

    pub fn tags_of(&self, path: &[usize]) -> TagSequence {
        TagSequence {
            layer: self.layer,
            tags: path.iter().map(|&k| self.tag_set[k].clone()).collect(),
        }
    }
}

/// Best tag sequence for `sentence`, repaired to be well-formed BIO.
pub fn viterbi_decode(model: &ModelState, sentence: &Sentence) -> Result<TagSequence, TaggerError> {
    let (path, _) = model.decode_scored(sentence)?;
    let mut tags = model.tags_of(&path);
    repair(&mut tags);
    Ok(tags)
}

/// Decodes every sentence of `doc` and returns the union of spans.
pub fn predict_document(
    model: &ModelState,
    doc: &Document,
    layer: Layer,
) -> Result<BTreeSet<Span>, TaggerError> {
    if model.layer != layer {
        return Err(TaggerError::LayerMismatch {
            model: model.layer,
            requested: layer,
        });
    }
    if doc.sentences.is_empty() {
        log::warn!("document {} has no sentences", doc.doc_id);
        return Ok(BTreeSet::new());
    }
    let mut spans = BTreeSet::new();
    for sentence in &doc.sentences {
        let tags = viterbi_decode(model, sentence)?;
        spans.extend(bio_decode(&tags, sentence.index));
    }
    Ok(spans)
}
