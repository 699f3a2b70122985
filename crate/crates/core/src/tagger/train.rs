//! Averaged structured perceptron over the linear-chain model.
//!
//! Each epoch visits the training sentences in an order shuffled by a
//! ChaCha8 generator seeded with `TrainConfig::shuffle_seed` (one generator
//! for the whole run, Fisher-Yates shuffle per epoch). A sentence whose
//! Viterbi path differs from the gold path adds the gold features and
//! transitions and subtracts the predicted ones. Averaging uses the usual
//! accumulator trick: `avg = w - u / c`, where `u` sums `c * update` and `c`
//! counts visited sentences.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::features::extract_features;
use super::model::ModelState;
use super::viterbi::{viterbi, Transitions};
use super::TaggerError;
use crate::corpus::{bio_encode, AnnotatedDocument, CorpusError, LabelInventory, Tag};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: u32,
    pub shuffle_seed: u64,
    pub averaging: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 10,
            shuffle_seed: 42,
            averaging: true,
        }
    }
}

/// A trained model plus the number of mistaken sentences in each epoch.
#[derive(Debug, Clone)]
pub struct Trained {
    pub model: ModelState,
    pub mistakes_per_epoch: Vec<usize>,
}

struct Instance {
    /// Per token: (feature id, count).
    features: Vec<Vec<(usize, f64)>>,
    gold: Vec<usize>,
}

/// Weight vector with its averaging accumulator.
struct Averaged {
    w: Vec<f64>,
    u: Vec<f64>,
}

impl Averaged {
    fn new(len: usize) -> Self {
        Averaged {
            w: vec![0.0; len],
            u: vec![0.0; len],
        }
    }

    fn update(&mut self, index: usize, delta: f64, step: f64) {
        self.w[index] += delta;
        self.u[index] += step * delta;
    }

    fn finish(&self, averaging: bool, steps: f64) -> Vec<f64> {
        if averaging {
            self.w
                .iter()
                .zip(&self.u)
                .map(|(w, u)| w - u / steps)
                .collect()
        } else {
            self.w.clone()
        }
    }
}

/// Trains a fresh model for `inventory.layer`; the returned version is
/// `previous_version + 1`, or 1 when there is none.
pub fn train(
    corpus: &[AnnotatedDocument],
    inventory: &LabelInventory,
    config: &TrainConfig,
    previous_version: Option<u64>,
) -> Result<ModelState, TaggerError> {
    train_detailed(corpus, inventory, config, previous_version).map(|t| t.model)
}

pub fn train_detailed(
    corpus: &[AnnotatedDocument],
    inventory: &LabelInventory,
    config: &TrainConfig,
    previous_version: Option<u64>,
) -> Result<Trained, TaggerError> {
    if config.epochs == 0 {
        return Err(TaggerError::InvalidConfig("epochs must be at least 1"));
    }
    inventory.validate().map_err(TaggerError::Corpus)?;
    let tag_set = inventory.tag_set();
    let tag_index: BTreeMap<&Tag, usize> =
        tag_set.iter().enumerate().map(|(i, t)| (t, i)).collect();
    let num_tags = tag_set.len();

    let mut feature_ids: BTreeMap<String, usize> = BTreeMap::new();
    let mut instances = Vec::new();
    for doc in corpus {
        for sentence in &doc.document.sentences {
            if sentence.is_empty() {
                continue;
            }
            let tags = bio_encode(&doc.gold_spans, sentence, inventory.layer)?;
            let gold = tags
                .tags
                .iter()
                .map(|t| {
                    tag_index.get(t).copied().ok_or_else(|| {
                        TaggerError::Corpus(CorpusError::UnknownClass {
                            layer: inventory.layer,
                            class: t.class().unwrap_or_default().into(),
                        })
                    })
                })
                .collect::<Result<Vec<_>, _>>()?;
            let mut features = Vec::with_capacity(sentence.len());
            for position in 0..sentence.len() {
                let fv = extract_features(sentence, position)?;
                let ids = fv
                    .iter()
                    .map(|(name, count)| {
                        let next = feature_ids.len();
                        let id = *feature_ids.entry(String::from(name)).or_insert(next);
                        (id, f64::from(count))
                    })
                    .collect();
                features.push(ids);
            }
            instances.push(Instance { features, gold });
        }
    }
    if instances.is_empty() {
        return Err(TaggerError::EmptyCorpus);
    }

    let mut emission = Averaged::new(feature_ids.len() * num_tags);
    let mut matrix = Averaged::new(num_tags * num_tags);
    let mut start = Averaged::new(num_tags);
    let mut end = Averaged::new(num_tags);

    let mut rng = ChaCha8Rng::seed_from_u64(config.shuffle_seed);
    let mut order: Vec<usize> = (0..instances.len()).collect();
    let mut step = 1.0f64;
    let mut mistakes_per_epoch = Vec::with_capacity(config.epochs as usize);

    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut mistakes = 0;
        for &idx in &order {
            let instance = &instances[idx];
            let scores: Vec<Vec<f64>> = instance
                .features
                .iter()
                .map(|token| {
                    let mut row = vec![0.0; num_tags];
                    for &(id, count) in token {
                        let weights = &emission.w[id * num_tags..(id + 1) * num_tags];
                        for (s, w) in row.iter_mut().zip(weights) {
                            *s += count * w;
                        }
                    }
                    row
                })
                .collect();
            let current = Transitions {
                start: start.w.clone(),
                end: end.w.clone(),
                matrix: matrix.w.chunks(num_tags).map(<[f64]>::to_vec).collect(),
            };
            let (predicted, _) = viterbi(&scores, &current).ok_or(TaggerError::EmptySentence)?;

            if predicted != instance.gold {
                mistakes += 1;
                let gold = &instance.gold;
                let n = gold.len();
                for i in 0..n {
                    if gold[i] != predicted[i] {
                        for &(id, count) in &instance.features[i] {
                            emission.update(id * num_tags + gold[i], count, step);
                            emission.update(id * num_tags + predicted[i], -count, step);
                        }
                    }
                    if i > 0 && (gold[i - 1], gold[i]) != (predicted[i - 1], predicted[i]) {
                        matrix.update(gold[i - 1] * num_tags + gold[i], 1.0, step);
                        matrix.update(predicted[i - 1] * num_tags + predicted[i], -1.0, step);
                    }
                }
                if gold[0] != predicted[0] {
                    start.update(gold[0], 1.0, step);
                    start.update(predicted[0], -1.0, step);
                }
                if gold[n - 1] != predicted[n - 1] {
                    end.update(gold[n - 1], 1.0, step);
                    end.update(predicted[n - 1], -1.0, step);
                }
            }
            step += 1.0;
        }
        mistakes_per_epoch.push(mistakes);
    }

    let emission_weights = emission.finish(config.averaging, step);
    let mut emission_map = BTreeMap::new();
    for (name, id) in feature_ids {
        let row = &emission_weights[id * num_tags..(id + 1) * num_tags];
        if row.iter().any(|w| *w != 0.0) {
            emission_map.insert(name, row.to_vec());
        }
    }
    let model = ModelState {
        version: previous_version.map_or(1, |v| v + 1),
        layer: inventory.layer,
        classes: inventory.classes.clone(),
        tag_set,
        averaged: config.averaging,
        emission: emission_map,
        transitions: Transitions {
            start: start.finish(config.averaging, step),
            end: end.finish(config.averaging, step),
            matrix: matrix
                .finish(config.averaging, step)
                .chunks(num_tags)
                .map(<[f64]>::to_vec)
                .collect(),
        },
    };
    Ok(Trained {
        model,
        mistakes_per_epoch,
    })
}
