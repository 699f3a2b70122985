//! Linear-chain sequence tagger: one independent model per label layer.
//!
//! Emission scores come from sparse token features, transition scores from a
//! tag-by-tag table with start and end rows. Decoding is exact Viterbi;
//! training is an averaged structured perceptron.

mod eval;
mod features;
mod model;
mod train;
mod viterbi;

use alloc::string::String;

pub use eval::{evaluate, render_f1_table, ClassScores, EvalReport};
pub use features::{extract_features, word_shape, FeatureVector, BOS, EOS};
pub use model::{predict_document, viterbi_decode, ModelState};
pub use train::{train, train_detailed, TrainConfig, Trained};
pub use viterbi::{sequence_score, viterbi, Transitions};

use crate::corpus::{CorpusError, Layer};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TaggerError {
    #[error("position {position} out of range for sentence of {len} tokens")]
    IndexOutOfRange { position: usize, len: usize },
    #[error("cannot decode an empty sentence")]
    EmptySentence,
    #[error("training corpus is empty")]
    EmptyCorpus,
    #[error("model is for layer {model}, spans requested for {requested}")]
    LayerMismatch { model: Layer, requested: Layer },
    #[error("no prediction for document {0}")]
    MissingPrediction(String),
    #[error("malformed model: {0}")]
    MalformedModel(&'static str),
    #[error("invalid training configuration: {0}")]
    InvalidConfig(&'static str),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}
