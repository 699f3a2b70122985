//! Core of the famulus feedback loop.
//!
//! Students write free-text diagnostic explanations; a sequence tagger marks
//! epistemic activities (hypothesis generation, evidence generation,
//! evidence evaluation, drawing conclusions) and case-specific diagnostic
//! entities; expert-written snippets turn the marked aspects into feedback;
//! instructors review model suggestions and their decisions become training
//! data for the next model.
//!
//! This crate is `no_std` and needs only `alloc`. Clocks, files, journals
//! and the network live in the `famulus` crate.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod annotation;
pub mod corpus;
pub mod feedback;
pub mod tagger;

pub use corpus::{AnnotatedDocument, Document, LabelInventory, Layer, Segmenter, Span};
pub use feedback::{CaseDefinition, FeedbackDb, FeedbackReport};
pub use tagger::{ModelState, TrainConfig};
