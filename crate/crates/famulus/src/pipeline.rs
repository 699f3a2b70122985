//! The timed path from raw text to feedback: segmentation, prediction on
//! every layer, feedback generation.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use famulus_core::corpus::{AuthorRole, Document, Layer, Segmenter, Span};
use famulus_core::feedback::{generate_feedback, CaseDefinition, FeedbackDb, FeedbackReport};
use famulus_core::tagger::{predict_document, ModelState};

use crate::error::Result;

/// A span with both token and character positions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpanView {
    pub layer: Layer,
    pub class: String,
    pub sentence: usize,
    pub token_start: usize,
    pub token_end: usize,
    pub char_start: usize,
    pub char_end: usize,
    pub text: String,
}

impl SpanView {
    pub fn new(doc: &Document, span: &Span) -> Option<SpanView> {
        let chars = doc.span_chars(span)?;
        Some(SpanView {
            layer: span.layer,
            class: span.class.clone(),
            sentence: span.sentence,
            token_start: span.token_start,
            token_end: span.token_end,
            text: doc
                .raw_text
                .chars()
                .skip(chars.start)
                .take(chars.len())
                .collect(),
            char_start: chars.start,
            char_end: chars.end,
        })
    }
}

pub fn span_views<'a, I>(doc: &Document, spans: I) -> Vec<SpanView>
where
    I: IntoIterator<Item = &'a Span>,
{
    spans
        .into_iter()
        .filter_map(|s| SpanView::new(doc, s))
        .collect()
}

#[derive(Debug, Clone)]
pub struct Analysis {
    pub document: Document,
    /// Predicted spans per layer, in model order.
    pub predictions: Vec<(Layer, u64, BTreeSet<Span>)>,
    pub report: FeedbackReport,
    pub processing_ms: f64,
}

impl Analysis {
    pub fn spans(&self) -> BTreeSet<Span> {
        self.predictions
            .iter()
            .flat_map(|(_, _, s)| s.iter().cloned())
            .collect()
    }
}

/// Segments `text`, predicts with every model and builds the feedback
/// report. `processing_ms` covers all three steps.
pub fn analyze(
    segmenter: &Segmenter,
    models: &[Arc<ModelState>],
    case: &CaseDefinition,
    db: &FeedbackDb,
    doc_id: &str,
    author_role: AuthorRole,
    text: &str,
) -> Result<Analysis> {
    let started = Instant::now();
    let document = Document::new(doc_id, case.case_id.as_str(), author_role, text, segmenter)?;
    let mut predictions = Vec::with_capacity(models.len());
    let mut all = BTreeSet::new();
    for model in models {
        let spans = predict_document(model, &document, model.layer)?;
        all.extend(spans.iter().cloned());
        predictions.push((model.layer, model.version, spans));
    }
    let report = generate_feedback(case, &document, &all, db)?;
    let processing_ms = started.elapsed().as_secs_f64() * 1000.0;
    Ok(Analysis {
        document,
        predictions,
        report,
        processing_ms,
    })
}

/// Versions of a model set, keyed by layer.
pub fn versions(models: &[Arc<ModelState>]) -> BTreeMap<Layer, u64> {
    models.iter().map(|m| (m.layer, m.version)).collect()
}
