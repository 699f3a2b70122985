use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write;

use serde::{Deserialize, Serialize};

use super::TaggerError;
use crate::corpus::{AnnotatedDocument, LabelInventory, Layer, Span};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassScores {
    pub class: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Gold spans of this class.
    pub support: usize,
    pub predicted: usize,
    pub true_positives: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub layer: Layer,
    pub classes: Vec<ClassScores>,
    /// Unweighted mean of the per-class F1 values (0 when no class occurs).
    pub macro_f1: f64,
}

impl EvalReport {
    pub fn class(&self, class: &str) -> Option<&ClassScores> {
        self.classes.iter().find(|c| c.class == class)
    }

    pub fn f1(&self, class: &str) -> Option<f64> {
        self.class(class).map(|c| c.f1)
    }

    /// Per-class precision/recall/F1 listing followed by the macro score.
    pub fn render(&self) -> String {
        let width = self
            .classes
            .iter()
            .map(|c| c.class.chars().count())
            .max()
            .unwrap_or(0)
            .max(5);
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<width$} {:>9} {:>9} {:>9} {:>8} {:>8}",
            "class", "precision", "recall", "f1", "support", "pred"
        );
        for c in &self.classes {
            let _ = writeln!(
                out,
                "{:<width$} {:>9.4} {:>9.4} {:>9.4} {:>8} {:>8}",
                c.class, c.precision, c.recall, c.f1, c.support, c.predicted
            );
        }
        let _ = writeln!(out, "{:<width$} {:>29.4}", "macro", self.macro_f1);
        out
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Exact-match span scoring: a prediction is a true positive iff a gold
/// span with the same layer, class, sentence and token range exists.
///
/// The macro mean runs over the classes that occur in gold or predictions;
/// inventory order first, then any remaining classes alphabetically.
pub fn evaluate(
    gold: &[AnnotatedDocument],
    predictions: &BTreeMap<String, BTreeSet<Span>>,
    inventory: &LabelInventory,
) -> Result<EvalReport, TaggerError> {
    let layer = inventory.layer;
    let mut counts: BTreeMap<&str, (usize, usize, usize)> = BTreeMap::new();
    for doc in gold {
        let predicted = predictions
            .get(&doc.document.doc_id)
            .ok_or_else(|| TaggerError::MissingPrediction(doc.document.doc_id.clone()))?;
        for span in doc.spans_in(layer) {
            let entry = counts.entry(&span.class).or_default();
            entry.0 += 1;
            if predicted.contains(span) {
                entry.2 += 1;
            }
        }
        for span in predicted.iter().filter(|s| s.layer == layer) {
            counts.entry(&span.class).or_default().1 += 1;
        }
    }

    let mut order: Vec<&str> = inventory
        .classes
        .iter()
        .map(String::as_str)
        .filter(|c| counts.contains_key(c))
        .collect();
    order.extend(counts.keys().copied().filter(|c| !inventory.contains(c)));

    let classes: Vec<ClassScores> = order
        .into_iter()
        .map(|class| {
            let (support, predicted, tp) = counts[class];
            let precision = ratio(tp, predicted);
            let recall = ratio(tp, support);
            let f1 = if precision + recall == 0.0 {
                0.0
            } else {
                2.0 * precision * recall / (precision + recall)
            };
            ClassScores {
                class: class.into(),
                precision,
                recall,
                f1,
                support,
                predicted,
                true_positives: tp,
            }
        })
        .collect();
    let macro_f1 = if classes.is_empty() {
        0.0
    } else {
        classes.iter().map(|c| c.f1).sum::<f64>() / classes.len() as f64
    };
    Ok(EvalReport {
        layer,
        classes,
        macro_f1,
    })
}

/// Renders F1 percentages with one row per labelled report and one column
/// per class, in the layout
///
/// ```text
///            EG     EE     HG     DC
/// BiLSTM  71.60  80.20  69.28  65.32
/// ```
///
/// Classes a report does not contain print as `-`.
pub fn render_f1_table(rows: &[(&str, &EvalReport)], columns: &[&str]) -> String {
    let label_width = rows
        .iter()
        .map(|(l, _)| l.chars().count())
        .max()
        .unwrap_or(0);
    let mut out = String::new();
    let _ = write!(out, "{:<label_width$}", "");
    for column in columns {
        let _ = write!(out, " {:>6}", column);
    }
    out.push('\n');
    for (label, report) in rows {
        let _ = write!(out, "{:<label_width$}", label);
        for column in columns {
            let cell = report
                .f1(column)
                .map(|f| format!("{:.2}", f * 100.0))
                .unwrap_or_else(|| String::from("-"));
            let _ = write!(out, " {:>6}", cell);
        }
        out.push('\n');
    }
    out
}
