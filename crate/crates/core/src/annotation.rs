//! Instructor review of model suggestions.
//!
//! A task is opened per submitted document, optionally carrying pending
//! suggestions from the current models. Instructors accept or reject each
//! suggestion once and may add their own spans. Finalizing turns accepted
//! suggestions plus manual spans into gold data; suggestions still pending
//! at that point are recorded as rejected. A modified suggestion is a
//! rejection plus a manual span.

use alloc::boxed::Box;
use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::corpus::{AnnotatedDocument, CorpusError, Document, LabelInventory, Layer, Span};
use crate::tagger::{predict_document, ModelState, TaggerError};

/// Milliseconds since the Unix epoch, supplied by the caller.
pub type Timestamp = u64;
pub type TaskId = u64;
pub type SuggestionId = u32;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AnnotationError {
    #[error("a task already exists for document {0}")]
    DuplicateTask(String),
    #[error("unknown task {0}")]
    UnknownTask(TaskId),
    #[error("task {task} has no suggestion {suggestion}")]
    UnknownSuggestion {
        task: TaskId,
        suggestion: SuggestionId,
    },
    #[error("suggestion {suggestion} of task {task} was already {verdict}")]
    IllegalTransition {
        task: TaskId,
        suggestion: SuggestionId,
        verdict: Verdict,
    },
    #[error("task {0} is finalized")]
    TaskFinalized(TaskId),
    #[error("span {span} overlaps {existing}")]
    Overlap {
        span: Box<Span>,
        existing: Box<Span>,
    },
    #[error("no inventory configured for layer {0}")]
    UnknownLayer(Layer),
    #[error("document {found} does not belong to task {task} ({expected})")]
    DocumentMismatch {
        task: TaskId,
        expected: String,
        found: String,
    },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Tagger(#[from] TaggerError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pending,
    Accepted,
    Rejected,
}

impl core::fmt::Display for Verdict {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(match self {
            Verdict::Pending => "pending",
            Verdict::Accepted => "accepted",
            Verdict::Rejected => "rejected",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Accepted,
    Rejected,
}

impl From<Decision> for Verdict {
    fn from(d: Decision) -> Self {
        match d {
            Decision::Accepted => Verdict::Accepted,
            Decision::Rejected => Verdict::Rejected,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SuggestionRecord {
    pub suggestion_id: SuggestionId,
    pub span: Span,
    pub model_version: u64,
    pub verdict: Verdict,
    pub decided_at: Option<Timestamp>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskState {
    Open,
    Finalized,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationTask {
    pub task_id: TaskId,
    pub doc_id: String,
    pub state: TaskState,
    /// Token count per sentence of the document, for span checks.
    pub sentence_lengths: Vec<usize>,
    pub suggestions: Vec<SuggestionRecord>,
    pub manual_spans: Vec<Span>,
    pub created_at: Timestamp,
    pub finalized_at: Option<Timestamp>,
}

impl AnnotationTask {
    pub fn is_open(&self) -> bool {
        self.state == TaskState::Open
    }

    pub fn suggestion(&self, id: SuggestionId) -> Option<&SuggestionRecord> {
        self.suggestions.iter().find(|s| s.suggestion_id == id)
    }

    /// Accepted suggestions and manual spans.
    pub fn gold_spans(&self) -> BTreeSet<Span> {
        self.suggestions
            .iter()
            .filter(|s| s.verdict == Verdict::Accepted)
            .map(|s| s.span.clone())
            .chain(self.manual_spans.iter().cloned())
            .collect()
    }

    fn check_free(&self, span: &Span) -> Result<(), AnnotationError> {
        let taken = self
            .suggestions
            .iter()
            .filter(|s| s.verdict == Verdict::Accepted)
            .map(|s| &s.span)
            .chain(&self.manual_spans);
        for existing in taken {
            if existing.overlaps(span) {
                return Err(AnnotationError::Overlap {
                    span: Box::new(span.clone()),
                    existing: Box::new(existing.clone()),
                });
            }
        }
        Ok(())
    }

    /// Seconds from opening to finalization.
    pub fn annotation_seconds(&self) -> Option<f64> {
        self.finalized_at
            .map(|end| end.saturating_sub(self.created_at) as f64 / 1000.0)
    }
}

/// Suggestions for `doc` from every given model, numbered from 1 in layer
/// then reading order, all pending and stamped with the model version.
pub fn suggest(
    doc: &Document,
    models: &[&ModelState],
) -> Result<Vec<SuggestionRecord>, TaggerError> {
    let mut predictions = Vec::with_capacity(models.len());
    for model in models {
        predictions.push((model.version, predict_document(model, doc, model.layer)?));
    }
    Ok(suggestions_from(
        predictions.iter().map(|(v, spans)| (*v, spans)),
    ))
}

/// Pending suggestion records for spans already predicted by the model of
/// the given version, numbered as in [`suggest`].
pub fn suggestions_from<'a, I>(predictions: I) -> Vec<SuggestionRecord>
where
    I: IntoIterator<Item = (u64, &'a BTreeSet<Span>)>,
{
    let mut records = Vec::new();
    for (version, spans) in predictions {
        for span in spans {
            records.push(SuggestionRecord {
                suggestion_id: records.len() as SuggestionId + 1,
                span: span.clone(),
                model_version: version,
                verdict: Verdict::Pending,
                decided_at: None,
            });
        }
    }
    records
}

/// All annotation tasks, at most one per document.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskBoard {
    inventories: BTreeMap<Layer, LabelInventory>,
    tasks: BTreeMap<TaskId, AnnotationTask>,
    by_doc: BTreeMap<String, TaskId>,
    next_id: TaskId,
}

impl TaskBoard {
    pub fn new<I>(inventories: I) -> Self
    where
        I: IntoIterator<Item = LabelInventory>,
    {
        TaskBoard {
            inventories: inventories.into_iter().map(|i| (i.layer, i)).collect(),
            tasks: BTreeMap::new(),
            by_doc: BTreeMap::new(),
            next_id: 1,
        }
    }

    pub fn inventory(&self, layer: Layer) -> Option<&LabelInventory> {
        self.inventories.get(&layer)
    }

    pub fn next_task_id(&self) -> TaskId {
        self.next_id
    }

    /// Opens a task for `doc` with suggestions from `models` (none in the
    /// cold-start phase).
    pub fn open_task(
        &mut self,
        doc: &Document,
        models: &[&ModelState],
        now: Timestamp,
    ) -> Result<&AnnotationTask, AnnotationError> {
        if self.by_doc.contains_key(&doc.doc_id) {
            return Err(AnnotationError::DuplicateTask(doc.doc_id.clone()));
        }
        let suggestions = suggest(doc, models)?;
        self.open_task_with(doc, suggestions, now)
    }

    /// Opens a task with suggestions computed by the caller.
    pub fn open_task_with(
        &mut self,
        doc: &Document,
        suggestions: Vec<SuggestionRecord>,
        now: Timestamp,
    ) -> Result<&AnnotationTask, AnnotationError> {
        if self.by_doc.contains_key(&doc.doc_id) {
            return Err(AnnotationError::DuplicateTask(doc.doc_id.clone()));
        }
        let task = AnnotationTask {
            task_id: self.next_id,
            doc_id: doc.doc_id.clone(),
            state: TaskState::Open,
            sentence_lengths: doc.sentence_lengths(),
            suggestions,
            manual_spans: Vec::new(),
            created_at: now,
            finalized_at: None,
        };
        self.insert(task)
    }

    /// Inserts a task built elsewhere (journal replay). The id must be the
    /// next free one.
    pub fn insert(&mut self, task: AnnotationTask) -> Result<&AnnotationTask, AnnotationError> {
        if self.by_doc.contains_key(&task.doc_id) {
            return Err(AnnotationError::DuplicateTask(task.doc_id));
        }
        let id = task.task_id;
        self.next_id = self.next_id.max(id + 1);
        self.by_doc.insert(task.doc_id.clone(), id);
        Ok(self.tasks.entry(id).or_insert(task))
    }

    /// Puts back an earlier copy of an existing task, undoing changes the
    /// caller could not persist.
    pub fn restore(&mut self, task: AnnotationTask) -> Result<(), AnnotationError> {
        match self.tasks.get_mut(&task.task_id) {
            Some(slot) if slot.doc_id == task.doc_id => {
                *slot = task;
                Ok(())
            }
            Some(slot) => Err(AnnotationError::DocumentMismatch {
                task: task.task_id,
                expected: slot.doc_id.clone(),
                found: task.doc_id,
            }),
            None => Err(AnnotationError::UnknownTask(task.task_id)),
        }
    }

    /// Replaces the inventory of one layer; later manual spans are checked
    /// against it.
    pub fn set_inventory(&mut self, inventory: LabelInventory) {
        self.inventories.insert(inventory.layer, inventory);
    }

    pub fn task(&self, id: TaskId) -> Option<&AnnotationTask> {
        self.tasks.get(&id)
    }

    pub fn task_for_doc(&self, doc_id: &str) -> Option<&AnnotationTask> {
        self.by_doc.get(doc_id).and_then(|id| self.tasks.get(id))
    }

    pub fn tasks(&self) -> impl Iterator<Item = &AnnotationTask> {
        self.tasks.values()
    }

    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    fn open_mut(&mut self, id: TaskId) -> Result<&mut AnnotationTask, AnnotationError> {
        let task = self
            .tasks
            .get_mut(&id)
            .ok_or(AnnotationError::UnknownTask(id))?;
        if !task.is_open() {
            return Err(AnnotationError::TaskFinalized(id));
        }
        Ok(task)
    }

    pub fn review_suggestion(
        &mut self,
        task_id: TaskId,
        suggestion_id: SuggestionId,
        decision: Decision,
        now: Timestamp,
    ) -> Result<&AnnotationTask, AnnotationError> {
        let task = self.open_mut(task_id)?;
        let index = task
            .suggestions
            .iter()
            .position(|s| s.suggestion_id == suggestion_id)
            .ok_or(AnnotationError::UnknownSuggestion {
                task: task_id,
                suggestion: suggestion_id,
            })?;
        let record = &task.suggestions[index];
        if record.verdict != Verdict::Pending {
            return Err(AnnotationError::IllegalTransition {
                task: task_id,
                suggestion: suggestion_id,
                verdict: record.verdict,
            });
        }
        if decision == Decision::Accepted {
            task.check_free(&record.span.clone())?;
        }
        let record = &mut task.suggestions[index];
        record.verdict = decision.into();
        record.decided_at = Some(now);
        Ok(task)
    }

    pub fn add_manual_span(
        &mut self,
        task_id: TaskId,
        span: Span,
    ) -> Result<&AnnotationTask, AnnotationError> {
        let inventory = self
            .inventories
            .get(&span.layer)
            .ok_or(AnnotationError::UnknownLayer(span.layer))?;
        inventory.check_span(&span)?;
        let task = self.open_mut(task_id)?;
        let len = task
            .sentence_lengths
            .get(span.sentence)
            .copied()
            .ok_or_else(|| CorpusError::InvalidSpan {
                span: Box::new(span.clone()),
                reason: "sentence index out of range",
            })?;
        span.check_bounds(len)?;
        task.check_free(&span)?;
        task.manual_spans.push(span);
        Ok(task)
    }

    /// Closes the task and returns the gold document. Pending suggestions
    /// become rejected with `now` as decision time.
    pub fn finalize_task(
        &mut self,
        task_id: TaskId,
        document: Document,
        now: Timestamp,
    ) -> Result<AnnotatedDocument, AnnotationError> {
        let task = self.open_mut(task_id)?;
        if task.doc_id != document.doc_id {
            return Err(AnnotationError::DocumentMismatch {
                task: task_id,
                expected: task.doc_id.clone(),
                found: document.doc_id,
            });
        }
        let gold = task.gold_spans();
        let annotated = AnnotatedDocument::new(document, gold)?;
        for record in &mut task.suggestions {
            if record.verdict == Verdict::Pending {
                record.verdict = Verdict::Rejected;
                record.decided_at = Some(now);
            }
        }
        task.state = TaskState::Finalized;
        task.finalized_at = Some(now);
        Ok(annotated)
    }

    pub fn metrics(&self) -> AnnotationMetrics {
        compute_metrics(self.tasks.values())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationMetrics {
    pub accepted: usize,
    pub rejected: usize,
    pub pending: usize,
    pub manual: usize,
    /// accepted / (accepted + rejected); absent when nothing was decided.
    pub acceptance_rate: Option<f64>,
    /// Mean seconds between opening and finalizing a task.
    pub mean_time_per_doc: Option<f64>,
    pub finalized_tasks: usize,
}

pub fn compute_metrics<'a, I>(tasks: I) -> AnnotationMetrics
where
    I: IntoIterator<Item = &'a AnnotationTask>,
{
    let mut metrics = AnnotationMetrics {
        accepted: 0,
        rejected: 0,
        pending: 0,
        manual: 0,
        acceptance_rate: None,
        mean_time_per_doc: None,
        finalized_tasks: 0,
    };
    let mut total_seconds = 0.0;
    for task in tasks {
        for record in &task.suggestions {
            match record.verdict {
                Verdict::Accepted => metrics.accepted += 1,
                Verdict::Rejected => metrics.rejected += 1,
                Verdict::Pending => metrics.pending += 1,
            }
        }
        metrics.manual += task.manual_spans.len();
        if let Some(seconds) = task.annotation_seconds() {
            metrics.finalized_tasks += 1;
            total_seconds += seconds;
        }
    }
    let decided = metrics.accepted + metrics.rejected;
    if decided > 0 {
        metrics.acceptance_rate = Some(metrics.accepted as f64 / decided as f64);
    }
    if metrics.finalized_tasks > 0 {
        metrics.mean_time_per_doc = Some(total_seconds / metrics.finalized_tasks as f64);
    }
    metrics
}
