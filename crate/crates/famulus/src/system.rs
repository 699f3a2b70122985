//! The feedback loop state machine.
//!
//! Every state change is appended to the journal before it becomes
//! visible, and replaying the journal rebuilds the same state. During the
//! cold start submissions get the case's default feedback and open tasks
//! without suggestions. Once enough documents are finalized, models for all
//! enabled layers are trained from the gold corpus and published together;
//! from then on submissions get generated feedback and suggestion-bearing
//! tasks, and each `retrain_every` finalizations trigger another retrain.

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Condvar, Mutex, MutexGuard, RwLock};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use famulus_core::annotation::{
    compute_metrics, suggestions_from, AnnotationError, AnnotationTask, Decision, SuggestionId,
    TaskId, TaskState, Timestamp,
};
use famulus_core::corpus::{
    AnnotatedDocument, AuthorRole, Document, LabelInventory, Layer, Segmenter, Span,
};
use famulus_core::feedback::{
    validate_feedback_db, CaseDefinition, FeedbackDb, FeedbackEntry, FeedbackReport, Finding,
};
use famulus_core::tagger::{
    evaluate, predict_document, train, EvalReport, ModelState, TaggerError,
};

use crate::config::Config;
use crate::error::{Error, Result};
use crate::formats;
use crate::journal::{Event, EventBody, Journal, PublishedModel};
use crate::pipeline::{analyze, span_views, SpanView};

pub trait Clock: Send + Sync {
    fn now(&self) -> Timestamp;
}

pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> Timestamp {
        SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_millis() as Timestamp)
            .unwrap_or(0)
    }
}

/// A clock that only moves when told to.
#[derive(Debug, Default)]
pub struct ManualClock(AtomicU64);

impl ManualClock {
    pub fn new(start: Timestamp) -> Self {
        ManualClock(AtomicU64::new(start))
    }

    pub fn advance(&self, ms: u64) {
        self.0.fetch_add(ms, Ordering::SeqCst);
    }
}

impl Clock for ManualClock {
    fn now(&self) -> Timestamp {
        self.0.load(Ordering::SeqCst)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    ColdStart,
    WarmRun,
}

/// Models published together, with their held-out scores.
#[derive(Debug, Clone, Default)]
pub struct ModelSet {
    pub models: BTreeMap<Layer, Arc<ModelState>>,
    pub heldout: BTreeMap<Layer, EvalReport>,
}

impl ModelSet {
    pub fn versions(&self) -> BTreeMap<Layer, u64> {
        self.models.iter().map(|(l, m)| (*l, m.version)).collect()
    }

    fn covers(&self, layers: &BTreeSet<Layer>) -> bool {
        layers.iter().all(|l| self.models.contains_key(l))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Feedback {
    Default { text: String },
    Report(FeedbackReport),
}

#[derive(Debug, Clone, Serialize)]
pub struct SubmissionOutcome {
    pub doc_id: String,
    pub task_id: TaskId,
    pub phase: Phase,
    pub feedback: Feedback,
    pub model_versions: BTreeMap<Layer, u64>,
    pub processing_ms: f64,
    /// Predicted spans; empty in the cold start.
    pub spans: Vec<SpanView>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum RetrainStatus {
    NotNeeded,
    /// Trained and published before returning.
    Completed {
        model_versions: BTreeMap<Layer, u64>,
    },
    /// Running on a worker thread.
    Started,
    /// Folded into the retrain already in flight.
    Coalesced,
    Failed {
        message: String,
    },
}

#[derive(Debug, Clone, Serialize)]
pub struct FinalizeOutcome {
    pub task: AnnotationTask,
    pub gold_spans: usize,
    pub finalized_count: u64,
    pub retrain: RetrainStatus,
}

#[derive(Debug, Clone, Serialize)]
pub struct TaskView {
    pub task: AnnotationTask,
    pub document: Document,
    pub suggestions: Vec<SpanView>,
    pub manual_spans: Vec<SpanView>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HeldoutScores {
    pub macro_f1: f64,
    pub classes: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metrics {
    pub phase: Phase,
    pub documents: usize,
    pub open_tasks: usize,
    pub finalized_count: u64,
    pub pending_since_retrain: u64,
    pub accepted: usize,
    pub rejected: usize,
    pub pending_suggestions: usize,
    pub manual_spans: usize,
    pub acceptance_rate: Option<f64>,
    pub mean_annotation_seconds: Option<f64>,
    pub mean_processing_ms: Option<f64>,
    pub model_versions: BTreeMap<Layer, u64>,
    pub heldout_f1: BTreeMap<Layer, HeldoutScores>,
}

struct Catalog {
    cases: BTreeMap<String, CaseDefinition>,
    entries: Vec<FeedbackEntry>,
    db: FeedbackDb,
}

struct Inner {
    board: famulus_core::annotation::TaskBoard,
    documents: BTreeMap<String, Document>,
    /// Finalized documents in finalization order; only ever appended to.
    gold: Vec<AnnotatedDocument>,
    finalized_count: u64,
    pending_since_retrain: u64,
    phase: Phase,
    processing_ms_total: f64,
    published: Vec<PublishedModel>,
}

impl Inner {
    fn submitted(&mut self, document: Document, processing_ms: f64) -> Result<()> {
        if self.documents.contains_key(&document.doc_id) {
            return Err(Error::InvalidEvent(format!(
                "document {} submitted twice",
                document.doc_id
            )));
        }
        self.processing_ms_total += processing_ms;
        self.documents.insert(document.doc_id.clone(), document);
        Ok(())
    }

    fn document_of(&self, task_id: TaskId) -> Result<Document> {
        let task = self
            .board
            .task(task_id)
            .ok_or(AnnotationError::UnknownTask(task_id))?;
        self.documents.get(&task.doc_id).cloned().ok_or_else(|| {
            Error::InvalidEvent(format!(
                "task {task_id} refers to unknown document {}",
                task.doc_id
            ))
        })
    }

    fn finalized(&mut self, annotated: AnnotatedDocument) {
        self.gold.push(annotated);
        self.finalized_count += 1;
        self.pending_since_retrain += 1;
    }

    fn published(
        &mut self,
        models: Vec<PublishedModel>,
        training_docs: u64,
        layers: &BTreeSet<Layer>,
    ) {
        self.pending_since_retrain = self.finalized_count.saturating_sub(training_docs);
        let present: BTreeSet<Layer> = models.iter().map(|m| m.layer).collect();
        if layers.is_subset(&present) {
            self.phase = Phase::WarmRun;
        }
        self.published = models;
    }

    fn should_retrain(&self, config: &Config) -> bool {
        match self.phase {
            Phase::ColdStart => self.finalized_count >= config.cold_start_min_docs,
            Phase::WarmRun => self.pending_since_retrain >= config.retrain_every,
        }
    }

    /// Re-applies one journaled event.
    fn replay(&mut self, event: &Event, layers: &BTreeSet<Layer>) -> Result<()> {
        let now = event.timestamp;
        match &event.body {
            EventBody::DocumentSubmitted {
                document,
                processing_ms,
                ..
            } => self.submitted(document.clone(), *processing_ms)?,
            EventBody::TaskOpened { task } => {
                if !self.documents.contains_key(&task.doc_id) {
                    return Err(Error::InvalidEvent(format!(
                        "task for unknown document {}",
                        task.doc_id
                    )));
                }
                self.board.insert(task.clone())?;
            }
            EventBody::SuggestionDecided {
                task_id,
                suggestion_id,
                verdict,
            } => {
                self.board
                    .review_suggestion(*task_id, *suggestion_id, *verdict, now)?;
            }
            EventBody::ManualSpanAdded { task_id, span } => {
                self.board.add_manual_span(*task_id, span.clone())?;
            }
            EventBody::TaskFinalized { task_id } => {
                let document = self.document_of(*task_id)?;
                let annotated = self.board.finalize_task(*task_id, document, now)?;
                self.finalized(annotated);
            }
            EventBody::ModelPublished {
                models,
                training_docs,
            } => {
                if *training_docs > self.finalized_count {
                    return Err(Error::InvalidEvent(
                        "models trained on more documents than finalized".into(),
                    ));
                }
                self.published(models.clone(), *training_docs, layers);
            }
        }
        Ok(())
    }
}

#[derive(Default)]
struct RetrainControl {
    running: bool,
    requested: bool,
}

struct Shared {
    config: Config,
    layers: BTreeSet<Layer>,
    segmenter: Segmenter,
    clock: Arc<dyn Clock>,
    journal: Journal,
    catalog: RwLock<Catalog>,
    models: RwLock<Arc<ModelSet>>,
    state: Mutex<Inner>,
    retrain: Mutex<RetrainControl>,
    retrain_idle: Condvar,
    next_doc: AtomicU64,
    heldout: Vec<AnnotatedDocument>,
}

/// Handle to the running system; cheap to clone and shareable across
/// threads.
#[derive(Clone)]
pub struct System {
    shared: Arc<Shared>,
}

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|e| e.into_inner())
}

const DOC_PREFIX: &str = "doc-";

fn doc_number(doc_id: &str) -> Option<u64> {
    doc_id.strip_prefix(DOC_PREFIX)?.parse().ok()
}

/// Configured entity classes in their given order, then any further classes
/// named by case aspects, sorted.
pub fn entity_inventory<'a, I>(configured: &[String], cases: I) -> Result<LabelInventory>
where
    I: IntoIterator<Item = &'a CaseDefinition>,
{
    let mut classes: Vec<String> = Vec::new();
    for class in configured {
        if !classes.contains(class) {
            classes.push(class.clone());
        }
    }
    let extra: BTreeSet<&str> = cases
        .into_iter()
        .flat_map(|c| c.aspects.iter())
        .filter(|a| a.layer == Layer::DiagnosticEntity)
        .map(|a| a.class.as_str())
        .filter(|c| !configured.iter().any(|k| k == c))
        .collect();
    classes.extend(extra.into_iter().map(String::from));
    Ok(LabelInventory::entities(classes)?)
}

fn inventory_for(
    layer: Layer,
    board: &famulus_core::annotation::TaskBoard,
) -> Result<LabelInventory> {
    board
        .inventory(layer)
        .cloned()
        .ok_or(Error::Annotation(AnnotationError::UnknownLayer(layer)))
}

fn score_heldout(
    models: &BTreeMap<Layer, Arc<ModelState>>,
    heldout: &[AnnotatedDocument],
) -> Result<BTreeMap<Layer, EvalReport>> {
    let mut reports = BTreeMap::new();
    if heldout.is_empty() {
        return Ok(reports);
    }
    for (layer, model) in models {
        let mut predictions = BTreeMap::new();
        for doc in heldout {
            predictions.insert(
                doc.document.doc_id.clone(),
                predict_document(model, &doc.document, *layer)?,
            );
        }
        reports.insert(*layer, evaluate(heldout, &predictions, &model.inventory())?);
    }
    Ok(reports)
}

impl System {
    pub fn open(config: Config) -> Result<System> {
        Self::open_with_clock(config, Arc::new(SystemClock))
    }

    /// Loads cases and snapshots, replays the journal and, if the replayed
    /// counters already call for it, retrains.
    pub fn open_with_clock(config: Config, clock: Arc<dyn Clock>) -> Result<System> {
        config.validate()?;
        std::fs::create_dir_all(&config.data_dir)?;
        let cases_dir = config.cases_dir();
        std::fs::create_dir_all(&cases_dir)?;
        let cases = formats::load_cases(&cases_dir)?;
        let db_path = config.feedback_db();
        let entries = if db_path.exists() {
            formats::read_feedback_entries(&db_path)?
        } else {
            Vec::new()
        };
        for finding in validate_feedback_db(&entries, &cases) {
            tracing::warn!(%finding, "feedback db");
        }
        let db = FeedbackDb::from_entries(entries.clone())?;
        let segmenter = config.segmenter();
        let heldout = match &config.heldout_corpus {
            Some(path) => formats::read_corpus(path, &segmenter)?,
            None => Vec::new(),
        };

        let layers = config.layers_enabled.clone();
        let board = famulus_core::annotation::TaskBoard::new([
            LabelInventory::epistemic(),
            entity_inventory(&config.entity_classes, &cases)?,
        ]);
        let mut inner = Inner {
            board,
            documents: BTreeMap::new(),
            gold: Vec::new(),
            finalized_count: 0,
            pending_since_retrain: 0,
            phase: Phase::ColdStart,
            processing_ms_total: 0.0,
            published: Vec::new(),
        };

        let (journal, events) = Journal::open(&config.journal_path())?;
        for event in &events {
            inner
                .replay(event, &layers)
                .map_err(|e| Error::CorruptJournal {
                    seq: event.seq,
                    reason: e.to_string(),
                })?;
        }
        let mut models = BTreeMap::new();
        for published in &inner.published {
            let model = formats::load_model(&config.data_dir.join(&published.path))?;
            if model.layer != published.layer || model.version != published.version {
                return Err(Error::format(
                    &published.path,
                    "snapshot does not match the journal",
                ));
            }
            models.insert(published.layer, Arc::new(model));
        }
        let heldout_reports = score_heldout(&models, &heldout)?;
        let next_doc = inner
            .documents
            .keys()
            .filter_map(|id| doc_number(id))
            .max()
            .unwrap_or(0)
            + 1;
        tracing::info!(
            events = events.len(),
            documents = inner.documents.len(),
            finalized = inner.finalized_count,
            phase = ?inner.phase,
            "journal replayed"
        );
        let retrain_due = inner.should_retrain(&config);

        let system = System {
            shared: Arc::new(Shared {
                layers,
                segmenter,
                clock,
                journal,
                catalog: RwLock::new(Catalog {
                    cases: cases.into_iter().map(|c| (c.case_id.clone(), c)).collect(),
                    entries,
                    db,
                }),
                models: RwLock::new(Arc::new(ModelSet {
                    models,
                    heldout: heldout_reports,
                })),
                state: Mutex::new(inner),
                retrain: Mutex::new(RetrainControl::default()),
                retrain_idle: Condvar::new(),
                next_doc: AtomicU64::new(next_doc),
                heldout,
                config,
            }),
        };
        if retrain_due {
            system.trigger_retrain();
        }
        Ok(system)
    }

    pub fn config(&self) -> &Config {
        &self.shared.config
    }

    pub fn models(&self) -> Arc<ModelSet> {
        self.shared
            .models
            .read()
            .unwrap_or_else(|e| e.into_inner())
            .clone()
    }

    pub fn model_versions(&self) -> BTreeMap<Layer, u64> {
        self.models().versions()
    }

    pub fn phase(&self) -> Phase {
        lock(&self.shared.state).phase
    }

    pub fn case(&self, case_id: &str) -> Result<CaseDefinition> {
        let catalog = self
            .shared
            .catalog
            .read()
            .unwrap_or_else(|e| e.into_inner());
        catalog
            .cases
            .get(case_id)
            .cloned()
            .ok_or_else(|| Error::UnknownCase(case_id.into()))
    }

    pub fn case_ids(&self) -> Vec<String> {
        let catalog = self
            .shared
            .catalog
            .read()
            .unwrap_or_else(|e| e.into_inner());
        catalog.cases.keys().cloned().collect()
    }

    /// Registers a case with its snippets. The feedback store must end up
    /// with both snippets for every aspect of the case.
    pub fn create_case(
        &self,
        case: CaseDefinition,
        entries: Vec<FeedbackEntry>,
    ) -> Result<CaseDefinition> {
        case.validate()?;
        let mut catalog = self
            .shared
            .catalog
            .write()
            .unwrap_or_else(|e| e.into_inner());
        if catalog.cases.contains_key(&case.case_id) {
            return Err(Error::CaseExists(case.case_id));
        }
        let problems: Vec<String> = validate_feedback_db(
            &catalog
                .entries
                .iter()
                .filter(|e| e.case_id == case.case_id)
                .cloned()
                .chain(entries.iter().cloned())
                .collect::<Vec<_>>(),
            std::slice::from_ref(&case),
        )
        .into_iter()
        .filter(|f| !matches!(f, Finding::Orphan { case_id, .. } if *case_id != case.case_id))
        .map(|f| f.to_string())
        .collect();
        if !problems.is_empty() {
            return Err(Error::BadRequest(problems.join("; ")));
        }
        let mut all = catalog.entries.clone();
        all.extend(entries.iter().cloned());
        let db = FeedbackDb::from_entries(all.clone())?;
        let inventory = entity_inventory(
            &self.shared.config.entity_classes,
            catalog.cases.values().chain(std::iter::once(&case)),
        )?;

        formats::append_feedback_entries(&self.shared.config.feedback_db(), &entries)?;
        formats::save_case(&self.shared.config.cases_dir(), &case)?;
        catalog.entries = all;
        catalog.db = db;
        catalog.cases.insert(case.case_id.clone(), case.clone());
        lock(&self.shared.state).board.set_inventory(inventory);
        Ok(case)
    }

    /// Runs a student text through the loop and opens its annotation task.
    pub fn submit(&self, case_id: &str, user_id: &str, text: &str) -> Result<SubmissionOutcome> {
        let shared = &self.shared;
        if user_id.trim().is_empty() {
            return Err(Error::BadRequest("user_id must not be empty".into()));
        }
        let doc_id = format!(
            "{DOC_PREFIX}{:06}",
            shared.next_doc.fetch_add(1, Ordering::SeqCst)
        );
        let models = self.models();
        let warm = models.covers(&shared.layers);
        let (document, predictions, feedback, processing_ms) = {
            let catalog = shared.catalog.read().unwrap_or_else(|e| e.into_inner());
            let case = catalog
                .cases
                .get(case_id)
                .ok_or_else(|| Error::UnknownCase(case_id.into()))?;
            if warm {
                let active: Vec<Arc<ModelState>> = shared
                    .layers
                    .iter()
                    .map(|l| models.models[l].clone())
                    .collect();
                let analysis = analyze(
                    &shared.segmenter,
                    &active,
                    case,
                    &catalog.db,
                    &doc_id,
                    AuthorRole::Student,
                    text,
                )?;
                (
                    analysis.document,
                    analysis.predictions,
                    Feedback::Report(analysis.report),
                    analysis.processing_ms,
                )
            } else {
                let started = Instant::now();
                let document = Document::new(
                    doc_id.as_str(),
                    case_id,
                    AuthorRole::Student,
                    text,
                    &shared.segmenter,
                )?;
                let ms = started.elapsed().as_secs_f64() * 1000.0;
                let feedback = Feedback::Default {
                    text: case.default_feedback.clone(),
                };
                (document, Vec::new(), feedback, ms)
            }
        };
        let spans: BTreeSet<Span> = predictions
            .iter()
            .flat_map(|(_, _, s)| s.iter().cloned())
            .collect();
        let views = span_views(&document, &spans);
        let mut inner = lock(&shared.state);
        let now = shared.clock.now();
        shared.journal.append(
            now,
            EventBody::DocumentSubmitted {
                document: document.clone(),
                user_id: user_id.into(),
                processing_ms,
            },
        )?;
        inner.submitted(document.clone(), processing_ms)?;
        let task = AnnotationTask {
            task_id: inner.board.next_task_id(),
            doc_id: doc_id.clone(),
            state: TaskState::Open,
            sentence_lengths: document.sentence_lengths(),
            suggestions: suggestions_from(predictions.iter().map(|(_, v, s)| (*v, s))),
            manual_spans: Vec::new(),
            created_at: now,
            finalized_at: None,
        };
        shared
            .journal
            .append(now, EventBody::TaskOpened { task: task.clone() })?;
        let task_id = inner.board.insert(task)?.task_id;
        Ok(SubmissionOutcome {
            doc_id,
            task_id,
            phase: if warm {
                Phase::WarmRun
            } else {
                Phase::ColdStart
            },
            feedback,
            model_versions: if warm {
                models.versions()
            } else {
                BTreeMap::new()
            },
            processing_ms,
            spans: views,
        })
    }

    pub fn tasks(&self, state: Option<TaskState>) -> Vec<AnnotationTask> {
        let inner = lock(&self.shared.state);
        inner
            .board
            .tasks()
            .filter(|t| state.is_none_or(|s| t.state == s))
            .cloned()
            .collect()
    }

    pub fn task(&self, task_id: TaskId) -> Result<TaskView> {
        let inner = lock(&self.shared.state);
        let task = inner
            .board
            .task(task_id)
            .cloned()
            .ok_or(AnnotationError::UnknownTask(task_id))?;
        let document = inner.document_of(task_id)?;
        Ok(TaskView {
            suggestions: span_views(&document, task.suggestions.iter().map(|s| &s.span)),
            manual_spans: span_views(&document, &task.manual_spans),
            task,
            document,
        })
    }

    /// Applies `op` to the task, journals `body` and undoes the change if
    /// the journal write fails.
    fn change_task<F>(&self, task_id: TaskId, body: EventBody, op: F) -> Result<AnnotationTask>
    where
        F: FnOnce(&mut Inner, Timestamp) -> Result<()>,
    {
        let shared = &self.shared;
        let mut inner = lock(&shared.state);
        let before = inner
            .board
            .task(task_id)
            .cloned()
            .ok_or(AnnotationError::UnknownTask(task_id))?;
        let now = shared.clock.now();
        op(&mut inner, now)?;
        if let Err(e) = shared.journal.append(now, body) {
            inner.board.restore(before)?;
            return Err(e);
        }
        Ok(inner.board.task(task_id).cloned().expect("task present"))
    }

    pub fn review(
        &self,
        task_id: TaskId,
        suggestion_id: SuggestionId,
        decision: Decision,
    ) -> Result<AnnotationTask> {
        let body = EventBody::SuggestionDecided {
            task_id,
            suggestion_id,
            verdict: decision,
        };
        self.change_task(task_id, body, |inner, now| {
            inner
                .board
                .review_suggestion(task_id, suggestion_id, decision, now)?;
            Ok(())
        })
    }

    pub fn add_span(&self, task_id: TaskId, span: Span) -> Result<AnnotationTask> {
        let body = EventBody::ManualSpanAdded {
            task_id,
            span: span.clone(),
        };
        self.change_task(task_id, body, |inner, _| {
            inner.board.add_manual_span(task_id, span)?;
            Ok(())
        })
    }

    /// Closes the task, adds its document to the gold corpus and retrains
    /// when the policy says so.
    pub fn finalize(&self, task_id: TaskId) -> Result<FinalizeOutcome> {
        let shared = &self.shared;
        let (task, gold_spans, finalized_count, due) = {
            let mut inner = lock(&shared.state);
            let before = inner
                .board
                .task(task_id)
                .cloned()
                .ok_or(AnnotationError::UnknownTask(task_id))?;
            let document = inner.document_of(task_id)?;
            let now = shared.clock.now();
            let annotated = inner.board.finalize_task(task_id, document, now)?;
            if let Err(e) = shared
                .journal
                .append(now, EventBody::TaskFinalized { task_id })
            {
                inner.board.restore(before)?;
                return Err(e);
            }
            let gold_spans = annotated.gold_spans.len();
            inner.finalized(annotated);
            (
                inner.board.task(task_id).cloned().expect("task present"),
                gold_spans,
                inner.finalized_count,
                inner.should_retrain(&shared.config),
            )
        };
        let retrain = if due {
            self.trigger_retrain()
        } else {
            RetrainStatus::NotNeeded
        };
        Ok(FinalizeOutcome {
            task,
            gold_spans,
            finalized_count,
            retrain,
        })
    }

    /// Manual retrain over the current gold corpus, regardless of policy.
    pub fn retrain(&self) -> Result<RetrainStatus> {
        if lock(&self.shared.state).gold.is_empty() {
            return Err(TaggerError::EmptyCorpus.into());
        }
        Ok(self.trigger_retrain())
    }

    fn trigger_retrain(&self) -> RetrainStatus {
        {
            let mut control = lock(&self.shared.retrain);
            if control.running {
                control.requested = true;
                return RetrainStatus::Coalesced;
            }
            control.running = true;
        }
        if self.shared.config.background_retrain {
            let system = self.clone();
            std::thread::spawn(move || {
                system.retrain_loop();
            });
            RetrainStatus::Started
        } else {
            self.retrain_loop()
        }
    }

    fn retrain_loop(&self) -> RetrainStatus {
        loop {
            let status = match self.retrain_once() {
                Ok(versions) => RetrainStatus::Completed {
                    model_versions: versions,
                },
                Err(e) => {
                    tracing::error!(error = %e, "retraining failed");
                    RetrainStatus::Failed {
                        message: e.to_string(),
                    }
                }
            };
            let mut control = lock(&self.shared.retrain);
            if control.requested {
                control.requested = false;
                continue;
            }
            control.running = false;
            self.shared.retrain_idle.notify_all();
            return status;
        }
    }

    fn retrain_once(&self) -> Result<BTreeMap<Layer, u64>> {
        let shared = &self.shared;
        let (corpus, inventories) = {
            let inner = lock(&shared.state);
            let inventories = shared
                .layers
                .iter()
                .map(|l| inventory_for(*l, &inner.board))
                .collect::<Result<Vec<_>>>()?;
            (inner.gold.clone(), inventories)
        };
        if corpus.is_empty() {
            return Err(TaggerError::EmptyCorpus.into());
        }
        let current = self.models();
        let started = Instant::now();
        let mut models = BTreeMap::new();
        let mut published = Vec::new();
        for inventory in &inventories {
            let previous = current.models.get(&inventory.layer).map(|m| m.version);
            let model = train(&corpus, inventory, &shared.config.train, previous)?;
            let relative = PathBuf::from("models")
                .join(format!("{}-v{}.json", inventory.layer, model.version));
            formats::save_model(&shared.config.data_dir.join(&relative), &model)?;
            published.push(PublishedModel {
                layer: inventory.layer,
                version: model.version,
                path: relative.to_string_lossy().into_owned(),
            });
            models.insert(inventory.layer, Arc::new(model));
        }
        let heldout = score_heldout(&models, &shared.heldout)?;
        let set = Arc::new(ModelSet { models, heldout });
        let versions = set.versions();
        {
            let mut inner = lock(&shared.state);
            let training_docs = corpus.len() as u64;
            shared.journal.append(
                shared.clock.now(),
                EventBody::ModelPublished {
                    models: published.clone(),
                    training_docs,
                },
            )?;
            inner.published(published, training_docs, &shared.layers);
            *shared.models.write().unwrap_or_else(|e| e.into_inner()) = set;
        }
        tracing::info!(
            ?versions,
            documents = corpus.len(),
            seconds = started.elapsed().as_secs_f64(),
            "models published"
        );
        Ok(versions)
    }

    /// Blocks until no retrain is running or queued.
    pub fn wait_idle(&self) {
        let mut control = lock(&self.shared.retrain);
        while control.running {
            control = self
                .shared
                .retrain_idle
                .wait(control)
                .unwrap_or_else(|e| e.into_inner());
        }
    }

    pub fn gold_corpus(&self) -> Vec<AnnotatedDocument> {
        lock(&self.shared.state).gold.clone()
    }

    pub fn metrics(&self) -> Metrics {
        let models = self.models();
        let inner = lock(&self.shared.state);
        let annotation = compute_metrics(inner.board.tasks());
        let documents = inner.documents.len();
        Metrics {
            phase: inner.phase,
            documents,
            open_tasks: inner.board.tasks().filter(|t| t.is_open()).count(),
            finalized_count: inner.finalized_count,
            pending_since_retrain: inner.pending_since_retrain,
            accepted: annotation.accepted,
            rejected: annotation.rejected,
            pending_suggestions: annotation.pending,
            manual_spans: annotation.manual,
            acceptance_rate: annotation.acceptance_rate,
            mean_annotation_seconds: annotation.mean_time_per_doc,
            mean_processing_ms: (documents > 0)
                .then(|| inner.processing_ms_total / documents as f64),
            model_versions: models.versions(),
            heldout_f1: models
                .heldout
                .iter()
                .map(|(layer, report)| {
                    let scores = HeldoutScores {
                        macro_f1: report.macro_f1,
                        classes: report
                            .classes
                            .iter()
                            .map(|c| (c.class.clone(), c.f1))
                            .collect(),
                    };
                    (*layer, scores)
                })
                .collect(),
        }
    }
}
