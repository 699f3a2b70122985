use std::path::PathBuf;

use famulus_core::annotation::AnnotationError;
use famulus_core::corpus::CorpusError;
use famulus_core::feedback::FeedbackError;
use famulus_core::tagger::TaggerError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("unknown case `{0}`")]
    UnknownCase(String),
    #[error("case `{0}` already exists")]
    CaseExists(String),
    #[error("instructor token missing or wrong")]
    Unauthorized,
    #[error("bad request: {0}")]
    BadRequest(String),
    #[error("no trained model available: {0}")]
    Untrained(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Tagger(#[from] TaggerError),
    #[error(transparent)]
    Feedback(#[from] FeedbackError),
    #[error(transparent)]
    Annotation(#[from] AnnotationError),
    #[error("corrupt journal at sequence {seq}: {reason}")]
    CorruptJournal { seq: u64, reason: String },
    #[error("invalid event: {0}")]
    InvalidEvent(String),
    #[error("{path}: {reason}")]
    Format { path: PathBuf, reason: String },
    #[error("persistence failure: {0}")]
    Io(#[from] std::io::Error),
    #[error("invalid configuration: {0}")]
    Config(String),
}

impl Error {
    pub fn format(path: impl Into<PathBuf>, reason: impl ToString) -> Self {
        Error::Format {
            path: path.into(),
            reason: reason.to_string(),
        }
    }

    /// HTTP status and stable machine code.
    pub fn classify(&self) -> (u16, &'static str) {
        match self {
            Error::UnknownCase(_) => (404, "unknown_case"),
            Error::CaseExists(_) => (409, "case_exists"),
            Error::Unauthorized => (401, "unauthorized"),
            Error::BadRequest(_) => (400, "bad_request"),
            Error::Untrained(_) => (409, "untrained"),
            Error::Corpus(e) => corpus_code(e),
            Error::Tagger(TaggerError::Corpus(e)) => corpus_code(e),
            Error::Tagger(TaggerError::EmptyCorpus) => (409, "empty_corpus"),
            Error::Tagger(_) => (500, "tagger_failure"),
            Error::Feedback(FeedbackError::IncompleteDb { .. }) => (500, "incomplete_feedback_db"),
            Error::Feedback(FeedbackError::InvalidCase { .. }) => (422, "invalid_case"),
            Error::Feedback(FeedbackError::DuplicateEntry { .. }) => {
                (422, "duplicate_feedback_entry")
            }
            Error::Feedback(_) => (500, "feedback_failure"),
            Error::Annotation(e) => match e {
                AnnotationError::DuplicateTask(_) => (409, "duplicate_task"),
                AnnotationError::UnknownTask(_) => (404, "unknown_task"),
                AnnotationError::UnknownSuggestion { .. } => (404, "unknown_suggestion"),
                AnnotationError::IllegalTransition { .. } => (409, "illegal_transition"),
                AnnotationError::TaskFinalized(_) => (409, "task_finalized"),
                AnnotationError::Overlap { .. } => (422, "overlap"),
                AnnotationError::UnknownLayer(_) => (422, "unknown_layer"),
                AnnotationError::DocumentMismatch { .. } => (500, "document_mismatch"),
                AnnotationError::Corpus(e) => corpus_code(e),
                AnnotationError::Tagger(_) => (500, "tagger_failure"),
            },
            Error::CorruptJournal { .. } => (500, "corrupt_journal"),
            Error::InvalidEvent(_) => (422, "invalid_event"),
            Error::Format { .. } => (500, "format_error"),
            Error::Io(_) => (503, "persistence_failure"),
            Error::Config(_) => (500, "config_error"),
        }
    }
}

fn corpus_code(e: &CorpusError) -> (u16, &'static str) {
    match e {
        CorpusError::EmptyText => (422, "empty_text"),
        CorpusError::Overlap { .. } => (422, "overlap"),
        CorpusError::InvalidSpan { .. } => (422, "invalid_span"),
        CorpusError::UnknownClass { .. } => (422, "unknown_class"),
        CorpusError::InvalidTag(_) => (422, "invalid_tag"),
        CorpusError::InvalidInventory(_) => (422, "invalid_inventory"),
    }
}
