#![allow(dead_code)]

use std::collections::BTreeSet;
use std::path::Path;
use std::sync::Arc;

use famulus::config::Config;
use famulus::formats;
use famulus::synth::{generate_synthetic_corpus, SynthSpec};
use famulus::system::{ManualClock, System};
use famulus_core::annotation::{Decision, TaskId};
use famulus_core::corpus::{AnnotatedDocument, Span};

pub const CASE: &str = "hoffmann";

/// Writes the synthetic case and its snippets into `dir` and returns a
/// config that keeps all state below `dir`.
pub fn setup(dir: &Path) -> Config {
    let spec = SynthSpec::default();
    let cases = dir.join("cases");
    std::fs::create_dir_all(&cases).unwrap();
    formats::save_case(&cases, &spec.case()).unwrap();
    let db = dir.join("feedback.db");
    if !db.exists() {
        formats::append_feedback_entries(&db, &spec.feedback_entries()).unwrap();
    }
    let mut config = Config::for_data_dir(dir);
    config.train.epochs = 5;
    config
}

pub fn open(config: Config) -> (System, Arc<ManualClock>) {
    let clock = Arc::new(ManualClock::new(1_700_000_000_000));
    let system = System::open_with_clock(config, clock.clone()).unwrap();
    (system, clock)
}

pub fn synth_docs(seed: u64, n: usize) -> Vec<AnnotatedDocument> {
    let spec = SynthSpec {
        seed,
        n_documents: n,
        ..SynthSpec::default()
    };
    generate_synthetic_corpus(&spec).unwrap()
}

/// Reviews a task the way an instructor who knows `gold` would: accept
/// suggestions that are in it, reject the rest, then add what is missing.
pub fn annotate(system: &System, task_id: TaskId, gold: &BTreeSet<Span>) {
    let task = system.task(task_id).unwrap().task;
    let mut accepted = BTreeSet::new();
    for s in &task.suggestions {
        let decision = if gold.contains(&s.span) {
            accepted.insert(s.span.clone());
            Decision::Accepted
        } else {
            Decision::Rejected
        };
        system.review(task_id, s.suggestion_id, decision).unwrap();
    }
    for span in gold.difference(&accepted) {
        system.add_span(task_id, span.clone()).unwrap();
    }
}

/// Submits `doc`, annotates it with its own gold spans, finalizes and
/// waits for any retrain to finish.
pub fn run_one(
    system: &System,
    clock: &ManualClock,
    doc: &AnnotatedDocument,
) -> famulus::system::SubmissionOutcome {
    let outcome = system
        .submit(CASE, "student-1", &doc.document.raw_text)
        .unwrap();
    clock.advance(30_000);
    annotate(system, outcome.task_id, &doc.gold_spans);
    clock.advance(30_000);
    system.finalize(outcome.task_id).unwrap();
    system.wait_idle();
    outcome
}
