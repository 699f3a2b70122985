//! Acceptance suite. Runs every criterion, prints one `[PASS]` or `[FAIL]`
//! line each and exits non-zero if any failed.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use axum::body::Body;
use axum::http::Request;
use http_body_util::BodyExt;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tower::ServiceExt;

use common::{annotate, open, setup, CASE};
use famulus::bench::{run_benchmark, Pipeline};
use famulus::config::Config;
use famulus::synth::{generate_synthetic_corpus, SynthSpec};
use famulus::system::{Feedback, ManualClock, Phase, System};
use famulus_core::annotation::{suggestions_from, Decision, TaskBoard};
use famulus_core::corpus::{
    bio_decode, bio_encode, AnnotatedDocument, AuthorRole, Document, LabelInventory, Layer,
    Segmenter, Sentence, Span, Token,
};
use famulus_core::feedback::{
    generate_feedback, CaseAspect, CaseDefinition, CharRange, Coverage, FeedbackDb, FeedbackEntry,
    Relevance,
};
use famulus_core::tagger::{
    evaluate, predict_document, sequence_score, train, ModelState, TrainConfig,
};

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn run(name: &str, failures: &mut usize, f: impl FnOnce() -> Outcome) {
    let started = Instant::now();
    let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|panic| {
        let message = panic
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_default();
        Err(format!("panicked: {message}"))
    });
    let secs = started.elapsed().as_secs_f64();
    match outcome {
        Ok(detail) => println!("[PASS] {name} ({detail}; {secs:.2} s)"),
        Err(reason) => {
            *failures += 1;
            println!("[FAIL] {name}: {reason}");
        }
    }
}

const VOCAB: [&str; 7] = [
    "fieber",
    "malaria",
    "Hepatitis",
    "und",
    "kein",
    "daher",
    "42",
];

fn random_sentence(rng: &mut ChaCha8Rng, len: usize) -> Sentence {
    let mut at = 0;
    let tokens = (0..len)
        .map(|_| {
            let word = VOCAB[rng.random_range(0..VOCAB.len())];
            let token = Token::new(word, at, at + word.chars().count());
            at = token.end + 1;
            token
        })
        .collect();
    Sentence { index: 0, tokens }
}

fn random_model(rng: &mut ChaCha8Rng, num_classes: usize) -> ModelState {
    let classes: Vec<String> = (0..num_classes).map(|i| format!("c{i}")).collect();
    let mut model = ModelState::zeros(&LabelInventory::entities(classes).unwrap(), 1);
    let n = model.num_tags();
    let weight = |rng: &mut ChaCha8Rng| {
        (rng.random_range(-4i32..=4) as f64) * 0.5 + rng.random_range(-1.0..1.0)
    };
    for word in VOCAB {
        let lower = word.to_lowercase();
        model
            .emission
            .insert(format!("w={lower}"), (0..n).map(|_| weight(rng)).collect());
    }
    model
        .emission
        .insert("bias".into(), (0..n).map(|_| weight(rng)).collect());
    for i in 0..n {
        model.transitions.start[i] = weight(rng);
        model.transitions.end[i] = weight(rng);
        for j in 0..n {
            model.transitions.matrix[i][j] = weight(rng);
        }
    }
    model
}

/// Score of `path` summed in plain reading order, written independently of
/// the library.
fn independent_score(model: &ModelState, emissions: &[Vec<f64>], path: &[usize]) -> f64 {
    let t = &model.transitions;
    let mut total = t.start[path[0]] + t.end[path[path.len() - 1]];
    for (i, &tag) in path.iter().enumerate() {
        total += emissions[i][tag];
        if i > 0 {
            total += t.matrix[path[i - 1]][tag];
        }
    }
    total
}

fn viterbi_vs_brute_force() -> Outcome {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut paths_checked = 0u64;
    for instance in 0..1000 {
        let classes = rng.random_range(0..=2);
        let model = random_model(&mut rng, classes);
        let len = rng.random_range(1..=8);
        let sentence = random_sentence(&mut rng, len);
        let k = model.num_tags();
        ensure!(k <= 5, "model with {k} tags");
        let emissions = model.emission_matrix(&sentence).unwrap();
        let (decoded, score) = model.decode_scored(&sentence).unwrap();
        ensure!(
            decoded.len() == len,
            "instance {instance}: path length {}",
            decoded.len()
        );
        ensure!(
            sequence_score(&emissions, &model.transitions, &decoded) == score,
            "instance {instance}: reported score is not the score of the path"
        );

        let mut best = f64::NEG_INFINITY;
        let mut best_independent = f64::NEG_INFINITY;
        let mut path = vec![0usize; len];
        loop {
            best = best.max(sequence_score(&emissions, &model.transitions, &path));
            best_independent = best_independent.max(independent_score(&model, &emissions, &path));
            paths_checked += 1;
            let mut pos = 0;
            while pos < len && path[pos] + 1 == k {
                path[pos] = 0;
                pos += 1;
            }
            if pos == len {
                break;
            }
            path[pos] += 1;
        }
        ensure!(
            score == best,
            "instance {instance}: decoded {score}, exhaustive maximum {best}"
        );
        ensure!(
            (score - best_independent).abs() <= 1e-9 * best_independent.abs().max(1.0),
            "instance {instance}: decoded {score}, independent maximum {best_independent}"
        );
    }
    let elapsed = started.elapsed();
    ensure!(elapsed < Duration::from_secs(60), "took {elapsed:?}");
    Ok(format!(
        "1000/1000 optimal, {paths_checked} paths enumerated"
    ))
}

fn bio_round_trip() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let classes = ["HG", "EG", "EE", "DC", "hepatitis_a", "liver_values"];
    let mut total_spans = 0;
    for case in 0..10_000 {
        let lengths: Vec<usize> = (0..rng.random_range(1..=4))
            .map(|_| rng.random_range(1..=15))
            .collect();
        let mut spans = BTreeSet::new();
        for (s, &len) in lengths.iter().enumerate() {
            for layer in Layer::ALL {
                let mut at = 0;
                while at < len {
                    at += rng.random_range(0..=3);
                    let width = rng.random_range(1..=4);
                    if at + width > len {
                        break;
                    }
                    let class = classes[rng.random_range(0..classes.len())];
                    spans.insert(Span::new(layer, class, s, at, at + width));
                    at += width;
                }
            }
        }
        total_spans += spans.len();
        let mut decoded = BTreeSet::new();
        for (s, &len) in lengths.iter().enumerate() {
            let sentence = Sentence {
                index: s,
                tokens: (0..len)
                    .map(|i| Token::new("w", 2 * i, 2 * i + 1))
                    .collect(),
            };
            for layer in Layer::ALL {
                let tags = bio_encode(&spans, &sentence, layer)
                    .map_err(|e| format!("case {case}: {e}"))?;
                ensure!(tags.is_well_formed(), "case {case}: ill-formed tags");
                decoded.extend(bio_decode(&tags, s));
            }
        }
        ensure!(
            decoded == spans,
            "case {case}: {spans:?} decoded to {decoded:?}"
        );
    }
    Ok(format!("10000/10000 span sets, {total_spans} spans"))
}

fn synth_corpus(seed: u64, documents: usize, noise: f64, prefix: &str) -> Vec<AnnotatedDocument> {
    generate_synthetic_corpus(&SynthSpec {
        seed,
        n_documents: documents,
        sentences_per_document: 10,
        noise_rate: noise,
        doc_id_prefix: prefix.into(),
        ..SynthSpec::default()
    })
    .unwrap()
}

fn macro_f1(model: &ModelState, corpus: &[AnnotatedDocument]) -> (f64, Vec<(String, f64)>) {
    let predictions: BTreeMap<String, BTreeSet<Span>> = corpus
        .iter()
        .map(|d| {
            (
                d.document.doc_id.clone(),
                predict_document(model, &d.document, model.layer).unwrap(),
            )
        })
        .collect();
    let report = evaluate(corpus, &predictions, &model.inventory()).unwrap();
    let classes = report
        .classes
        .iter()
        .map(|c| (c.class.clone(), c.f1))
        .collect();
    (report.macro_f1, classes)
}

fn training_convergence() -> Outcome {
    let started = Instant::now();
    let train_set = synth_corpus(1, 50, 0.0, "train-");
    let test_set = synth_corpus(2, 20, 0.0, "test-");
    let sentences = |c: &[AnnotatedDocument]| -> BTreeSet<String> {
        c.iter()
            .flat_map(|d| {
                d.document.sentences.iter().map(|s| {
                    let range = s.tokens[0].start..s.tokens[s.len() - 1].end;
                    d.document
                        .raw_text
                        .chars()
                        .skip(range.start)
                        .take(range.len())
                        .collect::<String>()
                })
            })
            .collect()
    };
    let n_train: usize = train_set.iter().map(|d| d.document.sentences.len()).sum();
    let n_test: usize = test_set.iter().map(|d| d.document.sentences.len()).sum();
    ensure!(
        n_train == 500 && n_test == 200,
        "{n_train} train and {n_test} test sentences"
    );
    let shared = sentences(&train_set)
        .intersection(&sentences(&test_set))
        .count();
    ensure!(shared == 0, "{shared} sentences occur in both samples");

    let model = train(
        &train_set,
        &LabelInventory::epistemic(),
        &TrainConfig::default(),
        None,
    )
    .unwrap();
    let (train_f1, per_class) = macro_f1(&model, &train_set);
    ensure!(
        per_class.len() == 4,
        "train set covers {} classes",
        per_class.len()
    );
    ensure!(
        train_f1 == 1.0,
        "train macro-F1 {train_f1}, per class {per_class:?}"
    );
    let (test_f1, per_class) = macro_f1(&model, &test_set);
    ensure!(
        test_f1 >= 0.95,
        "held-out macro-F1 {test_f1}, per class {per_class:?}"
    );
    let elapsed = started.elapsed();
    ensure!(elapsed < Duration::from_secs(120), "took {elapsed:?}");
    Ok(format!("train macro-F1 {train_f1}, held-out {test_f1}"))
}

fn noisy_training_is_frozen() -> Outcome {
    let train_set = synth_corpus(1, 50, 0.3, "train-");
    let noisy_test = synth_corpus(2, 20, 0.3, "test-");
    let clean_test = synth_corpus(2, 20, 0.0, "test-");
    let model = train(
        &train_set,
        &LabelInventory::epistemic(),
        &TrainConfig::default(),
        None,
    )
    .unwrap();
    let (noisy, _) = macro_f1(&model, &noisy_test);
    let (clean, _) = macro_f1(&model, &clean_test);
    ensure!(
        noisy > 0.0 && noisy < 1.0,
        "held-out macro-F1 {noisy} is not strictly inside (0, 1)"
    );
    const NOISY: f64 = 0.684569713930961;
    const CLEAN: f64 = 0.984910638794134;
    ensure!(
        noisy == NOISY,
        "noisy held-out macro-F1 {noisy:?}, golden {NOISY:?}"
    );
    ensure!(
        clean == CLEAN,
        "clean held-out macro-F1 {clean:?}, golden {CLEAN:?}"
    );
    Ok(format!(
        "held-out macro-F1 {noisy} against noisy labels, {clean} against clean ones"
    ))
}

fn one_sentence_doc(id: &str, spans: &[Span]) -> AnnotatedDocument {
    let document = Document::new(
        id,
        CASE,
        AuthorRole::Student,
        "a b c d e f.",
        &Segmenter::default(),
    )
    .unwrap();
    AnnotatedDocument::new(document, spans.iter().cloned().collect()).unwrap()
}

fn macro_f1_fixture() -> Outcome {
    let ea = Layer::EpistemicActivity;
    let gold = vec![one_sentence_doc("d1", &[Span::new(ea, "EE", 0, 0, 2)])];
    let predicted: BTreeMap<String, BTreeSet<Span>> = [(
        "d1".to_string(),
        [Span::new(ea, "EE", 0, 0, 2), Span::new(ea, "DC", 0, 3, 5)]
            .into_iter()
            .collect(),
    )]
    .into_iter()
    .collect();
    let report = evaluate(&gold, &predicted, &LabelInventory::epistemic()).unwrap();
    ensure!(report.macro_f1 == 0.5, "macro {}", report.macro_f1);
    ensure!(
        report.f1("EE") == Some(1.0) && report.f1("DC") == Some(0.0),
        "{report:?}"
    );

    let full = vec![
        one_sentence_doc(
            "d1",
            &[
                Span::new(ea, "HG", 0, 0, 1),
                Span::new(ea, "EG", 0, 1, 3),
                Span::new(ea, "EE", 0, 3, 4),
            ],
        ),
        one_sentence_doc("d2", &[Span::new(ea, "DC", 0, 2, 6)]),
    ];
    let same: BTreeMap<String, BTreeSet<Span>> = full
        .iter()
        .map(|d| (d.document.doc_id.clone(), d.gold_spans.clone()))
        .collect();
    let report = evaluate(&full, &same, &LabelInventory::epistemic()).unwrap();
    ensure!(
        report.classes.len() == 4,
        "{} classes",
        report.classes.len()
    );
    for class in &report.classes {
        ensure!(
            class.precision == 1.0 && class.recall == 1.0 && class.f1 == 1.0,
            "{} scores {:?}",
            class.class,
            class
        );
    }
    ensure!(report.macro_f1 == 1.0, "macro {}", report.macro_f1);
    Ok("macro 0.5 and 1.0".into())
}

fn random_case(rng: &mut ChaCha8Rng) -> (CaseDefinition, FeedbackDb) {
    let mut keys = BTreeSet::new();
    let wanted = rng.random_range(1..=7);
    while keys.len() < wanted {
        let layer = if rng.random_bool(0.4) {
            Layer::EpistemicActivity
        } else {
            Layer::DiagnosticEntity
        };
        let class = match layer {
            Layer::EpistemicActivity => {
                ["HG", "EG", "EE", "DC"][rng.random_range(0..4)].to_string()
            }
            Layer::DiagnosticEntity => format!("e{}", rng.random_range(0..8)),
        };
        keys.insert((layer, class));
    }
    let mut orders: Vec<i32> = (1..=keys.len() as i32).collect();
    orders.shuffle(rng);
    let aspects: Vec<CaseAspect> = keys
        .into_iter()
        .zip(orders)
        .map(|((layer, class), display_order)| CaseAspect {
            layer,
            class,
            relevance: if display_order == 1 {
                Relevance::CorrectDiagnosis
            } else {
                Relevance::Relevant
            },
            display_order,
        })
        .collect();
    let case = CaseDefinition {
        case_id: CASE.into(),
        title: "t".into(),
        case_text: "x".into(),
        aspects,
        default_feedback: "d".into(),
    };
    let entries: Vec<FeedbackEntry> = case
        .aspects
        .iter()
        .flat_map(|a| {
            Coverage::BOTH.into_iter().map(|status| FeedbackEntry {
                case_id: CASE.into(),
                layer: a.layer,
                class: a.class.clone(),
                status,
                snippet: format!("{} {status}", a.class),
            })
        })
        .collect();
    (case, FeedbackDb::from_entries(entries).unwrap())
}

fn random_document(rng: &mut ChaCha8Rng) -> Document {
    let text: Vec<String> = (0..rng.random_range(1..=4))
        .map(|_| {
            let words: Vec<&str> = (0..rng.random_range(1..=12))
                .map(|_| VOCAB[rng.random_range(0..VOCAB.len())])
                .collect();
            format!("{}.", words.join(" "))
        })
        .collect();
    Document::new(
        "d",
        CASE,
        AuthorRole::Student,
        &text.join(" "),
        &Segmenter::default(),
    )
    .unwrap()
}

fn random_spans(rng: &mut ChaCha8Rng, doc: &Document, case: &CaseDefinition) -> BTreeSet<Span> {
    let mut spans: BTreeSet<Span> = BTreeSet::new();
    for _ in 0..rng.random_range(0..=10) {
        let (layer, class) = match rng.random_range(0..=case.aspects.len()) {
            i if i < case.aspects.len() => (case.aspects[i].layer, case.aspects[i].class.clone()),
            _ => (Layer::DiagnosticEntity, "unrelated".to_string()),
        };
        let s = rng.random_range(0..doc.sentences.len());
        let len = doc.sentences[s].len();
        let start = rng.random_range(0..len);
        let end = rng.random_range(start + 1..=len);
        let span = Span::new(layer, class, s, start, end);
        if !spans.iter().any(|other| other.overlaps(&span)) {
            spans.insert(span);
        }
    }
    spans
}

fn feedback_partition() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut covered_total = 0;
    let mut missing_total = 0;
    for pair in 0..1000 {
        let (case, db) = random_case(&mut rng);
        let doc = random_document(&mut rng);
        let spans = random_spans(&mut rng, &doc, &case);
        let report =
            generate_feedback(&case, &doc, &spans, &db).map_err(|e| format!("pair {pair}: {e}"))?;

        let aspects: BTreeSet<(Layer, String)> = case
            .aspects
            .iter()
            .map(|a| (a.layer, a.class.clone()))
            .collect();
        let reported: Vec<(Layer, String)> = report
            .items
            .iter()
            .map(|i| (i.aspect.layer, i.aspect.class.clone()))
            .collect();
        ensure!(
            reported.len() == aspects.len(),
            "pair {pair}: {} items for {} aspects",
            reported.len(),
            aspects.len()
        );
        ensure!(
            reported.iter().cloned().collect::<BTreeSet<_>>() == aspects,
            "pair {pair}: aspects repeated or lost"
        );
        let covered: BTreeSet<_> = report
            .covered()
            .map(|i| (i.aspect.layer, i.aspect.class.clone()))
            .collect();
        let missing: BTreeSet<_> = report
            .missing()
            .map(|i| (i.aspect.layer, i.aspect.class.clone()))
            .collect();
        ensure!(
            covered.is_disjoint(&missing),
            "pair {pair}: covered and missing overlap"
        );
        ensure!(
            covered.union(&missing).cloned().collect::<BTreeSet<_>>() == aspects,
            "pair {pair}: not a partition"
        );

        for item in &report.items {
            let matching: Vec<&Span> = spans
                .iter()
                .filter(|s| s.layer == item.aspect.layer && s.class == item.aspect.class)
                .collect();
            let mut expected: Vec<CharRange> = matching
                .iter()
                .map(|s| {
                    let sentence = &doc.sentences[s.sentence];
                    CharRange {
                        start: sentence.tokens[s.token_start].start,
                        end: sentence.tokens[s.token_end - 1].end,
                    }
                })
                .collect();
            expected.sort_by_key(|r| (r.start, r.end));
            expected.dedup();
            let status = if matching.is_empty() {
                Coverage::Missing
            } else {
                Coverage::Covered
            };
            ensure!(
                item.status == status,
                "pair {pair}: {} is {:?}",
                item.aspect.class,
                item.status
            );
            match status {
                Coverage::Covered => ensure!(
                    !item.highlights.is_empty(),
                    "pair {pair}: covered without highlight"
                ),
                Coverage::Missing => ensure!(
                    item.highlights.is_empty(),
                    "pair {pair}: missing with highlight"
                ),
            }
            ensure!(
                item.highlights == expected,
                "pair {pair}: highlights {:?}, expected {expected:?}",
                item.highlights
            );
            ensure!(
                item.snippet == format!("{} {status}", item.aspect.class),
                "pair {pair}: snippet {}",
                item.snippet
            );
        }
        covered_total += covered.len();
        missing_total += missing.len();
    }
    Ok(format!(
        "1000/1000 reports, {covered_total} covered and {missing_total} missing items"
    ))
}

/// The config of the scripted loop, kept for the recovery check.
struct LoopRun {
    _dir: tempfile::TempDir,
    config: Config,
    metrics: String,
    versions: BTreeMap<Layer, u64>,
}

fn metrics_body(system: &System) -> String {
    let runtime = tokio::runtime::Builder::new_current_thread()
        .enable_all()
        .build()
        .unwrap();
    runtime.block_on(async {
        let app = famulus::service::router(system.clone());
        let response = app
            .oneshot(Request::get("/metrics").body(Body::empty()).unwrap())
            .await
            .unwrap();
        assert!(response.status().is_success());
        let bytes = response.into_body().collect().await.unwrap().to_bytes();
        String::from_utf8(bytes.to_vec()).unwrap()
    })
}

fn submit_and_finalize(
    system: &System,
    clock: &ManualClock,
    doc: &AnnotatedDocument,
) -> Result<Feedback, String> {
    let outcome = system
        .submit(CASE, "student", &doc.document.raw_text)
        .map_err(|e| e.to_string())?;
    clock.advance(20_000);
    annotate(system, outcome.task_id, &doc.gold_spans);
    clock.advance(15_000);
    system
        .finalize(outcome.task_id)
        .map_err(|e| e.to_string())?;
    system.wait_idle();
    Ok(outcome.feedback)
}

fn end_to_end_loop(keep: &mut Option<LoopRun>) -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let mut config = setup(dir.path());
    config.train = TrainConfig::default();
    ensure!(
        config.cold_start_min_docs == 20 && config.retrain_every == 1,
        "unexpected defaults"
    );
    let (system, clock) = open(config.clone());
    let docs = generate_synthetic_corpus(&SynthSpec {
        seed: 30,
        n_documents: 30,
        ..SynthSpec::default()
    })
    .unwrap();

    for (i, doc) in docs[..20].iter().enumerate() {
        ensure!(
            system.phase() == Phase::ColdStart,
            "warm before submission {}",
            i + 1
        );
        let feedback = submit_and_finalize(&system, &clock, doc)?;
        ensure!(
            matches!(feedback, Feedback::Default { .. }),
            "cold submission {} got {feedback:?}",
            i + 1
        );
        if i < 19 {
            ensure!(
                system.model_versions().is_empty(),
                "model trained after {} documents",
                i + 1
            );
        }
    }
    ensure!(
        system.phase() == Phase::WarmRun,
        "still {:?} after 20 finalizations",
        system.phase()
    );
    let versions = system.model_versions();
    ensure!(
        versions.values().all(|&v| v == 1) && versions.len() == 2,
        "versions {versions:?} after cold start"
    );

    for (i, doc) in docs[20..].iter().enumerate() {
        let feedback = submit_and_finalize(&system, &clock, doc)?;
        ensure!(
            matches!(feedback, Feedback::Report(_)),
            "warm submission {} got default feedback",
            i + 1
        );
        let expected = i as u64 + 2;
        ensure!(
            system.model_versions().values().all(|&v| v == expected),
            "versions {:?} after warm finalization {}",
            system.model_versions(),
            i + 1
        );
    }
    let versions = system.model_versions();
    ensure!(
        versions.values().all(|&v| v == 11),
        "final versions {versions:?}"
    );

    let text = "Vermutlich Hepatitis A nach der Reise. Labor zeigt erhöht Leberwerte. Daher Hepatitis A bei Frau Hoffmann.";
    let outcome = system
        .submit(CASE, "student", text)
        .map_err(|e| e.to_string())?;
    let Feedback::Report(report) = &outcome.feedback else {
        return Err("final submission got default feedback".into());
    };
    let covered: BTreeSet<String> = report.covered().map(|i| i.aspect.class.clone()).collect();
    let known: BTreeSet<String> = ["hepatitis_a", "liver_values", "DC"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    ensure!(covered == known, "covered {covered:?}, expected {known:?}");
    let missing: BTreeSet<String> = report.missing().map(|i| i.aspect.class.clone()).collect();
    ensure!(
        missing
            == ["bowel_disease", "tropical_disease"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
        "missing {missing:?}"
    );
    let models = system.models();
    let mut predicted = BTreeSet::new();
    let doc = &system.task(outcome.task_id).unwrap().document;
    for model in models.models.values() {
        predicted.extend(
            predict_document(model, doc, model.layer)
                .unwrap()
                .into_iter()
                .map(|s| s.class),
        );
    }
    let case = system.case(CASE).unwrap();
    let from_model: BTreeSet<String> = case
        .aspects
        .iter()
        .map(|a| a.class.clone())
        .filter(|c| predicted.contains(c))
        .collect();
    ensure!(
        covered == from_model,
        "covered {covered:?}, model predicts {from_model:?}"
    );

    *keep = Some(LoopRun {
        metrics: metrics_body(&system),
        versions,
        config,
        _dir: dir,
    });
    Ok(format!(
        "versions 1 after 20, 11 after 30; covered {covered:?}"
    ))
}

fn copy_dir(from: &Path, to: &Path) {
    std::fs::create_dir_all(to).unwrap();
    for entry in std::fs::read_dir(from).unwrap() {
        let entry = entry.unwrap();
        let target = to.join(entry.file_name());
        if entry.file_type().unwrap().is_dir() {
            copy_dir(&entry.path(), &target);
        } else {
            std::fs::copy(entry.path(), target).unwrap();
        }
    }
}

fn crash_recovery(run: Option<&LoopRun>) -> Outcome {
    let run = run.ok_or("the end-to-end loop did not complete")?;
    let copy = tempfile::tempdir().unwrap();
    copy_dir(&run.config.data_dir, copy.path());
    for config in [
        run.config.clone(),
        Config {
            data_dir: copy.path().to_path_buf(),
            ..run.config.clone()
        },
    ] {
        for attempt in 0..2 {
            let (system, _) = open(config.clone());
            system.wait_idle();
            let metrics = metrics_body(&system);
            ensure!(
                metrics == run.metrics,
                "replay {attempt} of {} differs:\n{metrics}\nvs\n{}",
                config.data_dir.display(),
                run.metrics
            );
            ensure!(
                system.model_versions() == run.versions,
                "versions {:?}",
                system.model_versions()
            );
        }
    }
    Ok(format!(
        "{} bytes of /metrics identical over 4 restarts",
        run.metrics.len()
    ))
}

fn latency() -> Outcome {
    let training = synth_corpus(11, 30, 0.0, "train-");
    let entities = LabelInventory::entities(
        SynthSpec::default().triggers[&Layer::DiagnosticEntity]
            .keys()
            .cloned()
            .collect::<Vec<_>>(),
    )
    .unwrap();
    let config = TrainConfig::default();
    let models = vec![
        std::sync::Arc::new(train(&training, &LabelInventory::epistemic(), &config, None).unwrap()),
        std::sync::Arc::new(train(&training, &entities, &config, None).unwrap()),
    ];
    let spec = SynthSpec {
        seed: 12,
        n_documents: 100,
        ..SynthSpec::default()
    };
    let texts: Vec<String> = generate_synthetic_corpus(&spec)
        .unwrap()
        .into_iter()
        .map(|d| d.document.raw_text)
        .collect();
    let pipeline = Pipeline {
        segmenter: Segmenter::default(),
        models,
        case: spec.case(),
        db: FeedbackDb::from_entries(spec.feedback_entries()).unwrap(),
    };
    let result = run_benchmark(&pipeline, &texts).map_err(|e| e.to_string())?;
    ensure!(
        (result.mean_chars - 562.0).abs() <= 0.1 * 562.0,
        "mean length {}",
        result.mean_chars
    );
    ensure!(result.max_seconds < 9.0, "max {} s", result.max_seconds);
    ensure!(result.mean_seconds < 0.1, "mean {} s", result.mean_seconds);

    let mut csv = Vec::new();
    result.write_csv(&mut csv).map_err(|e| e.to_string())?;
    let mut reader = csv::Reader::from_reader(csv.as_slice());
    let header = reader.headers().map_err(|e| e.to_string())?.clone();
    ensure!(
        header.iter().collect::<Vec<_>>() == ["chars", "seconds"],
        "header {header:?}"
    );
    let mut rows = 0;
    for (record, text) in reader.records().zip(&texts) {
        let record = record.map_err(|e| e.to_string())?;
        ensure!(record.len() == 2, "row {rows} has {} fields", record.len());
        let chars: usize = record[0].parse().map_err(|e| format!("row {rows}: {e}"))?;
        let seconds: f64 = record[1].parse().map_err(|e| format!("row {rows}: {e}"))?;
        ensure!(chars == text.chars().count(), "row {rows}: {chars} chars");
        ensure!(
            seconds.is_finite() && seconds >= 0.0,
            "row {rows}: {seconds} s"
        );
        rows += 1;
    }
    ensure!(rows == 100, "{rows} rows");
    Ok(format!(
        "mean {:.1} chars, mean {:.6} s, max {:.6} s",
        result.mean_chars, result.mean_seconds, result.max_seconds
    ))
}

fn acceptance_rate() -> Outcome {
    let words = vec!["w"; 100].join(" ");
    let doc = Document::new(
        "d",
        CASE,
        AuthorRole::Student,
        &format!("{words}."),
        &Segmenter::default(),
    )
    .unwrap();
    let spans: BTreeSet<Span> = (0..100)
        .map(|i| Span::new(Layer::EpistemicActivity, "HG", 0, i, i + 1))
        .collect();
    let mut board = TaskBoard::new([LabelInventory::epistemic()]);
    let task_id = board
        .open_task_with(&doc, suggestions_from([(1, &spans)]), 0)
        .unwrap()
        .task_id;
    let mut decisions: Vec<Decision> = std::iter::repeat_n(Decision::Accepted, 56)
        .chain(std::iter::repeat_n(Decision::Rejected, 44))
        .collect();
    decisions.shuffle(&mut ChaCha8Rng::seed_from_u64(9));
    for (i, decision) in decisions.into_iter().enumerate() {
        board
            .review_suggestion(task_id, i as u32 + 1, decision, 1)
            .map_err(|e| e.to_string())?;
    }
    let metrics = board.metrics();
    ensure!(
        metrics.accepted == 56 && metrics.rejected == 44,
        "{metrics:?}"
    );
    ensure!(
        metrics.acceptance_rate == Some(0.56),
        "rate {:?}",
        metrics.acceptance_rate
    );
    Ok("56 / (56 + 44) = 0.56".into())
}

fn main() -> ExitCode {
    let mut failures = 0;
    let mut loop_run = None;
    run(
        "viterbi equals exhaustive maximum",
        &mut failures,
        viterbi_vs_brute_force,
    );
    run("bio round trip", &mut failures, bio_round_trip);
    run("training convergence", &mut failures, training_convergence);
    run(
        "noisy training golden value",
        &mut failures,
        noisy_training_is_frozen,
    );
    run("macro-f1 fixture", &mut failures, macro_f1_fixture);
    run("feedback partition", &mut failures, feedback_partition);
    run("end-to-end loop", &mut failures, || {
        end_to_end_loop(&mut loop_run)
    });
    run("latency", &mut failures, latency);
    run("crash recovery", &mut failures, || {
        crash_recovery(loop_run.as_ref())
    });
    run("acceptance rate", &mut failures, acceptance_rate);
    if failures == 0 {
        println!("all criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("{failures} criteria failed");
        ExitCode::FAILURE
    }
}
