use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use famulus::bench::{run_benchmark, Pipeline};
use famulus::config::Config;
use famulus::formats::{self, CorpusRecord};
use famulus::synth::{generate_synthetic_corpus, SynthSpec};
use famulus::System;
use famulus_core::corpus::{AnnotatedDocument, LabelInventory, Layer, Segmenter};
use famulus_core::feedback::{validate_feedback_db, FeedbackDb, Finding};
use famulus_core::tagger::{
    evaluate, predict_document, render_f1_table, train_detailed, TrainConfig,
};

#[derive(Parser)]
#[command(
    name = "famulus",
    version,
    about = "Diagnostic-reasoning feedback loop: tagger, annotation service and tools"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a tagger for one layer on a corpus file.
    Train(TrainArgs),
    /// Tag the texts of a corpus file with one or more models.
    Predict(PredictArgs),
    /// Score predicted spans against gold spans.
    Eval(EvalArgs),
    /// Time the submission path (segment, predict, feedback) per text.
    Bench(BenchArgs),
    /// Generate a synthetic annotated corpus.
    Synth(SynthArgs),
    /// Run the HTTP service.
    Serve(ServeArgs),
    /// Check a feedback snippet store against case definitions.
    ValidateDb(ValidateArgs),
}

#[derive(Args)]
struct Output {
    /// Write to this file instead of stdout.
    #[arg(long, short)]
    out: Option<PathBuf>,
}

impl Output {
    fn open(&self) -> anyhow::Result<Box<dyn Write>> {
        Ok(match &self.out {
            Some(path) => Box::new(
                File::create(path).with_context(|| format!("creating {}", path.display()))?,
            ),
            None => Box::new(io::stdout().lock()),
        })
    }
}

#[derive(Args)]
struct TrainArgs {
    /// Annotated corpus (JSON lines).
    corpus: PathBuf,
    /// Layer to train: epistemic_activity (ea) or diagnostic_entity (de).
    #[arg(long, short)]
    layer: Layer,
    /// Where to write the model snapshot.
    #[arg(long, short)]
    out: PathBuf,
    /// Entity classes in tag order; defaults to the classes found in the corpus.
    #[arg(long, value_delimiter = ',')]
    classes: Vec<String>,
    #[arg(long, default_value_t = 10)]
    epochs: u32,
    /// Seed of the per-epoch shuffle (ChaCha8).
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long)]
    no_averaging: bool,
    /// Version of the model this one replaces.
    #[arg(long)]
    previous_version: Option<u64>,
}

#[derive(Args)]
struct PredictArgs {
    /// Corpus whose texts are tagged; existing spans are ignored.
    corpus: PathBuf,
    /// Model snapshots, at most one per layer.
    #[arg(required = true)]
    models: Vec<PathBuf>,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct EvalArgs {
    gold: PathBuf,
    predicted: PathBuf,
    /// Layers to score; both by default.
    #[arg(long, value_delimiter = ',')]
    layers: Vec<Layer>,
    /// Row label in the F1 table.
    #[arg(long, default_value = "model")]
    name: String,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct BenchArgs {
    /// Corpus whose texts are timed.
    corpus: PathBuf,
    /// Case definition file (`<case_id>.case`).
    case: PathBuf,
    /// Feedback snippet store (JSON lines).
    db: PathBuf,
    #[arg(required = true)]
    models: Vec<PathBuf>,
    /// CSV of `chars,seconds` points.
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = SynthSpec::default().seed)]
    seed: u64,
    #[arg(long, default_value_t = SynthSpec::default().n_documents)]
    documents: usize,
    #[arg(long, default_value_t = SynthSpec::default().sentences_per_document)]
    sentences: usize,
    /// Probability of swapping a label for another class of its layer.
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[arg(long, default_value = "synth-")]
    prefix: String,
    /// Also write the matching case file and snippet store into this directory.
    #[arg(long)]
    case_dir: Option<PathBuf>,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct ServeArgs {
    /// TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    data_dir: Option<PathBuf>,
    #[arg(long)]
    port: Option<u16>,
}

#[derive(Args)]
struct ValidateArgs {
    /// Feedback snippet store (JSON lines).
    db: PathBuf,
    /// Directory of `*.case` files.
    cases: PathBuf,
}

fn read_corpus(path: &Path) -> anyhow::Result<Vec<AnnotatedDocument>> {
    Ok(formats::read_corpus(path, &Segmenter::default())?)
}

fn load_models(paths: &[PathBuf]) -> anyhow::Result<Vec<Arc<famulus_core::ModelState>>> {
    let mut seen = BTreeSet::new();
    let mut models = Vec::new();
    for path in paths {
        let model = formats::load_model(path)?;
        if !seen.insert(model.layer) {
            bail!("two models for layer {}", model.layer);
        }
        models.push(Arc::new(model));
    }
    Ok(models)
}

fn train_cmd(args: TrainArgs) -> anyhow::Result<()> {
    let corpus = read_corpus(&args.corpus)?;
    let inventory = match args.layer {
        Layer::EpistemicActivity => LabelInventory::epistemic(),
        Layer::DiagnosticEntity if !args.classes.is_empty() => {
            LabelInventory::entities(args.classes)?
        }
        Layer::DiagnosticEntity => {
            let classes: BTreeSet<&str> = corpus
                .iter()
                .flat_map(|d| d.spans_in(Layer::DiagnosticEntity))
                .map(|s| s.class.as_str())
                .collect();
            LabelInventory::entities(classes)?
        }
    };
    let config = TrainConfig {
        epochs: args.epochs,
        shuffle_seed: args.seed,
        averaging: !args.no_averaging,
    };
    let trained = train_detailed(&corpus, &inventory, &config, args.previous_version)?;
    formats::save_model(&args.out, &trained.model)?;
    eprintln!(
        "trained {} v{} on {} documents; mistakes per epoch {:?}",
        trained.model.layer,
        trained.model.version,
        corpus.len(),
        trained.mistakes_per_epoch
    );
    Ok(())
}

fn predict_cmd(args: PredictArgs) -> anyhow::Result<()> {
    let models = load_models(&args.models)?;
    let corpus = read_corpus(&args.corpus)?;
    let mut out = args.output.open()?;
    for doc in corpus {
        let mut spans = BTreeSet::new();
        for model in &models {
            spans.extend(predict_document(model, &doc.document, model.layer)?);
        }
        let predicted = AnnotatedDocument::new(doc.document, spans)?;
        serde_json::to_writer(&mut out, &CorpusRecord::from_annotated(&predicted))?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

fn eval_cmd(args: EvalArgs) -> anyhow::Result<()> {
    let gold = read_corpus(&args.gold)?;
    let predicted = read_corpus(&args.predicted)?;
    let predictions: BTreeMap<String, _> = predicted
        .into_iter()
        .map(|d| (d.document.doc_id, d.gold_spans))
        .collect();
    let layers = if args.layers.is_empty() {
        Layer::ALL.to_vec()
    } else {
        args.layers
    };
    let mut out = args.output.open()?;
    for layer in layers {
        let inventory = match layer {
            Layer::EpistemicActivity => LabelInventory::epistemic(),
            Layer::DiagnosticEntity => {
                let classes: BTreeSet<&str> = gold
                    .iter()
                    .flat_map(|d| d.spans_in(layer))
                    .map(|s| s.class.as_str())
                    .collect();
                LabelInventory::entities(classes)?
            }
        };
        let report = evaluate(&gold, &predictions, &inventory)?;
        let columns: Vec<&str> = report.classes.iter().map(|c| c.class.as_str()).collect();
        writeln!(out, "# {layer}")?;
        write!(
            out,
            "{}",
            render_f1_table(&[(args.name.as_str(), &report)], &columns)
        )?;
        writeln!(out)?;
        write!(out, "{}", report.render())?;
        writeln!(out)?;
    }
    out.flush()?;
    Ok(())
}

fn bench_cmd(args: BenchArgs) -> anyhow::Result<()> {
    let texts: Vec<String> = read_corpus(&args.corpus)?
        .into_iter()
        .map(|d| d.document.raw_text)
        .collect();
    let pipeline = Pipeline {
        segmenter: Segmenter::default(),
        models: load_models(&args.models)?,
        case: formats::load_case(&args.case)?,
        db: FeedbackDb::from_entries(formats::read_feedback_entries(&args.db)?)?,
    };
    let result = run_benchmark(&pipeline, &texts)?;
    result.write_csv(args.output.open()?)?;
    eprintln!("{}", result.summary());
    Ok(())
}

fn synth_cmd(args: SynthArgs) -> anyhow::Result<()> {
    let spec = SynthSpec {
        seed: args.seed,
        n_documents: args.documents,
        sentences_per_document: args.sentences,
        noise_rate: args.noise,
        doc_id_prefix: args.prefix,
        ..SynthSpec::default()
    };
    let corpus = generate_synthetic_corpus(&spec)?;
    formats::write_corpus(args.output.open()?, &corpus)?;
    if let Some(dir) = args.case_dir {
        std::fs::create_dir_all(&dir)?;
        formats::save_case(&dir, &spec.case())?;
        let db = dir.join("feedback.db");
        if db.exists() {
            bail!("{} already exists", db.display());
        }
        formats::append_feedback_entries(&db, &spec.feedback_entries())?;
    }
    Ok(())
}

fn serve_cmd(args: ServeArgs) -> anyhow::Result<()> {
    let mut config = match &args.config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    config.apply_env(std::env::vars())?;
    if let Some(dir) = args.data_dir {
        config.data_dir = dir;
    }
    if let Some(port) = args.port {
        config.port = port;
    }
    let system = System::open(config)?;
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(famulus::service::serve(system))?;
    Ok(())
}

fn validate_cmd(args: ValidateArgs) -> anyhow::Result<bool> {
    let entries = formats::read_feedback_entries(&args.db)?;
    let cases = formats::load_cases(&args.cases)?;
    let findings = validate_feedback_db(&entries, &cases);
    for finding in &findings {
        println!("{finding}");
    }
    let blocking = findings
        .iter()
        .filter(|f| !matches!(f, Finding::Orphan { .. }))
        .count();
    eprintln!(
        "{} entries, {} cases, {} findings ({} orphans)",
        entries.len(),
        cases.len(),
        findings.len(),
        findings.len() - blocking
    );
    Ok(blocking == 0)
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| "famulus=info".into()),
        )
        .with_writer(io::stderr)
        .init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(a) => train_cmd(a).map(|_| true),
        Command::Predict(a) => predict_cmd(a).map(|_| true),
        Command::Eval(a) => eval_cmd(a).map(|_| true),
        Command::Bench(a) => bench_cmd(a).map(|_| true),
        Command::Synth(a) => synth_cmd(a).map(|_| true),
        Command::Serve(a) => serve_cmd(a).map(|_| true),
        Command::ValidateDb(a) => validate_cmd(a),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
