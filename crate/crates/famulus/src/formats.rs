//! On-disk formats: corpus files (JSON lines), model snapshots (JSON),
//! case definitions (TOML, one `<case_id>.case` file per case) and the
//! feedback snippet store (JSON lines). All files are UTF-8.

use std::collections::BTreeSet;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use famulus_core::corpus::{AnnotatedDocument, AuthorRole, Document, Segmenter, Span};
use famulus_core::feedback::{CaseDefinition, FeedbackEntry};
use famulus_core::tagger::ModelState;

use crate::error::{Error, Result};

pub const MODEL_FORMAT: &str = "famulus-model/1";
pub const CASE_EXTENSION: &str = "case";

/// One line of a corpus file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusRecord {
    pub doc_id: String,
    pub case_id: String,
    #[serde(default = "default_role")]
    pub author_role: AuthorRole,
    pub raw_text: String,
    #[serde(default)]
    pub spans: Vec<Span>,
}

fn default_role() -> AuthorRole {
    AuthorRole::Student
}

impl CorpusRecord {
    pub fn from_annotated(doc: &AnnotatedDocument) -> Self {
        CorpusRecord {
            doc_id: doc.document.doc_id.clone(),
            case_id: doc.document.case_id.clone(),
            author_role: doc.document.author_role,
            raw_text: doc.document.raw_text.clone(),
            spans: doc.gold_spans.iter().cloned().collect(),
        }
    }

    /// Segments the text and checks the spans against it.
    pub fn into_annotated(self, segmenter: &Segmenter) -> Result<AnnotatedDocument> {
        let document = Document::new(
            self.doc_id,
            self.case_id,
            self.author_role,
            &self.raw_text,
            segmenter,
        )?;
        Ok(AnnotatedDocument::new(
            document,
            self.spans.into_iter().collect(),
        )?)
    }
}

pub fn read_corpus(path: &Path, segmenter: &Segmenter) -> Result<Vec<AnnotatedDocument>> {
    let file = fs::File::open(path).map_err(|e| Error::format(path, e))?;
    let mut docs = Vec::new();
    let mut ids = BTreeSet::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let at = |e: &dyn std::fmt::Display| Error::format(path, format!("line {}: {e}", i + 1));
        let record: CorpusRecord = serde_json::from_str(&line).map_err(|e| at(&e))?;
        if !ids.insert(record.doc_id.clone()) {
            return Err(at(&format!("duplicate doc_id {}", record.doc_id)));
        }
        docs.push(record.into_annotated(segmenter).map_err(|e| at(&e))?);
    }
    Ok(docs)
}

pub fn write_corpus<'a, W, I>(writer: W, docs: I) -> Result<()>
where
    W: Write,
    I: IntoIterator<Item = &'a AnnotatedDocument>,
{
    let mut out = BufWriter::new(writer);
    for doc in docs {
        serde_json::to_writer(&mut out, &CorpusRecord::from_annotated(doc))
            .map_err(std::io::Error::from)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct Snapshot<M> {
    format: String,
    model: M,
}

pub fn model_to_string(model: &ModelState) -> String {
    let snapshot = Snapshot {
        format: MODEL_FORMAT.to_string(),
        model,
    };
    serde_json::to_string_pretty(&snapshot).expect("model serializes")
}

pub fn model_from_str(text: &str, origin: &Path) -> Result<ModelState> {
    let snapshot: Snapshot<ModelState> =
        serde_json::from_str(text).map_err(|e| Error::format(origin, e))?;
    if snapshot.format != MODEL_FORMAT {
        return Err(Error::format(
            origin,
            format!("unsupported format {}", snapshot.format),
        ));
    }
    snapshot
        .model
        .validate()
        .map_err(|e| Error::format(origin, e))?;
    Ok(snapshot.model)
}

/// Writes via a temporary file and rename so readers never see a partial
/// snapshot.
pub fn save_model(path: &Path, model: &ModelState) -> Result<()> {
    write_atomic(path, model_to_string(model).as_bytes())
}

pub fn load_model(path: &Path) -> Result<ModelState> {
    let text = fs::read_to_string(path).map_err(|e| Error::format(path, e))?;
    model_from_str(&text, path)
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let tmp = path.with_extension("tmp");
    {
        let mut file = fs::File::create(&tmp)?;
        file.write_all(bytes)?;
        file.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn case_to_string(case: &CaseDefinition) -> Result<String> {
    toml::to_string(case).map_err(|e| Error::Config(e.to_string()))
}

pub fn case_from_str(text: &str, origin: &Path) -> Result<CaseDefinition> {
    let case: CaseDefinition = toml::from_str(text).map_err(|e| Error::format(origin, e))?;
    case.validate().map_err(|e| Error::format(origin, e))?;
    Ok(case)
}

pub fn case_path(dir: &Path, case_id: &str) -> PathBuf {
    dir.join(format!("{case_id}.{CASE_EXTENSION}"))
}

pub fn load_case(path: &Path) -> Result<CaseDefinition> {
    let text = fs::read_to_string(path).map_err(|e| Error::format(path, e))?;
    let case = case_from_str(&text, path)?;
    let stem = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or_default();
    if stem != case.case_id {
        return Err(Error::format(
            path,
            format!("file name does not match case_id {}", case.case_id),
        ));
    }
    Ok(case)
}

/// All `*.case` files of a directory, sorted by case id.
pub fn load_cases(dir: &Path) -> Result<Vec<CaseDefinition>> {
    let mut cases = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::format(dir, e))? {
        let path = entry?.path();
        if path.extension().and_then(|e| e.to_str()) == Some(CASE_EXTENSION) {
            cases.push(load_case(&path)?);
        }
    }
    cases.sort_by(|a, b| a.case_id.cmp(&b.case_id));
    Ok(cases)
}

pub fn save_case(dir: &Path, case: &CaseDefinition) -> Result<PathBuf> {
    let path = case_path(dir, &case.case_id);
    write_atomic(&path, case_to_string(case)?.as_bytes())?;
    Ok(path)
}

/// Entries in file order; duplicates are kept so validation can report them.
pub fn read_feedback_entries(path: &Path) -> Result<Vec<FeedbackEntry>> {
    let text = fs::read_to_string(path).map_err(|e| Error::format(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::format(path, format!("line {}: {e}", i + 1)))
        })
        .collect()
}

pub fn append_feedback_entries(path: &Path, entries: &[FeedbackEntry]) -> Result<()> {
    let mut file = fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)?;
    let mut buf = Vec::new();
    for entry in entries {
        serde_json::to_writer(&mut buf, entry).map_err(std::io::Error::from)?;
        buf.push(b'\n');
    }
    file.write_all(&buf)?;
    file.sync_data()?;
    Ok(())
}
