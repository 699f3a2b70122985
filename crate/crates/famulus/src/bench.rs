//! Steady-state latency of the submission path. Each text is timed from
//! raw string to finished feedback report; loading models and the snippet
//! store happens before the clock starts.

use std::io::Write;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use famulus_core::corpus::{AuthorRole, Segmenter};
use famulus_core::feedback::{CaseDefinition, FeedbackDb};
use famulus_core::tagger::ModelState;

use crate::error::{Error, Result};
use crate::pipeline::analyze;

pub struct Pipeline {
    pub segmenter: Segmenter,
    pub models: Vec<Arc<ModelState>>,
    pub case: CaseDefinition,
    pub db: FeedbackDb,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BenchPoint {
    pub chars: usize,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchResult {
    pub points: Vec<BenchPoint>,
    pub mean_chars: f64,
    pub mean_seconds: f64,
    pub max_seconds: f64,
}

impl BenchResult {
    /// Writes `chars,seconds`, one row per text.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut writer = csv::Writer::from_writer(out);
        for point in &self.points {
            writer.serialize(point).map_err(std::io::Error::other)?;
        }
        writer.flush()?;
        Ok(())
    }

    pub fn summary(&self) -> String {
        format!(
            "texts {}  mean chars {:.1}  mean s {:.6}  max s {:.6}",
            self.points.len(),
            self.mean_chars,
            self.mean_seconds,
            self.max_seconds
        )
    }
}

pub fn run_benchmark<S: AsRef<str>>(pipeline: &Pipeline, texts: &[S]) -> Result<BenchResult> {
    if texts.is_empty() {
        return Err(Error::BadRequest("no texts to benchmark".into()));
    }
    if pipeline.models.is_empty() {
        return Err(Error::Untrained(
            "the benchmark needs at least one model".into(),
        ));
    }
    let mut points = Vec::with_capacity(texts.len());
    for (i, text) in texts.iter().enumerate() {
        let analysis = analyze(
            &pipeline.segmenter,
            &pipeline.models,
            &pipeline.case,
            &pipeline.db,
            &format!("bench-{}", i + 1),
            AuthorRole::Student,
            text.as_ref(),
        )?;
        points.push(BenchPoint {
            chars: analysis.document.char_len(),
            seconds: analysis.processing_ms / 1000.0,
        });
    }
    let n = points.len() as f64;
    Ok(BenchResult {
        mean_chars: points.iter().map(|p| p.chars as f64).sum::<f64>() / n,
        mean_seconds: points.iter().map(|p| p.seconds).sum::<f64>() / n,
        max_seconds: points.iter().map(|p| p.seconds).fold(0.0, f64::max),
        points,
    })
}
