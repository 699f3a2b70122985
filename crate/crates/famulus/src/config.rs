//! Service configuration: a TOML file, then `FAMULUS_*` environment
//! variables, then command-line flags, each overriding the previous.
//!
//! | key                   | environment variable          | default          |
//! |-----------------------|-------------------------------|------------------|
//! | `cold_start_min_docs` | `FAMULUS_COLD_START_MIN_DOCS` | 20               |
//! | `retrain_every`       | `FAMULUS_RETRAIN_EVERY`       | 1                |
//! | `layers_enabled`      | `FAMULUS_LAYERS` (comma list) | both layers      |
//! | `background_retrain`  | `FAMULUS_BACKGROUND_RETRAIN`  | true             |
//! | `data_dir`            | `FAMULUS_DATA_DIR`            | `data`           |
//! | `cases_dir`           | `FAMULUS_CASES_DIR`           | `<data_dir>/cases` |
//! | `feedback_db`         | `FAMULUS_FEEDBACK_DB`         | `<data_dir>/feedback.db` |
//! | `heldout_corpus`      | `FAMULUS_HELDOUT_CORPUS`      | none             |
//! | `ui_dir`              | `FAMULUS_UI_DIR`              | none             |
//! | `port`                | `FAMULUS_PORT`                | 8080             |
//! | `instructor_token`    | `FAMULUS_INSTRUCTOR_TOKEN`    | none (open)      |
//! | `train.epochs`        | `FAMULUS_TRAIN_EPOCHS`        | 10               |
//! | `train.shuffle_seed`  | `FAMULUS_TRAIN_SEED`          | 42               |
//! | `train.averaging`     | `FAMULUS_TRAIN_AVERAGING`     | true             |
//!
//! `entity_classes` and `abbreviations` are file-only. Relative paths in
//! the file are resolved against the file's directory.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use famulus_core::corpus::{Layer, Segmenter};
use famulus_core::tagger::TrainConfig;

use crate::error::{Error, Result};

/// Phase and retraining policy.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SystemConfig {
    pub cold_start_min_docs: u64,
    pub retrain_every: u64,
    pub layers_enabled: BTreeSet<Layer>,
}

impl Default for SystemConfig {
    fn default() -> Self {
        SystemConfig {
            cold_start_min_docs: 20,
            retrain_every: 1,
            layers_enabled: Layer::ALL.into_iter().collect(),
        }
    }
}

impl SystemConfig {
    pub fn validate(&self) -> Result<()> {
        if self.cold_start_min_docs == 0 {
            return Err(Error::Config(
                "cold_start_min_docs must be at least 1".into(),
            ));
        }
        if self.retrain_every == 0 {
            return Err(Error::Config("retrain_every must be at least 1".into()));
        }
        if self.layers_enabled.is_empty() {
            return Err(Error::Config(
                "layers_enabled must name at least one layer".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub cold_start_min_docs: u64,
    pub retrain_every: u64,
    pub layers_enabled: BTreeSet<Layer>,
    /// Retrain on a worker thread instead of the finalizing request.
    pub background_retrain: bool,
    /// Entity classes known before any case names them.
    pub entity_classes: Vec<String>,
    /// Replaces the default abbreviation list of the sentence splitter.
    pub abbreviations: Option<Vec<String>>,
    pub data_dir: PathBuf,
    pub cases_dir: Option<PathBuf>,
    pub feedback_db: Option<PathBuf>,
    pub heldout_corpus: Option<PathBuf>,
    pub ui_dir: Option<PathBuf>,
    pub port: u16,
    pub instructor_token: Option<String>,
    pub train: TrainConfig,
}

impl Default for Config {
    fn default() -> Self {
        let system = SystemConfig::default();
        Config {
            cold_start_min_docs: system.cold_start_min_docs,
            retrain_every: system.retrain_every,
            layers_enabled: system.layers_enabled,
            background_retrain: true,
            entity_classes: Vec::new(),
            abbreviations: None,
            data_dir: PathBuf::from("data"),
            cases_dir: None,
            feedback_db: None,
            heldout_corpus: None,
            ui_dir: None,
            port: 8080,
            instructor_token: None,
            train: TrainConfig::default(),
        }
    }
}

impl Config {
    /// Defaults for a data directory, as used by tests and `serve` without
    /// a config file.
    pub fn for_data_dir(dir: impl Into<PathBuf>) -> Self {
        Config {
            data_dir: dir.into(),
            ..Config::default()
        }
    }

    pub fn from_toml(text: &str, origin: &Path) -> Result<Self> {
        let mut config: Config = toml::from_str(text).map_err(|e| Error::format(origin, e))?;
        if let Some(base) = origin.parent() {
            config.resolve_relative(base);
        }
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::format(path, e))?;
        Self::from_toml(&text, path)
    }

    fn resolve_relative(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.data_dir);
        for p in [
            &mut self.cases_dir,
            &mut self.feedback_db,
            &mut self.heldout_corpus,
            &mut self.ui_dir,
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
    }

    /// Applies `FAMULUS_*` overrides from `vars`.
    pub fn apply_env<I, K, V>(&mut self, vars: I) -> Result<()>
    where
        I: IntoIterator<Item = (K, V)>,
        K: AsRef<str>,
        V: AsRef<str>,
    {
        for (key, value) in vars {
            let (key, value) = (key.as_ref(), value.as_ref());
            let bad = |e: &dyn std::fmt::Display| Error::Config(format!("{key}={value}: {e}"));
            match key {
                "FAMULUS_COLD_START_MIN_DOCS" => {
                    self.cold_start_min_docs = value.parse().map_err(|e| bad(&e))?
                }
                "FAMULUS_RETRAIN_EVERY" => {
                    self.retrain_every = value.parse().map_err(|e| bad(&e))?
                }
                "FAMULUS_LAYERS" => {
                    self.layers_enabled = value
                        .split(',')
                        .map(str::trim)
                        .filter(|s| !s.is_empty())
                        .map(|s| s.parse::<Layer>().map_err(|e| bad(&e)))
                        .collect::<Result<_>>()?
                }
                "FAMULUS_BACKGROUND_RETRAIN" => {
                    self.background_retrain =
                        parse_bool(value).ok_or_else(|| bad(&"expected true or false"))?
                }
                "FAMULUS_DATA_DIR" => self.data_dir = value.into(),
                "FAMULUS_CASES_DIR" => self.cases_dir = Some(value.into()),
                "FAMULUS_FEEDBACK_DB" => self.feedback_db = Some(value.into()),
                "FAMULUS_HELDOUT_CORPUS" => self.heldout_corpus = Some(value.into()),
                "FAMULUS_UI_DIR" => self.ui_dir = Some(value.into()),
                "FAMULUS_PORT" => self.port = value.parse().map_err(|e| bad(&e))?,
                "FAMULUS_INSTRUCTOR_TOKEN" => {
                    self.instructor_token = Some(value.into()).filter(|t: &String| !t.is_empty())
                }
                "FAMULUS_TRAIN_EPOCHS" => self.train.epochs = value.parse().map_err(|e| bad(&e))?,
                "FAMULUS_TRAIN_SEED" => {
                    self.train.shuffle_seed = value.parse().map_err(|e| bad(&e))?
                }
                "FAMULUS_TRAIN_AVERAGING" => {
                    self.train.averaging =
                        parse_bool(value).ok_or_else(|| bad(&"expected true or false"))?
                }
                _ => {}
            }
        }
        Ok(())
    }

    pub fn system(&self) -> SystemConfig {
        SystemConfig {
            cold_start_min_docs: self.cold_start_min_docs,
            retrain_every: self.retrain_every,
            layers_enabled: self.layers_enabled.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.system().validate()?;
        if self.train.epochs == 0 {
            return Err(Error::Config("train.epochs must be at least 1".into()));
        }
        Ok(())
    }

    pub fn cases_dir(&self) -> PathBuf {
        self.cases_dir
            .clone()
            .unwrap_or_else(|| self.data_dir.join("cases"))
    }

    pub fn feedback_db(&self) -> PathBuf {
        self.feedback_db
            .clone()
            .unwrap_or_else(|| self.data_dir.join("feedback.db"))
    }

    pub fn journal_path(&self) -> PathBuf {
        self.data_dir.join("journal.jsonl")
    }

    pub fn models_dir(&self) -> PathBuf {
        self.data_dir.join("models")
    }

    pub fn segmenter(&self) -> Segmenter {
        match &self.abbreviations {
            Some(list) => Segmenter::with_abbreviations(list.iter().cloned()),
            None => Segmenter::default(),
        }
    }
}

fn parse_bool(value: &str) -> Option<bool> {
    match value.to_ascii_lowercase().as_str() {
        "1" | "true" | "yes" | "on" => Some(true),
        "0" | "false" | "no" | "off" => Some(false),
        _ => None,
    }
}
