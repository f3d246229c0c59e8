//! Pipeline configuration and its flat `key = value` file format.
//!
//! ```text
//! # comments start with '#'
//! root = /data/SisFall
//! cache = features.csv
//! out = reports
//! seed = 0
//! folds = 10
//! stratify = true
//! scaling = true
//! zero_phase = false
//! workers = 8
//! classifiers = dt,lr,knn,svm
//! filter.enabled = true
//! filter.order = 4
//! filter.cutoff_hz = 5
//! filter.sample_rate_hz = 200
//! sensor.adxl345.range = 16
//! sensor.adxl345.bits = 13
//! dt.max_depth = 32
//! dt.min_leaf = 1
//! lr.learning_rate = 0.1
//! lr.l2 = 0.0001
//! lr.epochs = 500
//! svm.c = 1
//! svm.kernel_scale = auto
//! svm.tol = 0.001
//! svm.max_passes = 100
//! svm.cache_rows = 1024
//! ```
//!
//! Sensor keys exist for each of `adxl345`, `itg3200` and `mma8451q`.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classify::{ClassifierKind, Hyperparams};
use crate::dsp::{self, BiquadCascade, FilterSpec};
use crate::features::FilterMode;
use crate::ingest::{default_sensor_specs, SensorSpec, SENSORS};

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("{source_name}:{line}: {message}")]
    Syntax {
        source_name: String,
        line: usize,
        message: String,
    },
    #[error("invalid value for {key}: {message}")]
    Value { key: String, message: String },
    #[error("unknown config key {0:?}")]
    UnknownKey(String),
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub root: Option<PathBuf>,
    pub cache: PathBuf,
    pub out: PathBuf,
    pub seed: u64,
    pub folds: usize,
    pub stratify: bool,
    pub scaling: bool,
    pub zero_phase: bool,
    /// `None` uses the available parallelism.
    pub workers: Option<usize>,
    pub classifiers: Vec<ClassifierKind>,
    /// When false the signal is passed through unfiltered.
    pub filter_enabled: bool,
    pub filter: FilterSpec,
    pub sensors: Vec<SensorSpec>,
    pub hyperparams: Hyperparams,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            root: None,
            cache: PathBuf::from("features.csv"),
            out: PathBuf::from("reports"),
            seed: 0,
            folds: 10,
            stratify: true,
            scaling: true,
            zero_phase: false,
            workers: None,
            classifiers: ClassifierKind::ALL.to_vec(),
            filter_enabled: true,
            filter: FilterSpec::default(),
            sensors: default_sensor_specs().to_vec(),
            hyperparams: Hyperparams::default(),
        }
    }
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e: T::Err| ConfigError::Value {
        key: key.into(),
        message: format!("{value:?}: {e}"),
    })
}

pub fn parse_classifiers(value: &str) -> Result<Vec<ClassifierKind>, ConfigError> {
    let mut out = Vec::new();
    for part in value.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let kind: ClassifierKind = part.parse().map_err(|message| ConfigError::Value {
            key: "classifiers".into(),
            message,
        })?;
        if !out.contains(&kind) {
            out.push(kind);
        }
    }
    Ok(out)
}

impl PipelineConfig {
    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let value = value.trim();
        match key {
            "root" => self.root = Some(PathBuf::from(value)),
            "cache" => self.cache = PathBuf::from(value),
            "out" => self.out = PathBuf::from(value),
            "seed" => self.seed = parse_value(key, value)?,
            "folds" => self.folds = parse_value(key, value)?,
            "stratify" => self.stratify = parse_value(key, value)?,
            "scaling" => self.scaling = parse_value(key, value)?,
            "zero_phase" => self.zero_phase = parse_value(key, value)?,
            "workers" => {
                self.workers = match value {
                    "auto" => None,
                    v => Some(parse_value(key, v)?),
                }
            }
            "classifiers" => self.classifiers = parse_classifiers(value)?,
            "filter.enabled" => self.filter_enabled = parse_value(key, value)?,
            "filter.order" => self.filter.order = parse_value(key, value)?,
            "filter.cutoff_hz" => self.filter.cutoff_hz = parse_value(key, value)?,
            "filter.sample_rate_hz" => self.filter.sample_rate_hz = parse_value(key, value)?,
            "dt.max_depth" => self.hyperparams.tree.max_depth = parse_value(key, value)?,
            "dt.min_leaf" => self.hyperparams.tree.min_leaf = parse_value(key, value)?,
            "lr.learning_rate" => self.hyperparams.logreg.learning_rate = parse_value(key, value)?,
            "lr.l2" => self.hyperparams.logreg.l2 = parse_value(key, value)?,
            "lr.epochs" => self.hyperparams.logreg.epochs = parse_value(key, value)?,
            "svm.c" => self.hyperparams.svm.c = parse_value(key, value)?,
            "svm.kernel_scale" => {
                self.hyperparams.svm.kernel_scale = match value {
                    "auto" => None,
                    v => Some(parse_value(key, v)?),
                }
            }
            "svm.tol" => self.hyperparams.svm.tol = parse_value(key, value)?,
            "svm.max_passes" => self.hyperparams.svm.max_passes = parse_value(key, value)?,
            "svm.cache_rows" => self.hyperparams.svm.cache_rows = parse_value(key, value)?,
            other => {
                let Some(rest) = other.strip_prefix("sensor.") else {
                    return Err(ConfigError::UnknownKey(other.into()));
                };
                let Some((name, field)) = rest.rsplit_once('.') else {
                    return Err(ConfigError::UnknownKey(other.into()));
                };
                let sensor = self
                    .sensors
                    .iter_mut()
                    .find(|s| s.name == name)
                    .ok_or_else(|| ConfigError::UnknownKey(other.into()))?;
                match field {
                    "range" => sensor.range = parse_value(key, value)?,
                    "bits" => sensor.resolution_bits = parse_value(key, value)?,
                    _ => return Err(ConfigError::UnknownKey(other.into())),
                }
            }
        }
        Ok(())
    }

    /// Applies every setting in `text` on top of `self`.
    pub fn apply_text(&mut self, text: &str, source_name: &str) -> Result<(), ConfigError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(ConfigError::Syntax {
                    source_name: source_name.into(),
                    line: i + 1,
                    message: format!("expected key = value, got {line:?}"),
                });
            };
            self.set(key.trim(), value).map_err(|e| ConfigError::Syntax {
                source_name: source_name.into(),
                line: i + 1,
                message: e.to_string(),
            })?;
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Invalid(format!(
            "cannot read {}: {e}",
            path.display()
        )))?;
        let mut config = PipelineConfig::default();
        config.apply_text(&text, &path.display().to_string())?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.filter_enabled {
            self.filter
                .validate()
                .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        }
        if self.folds < 2 {
            return Err(ConfigError::Invalid(format!("folds must be >= 2, got {}", self.folds)));
        }
        if self.classifiers.is_empty() {
            return Err(ConfigError::Invalid("classifier list is empty".into()));
        }
        if self.workers == Some(0) {
            return Err(ConfigError::Invalid("workers must be >= 1".into()));
        }
        if self.sensors.len() != SENSORS {
            return Err(ConfigError::Invalid(format!("expected {SENSORS} sensors")));
        }
        for s in &self.sensors {
            s.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        }
        let hp = &self.hyperparams;
        if hp.tree.min_leaf == 0 {
            return Err(ConfigError::Invalid("dt.min_leaf must be >= 1".into()));
        }
        if !(hp.logreg.learning_rate > 0.0) || !(hp.logreg.l2 >= 0.0) {
            return Err(ConfigError::Invalid("lr.learning_rate must be > 0 and lr.l2 >= 0".into()));
        }
        if !(hp.svm.c > 0.0) || !(hp.svm.tol > 0.0) || hp.svm.kernel_scale.is_some_and(|s| !(s > 0.0)) {
            return Err(ConfigError::Invalid("svm.c, svm.tol and svm.kernel_scale must be > 0".into()));
        }
        Ok(())
    }

    /// The designed cascade, or a pass-through when filtering is disabled.
    pub fn cascade(&self) -> Result<BiquadCascade, ConfigError> {
        if !self.filter_enabled {
            return Ok(BiquadCascade::identity());
        }
        dsp::design_butterworth(&self.filter).map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    pub fn filter_mode(&self) -> FilterMode {
        if self.zero_phase {
            FilterMode::ZeroPhase
        } else {
            FilterMode::Causal
        }
    }

    /// Hyperparameters with the run seed applied to the SVM fallback stream.
    pub fn effective_hyperparams(&self) -> Hyperparams {
        let mut hp = self.hyperparams.clone();
        hp.svm.seed = self.seed;
        hp
    }
}
