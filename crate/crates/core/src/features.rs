//! Per-channel amplitude and moment statistics, the 54-wide feature layout,
//! and the CSV feature cache.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsp::{self, BiquadCascade, DspError};
use crate::ingest::{self, Label, Recording, RecordingMeta, AXES, CHANNELS, SENSORS};

/// Statistics computed per channel.
pub const STATS_PER_CHANNEL: usize = 6;
/// Width of a feature vector: 3 sensors x 3 axes x 6 statistics.
pub const FEATURE_COUNT: usize = CHANNELS * STATS_PER_CHANNEL;
/// Second central moments at or below this are treated as a constant channel.
pub const DEGENERATE_M2: f64 = 1e-12;

pub const STAT_NAMES: [&str; STATS_PER_CHANNEL] =
    ["max", "min", "mean", "variance", "kurtosis", "skewness"];

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("cannot compute statistics of an empty series")]
    Empty,
    #[error("channel {channel}: {source}")]
    Filter {
        channel: usize,
        #[source]
        source: DspError,
    },
    #[error("feature vector must have {FEATURE_COUNT} finite values: {0}")]
    Shape(String),
    #[error("cache {path}: {message}")]
    Cache { path: String, message: String },
    #[error("cache {path} row {row}: {message}")]
    CacheRow {
        path: String,
        row: usize,
        message: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelFeatures {
    pub max: f64,
    pub min: f64,
    pub mean: f64,
    pub variance: f64,
    pub kurtosis: f64,
    pub skewness: f64,
}

impl ChannelFeatures {
    /// Values in layout order: max, min, mean, variance, kurtosis, skewness.
    pub fn to_array(&self) -> [f64; STATS_PER_CHANNEL] {
        [
            self.max,
            self.min,
            self.mean,
            self.variance,
            self.kurtosis,
            self.skewness,
        ]
    }
}

/// Population statistics of one series. Kurtosis is `m4 / m2^2` (no excess
/// correction) and skewness `m3 / m2^1.5`; both are 0 for a constant series.
pub fn channel_features(series: &[f64]) -> Result<ChannelFeatures, FeatureError> {
    let n = series.len();
    if n == 0 {
        return Err(FeatureError::Empty);
    }
    let mut max = f64::NEG_INFINITY;
    let mut min = f64::INFINITY;
    let mut sum = 0.0;
    for &v in series {
        max = max.max(v);
        min = min.min(v);
        sum += v;
    }
    let nf = n as f64;
    let mean = (sum / nf).clamp(min, max);
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for &v in series {
        let d = v - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    m2 /= nf;
    m3 /= nf;
    m4 /= nf;
    let (kurtosis, skewness) = if m2 <= DEGENERATE_M2 {
        (0.0, 0.0)
    } else {
        (m4 / (m2 * m2), m3 / (m2 * m2.sqrt()))
    };
    Ok(ChannelFeatures {
        max,
        min,
        mean,
        variance: m2,
        kurtosis,
        skewness,
    })
}

/// Column name for slot `i`, e.g. `s0_x_max`.
pub fn feature_name(i: usize) -> String {
    let channel = i / STATS_PER_CHANNEL;
    let axis = ["x", "y", "z"][channel % AXES];
    format!(
        "s{}_{}_{}",
        channel / AXES,
        axis,
        STAT_NAMES[i % STATS_PER_CHANNEL]
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub label: Label,
    pub meta: RecordingMeta,
}

impl FeatureVector {
    pub fn new(values: Vec<f64>, meta: RecordingMeta) -> Result<Self, FeatureError> {
        if values.len() != FEATURE_COUNT {
            return Err(FeatureError::Shape(format!("got {} values", values.len())));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(FeatureError::Shape(format!("slot {i} is {}", values[i])));
        }
        Ok(FeatureVector {
            values,
            label: meta.label,
            meta,
        })
    }
}

/// How the low-pass filter is applied before feature extraction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FilterMode {
    #[default]
    Causal,
    ZeroPhase,
}

/// Filters each of the nine channels and lays the statistics out
/// sensor-major, then axis, then statistic.
pub fn feature_vector(
    recording: &Recording,
    cascade: &BiquadCascade,
    mode: FilterMode,
) -> Result<FeatureVector, FeatureError> {
    let mut values = Vec::with_capacity(FEATURE_COUNT);
    for sensor in 0..SENSORS {
        for axis in 0..AXES {
            let channel = sensor * AXES + axis;
            let series = &recording.channels[channel];
            let filtered = match mode {
                FilterMode::Causal => dsp::filter_signal(series, cascade),
                FilterMode::ZeroPhase => dsp::filter_signal_zero_phase(series, cascade),
            }
            .map_err(|source| FeatureError::Filter { channel, source })?;
            values.extend(channel_features(&filtered)?.to_array());
        }
    }
    FeatureVector::new(values, recording.meta.clone())
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    pub rows: Vec<FeatureVector>,
}

impl FeatureMatrix {
    pub fn new(rows: Vec<FeatureVector>) -> Self {
        FeatureMatrix { rows }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn count(&self, label: Label) -> usize {
        self.rows.iter().filter(|r| r.label == label).count()
    }

    pub fn labels(&self) -> Vec<Label> {
        self.rows.iter().map(|r| r.label).collect()
    }
}

fn cache_header() -> Vec<String> {
    let mut header = vec!["meta".to_string(), "label".to_string()];
    header.extend((0..FEATURE_COUNT).map(|i| format!("f{i:02}")));
    header
}

/// Writes the cache: header `meta,label,f00..f53`, one row per recording.
/// `meta` is the recording's source path; values use shortest round-trip
/// decimal formatting.
pub fn write_cache_to<W: std::io::Write>(matrix: &FeatureMatrix, sink: W) -> Result<(), FeatureError> {
    let io = |e: csv::Error| FeatureError::Cache {
        path: "<writer>".into(),
        message: e.to_string(),
    };
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(cache_header()).map_err(io)?;
    for row in &matrix.rows {
        let mut record = Vec::with_capacity(FEATURE_COUNT + 2);
        record.push(row.meta.source_path.clone());
        record.push(row.label.as_str().to_string());
        record.extend(row.values.iter().map(|v| format!("{v:?}")));
        w.write_record(&record).map_err(io)?;
    }
    w.flush().map_err(|e| FeatureError::Cache {
        path: "<writer>".into(),
        message: e.to_string(),
    })?;
    Ok(())
}

pub fn write_cache(matrix: &FeatureMatrix, path: &Path) -> Result<(), FeatureError> {
    let file = std::fs::File::create(path).map_err(|e| FeatureError::Cache {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    write_cache_to(matrix, std::io::BufWriter::new(file))
}

pub fn read_cache_from<R: std::io::Read>(source: R, path: &str) -> Result<FeatureMatrix, FeatureError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(source);
    let mut records = rdr.records();
    let header = match records.next() {
        Some(h) => h.map_err(|e| FeatureError::Cache {
            path: path.into(),
            message: e.to_string(),
        })?,
        None => {
            return Err(FeatureError::Cache {
                path: path.into(),
                message: "missing header".into(),
            })
        }
    };
    if header.iter().ne(cache_header().iter().map(String::as_str)) {
        return Err(FeatureError::Cache {
            path: path.into(),
            message: "header does not match meta,label,f00..f53".into(),
        });
    }
    let mut rows = Vec::new();
    for (i, record) in records.enumerate() {
        // row 1 is the header
        let row = i + 2;
        let err = |message: String| FeatureError::CacheRow {
            path: path.into(),
            row,
            message,
        };
        let record = record.map_err(|e| err(e.to_string()))?;
        if record.len() != FEATURE_COUNT + 2 {
            return Err(err(format!(
                "expected {} columns, found {}",
                FEATURE_COUNT + 2,
                record.len()
            )));
        }
        let label: Label = record[1].parse().map_err(err)?;
        let mut meta = ingest::label_from_name(&record[0]).map_err(|e| err(e.to_string()))?;
        if meta.label != label {
            return Err(err(format!(
                "label {label} disagrees with file name {}",
                &record[0]
            )));
        }
        meta.label = label;
        let values = record
            .iter()
            .skip(2)
            .map(|s| s.parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| err(e.to_string()))?;
        rows.push(FeatureVector::new(values, meta).map_err(|e| err(e.to_string()))?);
    }
    Ok(FeatureMatrix { rows })
}

pub fn read_cache(path: &Path) -> Result<FeatureMatrix, FeatureError> {
    let file = std::fs::File::open(path).map_err(|e| FeatureError::Cache {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    read_cache_from(std::io::BufReader::new(file), &path.display().to_string())
}
