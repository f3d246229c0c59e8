//! Discovery, parsing and calibration of SisFall-style recordings.
//!
//! A data file holds one line per sample with nine comma-separated signed
//! integers (three sensors, x/y/z each), optionally terminated by `;`.
//! File stems follow `<ACT>_<SUBJ>_R<NN>`, e.g. `F01_SE06_R02.txt`.

use std::fmt;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use walkdir::WalkDir;

/// Number of sensors on the recording device.
pub const SENSORS: usize = 3;
/// Axes per sensor.
pub const AXES: usize = 3;
/// Channels per sample line.
pub const CHANNELS: usize = SENSORS * AXES;
/// Uniform sampling rate of the corpus.
pub const SAMPLE_RATE_HZ: f64 = 200.0;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot scan {path}: {message}")]
    Scan { path: PathBuf, message: String },
    #[error("file name {name:?} does not match <ACT>_<SUBJ>_R<NN>")]
    BadName { name: String },
    #[error("{path}:{line}: {message}")]
    BadLine {
        path: String,
        line: usize,
        message: String,
    },
    #[error("{path}: no data lines")]
    EmptyRecording { path: String },
    #[error("calibration: {0}")]
    Config(String),
}

/// Binary class of a recording. `Fall` is the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    #[serde(rename = "FALL")]
    Fall,
    #[serde(rename = "ADL")]
    Adl,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Fall => "FALL",
            Label::Adl => "ADL",
        }
    }

    /// +1 for falls, -1 for ADL.
    pub fn sign(self) -> f64 {
        match self {
            Label::Fall => 1.0,
            Label::Adl => -1.0,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Label {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "FALL" => Ok(Label::Fall),
            "ADL" => Ok(Label::Adl),
            other => Err(format!("unknown label {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SensorKind {
    Accelerometer,
    Gyroscope,
}

/// Full-scale range and ADC resolution of one three-axis sensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorSpec {
    pub name: String,
    pub kind: SensorKind,
    /// Full-scale magnitude, in g or deg/s.
    pub range: f64,
    pub resolution_bits: u32,
}

impl SensorSpec {
    pub fn new(
        name: impl Into<String>,
        kind: SensorKind,
        range: f64,
        resolution_bits: u32,
    ) -> Result<Self, IngestError> {
        let spec = SensorSpec {
            name: name.into(),
            kind,
            range,
            resolution_bits,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), IngestError> {
        if !(self.range.is_finite() && self.range > 0.0) {
            return Err(IngestError::Config(format!(
                "sensor {}: range must be positive, got {}",
                self.name, self.range
            )));
        }
        if !(8..=32).contains(&self.resolution_bits) {
            return Err(IngestError::Config(format!(
                "sensor {}: resolution_bits must be in [8, 32], got {}",
                self.name, self.resolution_bits
            )));
        }
        Ok(())
    }

    /// Physical units per LSB: `2 * range / 2^bits`.
    pub fn scale(&self) -> f64 {
        2.0 * self.range / 2f64.powi(self.resolution_bits as i32)
    }
}

/// The three sensors of the SisFall device, in file column order:
/// ADXL345 (±16 g, 13 bit), ITG3200 (±2000 deg/s, 16 bit), MMA8451Q (±8 g, 14 bit).
pub fn default_sensor_specs() -> [SensorSpec; SENSORS] {
    [
        SensorSpec {
            name: "adxl345".into(),
            kind: SensorKind::Accelerometer,
            range: 16.0,
            resolution_bits: 13,
        },
        SensorSpec {
            name: "itg3200".into(),
            kind: SensorKind::Gyroscope,
            range: 2000.0,
            resolution_bits: 16,
        },
        SensorSpec {
            name: "mma8451q".into(),
            kind: SensorKind::Accelerometer,
            range: 8.0,
            resolution_bits: 14,
        },
    ]
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordingMeta {
    pub activity_code: String,
    pub subject_code: String,
    pub trial: u32,
    pub label: Label,
    pub source_path: String,
}

impl RecordingMeta {
    /// Canonical file name for this recording, `<ACT>_<SUBJ>_R<NN>.txt`.
    pub fn file_name(&self) -> String {
        format!(
            "{}_{}_R{:02}.txt",
            self.activity_code, self.subject_code, self.trial
        )
    }
}

/// Parses a `<ACT>_<SUBJ>_R<NN>` file name (any extension) into metadata.
/// The label is `Fall` iff the activity code starts with `F`.
pub fn label_from_name(filename: &str) -> Result<RecordingMeta, IngestError> {
    let bad = || IngestError::BadName {
        name: filename.to_string(),
    };
    let base = Path::new(filename)
        .file_name()
        .and_then(|s| s.to_str())
        .ok_or_else(bad)?;
    let stem = match base.rfind('.') {
        Some(dot) if dot > 0 => &base[..dot],
        _ => base,
    };
    let mut parts = stem.split('_');
    let (Some(act), Some(subj), Some(rep), None) =
        (parts.next(), parts.next(), parts.next(), parts.next())
    else {
        return Err(bad());
    };
    let is_code = |s: &str| {
        s.len() >= 2
            && s.chars().next().is_some_and(|c| c.is_ascii_alphabetic())
            && s.chars().all(|c| c.is_ascii_alphanumeric())
    };
    if !is_code(act) || !is_code(subj) {
        return Err(bad());
    }
    let digits = rep.strip_prefix('R').ok_or_else(bad)?;
    if digits.is_empty() || !digits.chars().all(|c| c.is_ascii_digit()) {
        return Err(bad());
    }
    let trial: u32 = digits.parse().map_err(|_| bad())?;
    if trial < 1 {
        return Err(bad());
    }
    let label = if act.starts_with('F') {
        Label::Fall
    } else {
        Label::Adl
    };
    Ok(RecordingMeta {
        activity_code: act.to_string(),
        subject_code: subj.to_string(),
        trial,
        label,
        source_path: filename.to_string(),
    })
}

/// Outcome of a corpus scan.
#[derive(Debug, Clone, Default)]
pub struct CorpusScan {
    pub entries: Vec<RecordingMeta>,
    /// `.txt` files whose names did not parse.
    pub skipped: Vec<PathBuf>,
}

impl CorpusScan {
    pub fn count(&self, label: Label) -> usize {
        self.entries.iter().filter(|m| m.label == label).count()
    }
}

/// Recursively lists `.txt` data files under `root`, sorted by path.
pub fn scan_corpus(root: &Path) -> Result<CorpusScan, IngestError> {
    let meta = std::fs::metadata(root).map_err(|source| IngestError::Io {
        path: root.to_path_buf(),
        source,
    })?;
    if !meta.is_dir() {
        return Err(IngestError::Scan {
            path: root.to_path_buf(),
            message: "not a directory".into(),
        });
    }
    let mut scan = CorpusScan::default();
    for entry in WalkDir::new(root).sort_by_file_name() {
        let entry = entry.map_err(|e| IngestError::Scan {
            path: e.path().unwrap_or(root).to_path_buf(),
            message: e.to_string(),
        })?;
        if !entry.file_type().is_file() {
            continue;
        }
        let path = entry.path();
        if path.extension().and_then(|e| e.to_str()) != Some("txt") {
            continue;
        }
        match label_from_name(&path.to_string_lossy()) {
            Ok(m) => scan.entries.push(m),
            Err(_) => {
                log::warn!("skipping {}: unrecognised file name", path.display());
                scan.skipped.push(path.to_path_buf());
            }
        }
    }
    scan.entries
        .sort_by(|a, b| a.source_path.cmp(&b.source_path));
    log::info!(
        "scanned {}: {} FALL, {} ADL, {} skipped",
        root.display(),
        scan.count(Label::Fall),
        scan.count(Label::Adl),
        scan.skipped.len()
    );
    Ok(scan)
}

/// Raw integer samples as stored on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct RawRecording {
    pub meta: RecordingMeta,
    pub channels: [Vec<i32>; CHANNELS],
}

impl RawRecording {
    pub fn len(&self) -> usize {
        self.channels[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn sample_rate_hz(&self) -> f64 {
        SAMPLE_RATE_HZ
    }
}

/// Calibrated samples in physical units (g for accelerometers, deg/s for
/// the gyroscope).
#[derive(Debug, Clone, PartialEq)]
pub struct Recording {
    pub meta: RecordingMeta,
    pub channels: [Vec<f64>; CHANNELS],
}

impl Recording {
    pub fn len(&self) -> usize {
        self.channels[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn sample_rate_hz(&self) -> f64 {
        SAMPLE_RATE_HZ
    }

    /// Euclidean norm of one sensor's three axes at every sample.
    pub fn magnitude(&self, sensor: usize) -> Vec<f64> {
        let base = sensor * AXES;
        (0..self.len())
            .map(|i| {
                let x = self.channels[base][i];
                let y = self.channels[base + 1][i];
                let z = self.channels[base + 2][i];
                (x * x + y * y + z * z).sqrt()
            })
            .collect()
    }
}

/// Parses the nine-integer-per-line text format.
pub fn parse_recording(content: &[u8], meta: RecordingMeta) -> Result<RawRecording, IngestError> {
    let text = String::from_utf8_lossy(content);
    let mut channels: [Vec<i32>; CHANNELS] = Default::default();
    for (idx, line) in text.split('\n').enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let body = line.strip_suffix(';').unwrap_or(line).trim_end();
        let bad = |message: String| IngestError::BadLine {
            path: meta.source_path.clone(),
            line: idx + 1,
            message,
        };
        let mut values = [0i32; CHANNELS];
        let mut count = 0usize;
        for field in body.split(',') {
            if count == CHANNELS {
                count += 1;
                break;
            }
            let field = field.trim();
            values[count] = field
                .parse()
                .map_err(|_| bad(format!("field {} is not an integer: {field:?}", count + 1)))?;
            count += 1;
        }
        if count != CHANNELS {
            let found = body.split(',').count();
            return Err(bad(format!("expected {CHANNELS} fields, found {found}")));
        }
        for (ch, v) in channels.iter_mut().zip(values) {
            ch.push(v);
        }
    }
    if channels[0].is_empty() {
        return Err(IngestError::EmptyRecording {
            path: meta.source_path,
        });
    }
    Ok(RawRecording { meta, channels })
}

/// Reads and parses one file named by `meta.source_path`.
pub fn read_recording(meta: RecordingMeta) -> Result<RawRecording, IngestError> {
    let bytes = std::fs::read(&meta.source_path).map_err(|source| IngestError::Io {
        path: PathBuf::from(&meta.source_path),
        source,
    })?;
    parse_recording(&bytes, meta)
}

/// Writes raw samples in the on-disk text format, one `a,b,...,i;` line per sample.
pub fn serialize_recording(raw: &RawRecording) -> String {
    let mut out = String::with_capacity(raw.len() * 48);
    for i in 0..raw.len() {
        for (c, ch) in raw.channels.iter().enumerate() {
            if c > 0 {
                out.push(',');
            }
            let _ = write!(out, "{}", ch[i]);
        }
        out.push_str(";\n");
    }
    out
}

/// Converts raw counts to physical units with one spec per sensor.
pub fn calibrate(raw: &RawRecording, specs: &[SensorSpec]) -> Result<Recording, IngestError> {
    if specs.len() != SENSORS {
        return Err(IngestError::Config(format!(
            "expected {SENSORS} sensor specs for {CHANNELS} channels, got {}",
            specs.len()
        )));
    }
    for s in specs {
        s.validate()?;
    }
    let channels = std::array::from_fn(|c| {
        let scale = specs[c / AXES].scale();
        raw.channels[c].iter().map(|&v| f64::from(v) * scale).collect()
    });
    Ok(Recording {
        meta: raw.meta.clone(),
        channels,
    })
}

/// Inverse of [`calibrate`]: rounds to the nearest count and clamps to the
/// sensor's ADC range.
pub fn quantize(rec: &Recording, specs: &[SensorSpec]) -> Result<RawRecording, IngestError> {
    if specs.len() != SENSORS {
        return Err(IngestError::Config(format!(
            "expected {SENSORS} sensor specs, got {}",
            specs.len()
        )));
    }
    let channels = std::array::from_fn(|c| {
        let spec = &specs[c / AXES];
        let half = 2f64.powi(spec.resolution_bits as i32 - 1);
        let (lo, hi) = (-half, half - 1.0);
        let scale = spec.scale();
        rec.channels[c]
            .iter()
            .map(|&v| (v / scale).round().clamp(lo, hi).clamp(i32::MIN as f64, i32::MAX as f64) as i32)
            .collect()
    });
    Ok(RawRecording {
        meta: rec.meta.clone(),
        channels,
    })
}

/// Deterministic synthetic recording for dataset-free testing.
///
/// Accelerometers sit on a 1 g gravity baseline along +y with slow sinusoidal
/// sway and small uniform noise. Falls add a half-sine impact of 3.5 to 5 g
/// along +x, after which gravity lies along +x (the wearer is lying down).
pub fn generate_synthetic(label: Label, duration_s: f64, seed: u64) -> Recording {
    assert!(duration_s > 0.0, "duration must be positive");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = ((duration_s * SAMPLE_RATE_HZ).round() as usize).max(1);
    let dt = 1.0 / SAMPLE_RATE_HZ;

    // Per-axis sway: (amplitude, frequency, phase). Sum of accel amplitudes
    // plus noise stays under 0.5 g so ADL magnitudes remain near 1 g.
    let mut sway = |amp: f64| -> [(f64, f64, f64); AXES] {
        std::array::from_fn(|_| {
            (
                rng.random_range(0.3..1.0) * amp,
                rng.random_range(0.2..2.0),
                rng.random_range(0.0..std::f64::consts::TAU),
            )
        })
    };
    let accel_sway = sway(0.1);
    let gyro_sway = sway(20.0);
    let impact_at = rng.random_range(0.3..0.5) * duration_s;
    let impact_len = 0.25;
    let impact_peak = rng.random_range(3.5..5.0);
    let spin_peak = rng.random_range(150.0..300.0);

    let mut channels: [Vec<f64>; CHANNELS] = std::array::from_fn(|_| Vec::with_capacity(n));
    for i in 0..n {
        let t = i as f64 * dt;
        let wave = |(a, f, p): (f64, f64, f64)| a * (std::f64::consts::TAU * f * t + p).sin();
        let fallen = label == Label::Fall && t >= impact_at + impact_len;
        let gravity = if fallen { [1.0, 0.0, 0.0] } else { [0.0, 1.0, 0.0] };
        let pulse = if label == Label::Fall && t >= impact_at && t < impact_at + impact_len {
            (std::f64::consts::PI * (t - impact_at) / impact_len).sin()
        } else {
            0.0
        };
        for sensor in [0usize, 2] {
            for axis in 0..AXES {
                let mut v = gravity[axis] + wave(accel_sway[axis]) + rng.random_range(-0.02..0.02);
                if axis == 0 {
                    v += impact_peak * pulse;
                }
                channels[sensor * AXES + axis].push(v);
            }
        }
        for axis in 0..AXES {
            let mut v = wave(gyro_sway[axis]) + rng.random_range(-2.0..2.0);
            if axis == 2 {
                v += spin_peak * pulse;
            }
            channels[AXES + axis].push(v);
        }
    }

    let (activity, subject) = match label {
        Label::Fall => ("F01", "SY01"),
        Label::Adl => ("D01", "SY01"),
    };
    let trial = u32::try_from(seed % 99 + 1).unwrap_or(1);
    let mut meta = RecordingMeta {
        activity_code: activity.into(),
        subject_code: subject.into(),
        trial,
        label,
        source_path: String::new(),
    };
    meta.source_path = meta.file_name();
    Recording { meta, channels }
}
