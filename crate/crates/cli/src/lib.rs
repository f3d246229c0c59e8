//! Orchestration behind the `fallsense` binary: corpus extraction, cross-
//! validated evaluation, filter diagnostics and synthetic corpora.
//!
//! Exit codes: 0 success, 2 I/O or configuration, 3 parse, 4 training or
//! evaluation.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use fallsense_core::config::{ConfigError, PipelineConfig};
use fallsense_core::eval::{self, CvResult, RunConfig};
use fallsense_core::features::{self, FeatureError, FeatureMatrix, FeatureVector};
use fallsense_core::ingest::{self, IngestError, Label, RecordingMeta};
use fallsense_core::{dsp, ClassifierKind, ConfusionMatrix, EvalError, Report};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Parse(String),
    #[error("{0}")]
    Training(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io(_) | CliError::Config(_) => 2,
            CliError::Parse(_) => 3,
            CliError::Training(_) => 4,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<IngestError> for CliError {
    fn from(e: IngestError) -> Self {
        match e {
            IngestError::Io { .. } | IngestError::Scan { .. } => CliError::Io(e.to_string()),
            IngestError::Config(_) => CliError::Config(e.to_string()),
            IngestError::BadName { .. } | IngestError::BadLine { .. } | IngestError::EmptyRecording { .. } => {
                CliError::Parse(e.to_string())
            }
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        CliError::Training(e.to_string())
    }
}

fn io_err(what: &str, path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{what} {}: {e}", path.display()))
}

/// Runs `f` on a pool of `workers` threads, or the available parallelism,
/// never more than `jobs`.
fn with_pool<T: Send>(workers: Option<usize>, jobs: usize, f: impl FnOnce() -> T + Send) -> Result<T, CliError> {
    let available = std::thread::available_parallelism().map_or(1, |n| n.get());
    let threads = workers.unwrap_or(available).min(jobs.max(1)).max(1);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Io(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(f))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExtractSummary {
    pub files: usize,
    pub skipped: usize,
    pub falls: usize,
    pub adls: usize,
    pub cache: PathBuf,
    pub seconds: f64,
}

impl std::fmt::Display for ExtractSummary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "parsed {} files ({} skipped) in {:.1}s", self.files, self.skipped, self.seconds)?;
        writeln!(f, "{} FALL / {} ADL", self.falls, self.adls)?;
        write!(f, "feature cache: {}", self.cache.display())
    }
}

/// Feature vectors for every recording under the configured root, in scan order.
pub fn extract_features(config: &PipelineConfig) -> Result<(FeatureMatrix, usize), CliError> {
    config.validate()?;
    let root = config
        .root
        .as_deref()
        .ok_or_else(|| CliError::Config("no dataset root given (--root or root = ...)".into()))?;
    let scan = ingest::scan_corpus(root)?;
    if scan.entries.is_empty() {
        return Err(CliError::Io(format!("no recordings found under {}", root.display())));
    }
    let cascade = config.cascade()?;
    let mode = config.filter_mode();
    let sensors = &config.sensors;
    let one = |meta: &RecordingMeta| -> Result<FeatureVector, CliError> {
        let raw = ingest::read_recording(meta.clone())?;
        let rec = ingest::calibrate(&raw, sensors)?;
        features::feature_vector(&rec, &cascade, mode)
            .map_err(|e| CliError::Parse(format!("{}: {e}", meta.source_path)))
    };
    let results: Vec<Result<FeatureVector, CliError>> =
        with_pool(config.workers, scan.entries.len(), || scan.entries.par_iter().map(one).collect())?;
    let rows = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    Ok((FeatureMatrix::new(rows), scan.skipped.len()))
}

/// Writes the cache through a temporary file in the target directory.
pub fn write_cache_atomic(matrix: &FeatureMatrix, path: &Path) -> Result<(), CliError> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    std::fs::create_dir_all(&dir).map_err(|e| io_err("cannot create", &dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(&dir).map_err(|e| io_err("cannot write in", &dir, e))?;
    features::write_cache_to(matrix, std::io::BufWriter::new(tmp.as_file_mut()))
        .map_err(|e| io_err("cannot write", path, e))?;
    tmp.as_file_mut().flush().map_err(|e| io_err("cannot write", path, e))?;
    tmp.persist(path).map_err(|e| io_err("cannot write", path, e.error))?;
    Ok(())
}

pub fn run_extract(config: &PipelineConfig) -> Result<ExtractSummary, CliError> {
    let start = Instant::now();
    let (matrix, skipped) = extract_features(config)?;
    write_cache_atomic(&matrix, &config.cache)?;
    Ok(ExtractSummary {
        files: matrix.len(),
        skipped,
        falls: matrix.count(Label::Fall),
        adls: matrix.count(Label::Adl),
        cache: config.cache.clone(),
        seconds: start.elapsed().as_secs_f64(),
    })
}

/// Wall-clock figures kept apart from the report so reports compare byte for byte.
#[derive(Debug, Clone, Serialize)]
pub struct Timing {
    pub total_seconds: f64,
    /// Summed fold time per classifier.
    pub classifier_seconds: Vec<(ClassifierKind, f64)>,
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub report: Report,
    pub timing: Timing,
}

pub fn run_config_echo(config: &PipelineConfig) -> RunConfig {
    RunConfig {
        seed: config.seed,
        folds: config.folds,
        stratified: config.stratify,
        scaling: config.scaling,
        zero_phase: config.zero_phase,
        hyperparams: config.effective_hyperparams(),
    }
}

/// Cross-validates every configured classifier on `matrix`, folds in parallel.
pub fn evaluate_matrix(matrix: &FeatureMatrix, config: &PipelineConfig) -> Result<Evaluation, CliError> {
    config.validate()?;
    let start = Instant::now();
    let folds = eval::make_folds(&matrix.labels(), config.folds, config.seed, config.stratify)?;
    let params = config.effective_hyperparams();
    let jobs: Vec<(ClassifierKind, usize)> = config
        .classifiers
        .iter()
        .flat_map(|&kind| (0..folds.k).map(move |f| (kind, f)))
        .collect();
    let outcomes: Vec<Result<(ConfusionMatrix, f64), EvalError>> = with_pool(config.workers, jobs.len(), || {
        jobs.par_iter()
            .map(|&(kind, fold)| {
                let t = Instant::now();
                eval::evaluate_fold(matrix, kind, &params, &folds, fold, config.scaling)
                    .map(|cm| (cm, t.elapsed().as_secs_f64()))
            })
            .collect()
    })?;
    let mut results = Vec::with_capacity(config.classifiers.len());
    let mut classifier_seconds = Vec::new();
    let mut outcomes = outcomes.into_iter();
    for &kind in &config.classifiers {
        let mut per_fold = Vec::with_capacity(folds.k);
        let mut seconds = 0.0;
        for _ in 0..folds.k {
            let (cm, s) = outcomes.next().expect("one outcome per job")?;
            per_fold.push(cm);
            seconds += s;
        }
        classifier_seconds.push((kind, seconds));
        results.push(CvResult::from_folds(kind, &folds, per_fold));
    }
    let report = eval::build_report(&results, run_config_echo(config))?;
    Ok(Evaluation {
        report,
        timing: Timing {
            total_seconds: start.elapsed().as_secs_f64(),
            classifier_seconds,
        },
    })
}

/// Paths written by [`run_evaluate`].
#[derive(Debug, Clone)]
pub struct ReportFiles {
    pub json: PathBuf,
    pub csv: PathBuf,
    pub timing: PathBuf,
}

pub fn write_reports(evaluation: &Evaluation, out: &Path) -> Result<ReportFiles, CliError> {
    std::fs::create_dir_all(out).map_err(|e| io_err("cannot create", out, e))?;
    let files = ReportFiles {
        json: out.join("report.json"),
        csv: out.join("report.csv"),
        timing: out.join("timing.json"),
    };
    let write = |path: &Path, text: String| std::fs::write(path, text).map_err(|e| io_err("cannot write", path, e));
    write(&files.json, evaluation.report.to_json())?;
    write(&files.csv, evaluation.report.to_csv())?;
    let timing = serde_json::to_string_pretty(&evaluation.timing).expect("timing serialises") + "\n";
    write(&files.timing, timing)?;
    Ok(files)
}

pub fn load_cache(path: &Path) -> Result<FeatureMatrix, CliError> {
    if !path.is_file() {
        return Err(CliError::Io(format!("feature cache {} not found; run `extract` first", path.display())));
    }
    features::read_cache(path).map_err(|e| match e {
        FeatureError::Cache { .. } if path.metadata().is_err() => CliError::Io(e.to_string()),
        other => CliError::Parse(other.to_string()),
    })
}

pub fn run_evaluate(config: &PipelineConfig) -> Result<(Evaluation, ReportFiles), CliError> {
    config.validate()?;
    let matrix = load_cache(&config.cache)?;
    let evaluation = evaluate_matrix(&matrix, config)?;
    let files = write_reports(&evaluation, &config.out)?;
    Ok((evaluation, files))
}

/// Frequencies probed by `filter-check`: `points` log-spaced values in
/// `[0.1 Hz, Nyquist)`, plus DC, the cutoff and twice the cutoff.
pub fn filter_check_frequencies(config: &PipelineConfig, points: usize) -> Vec<f64> {
    let nyquist = config.filter.sample_rate_hz / 2.0;
    let lo: f64 = 0.1;
    let fixed: Vec<f64> = [0.0, config.filter.cutoff_hz, 2.0 * config.filter.cutoff_hz]
        .into_iter()
        .filter(|&f| f < nyquist)
        .collect();
    let mut freqs: Vec<f64> = (0..points)
        .map(|i| lo * (nyquist / lo).powf(i as f64 / points as f64))
        .filter(|f| fixed.iter().all(|x| (f - x).abs() > 1e-9 * f))
        .collect();
    freqs.extend(fixed);
    freqs.sort_by(f64::total_cmp);
    freqs
}

/// CSV of `frequency_hz,magnitude,analytic_magnitude`.
pub fn run_filter_check(config: &PipelineConfig, points: usize) -> Result<String, CliError> {
    config.validate()?;
    let cascade = config.cascade()?;
    let fs = config.filter.sample_rate_hz;
    let mut out = String::from("frequency_hz,magnitude,analytic_magnitude\n");
    for f in filter_check_frequencies(config, points) {
        let magnitude = dsp::frequency_response(&cascade, f, fs).map_err(|e| CliError::Config(e.to_string()))?;
        let analytic = if config.filter_enabled {
            config.filter.analytic_magnitude(f)
        } else {
            1.0
        };
        let _ = writeln!(out, "{f:?},{magnitude:?},{analytic:?}");
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SynthSummary {
    pub falls: usize,
    pub adls: usize,
    pub dir: PathBuf,
}

/// Name of the `index`-th synthetic recording of a class. Activities cycle
/// through F01..F15 or D01..D19, then subjects SY01..SY99, then trials.
pub fn synth_meta(label: Label, index: usize) -> RecordingMeta {
    let (prefix, activities) = match label {
        Label::Fall => ('F', 15),
        Label::Adl => ('D', 19),
    };
    let activity = index % activities + 1;
    let subject = (index / activities) % 99 + 1;
    let trial = index / (activities * 99) + 1;
    let mut meta = RecordingMeta {
        activity_code: format!("{prefix}{activity:02}"),
        subject_code: format!("SY{subject:02}"),
        trial: u32::try_from(trial).unwrap_or(u32::MAX),
        label,
        source_path: String::new(),
    };
    meta.source_path = meta.file_name();
    meta
}

/// Writes `count` falls and `count` ADLs in the on-disk text format under
/// `dir/<subject>/`.
pub fn run_synth(config: &PipelineConfig, count: usize, dir: &Path, duration_s: f64) -> Result<SynthSummary, CliError> {
    config.validate()?;
    if !(duration_s > 0.0 && duration_s.is_finite()) {
        return Err(CliError::Config(format!("duration must be positive, got {duration_s}")));
    }
    std::fs::create_dir_all(dir).map_err(|e| io_err("cannot create", dir, e))?;
    for label in [Label::Fall, Label::Adl] {
        for i in 0..count {
            let seed = config
                .seed
                .wrapping_mul(1_000_003)
                .wrapping_add(2 * i as u64 + u64::from(label == Label::Adl));
            let mut rec = ingest::generate_synthetic(label, duration_s, seed);
            rec.meta = synth_meta(label, i);
            let raw = ingest::quantize(&rec, &config.sensors)?;
            let sub = dir.join(&rec.meta.subject_code);
            std::fs::create_dir_all(&sub).map_err(|e| io_err("cannot create", &sub, e))?;
            let path = sub.join(rec.meta.file_name());
            std::fs::write(&path, ingest::serialize_recording(&raw)).map_err(|e| io_err("cannot write", &path, e))?;
        }
    }
    Ok(SynthSummary {
        falls: count,
        adls: count,
        dir: dir.to_path_buf(),
    })
}
