use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use fallsense_cli::{run_evaluate, run_extract, run_filter_check, run_synth, CliError};
use fallsense_core::config::parse_classifiers;
use fallsense_core::PipelineConfig;

/// Fall detection from waist-worn inertial recordings.
#[derive(Debug, Parser)]
#[command(name = "fallsense", version)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every subcommand. They override values from `--config`.
#[derive(Debug, Args)]
struct Common {
    /// `key = value` configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Dataset root to scan for recordings.
    #[arg(long, global = true)]
    root: Option<PathBuf>,
    /// Feature cache CSV.
    #[arg(long, global = true)]
    cache: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    folds: Option<usize>,
    /// Comma-separated subset of dt,lr,knn,svm.
    #[arg(long, global = true)]
    classifiers: Option<String>,
    #[arg(long, global = true)]
    no_scaling: bool,
    #[arg(long, global = true)]
    no_stratify: bool,
    /// Forward-backward filtering instead of the causal filter.
    #[arg(long, global = true)]
    zero_phase: bool,
    /// Worker threads (default: available parallelism).
    #[arg(long, global = true)]
    workers: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse, filter and featurise every recording into the cache.
    Extract,
    /// Cross-validate the classifiers on the cache and write reports.
    Evaluate,
    /// Print the filter's magnitude response next to the analytic one.
    FilterCheck {
        /// Log-spaced frequencies between 0.1 Hz and Nyquist.
        #[arg(long, default_value_t = 50)]
        points: usize,
    },
    /// Write a synthetic corpus in the on-disk recording format.
    Synth {
        /// Recordings per class.
        #[arg(long, default_value_t = 100)]
        count: usize,
        /// Seconds per recording.
        #[arg(long, default_value_t = 12.0)]
        duration: f64,
    },
}

fn build_config(c: &Common) -> Result<PipelineConfig, CliError> {
    let mut config = match &c.config {
        Some(path) => PipelineConfig::from_file(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(v) = &c.root {
        config.root = Some(v.clone());
    }
    if let Some(v) = &c.cache {
        config.cache = v.clone();
    }
    if let Some(v) = &c.out {
        config.out = v.clone();
    }
    if let Some(v) = c.seed {
        config.seed = v;
    }
    if let Some(v) = c.folds {
        config.folds = v;
    }
    if let Some(v) = &c.classifiers {
        config.classifiers = parse_classifiers(v)?;
    }
    if let Some(v) = c.workers {
        config.workers = Some(v);
    }
    config.scaling &= !c.no_scaling;
    config.stratify &= !c.no_stratify;
    config.zero_phase |= c.zero_phase;
    config.validate()?;
    Ok(config)
}

fn run(cli: Cli) -> Result<(), CliError> {
    let config = build_config(&cli.common)?;
    match cli.command {
        Command::Extract => {
            println!("{}", run_extract(&config)?);
        }
        Command::Evaluate => {
            let (evaluation, files) = run_evaluate(&config)?;
            print!("{}", evaluation.report.to_table());
            println!("reports: {} {}", files.json.display(), files.csv.display());
        }
        Command::FilterCheck { points } => {
            let csv = run_filter_check(&config, points)?;
            match &cli.common.out {
                Some(dir) => {
                    std::fs::create_dir_all(dir)
                        .map_err(|e| CliError::Io(format!("cannot create {}: {e}", dir.display())))?;
                    let path = dir.join("filter_response.csv");
                    std::fs::write(&path, csv)
                        .map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))?;
                    println!("{}", path.display());
                }
                None => print!("{csv}"),
            }
        }
        Command::Synth { count, duration } => {
            let dir = cli
                .common
                .root
                .clone()
                .or_else(|| cli.common.out.clone())
                .ok_or_else(|| CliError::Config("synth needs --root (or --out) for the corpus directory".into()))?;
            let s = run_synth(&config, count, &dir, duration)?;
            println!("wrote {} FALL / {} ADL recordings to {}", s.falls, s.adls, s.dir.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(u8::try_from(e.exit_code()).unwrap_or(1))
        }
    }
}
