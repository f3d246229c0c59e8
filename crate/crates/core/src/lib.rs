//! Fall detection from waist-worn inertial recordings.
//!
//! The pipeline runs in four stages:
//!
//! 1. [`ingest`] finds SisFall-format text files, parses the nine raw
//!    channels and converts counts to g and deg/s.
//! 2. [`dsp`] designs a 4th-order Butterworth low-pass (5 Hz at 200 Hz) as
//!    two biquads and filters every channel.
//! 3. [`features`] reduces each filtered channel to max, min, mean,
//!    variance, kurtosis and skewness, giving 54 values per recording.
//! 4. [`classify`] and [`eval`] train a decision tree, logistic regression,
//!    1-NN and a quadratic-kernel SVM under k-fold cross-validation and
//!    report sensitivity, specificity and accuracy.

// `!(x > 0.0)` style checks are used on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod classify;
pub mod config;
pub mod dsp;
pub mod eval;
pub mod features;
pub mod ingest;

pub use classify::{ClassifierKind, ClassifyError, Hyperparams, TrainedModel};
pub use config::{ConfigError, PipelineConfig};
pub use dsp::{BiquadCascade, DspError, FilterSpec};
pub use eval::{ConfusionMatrix, EvalError, FoldAssignment, Metrics, Report};
pub use features::{FeatureError, FeatureMatrix, FeatureVector, FilterMode, FEATURE_COUNT};
pub use ingest::{IngestError, Label, RawRecording, Recording, RecordingMeta, SensorSpec};
