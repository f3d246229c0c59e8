//! Binary classifiers behind a common fit/predict contract.
//!
//! All models take rows as `&[Vec<f64>]` with labels as [`Label`]; `Fall`
//! is the positive class and every tie resolves toward `Fall`.

pub mod knn;
pub mod logreg;
pub mod scaler;
pub mod svm;
pub mod tree;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::Label;

pub use knn::KnnModel;
pub use logreg::{LogRegModel, LogRegParams};
pub use scaler::Scaler;
pub use svm::{SvmModel, SvmParams};
pub use tree::{TreeModel, TreeParams};

#[derive(Debug, Error, PartialEq)]
pub enum ClassifyError {
    #[error("empty training set")]
    Empty,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("row count {rows} does not match label count {labels}")]
    LabelCount { rows: usize, labels: usize },
    #[error("training set must contain both classes")]
    SingleClass,
    #[error("invalid hyperparameter: {0}")]
    Param(String),
    #[error("logistic regression diverged at epoch {epoch} (loss {loss}); try a smaller learning rate")]
    Diverged { epoch: usize, loss: f64 },
    #[error("SMO did not converge after {iterations} iterations (max KKT violation {max_violation:.3e})")]
    NotConverged {
        iterations: usize,
        max_violation: f64,
    },
}

pub(crate) fn check_training(x: &[Vec<f64>], y: &[Label]) -> Result<usize, ClassifyError> {
    if x.is_empty() {
        return Err(ClassifyError::Empty);
    }
    if x.len() != y.len() {
        return Err(ClassifyError::LabelCount {
            rows: x.len(),
            labels: y.len(),
        });
    }
    let dim = x[0].len();
    for row in x {
        check_dim(dim, row)?;
    }
    Ok(dim)
}

pub(crate) fn check_dim(expected: usize, row: &[f64]) -> Result<(), ClassifyError> {
    if row.len() != expected {
        return Err(ClassifyError::Dimension {
            expected,
            got: row.len(),
        });
    }
    Ok(())
}

pub(crate) fn both_classes(y: &[Label]) -> Result<(), ClassifyError> {
    let falls = y.iter().filter(|&&l| l == Label::Fall).count();
    if falls == 0 || falls == y.len() {
        return Err(ClassifyError::SingleClass);
    }
    Ok(())
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| p * q).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassifierKind {
    Dt,
    Lr,
    Knn,
    Svm,
}

impl ClassifierKind {
    pub const ALL: [ClassifierKind; 4] = [
        ClassifierKind::Dt,
        ClassifierKind::Lr,
        ClassifierKind::Knn,
        ClassifierKind::Svm,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ClassifierKind::Dt => "dt",
            ClassifierKind::Lr => "lr",
            ClassifierKind::Knn => "knn",
            ClassifierKind::Svm => "svm",
        }
    }

    /// Whether rows are z-scored before fitting when scaling is enabled.
    /// Trees split per feature and are left on raw values.
    pub fn uses_scaling(self) -> bool {
        !matches!(self, ClassifierKind::Dt)
    }
}

impl fmt::Display for ClassifierKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ClassifierKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "dt" => Ok(ClassifierKind::Dt),
            "lr" => Ok(ClassifierKind::Lr),
            "knn" => Ok(ClassifierKind::Knn),
            "svm" => Ok(ClassifierKind::Svm),
            other => Err(format!("unknown classifier {other:?} (expected dt, lr, knn or svm)")),
        }
    }
}

/// Hyperparameters of all four classifiers.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Hyperparams {
    pub tree: TreeParams,
    pub logreg: LogRegParams,
    pub svm: SvmParams,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TrainedModel {
    Tree(TreeModel),
    LogReg(LogRegModel),
    Knn(KnnModel),
    Svm(SvmModel),
}

impl TrainedModel {
    pub fn fit(
        kind: ClassifierKind,
        params: &Hyperparams,
        x: &[Vec<f64>],
        y: &[Label],
    ) -> Result<Self, ClassifyError> {
        Ok(match kind {
            ClassifierKind::Dt => TrainedModel::Tree(tree::dt_fit(x, y, &params.tree)?),
            ClassifierKind::Lr => TrainedModel::LogReg(logreg::lr_fit(x, y, &params.logreg)?),
            ClassifierKind::Knn => TrainedModel::Knn(knn::knn_fit(x, y)?),
            ClassifierKind::Svm => TrainedModel::Svm(svm::svm_fit(x, y, &params.svm)?),
        })
    }

    pub fn predict(&self, x: &[f64]) -> Result<Label, ClassifyError> {
        match self {
            TrainedModel::Tree(m) => m.predict(x),
            TrainedModel::LogReg(m) => m.predict(x),
            TrainedModel::Knn(m) => m.predict(x),
            TrainedModel::Svm(m) => m.predict(x),
        }
    }
}
