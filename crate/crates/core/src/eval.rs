//! k-fold cross-validation, pooled confusion matrices and SE/SP/accuracy.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classify::{ClassifierKind, ClassifyError, Hyperparams, Scaler, TrainedModel};
use crate::features::FeatureMatrix;
use crate::ingest::Label;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("cannot split {rows} rows into {k} folds: {reason}")]
    Folds { rows: usize, k: usize, reason: String },
    #[error("{metric} is undefined: {reason}")]
    UndefinedMetric { metric: &'static str, reason: String },
    #[error("{classifier} fold {fold}: {source}")]
    Training {
        classifier: ClassifierKind,
        fold: usize,
        #[source]
        source: ClassifyError,
    },
    #[error("report invariant violated: {0}")]
    Invariant(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldAssignment {
    /// Fold index of every row.
    pub fold_of: Vec<usize>,
    pub k: usize,
    pub seed: u64,
    pub stratified: bool,
}

impl FoldAssignment {
    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &f in &self.fold_of {
            sizes[f] += 1;
        }
        sizes
    }

    pub fn test_rows(&self, fold: usize) -> Vec<usize> {
        (0..self.fold_of.len()).filter(|&i| self.fold_of[i] == fold).collect()
    }

    pub fn train_rows(&self, fold: usize) -> Vec<usize> {
        (0..self.fold_of.len()).filter(|&i| self.fold_of[i] != fold).collect()
    }
}

/// Shuffles rows with a seeded ChaCha8 stream and deals them round-robin.
/// Stratified assignment shuffles each class separately and deals falls
/// first, continuing the rotation into ADL rows, so both per-fold totals and
/// per-fold fall counts differ by at most one.
pub fn make_folds(labels: &[Label], k: usize, seed: u64, stratified: bool) -> Result<FoldAssignment, EvalError> {
    let rows = labels.len();
    let fail = |reason: String| EvalError::Folds { rows, k, reason };
    if k < 2 {
        return Err(fail("need at least 2 folds".into()));
    }
    if rows < k {
        return Err(fail("fewer rows than folds".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fold_of = vec![0; rows];
    if stratified {
        let mut next = 0;
        for class in [Label::Fall, Label::Adl] {
            let mut idx: Vec<usize> = (0..rows).filter(|&i| labels[i] == class).collect();
            if idx.len() < k {
                return Err(fail(format!("{class} has only {} rows", idx.len())));
            }
            idx.shuffle(&mut rng);
            for i in idx {
                fold_of[i] = next % k;
                next += 1;
            }
        }
    } else {
        let mut idx: Vec<usize> = (0..rows).collect();
        idx.shuffle(&mut rng);
        for (pos, i) in idx.into_iter().enumerate() {
            fold_of[i] = pos % k;
        }
    }
    Ok(FoldAssignment {
        fold_of,
        k,
        seed,
        stratified,
    })
}

/// Counts with `Fall` as the positive class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub fp: u64,
    pub tn: u64,
}

impl ConfusionMatrix {
    pub fn new(tp: u64, fn_: u64, fp: u64, tn: u64) -> Self {
        ConfusionMatrix { tp, fn_, fp, tn }
    }

    pub fn record(&mut self, actual: Label, predicted: Label) {
        match (actual, predicted) {
            (Label::Fall, Label::Fall) => self.tp += 1,
            (Label::Fall, Label::Adl) => self.fn_ += 1,
            (Label::Adl, Label::Fall) => self.fp += 1,
            (Label::Adl, Label::Adl) => self.tn += 1,
        }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fn_ + self.fp + self.tn
    }

    pub fn falls(&self) -> u64 {
        self.tp + self.fn_
    }

    pub fn adls(&self) -> u64 {
        self.tn + self.fp
    }
}

impl std::ops::Add for ConfusionMatrix {
    type Output = ConfusionMatrix;

    fn add(self, o: ConfusionMatrix) -> ConfusionMatrix {
        ConfusionMatrix::new(self.tp + o.tp, self.fn_ + o.fn_, self.fp + o.fp, self.tn + o.tn)
    }
}

impl std::iter::Sum for ConfusionMatrix {
    fn sum<I: Iterator<Item = ConfusionMatrix>>(iter: I) -> Self {
        iter.fold(ConfusionMatrix::default(), |a, b| a + b)
    }
}

/// Percentages.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub sensitivity: f64,
    pub specificity: f64,
    pub accuracy: f64,
}

/// SE = TP/(TP+FN), SP = TN/(TN+FP), accuracy = (TP+TN)/total, all ×100.
pub fn compute_metrics(cm: &ConfusionMatrix) -> Result<Metrics, EvalError> {
    if cm.falls() == 0 {
        return Err(EvalError::UndefinedMetric {
            metric: "sensitivity",
            reason: "no fall rows (TP + FN = 0)".into(),
        });
    }
    if cm.adls() == 0 {
        return Err(EvalError::UndefinedMetric {
            metric: "specificity",
            reason: "no ADL rows (TN + FP = 0)".into(),
        });
    }
    let pct = |num: u64, den: u64| 100.0 * num as f64 / den as f64;
    Ok(Metrics {
        sensitivity: pct(cm.tp, cm.falls()),
        specificity: pct(cm.tn, cm.adls()),
        accuracy: pct(cm.tp + cm.tn, cm.total()),
    })
}

/// Trains on every fold but `fold` and scores the held-out rows. With
/// `scaling`, a [`Scaler`] fitted on the training rows is applied first for
/// classifiers that use it.
pub fn evaluate_fold(
    matrix: &FeatureMatrix,
    kind: ClassifierKind,
    params: &Hyperparams,
    folds: &FoldAssignment,
    fold: usize,
    scaling: bool,
) -> Result<ConfusionMatrix, EvalError> {
    let wrap = |source: ClassifyError| EvalError::Training {
        classifier: kind,
        fold,
        source,
    };
    if folds.fold_of.len() != matrix.len() {
        return Err(EvalError::Invariant(format!(
            "fold assignment covers {} rows, matrix has {}",
            folds.fold_of.len(),
            matrix.len()
        )));
    }
    let train = folds.train_rows(fold);
    let test = folds.test_rows(fold);
    let mut x: Vec<Vec<f64>> = train.iter().map(|&i| matrix.rows[i].values.clone()).collect();
    let y: Vec<Label> = train.iter().map(|&i| matrix.rows[i].label).collect();
    let scaler = if scaling && kind.uses_scaling() {
        let s = Scaler::fit(&x).map_err(wrap)?;
        x = s.transform_all(&x).map_err(wrap)?;
        Some(s)
    } else {
        None
    };
    let mut svm_params;
    let params = if kind == ClassifierKind::Svm {
        // vary the fallback stream per fold while staying reproducible
        svm_params = params.clone();
        svm_params.svm.seed = params.svm.seed.wrapping_add(fold as u64);
        &svm_params
    } else {
        params
    };
    let model = TrainedModel::fit(kind, params, &x, &y).map_err(wrap)?;
    let mut cm = ConfusionMatrix::default();
    for &i in &test {
        let row = &matrix.rows[i];
        let predicted = match &scaler {
            Some(s) => model.predict(&s.transform(&row.values).map_err(wrap)?),
            None => model.predict(&row.values),
        }
        .map_err(wrap)?;
        cm.record(row.label, predicted);
    }
    Ok(cm)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub classifier: ClassifierKind,
    pub per_fold: Vec<ConfusionMatrix>,
    pub pooled: ConfusionMatrix,
    /// Fingerprint of the fold assignment used.
    pub folds_digest: String,
}

impl CvResult {
    pub fn from_folds(classifier: ClassifierKind, folds: &FoldAssignment, per_fold: Vec<ConfusionMatrix>) -> Self {
        CvResult {
            classifier,
            pooled: per_fold.iter().copied().sum(),
            per_fold,
            folds_digest: folds_digest(folds),
        }
    }
}

/// Sequential k-fold evaluation of one classifier.
pub fn cross_validate(
    matrix: &FeatureMatrix,
    kind: ClassifierKind,
    params: &Hyperparams,
    folds: &FoldAssignment,
    scaling: bool,
) -> Result<CvResult, EvalError> {
    let per_fold = (0..folds.k)
        .map(|f| evaluate_fold(matrix, kind, params, folds, f, scaling))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(CvResult::from_folds(kind, folds, per_fold))
}

/// FNV-1a over the fold indices; identifies an assignment in reports.
pub fn folds_digest(folds: &FoldAssignment) -> String {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &f in &folds.fold_of {
        for b in (f as u64).to_le_bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
    }
    format!("{h:016x}")
}

/// Settings echoed into the report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub seed: u64,
    pub folds: usize,
    pub stratified: bool,
    pub scaling: bool,
    pub zero_phase: bool,
    pub hyperparams: Hyperparams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierReport {
    pub classifier: ClassifierKind,
    pub pooled: ConfusionMatrix,
    pub metrics: Metrics,
    pub per_fold: Vec<ConfusionMatrix>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub config: RunConfig,
    pub rows: u64,
    pub fall_rows: u64,
    pub adl_rows: u64,
    pub folds_digest: String,
    pub classifiers: Vec<ClassifierReport>,
}

pub fn build_report(results: &[CvResult], config: RunConfig) -> Result<Report, EvalError> {
    let first = results
        .first()
        .ok_or_else(|| EvalError::Invariant("no classifier results".into()))?;
    let mut classifiers = Vec::with_capacity(results.len());
    for r in results {
        if r.folds_digest != first.folds_digest {
            return Err(EvalError::Invariant(format!(
                "{} used fold assignment {}, {} used {}",
                r.classifier, r.folds_digest, first.classifier, first.folds_digest
            )));
        }
        if r.per_fold.len() != config.folds {
            return Err(EvalError::Invariant(format!(
                "{} has {} fold matrices, expected {}",
                r.classifier,
                r.per_fold.len(),
                config.folds
            )));
        }
        let summed: ConfusionMatrix = r.per_fold.iter().copied().sum();
        if summed != r.pooled {
            return Err(EvalError::Invariant(format!(
                "{} pooled matrix {:?} differs from fold sum {:?}",
                r.classifier, r.pooled, summed
            )));
        }
        if r.pooled.falls() != first.pooled.falls() || r.pooled.adls() != first.pooled.adls() {
            return Err(EvalError::Invariant(format!(
                "{} evaluated a different row set than {}",
                r.classifier, first.classifier
            )));
        }
        classifiers.push(ClassifierReport {
            classifier: r.classifier,
            pooled: r.pooled,
            metrics: compute_metrics(&r.pooled)?,
            per_fold: r.per_fold.clone(),
        });
    }
    Ok(Report {
        config,
        rows: first.pooled.total(),
        fall_rows: first.pooled.falls(),
        adl_rows: first.pooled.adls(),
        folds_digest: first.folds_digest.clone(),
        classifiers,
    })
}

impl Report {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serialises");
        s.push('\n');
        s
    }

    /// `classifier,fold,tp,fn,fp,tn`, one row per classifier and fold.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("classifier,fold,tp,fn,fp,tn\n");
        for c in &self.classifiers {
            for (f, cm) in c.per_fold.iter().enumerate() {
                let _ = writeln!(out, "{},{},{},{},{},{}", c.classifier, f, cm.tp, cm.fn_, cm.fp, cm.tn);
            }
        }
        out
    }

    /// Console table with SE, SP and accuracy to two decimals.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<10} {:>8} {:>8} {:>9}   {:>6} {:>6} {:>6} {:>6}",
            "Classifier", "SE", "SP", "Accuracy", "TP", "FN", "FP", "TN"
        );
        for c in &self.classifiers {
            let m = &c.metrics;
            let _ = writeln!(
                out,
                "{:<10} {:>7.2}% {:>7.2}% {:>8.2}%   {:>6} {:>6} {:>6} {:>6}",
                c.classifier.as_str().to_uppercase(),
                m.sensitivity,
                m.specificity,
                m.accuracy,
                c.pooled.tp,
                c.pooled.fn_,
                c.pooled.fp,
                c.pooled.tn
            );
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{FeatureVector, FEATURE_COUNT};
    use crate::ingest::label_from_name;
    use proptest::prelude::*;

    fn labels(falls: usize, adls: usize) -> Vec<Label> {
        let mut v = vec![Label::Fall; falls];
        v.extend(vec![Label::Adl; adls]);
        v
    }

    #[test]
    fn corpus_sized_folds() {
        let l = labels(1798, 2707);
        for stratified in [true, false] {
            let f = make_folds(&l, 10, 0, stratified).unwrap();
            let mut sizes = f.fold_sizes();
            sizes.sort();
            assert_eq!(sizes, [450, 450, 450, 450, 450, 451, 451, 451, 451, 451]);
        }
        let f = make_folds(&l, 10, 0, true).unwrap();
        for fold in 0..10 {
            let falls = f.test_rows(fold).iter().filter(|&&i| l[i] == Label::Fall).count();
            assert!(falls == 179 || falls == 180, "{falls}");
        }
    }

    #[test]
    fn folds_are_deterministic() {
        let l = labels(30, 50);
        assert_eq!(make_folds(&l, 10, 7, true).unwrap(), make_folds(&l, 10, 7, true).unwrap());
        assert_ne!(make_folds(&l, 10, 7, true).unwrap(), make_folds(&l, 10, 8, true).unwrap());
    }

    #[test]
    fn fold_errors() {
        assert!(make_folds(&labels(3, 3), 10, 0, false).is_err());
        assert!(make_folds(&labels(5, 20), 10, 0, true).is_err());
        assert!(make_folds(&labels(5, 20), 10, 0, false).is_ok());
        assert!(make_folds(&labels(5, 20), 1, 0, false).is_err());
    }

    #[test]
    fn metrics_from_tree_matrix() {
        let m = compute_metrics(&ConfusionMatrix::new(1776, 22, 22, 2685)).unwrap();
        assert_eq!(format!("{:.2}", m.sensitivity), "98.78");
        assert_eq!(format!("{:.2}", m.specificity), "99.19");
        assert_eq!(format!("{:.2}", m.accuracy), "99.02");
    }

    #[test]
    fn metrics_from_svm_matrix() {
        let m = compute_metrics(&ConfusionMatrix::new(1797, 1, 0, 2707)).unwrap();
        assert_eq!(format!("{:.2}", m.sensitivity), "99.94");
        assert_eq!(m.specificity, 100.0);
        assert_eq!(format!("{:.2}", m.accuracy), "99.98");
    }

    #[test]
    fn perfect_and_undefined_metrics() {
        let m = compute_metrics(&ConfusionMatrix::new(5, 0, 0, 5)).unwrap();
        assert_eq!((m.sensitivity, m.specificity, m.accuracy), (100.0, 100.0, 100.0));
        assert!(matches!(
            compute_metrics(&ConfusionMatrix::new(0, 0, 1, 4)),
            Err(EvalError::UndefinedMetric { metric: "sensitivity", .. })
        ));
        assert!(matches!(
            compute_metrics(&ConfusionMatrix::new(3, 1, 0, 0)),
            Err(EvalError::UndefinedMetric { metric: "specificity", .. })
        ));
    }

    #[test]
    fn always_fall_classifier() {
        let mut cm = ConfusionMatrix::default();
        for l in labels(30, 70) {
            cm.record(l, Label::Fall);
        }
        let m = compute_metrics(&cm).unwrap();
        assert_eq!((m.sensitivity, m.specificity, m.accuracy), (100.0, 0.0, 30.0));
    }

    fn clusters(n: usize, gap: f64) -> FeatureMatrix {
        let rows = (0..n)
            .map(|i| {
                let fall = i % 3 == 0;
                let name = if fall { format!("F01_SA01_R{:02}.txt", i + 1) } else { format!("D01_SA01_R{:02}.txt", i + 1) };
                let centre = if fall { gap } else { -gap };
                let values = (0..FEATURE_COUNT).map(|j| centre + ((i * 31 + j * 7) % 11) as f64 * 0.1).collect();
                FeatureVector::new(values, label_from_name(&name).unwrap()).unwrap()
            })
            .collect();
        FeatureMatrix::new(rows)
    }

    #[test]
    fn separated_clusters_cross_validate_cleanly() {
        let m = clusters(60, 10.0);
        let folds = make_folds(&m.labels(), 10, 1, true).unwrap();
        let r = cross_validate(&m, ClassifierKind::Knn, &Hyperparams::default(), &folds, true).unwrap();
        assert_eq!((r.pooled.fp, r.pooled.fn_), (0, 0));
        assert_eq!(r.pooled.falls(), m.count(Label::Fall) as u64);
        assert_eq!(r.pooled.adls(), m.count(Label::Adl) as u64);
    }

    #[test]
    fn training_errors_carry_fold() {
        let m = clusters(40, 10.0);
        let folds = make_folds(&m.labels(), 4, 1, true).unwrap();
        let params = Hyperparams {
            logreg: crate::classify::LogRegParams { learning_rate: -1.0, ..Default::default() },
            ..Hyperparams::default()
        };
        let err = cross_validate(&m, ClassifierKind::Lr, &params, &folds, true).unwrap_err();
        assert!(matches!(err, EvalError::Training { classifier: ClassifierKind::Lr, fold: 0, .. }));
    }

    fn run_config() -> RunConfig {
        RunConfig {
            seed: 3,
            folds: 2,
            stratified: true,
            scaling: true,
            zero_phase: false,
            hyperparams: Hyperparams::default(),
        }
    }

    fn fixed_folds() -> FoldAssignment {
        FoldAssignment { fold_of: vec![0, 1, 0, 1], k: 2, seed: 3, stratified: true }
    }

    #[test]
    fn report_accepts_consistent_results() {
        let folds = fixed_folds();
        let r = CvResult::from_folds(ClassifierKind::Dt, &folds, vec![ConfusionMatrix::new(1, 0, 0, 1), ConfusionMatrix::new(0, 1, 0, 1)]);
        let report = build_report(&[r], run_config()).unwrap();
        assert_eq!(report.rows, 4);
        assert_eq!(report.config.seed, 3);
        assert!(report.to_json().contains("\"seed\": 3"));
        assert_eq!(report.to_csv().lines().count(), 3);
    }

    #[test]
    fn report_rejects_tampered_pooled_matrix() {
        let folds = fixed_folds();
        let mut r = CvResult::from_folds(ClassifierKind::Dt, &folds, vec![ConfusionMatrix::new(1, 0, 0, 1), ConfusionMatrix::new(0, 1, 0, 1)]);
        r.pooled.tp += 1;
        assert!(matches!(build_report(&[r], run_config()), Err(EvalError::Invariant(_))));
    }

    #[test]
    fn report_rejects_mixed_fold_assignments() {
        let a = fixed_folds();
        let mut b = fixed_folds();
        b.fold_of = vec![1, 0, 0, 1];
        let cms = vec![ConfusionMatrix::new(1, 0, 0, 1), ConfusionMatrix::new(0, 1, 0, 1)];
        let r1 = CvResult::from_folds(ClassifierKind::Dt, &a, cms.clone());
        let r2 = CvResult::from_folds(ClassifierKind::Knn, &b, cms);
        assert!(matches!(build_report(&[r1, r2], run_config()), Err(EvalError::Invariant(_))));
    }

    proptest! {
        #[test]
        fn folds_partition_rows(falls in 0usize..60, adls in 0usize..60, k in 2usize..11, seed in any::<u64>(), stratified in any::<bool>()) {
            let l = labels(falls, adls);
            match make_folds(&l, k, seed, stratified) {
                Ok(f) => {
                    prop_assert_eq!(f.fold_of.len(), l.len());
                    prop_assert!(f.fold_of.iter().all(|&x| x < k));
                    let sizes = f.fold_sizes();
                    prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
                    if stratified {
                        let per: Vec<usize> = (0..k).map(|fold| f.test_rows(fold).iter().filter(|&&i| l[i] == Label::Fall).count()).collect();
                        prop_assert!(per.iter().max().unwrap() - per.iter().min().unwrap() <= 1);
                    }
                }
                Err(_) => prop_assert!(l.len() < k || (stratified && (falls < k || adls < k))),
            }
        }
    }
}
