//! Shared fixtures for the criterion benchmarks.

use fallsense_core::features::{feature_vector, FeatureMatrix, FilterMode};
use fallsense_core::ingest::generate_synthetic;
use fallsense_core::{dsp, FilterSpec, Label};

/// `per_class` synthetic falls and ADLs of `duration_s` seconds each.
pub fn synthetic_matrix(per_class: usize, duration_s: f64) -> FeatureMatrix {
    let cascade = dsp::design_butterworth(&FilterSpec::default()).expect("default filter");
    let rows = (0..per_class as u64)
        .flat_map(|seed| [Label::Fall, Label::Adl].map(|l| (l, seed)))
        .map(|(label, seed)| {
            let rec = generate_synthetic(label, duration_s, seed);
            feature_vector(&rec, &cascade, FilterMode::Causal).expect("synthetic features")
        })
        .collect();
    FeatureMatrix::new(rows)
}

/// Rows and labels split out of a matrix.
pub fn xy(matrix: &FeatureMatrix) -> (Vec<Vec<f64>>, Vec<Label>) {
    (
        matrix.rows.iter().map(|r| r.values.clone()).collect(),
        matrix.labels(),
    )
}
