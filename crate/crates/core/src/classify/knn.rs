use crate::ingest::Label;

use super::{check_dim, check_training, ClassifyError};

/// 1-nearest-neighbour by Euclidean distance over the stored rows.
#[derive(Debug, Clone, PartialEq)]
pub struct KnnModel {
    rows: Vec<Vec<f64>>,
    labels: Vec<Label>,
    dim: usize,
}

pub fn knn_fit(x: &[Vec<f64>], y: &[Label]) -> Result<KnnModel, ClassifyError> {
    let dim = check_training(x, y)?;
    Ok(KnnModel {
        rows: x.to_vec(),
        labels: y.to_vec(),
        dim,
    })
}

impl KnnModel {
    pub fn k(&self) -> usize {
        1
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Label of the closest stored row; equal distances keep the lowest index.
    pub fn predict(&self, x: &[f64]) -> Result<Label, ClassifyError> {
        check_dim(self.dim, x)?;
        let mut best = (f64::INFINITY, 0usize);
        for (i, row) in self.rows.iter().enumerate() {
            let d: f64 = row.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum();
            if d < best.0 {
                best = (d, i);
            }
        }
        Ok(self.labels[best.1])
    }
}
