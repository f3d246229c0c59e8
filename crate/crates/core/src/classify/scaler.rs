use serde::{Deserialize, Serialize};

use super::{check_dim, ClassifyError};

/// Standard deviations are floored here so constant columns map to 0.
pub const STD_FLOOR: f64 = 1e-12;

/// Per-feature z-score parameters fitted on training rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Scaler {
    /// Population mean and standard deviation of each column.
    pub fn fit(rows: &[Vec<f64>]) -> Result<Self, ClassifyError> {
        let first = rows.first().ok_or(ClassifyError::Empty)?;
        let dim = first.len();
        let n = rows.len() as f64;
        let mut mean = vec![0.0; dim];
        for row in rows {
            check_dim(dim, row)?;
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; dim];
        for row in rows {
            for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let std = var.iter().map(|s| (s / n).sqrt().max(STD_FLOOR)).collect();
        Ok(Scaler { mean, std })
    }

    pub fn transform(&self, row: &[f64]) -> Result<Vec<f64>, ClassifyError> {
        check_dim(self.mean.len(), row)?;
        Ok(row
            .iter()
            .zip(&self.mean)
            .zip(&self.std)
            .map(|((v, m), s)| (v - m) / s)
            .collect())
    }

    pub fn transform_all(&self, rows: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, ClassifyError> {
        rows.iter().map(|r| self.transform(r)).collect()
    }
}
