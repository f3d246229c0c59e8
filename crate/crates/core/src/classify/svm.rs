//! Soft-margin SVM with a quadratic kernel, trained by Sequential Minimal
//! Optimization.
//!
//! The solver keeps the dual gradient `G = Qα - 1` for every training point
//! (`Q_ij = y_i y_j K_ij`). Writing `v_t = -y_t G_t` (equal to `b - E_t`),
//! the first index is the point with the largest `v` that may still move up.
//! The second is chosen among points that may move down to maximise the
//! two-variable gain `(E_i - E_j)² / η`, where `η = K_ii + K_jj - 2K_ij`; this
//! is the largest-`|E_i - E_j|` rule weighted by the pair's curvature. A
//! seeded random pick among the remaining violators is tried when a step
//! makes no progress.
//!
//! Training stops once `max v - min v <= tol`. The bias is the midpoint of
//! that gap, which bounds every point's KKT residual by `tol / 2`.

use std::collections::HashMap;
use std::rc::Rc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ingest::Label;

use super::{both_classes, check_dim, check_training, dot, ClassifyError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmParams {
    /// Box constraint.
    pub c: f64,
    /// Kernel input scale; `None` uses `sqrt(dimension)`.
    pub kernel_scale: Option<f64>,
    /// Stopping tolerance on the maximal KKT gap.
    pub tol: f64,
    /// Iteration cap, in multiples of the training-set size.
    pub max_passes: usize,
    /// Seed for the random second-index fallback.
    pub seed: u64,
    /// Kernel rows kept in the LRU cache.
    pub cache_rows: usize,
}

impl Default for SvmParams {
    fn default() -> Self {
        SvmParams {
            c: 1.0,
            kernel_scale: None,
            tol: 1e-3,
            max_passes: 100,
            seed: 0,
            cache_rows: 1024,
        }
    }
}

/// `(u·v / scale² + 1)²`.
pub fn kernel_quadratic(u: &[f64], v: &[f64], scale: f64) -> Result<f64, ClassifyError> {
    check_dim(u.len(), v)?;
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(ClassifyError::Param(format!("kernel scale must be positive, got {scale}")));
    }
    Ok(quad(u, v, 1.0 / (scale * scale)))
}

#[inline]
fn quad(u: &[f64], v: &[f64], inv_scale2: f64) -> f64 {
    let t = dot(u, v) * inv_scale2 + 1.0;
    t * t
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvmModel {
    pub support_vectors: Vec<Vec<f64>>,
    /// Training-set index of each support vector.
    pub support_indices: Vec<usize>,
    /// `α_i` of each support vector, in `(0, C]`.
    pub alphas: Vec<f64>,
    /// `±1` label of each support vector.
    pub signs: Vec<f64>,
    pub bias: f64,
    pub c: f64,
    pub kernel_scale: f64,
    pub iterations: usize,
    /// Largest KKT residual over the training set, evaluated from the final model.
    pub max_kkt_violation: f64,
}

impl SvmModel {
    /// `Σ α_i y_i K(x_i, x) + b`.
    pub fn decision_function(&self, x: &[f64]) -> Result<f64, ClassifyError> {
        let dim = self.support_vectors.first().map_or(x.len(), Vec::len);
        check_dim(dim, x)?;
        let inv = 1.0 / (self.kernel_scale * self.kernel_scale);
        Ok(self
            .support_vectors
            .iter()
            .zip(self.alphas.iter().zip(&self.signs))
            .map(|(sv, (a, s))| a * s * quad(sv, x, inv))
            .sum::<f64>()
            + self.bias)
    }

    /// Sign of the decision function; exactly zero counts as `Fall`.
    pub fn predict(&self, x: &[f64]) -> Result<Label, ClassifyError> {
        Ok(if self.decision_function(x)? >= 0.0 {
            Label::Fall
        } else {
            Label::Adl
        })
    }

    /// `Σ α_i y_i`, zero at any feasible dual point.
    pub fn dual_balance(&self) -> f64 {
        self.alphas.iter().zip(&self.signs).map(|(a, s)| a * s).sum()
    }
}

struct KernelCache<'a> {
    x: &'a [Vec<f64>],
    inv_scale2: f64,
    capacity: usize,
    rows: HashMap<usize, (Rc<[f64]>, u64)>,
    clock: u64,
}

impl<'a> KernelCache<'a> {
    fn new(x: &'a [Vec<f64>], inv_scale2: f64, capacity: usize) -> Self {
        KernelCache {
            x,
            inv_scale2,
            capacity: capacity.max(2),
            rows: HashMap::new(),
            clock: 0,
        }
    }

    fn row(&mut self, i: usize) -> Rc<[f64]> {
        self.clock += 1;
        if let Some(entry) = self.rows.get_mut(&i) {
            entry.1 = self.clock;
            return entry.0.clone();
        }
        if self.rows.len() >= self.capacity {
            if let Some(&oldest) = self.rows.iter().min_by_key(|(_, (_, t))| *t).map(|(k, _)| k) {
                self.rows.remove(&oldest);
            }
        }
        let xi = &self.x[i];
        let row: Rc<[f64]> = self.x.iter().map(|xj| quad(xi, xj, self.inv_scale2)).collect();
        self.rows.insert(i, (row.clone(), self.clock));
        row
    }
}

pub fn svm_fit(x: &[Vec<f64>], y: &[Label], params: &SvmParams) -> Result<SvmModel, ClassifyError> {
    let dim = check_training(x, y)?;
    both_classes(y)?;
    let c = params.c;
    if !(c > 0.0 && c.is_finite()) {
        return Err(ClassifyError::Param(format!("C must be positive, got {c}")));
    }
    if !(params.tol > 0.0) {
        return Err(ClassifyError::Param("tol must be positive".into()));
    }
    let scale = params.kernel_scale.unwrap_or((dim as f64).sqrt());
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(ClassifyError::Param(format!("kernel scale must be positive, got {scale}")));
    }
    let inv_scale2 = 1.0 / (scale * scale);

    let n = x.len();
    let sign: Vec<f64> = y.iter().map(|l| l.sign()).collect();
    let diag: Vec<f64> = x.iter().map(|r| quad(r, r, inv_scale2)).collect();
    let mut cache = KernelCache::new(x, inv_scale2, params.cache_rows);
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];

    let in_up = |a: f64, s: f64| (s > 0.0 && a < c) || (s < 0.0 && a > 0.0);
    let in_low = |a: f64, s: f64| (s > 0.0 && a > 0.0) || (s < 0.0 && a < c);

    let max_iter = params.max_passes.saturating_mul(n).max(1);
    let mut iterations = 0;
    let mut stalls = 0;
    let mut converged = false;
    while iterations < max_iter {
        let (mut i, mut m) = (usize::MAX, f64::NEG_INFINITY);
        let mut big_m = f64::INFINITY;
        for t in 0..n {
            let v = -sign[t] * grad[t];
            if in_up(alpha[t], sign[t]) && v > m {
                (i, m) = (t, v);
            }
            if in_low(alpha[t], sign[t]) && v < big_m {
                big_m = v;
            }
        }
        if i == usize::MAX || !big_m.is_finite() || m - big_m <= params.tol {
            converged = true;
            break;
        }
        // Second index: largest objective gain (E_i - E_t)^2 / eta_it.
        let row_i = cache.row(i);
        let mut j = usize::MAX;
        let mut best_gain = f64::NEG_INFINITY;
        for t in 0..n {
            let v = -sign[t] * grad[t];
            if !in_low(alpha[t], sign[t]) || v >= m {
                continue;
            }
            let diff = m - v;
            let eta = (diag[i] + diag[t] - 2.0 * row_i[t]).max(1e-12);
            let gain = diff * diff / eta;
            if gain > best_gain {
                (j, best_gain) = (t, gain);
            }
        }
        drop(row_i);
        iterations += 1;

        let mut moved = take_step(i, j, &mut alpha, &mut grad, &sign, &diag, &mut cache, c);
        if !moved {
            // Random fallback over the other violators of `i`.
            let candidates: Vec<usize> = (0..n)
                .filter(|&t| t != i && in_low(alpha[t], sign[t]) && -sign[t] * grad[t] < m - params.tol)
                .collect();
            if !candidates.is_empty() {
                let pick = candidates[rng.random_range(0..candidates.len())];
                moved = take_step(i, pick, &mut alpha, &mut grad, &sign, &diag, &mut cache, c);
            }
        }
        if moved {
            stalls = 0;
        } else {
            stalls += 1;
            if stalls > n {
                break;
            }
        }
    }

    let (mut up_max, mut low_min) = (f64::NEG_INFINITY, f64::INFINITY);
    for t in 0..n {
        let v = -sign[t] * grad[t];
        if in_up(alpha[t], sign[t]) {
            up_max = up_max.max(v);
        }
        if in_low(alpha[t], sign[t]) {
            low_min = low_min.min(v);
        }
    }
    let bias = match (up_max.is_finite(), low_min.is_finite()) {
        (true, true) => (up_max + low_min) / 2.0,
        (true, false) => up_max,
        (false, true) => low_min,
        (false, false) => 0.0,
    };

    let support_indices: Vec<usize> = (0..n).filter(|&t| alpha[t] > 0.0).collect();
    let mut model = SvmModel {
        support_vectors: support_indices.iter().map(|&t| x[t].clone()).collect(),
        alphas: support_indices.iter().map(|&t| alpha[t]).collect(),
        signs: support_indices.iter().map(|&t| sign[t]).collect(),
        support_indices,
        bias,
        c,
        kernel_scale: scale,
        iterations,
        max_kkt_violation: 0.0,
    };
    let mut worst = 0.0f64;
    for t in 0..n {
        let r = sign[t] * model.decision_function(&x[t])? - 1.0;
        worst = worst.max(kkt_violation(alpha[t], r, c));
    }
    model.max_kkt_violation = worst;
    if !converged || worst > params.tol {
        return Err(ClassifyError::NotConverged {
            iterations,
            max_violation: worst,
        });
    }
    Ok(model)
}

/// Residual of the KKT condition for one point, given `r = y f(x) - 1`.
pub fn kkt_violation(alpha: f64, r: f64, c: f64) -> f64 {
    if alpha <= 0.0 {
        (-r).max(0.0)
    } else if alpha >= c {
        r.max(0.0)
    } else {
        r.abs()
    }
}

/// Analytic two-variable update. Returns false when `α` did not change.
#[allow(clippy::too_many_arguments)]
fn take_step(
    i: usize,
    j: usize,
    alpha: &mut [f64],
    grad: &mut [f64],
    sign: &[f64],
    diag: &[f64],
    cache: &mut KernelCache<'_>,
    c: f64,
) -> bool {
    if i == j {
        return false;
    }
    let (yi, yj) = (sign[i], sign[j]);
    let (ai, aj) = (alpha[i], alpha[j]);
    let (lo, hi) = if yi != yj {
        ((aj - ai).max(0.0), (c + aj - ai).min(c))
    } else {
        ((ai + aj - c).max(0.0), (ai + aj).min(c))
    };
    if hi - lo <= 0.0 {
        return false;
    }
    let row_i = cache.row(i);
    let row_j = cache.row(j);
    let eta = (diag[i] + diag[j] - 2.0 * row_i[j]).max(1e-12);
    // E_i - E_j, with E_t = f(x_t) - y_t; the bias cancels.
    let e_diff = yi * grad[i] - yj * grad[j];
    let mut aj_new = (aj + yj * e_diff / eta).clamp(lo, hi);
    let mut ai_new = ai + yi * yj * (aj - aj_new);
    let snap = |a: f64| {
        if a < 1e-12 * c {
            0.0
        } else if a > c * (1.0 - 1e-12) {
            c
        } else {
            a
        }
    };
    ai_new = snap(ai_new);
    aj_new = snap(aj_new);
    let (di, dj) = (ai_new - ai, aj_new - aj);
    if di == 0.0 && dj == 0.0 {
        return false;
    }
    alpha[i] = ai_new;
    alpha[j] = aj_new;
    for t in 0..grad.len() {
        grad[t] += sign[t] * (yi * row_i[t] * di + yj * row_j[t] * dj);
    }
    true
}
