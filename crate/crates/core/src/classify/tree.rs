//! CART decision tree with Gini impurity.

use serde::{Deserialize, Serialize};

use crate::ingest::Label;

use super::{check_dim, check_training, ClassifyError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    pub max_depth: usize,
    pub min_leaf: usize,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams {
            max_depth: 32,
            min_leaf: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    /// Rows with `x[feature] <= threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf(Label),
}

/// Nodes live in an arena; index 0 is the root.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeModel {
    pub nodes: Vec<Node>,
    dim: usize,
}

/// `1 - Σ p²` over the two classes.
pub fn gini(falls: usize, total: usize) -> f64 {
    if total == 0 {
        return 0.0;
    }
    let p = falls as f64 / total as f64;
    1.0 - p * p - (1.0 - p) * (1.0 - p)
}

fn majority(falls: usize, total: usize) -> Label {
    if 2 * falls >= total {
        Label::Fall
    } else {
        Label::Adl
    }
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    impurity: f64,
}

#[allow(clippy::needless_range_loop)]
fn best_split(x: &[Vec<f64>], y: &[Label], idx: &[usize], min_leaf: usize) -> Option<BestSplit> {
    let n = idx.len();
    let total_falls = idx.iter().filter(|&&i| y[i] == Label::Fall).count();
    let mut best: Option<BestSplit> = None;
    let mut order = idx.to_vec();
    for feature in 0..x[0].len() {
        order.sort_by(|&a, &b| x[a][feature].total_cmp(&x[b][feature]));
        let mut left_falls = 0usize;
        for pos in 0..n - 1 {
            if y[order[pos]] == Label::Fall {
                left_falls += 1;
            }
            let lo = x[order[pos]][feature];
            let hi = x[order[pos + 1]][feature];
            let left_n = pos + 1;
            let right_n = n - left_n;
            if lo >= hi || left_n < min_leaf || right_n < min_leaf {
                continue;
            }
            let threshold = lo + (hi - lo) / 2.0;
            if !(lo < threshold && threshold < hi) {
                continue;
            }
            let impurity = (left_n as f64 * gini(left_falls, left_n)
                + right_n as f64 * gini(total_falls - left_falls, right_n))
                / n as f64;
            if best.as_ref().is_none_or(|b| impurity < b.impurity) {
                best = Some(BestSplit {
                    feature,
                    threshold,
                    impurity,
                });
            }
        }
    }
    best
}

/// Greedy top-down construction. A node becomes a leaf when it is pure, at
/// the depth cap, or has no split leaving `min_leaf` rows on each side.
/// Impure nodes split on the lowest weighted Gini even if it does not drop,
/// so patterns like XOR are still separated one level further down.
pub fn dt_fit(x: &[Vec<f64>], y: &[Label], params: &TreeParams) -> Result<TreeModel, ClassifyError> {
    let dim = check_training(x, y)?;
    if params.min_leaf == 0 {
        return Err(ClassifyError::Param("min_leaf must be >= 1".into()));
    }
    let mut nodes = vec![Node::Leaf(Label::Fall)];
    // (node slot, row indices, depth)
    let mut stack = vec![(0usize, (0..x.len()).collect::<Vec<_>>(), 0usize)];
    while let Some((slot, idx, depth)) = stack.pop() {
        let falls = idx.iter().filter(|&&i| y[i] == Label::Fall).count();
        let pure = falls == 0 || falls == idx.len();
        let split = if pure || depth >= params.max_depth || idx.len() < params.min_leaf {
            None
        } else {
            best_split(x, y, &idx, params.min_leaf)
        };
        let Some(split) = split else {
            nodes[slot] = Node::Leaf(majority(falls, idx.len()));
            continue;
        };
        let (left_idx, right_idx): (Vec<usize>, Vec<usize>) = idx
            .iter()
            .partition(|&&i| x[i][split.feature] <= split.threshold);
        let left = nodes.len();
        let right = left + 1;
        nodes.push(Node::Leaf(Label::Fall));
        nodes.push(Node::Leaf(Label::Fall));
        nodes[slot] = Node::Split {
            feature: split.feature,
            threshold: split.threshold,
            left,
            right,
        };
        stack.push((right, right_idx, depth + 1));
        stack.push((left, left_idx, depth + 1));
    }
    Ok(TreeModel { nodes, dim })
}

impl TreeModel {
    pub fn predict(&self, x: &[f64]) -> Result<Label, ClassifyError> {
        check_dim(self.dim, x)?;
        let mut at = 0;
        loop {
            match self.nodes[at] {
                Node::Leaf(label) => return Ok(label),
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => at = if x[feature] <= threshold { left } else { right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], at: usize) -> usize {
            match nodes[at] {
                Node::Leaf(_) => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf(_))).count()
    }
}
