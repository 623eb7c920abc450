//! Gradient-boosted regression trees built from scratch: squared-error
//! splits, depth-limited CART base learners, shrinkage on residuals.
//! Everything is deterministic — features are scanned in order and ties
//! keep the first candidate split.

use crate::error::{Error, Result};

use super::Regressor;

const MIN_LEAF: usize = 5;

#[derive(Debug, Clone)]
enum Node {
    Leaf {
        value: f64,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

/// A single depth-limited regression tree. Public so it can be used as a
/// standalone [`Regressor`] or inspected in tests.
#[derive(Debug, Clone)]
pub struct RegressionTree {
    max_depth: usize,
    nodes: Vec<Node>,
}

impl RegressionTree {
    pub fn new(max_depth: usize) -> Self {
        Self { max_depth, nodes: Vec::new() }
    }

    fn mean(y: &[f64], idx: &[usize]) -> f64 {
        idx.iter().map(|&i| y[i]).sum::<f64>() / idx.len() as f64
    }

    /// Best (feature, threshold) by SSE reduction, or None if no split
    /// improves on the parent or respects the leaf minimum.
    fn best_split(x: &[Vec<f64>], y: &[f64], idx: &[usize]) -> Option<(usize, f64)> {
        let n = idx.len();
        if n < 2 * MIN_LEAF {
            return None;
        }
        let total_sum: f64 = idx.iter().map(|&i| y[i]).sum();
        let total_sq: f64 = idx.iter().map(|&i| y[i] * y[i]).sum();
        let parent_sse = total_sq - total_sum * total_sum / n as f64;
        let mut best: Option<(f64, usize, f64)> = None; // (sse, feature, threshold)
        let d = x[0].len();
        let mut order = idx.to_vec();
        for f in 0..d {
            order.sort_by(|&a, &b| x[a][f].partial_cmp(&x[b][f]).unwrap().then(a.cmp(&b)));
            let mut left_sum = 0.0;
            let mut left_sq = 0.0;
            for (pos, &i) in order.iter().enumerate().take(n - 1) {
                left_sum += y[i];
                left_sq += y[i] * y[i];
                let nl = pos + 1;
                let nr = n - nl;
                if nl < MIN_LEAF || nr < MIN_LEAF {
                    continue;
                }
                // Can't split between equal feature values.
                if x[order[pos + 1]][f] <= x[i][f] {
                    continue;
                }
                let right_sum = total_sum - left_sum;
                let right_sq = total_sq - left_sq;
                let sse = (left_sq - left_sum * left_sum / nl as f64)
                    + (right_sq - right_sum * right_sum / nr as f64);
                if best.map_or(sse < parent_sse - 1e-12, |(b, _, _)| sse < b) {
                    let threshold = 0.5 * (x[i][f] + x[order[pos + 1]][f]);
                    best = Some((sse, f, threshold));
                }
            }
        }
        best.map(|(_, f, t)| (f, t))
    }

    fn grow(&mut self, x: &[Vec<f64>], y: &[f64], idx: &[usize], depth: usize) -> usize {
        if depth < self.max_depth {
            if let Some((feature, threshold)) = Self::best_split(x, y, idx) {
                let (li, ri): (Vec<usize>, Vec<usize>) =
                    idx.iter().partition(|&&i| x[i][feature] <= threshold);
                let slot = self.nodes.len();
                self.nodes.push(Node::Leaf { value: 0.0 }); // placeholder
                let left = self.grow(x, y, &li, depth + 1);
                let right = self.grow(x, y, &ri, depth + 1);
                self.nodes[slot] = Node::Split { feature, threshold, left, right };
                return slot;
            }
        }
        self.nodes.push(Node::Leaf { value: Self::mean(y, idx) });
        self.nodes.len() - 1
    }

    fn predict_one(&self, row: &[f64]) -> f64 {
        let mut at = 0usize;
        loop {
            match self.nodes[at] {
                Node::Leaf { value } => return value,
                Node::Split { feature, threshold, left, right } => {
                    at = if row[feature] <= threshold { left } else { right };
                }
            }
        }
    }
}

impl Regressor for RegressionTree {
    fn fit(&mut self, x: &[Vec<f64>], y: &[f64]) -> Result<()> {
        if x.is_empty() {
            return Err(Error::EmptyInput);
        }
        if x.len() != y.len() {
            return Err(Error::LengthMismatch { left: x.len(), right: y.len() });
        }
        self.nodes.clear();
        let idx: Vec<usize> = (0..x.len()).collect();
        self.grow(x, y, &idx, 0);
        Ok(())
    }

    fn predict(&self, x: &[Vec<f64>]) -> Result<Vec<f64>> {
        if self.nodes.is_empty() {
            return Err(Error::Degenerate("tree predict before fit".into()));
        }
        Ok(x.iter().map(|r| self.predict_one(r)).collect())
    }
}

/// Gradient boosting on squared error: the base prediction is the target
/// mean and each tree fits the current residuals, scaled by the learning
/// rate.
#[derive(Debug, Clone)]
pub struct GradientBoostRegressor {
    n_trees: usize,
    max_depth: usize,
    learning_rate: f64,
    base: f64,
    trees: Vec<RegressionTree>,
}

impl GradientBoostRegressor {
    pub fn new(n_trees: usize, max_depth: usize, learning_rate: f64) -> Self {
        Self { n_trees, max_depth, learning_rate, base: 0.0, trees: Vec::new() }
    }
}

impl Regressor for GradientBoostRegressor {
    fn fit(&mut self, x: &[Vec<f64>], y: &[f64]) -> Result<()> {
        if self.n_trees == 0 || self.max_depth == 0 {
            return Err(Error::InvalidParam("gbdt requires n_trees >= 1 and max_depth >= 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err(Error::InvalidParam(format!(
                "gbdt learning rate {} outside (0, 1]",
                self.learning_rate
            )));
        }
        if x.is_empty() {
            return Err(Error::EmptyInput);
        }
        if x.len() != y.len() {
            return Err(Error::LengthMismatch { left: x.len(), right: y.len() });
        }
        self.base = y.iter().sum::<f64>() / y.len() as f64;
        self.trees.clear();
        let mut residual: Vec<f64> = y.iter().map(|v| v - self.base).collect();
        for _ in 0..self.n_trees {
            let mut tree = RegressionTree::new(self.max_depth);
            tree.fit(x, &residual)?;
            let step = tree.predict(x)?;
            for (r, s) in residual.iter_mut().zip(&step) {
                *r -= self.learning_rate * s;
            }
            self.trees.push(tree);
        }
        Ok(())
    }

    fn predict(&self, x: &[Vec<f64>]) -> Result<Vec<f64>> {
        if self.trees.is_empty() {
            return Err(Error::Degenerate("gbdt predict before fit".into()));
        }
        let mut out = vec![self.base; x.len()];
        for tree in &self.trees {
            let step = tree.predict(x)?;
            for (o, s) in out.iter_mut().zip(&step) {
                *o += self.learning_rate * s;
            }
        }
        Ok(out)
    }
}
