//! k-nearest-neighbour regressor: mean target of the k closest training
//! rows under Euclidean distance.

use crate::error::{Error, Result};

use super::Regressor;

#[derive(Debug, Clone)]
pub struct KnnRegressor {
    k: usize,
    x: Vec<Vec<f64>>,
    y: Vec<f64>,
}

impl KnnRegressor {
    pub fn new(k: usize) -> Self {
        Self { k, x: Vec::new(), y: Vec::new() }
    }
}

impl Regressor for KnnRegressor {
    fn fit(&mut self, x: &[Vec<f64>], y: &[f64]) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidParam("knn requires k >= 1".into()));
        }
        if x.is_empty() {
            return Err(Error::EmptyInput);
        }
        if x.len() != y.len() {
            return Err(Error::LengthMismatch { left: x.len(), right: y.len() });
        }
        self.x = x.to_vec();
        self.y = y.to_vec();
        Ok(())
    }

    fn predict(&self, x: &[Vec<f64>]) -> Result<Vec<f64>> {
        if self.x.is_empty() {
            return Err(Error::Degenerate("knn predict before fit".into()));
        }
        let k = self.k.min(self.x.len());
        let mut out = Vec::with_capacity(x.len());
        for q in x {
            if q.len() != self.x[0].len() {
                return Err(Error::LengthMismatch { left: q.len(), right: self.x[0].len() });
            }
            // Ties broken by training index for determinism.
            let mut dist: Vec<(f64, usize)> = self
                .x
                .iter()
                .enumerate()
                .map(|(i, row)| {
                    let d2: f64 = row.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum();
                    (d2, i)
                })
                .collect();
            dist.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let sum: f64 = dist[..k].iter().map(|&(_, i)| self.y[i]).sum();
            out.push(sum / k as f64);
        }
        Ok(out)
    }
}
