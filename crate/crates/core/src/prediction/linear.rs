//! Ordinary least squares with an intercept, solved through the normal
//! equations. Falls back to a small ridge penalty when the design matrix is
//! singular, and records that in the model notes.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

use super::Regressor;

const RIDGE_LAMBDA: f64 = 1e-6;

#[derive(Debug, Clone, Default)]
pub struct LinearRegressor {
    /// Intercept followed by one coefficient per feature.
    coef: Vec<f64>,
    ridge_fallback: bool,
}

impl LinearRegressor {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coef
    }

    fn design(x: &[Vec<f64>]) -> DMatrix<f64> {
        let d = x[0].len();
        DMatrix::from_fn(x.len(), d + 1, |r, c| if c == 0 { 1.0 } else { x[r][c - 1] })
    }
}

impl Regressor for LinearRegressor {
    fn fit(&mut self, x: &[Vec<f64>], y: &[f64]) -> Result<()> {
        if x.is_empty() {
            return Err(Error::EmptyInput);
        }
        if x.len() != y.len() {
            return Err(Error::LengthMismatch { left: x.len(), right: y.len() });
        }
        let a = Self::design(x);
        let yv = DVector::from_column_slice(y);
        let ata = a.transpose() * &a;
        let aty = a.transpose() * yv;
        self.ridge_fallback = false;
        let solved = ata.clone().cholesky().map(|ch| ch.solve(&aty)).or_else(|| {
            self.ridge_fallback = true;
            let p = ata.nrows();
            let ridged = ata + DMatrix::identity(p, p) * RIDGE_LAMBDA;
            ridged.cholesky().map(|ch| ch.solve(&aty))
        });
        match solved {
            Some(beta) => {
                self.coef = beta.iter().copied().collect();
                Ok(())
            }
            None => Err(Error::SingularDesign),
        }
    }

    fn predict(&self, x: &[Vec<f64>]) -> Result<Vec<f64>> {
        if self.coef.is_empty() {
            return Err(Error::Degenerate("linear predict before fit".into()));
        }
        let d = self.coef.len() - 1;
        x.iter()
            .map(|row| {
                if row.len() != d {
                    return Err(Error::LengthMismatch { left: row.len(), right: d });
                }
                Ok(self.coef[0]
                    + row.iter().zip(&self.coef[1..]).map(|(v, c)| v * c).sum::<f64>())
            })
            .collect()
    }

    fn notes(&self) -> Vec<String> {
        if self.ridge_fallback {
            vec!["linear: ridge fallback (singular normal equations)".to_string()]
        } else {
            Vec::new()
        }
    }
}
