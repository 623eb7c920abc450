//! Duration-prediction harness: dataset assembly, k-fold cross-validation,
//! regressor roster and RMSE/MAPE scoring against both the estimated and
//! the reported duration targets.

mod knn;
mod linear;
mod tree;

pub use knn::KnnRegressor;
pub use linear::LinearRegressor;
pub use tree::{GradientBoostRegressor, RegressionTree};

use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Interface every regression model presents to the harness. `fit` only
/// ever receives training rows, so test targets cannot leak.
pub trait Regressor {
    fn fit(&mut self, x: &[Vec<f64>], y: &[f64]) -> Result<()>;
    fn predict(&self, x: &[Vec<f64>]) -> Result<Vec<f64>>;
    /// Anything unusual that happened during fitting (e.g. ridge fallback).
    fn notes(&self) -> Vec<String> {
        Vec::new()
    }
}

/// Feature matrix plus both duration targets.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub feature_names: Vec<String>,
    pub x: Vec<Vec<f64>>,
    /// Durations from incident reports, minutes.
    pub y_reported: Vec<f64>,
    /// Impact-based durations from segmentation, minutes.
    pub y_estimated: Vec<f64>,
}

impl Dataset {
    pub fn validate(&self) -> Result<()> {
        let n = self.x.len();
        if self.y_reported.len() != n {
            return Err(Error::LengthMismatch { left: n, right: self.y_reported.len() });
        }
        if self.y_estimated.len() != n {
            return Err(Error::LengthMismatch { left: n, right: self.y_estimated.len() });
        }
        for (i, row) in self.x.iter().enumerate() {
            if row.len() != self.feature_names.len() {
                return Err(Error::InvalidParam(format!(
                    "row {i} has {} features, expected {}",
                    row.len(),
                    self.feature_names.len()
                )));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidParam(format!("non-finite feature in row {i}")));
            }
        }
        if self
            .y_reported
            .iter()
            .chain(&self.y_estimated)
            .any(|v| !v.is_finite())
        {
            return Err(Error::InvalidParam("non-finite target".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TargetKind {
    Estimated,
    Reported,
}

impl TargetKind {
    fn values<'a>(&self, ds: &'a Dataset) -> &'a [f64] {
        match self {
            TargetKind::Estimated => &ds.y_estimated,
            TargetKind::Reported => &ds.y_reported,
        }
    }
}

/// Root mean squared error between actual and predicted durations.
pub fn rmse(actual: &[f64], predicted: &[f64]) -> Result<f64> {
    if actual.is_empty() {
        return Err(Error::EmptyInput);
    }
    if actual.len() != predicted.len() {
        return Err(Error::LengthMismatch { left: actual.len(), right: predicted.len() });
    }
    let sum: f64 = actual
        .iter()
        .zip(predicted)
        .map(|(a, f)| (a - f) * (a - f))
        .sum();
    Ok((sum / actual.len() as f64).sqrt())
}

/// Mean absolute percentage error, in percent. All actual values must be
/// strictly positive.
pub fn mape(actual: &[f64], predicted: &[f64]) -> Result<f64> {
    if actual.is_empty() {
        return Err(Error::EmptyInput);
    }
    if actual.len() != predicted.len() {
        return Err(Error::LengthMismatch { left: actual.len(), right: predicted.len() });
    }
    if let Some(i) = actual.iter().position(|&a| a <= 0.0) {
        return Err(Error::InvalidParam(format!(
            "mape requires positive actuals, got {} at index {i}",
            actual[i]
        )));
    }
    let sum: f64 = actual
        .iter()
        .zip(predicted)
        .map(|(a, f)| ((a - f) / a).abs())
        .sum();
    Ok(100.0 * sum / actual.len() as f64)
}

/// Disjoint index folds partitioning `0..n`, sizes differing by at most one,
/// shuffled deterministically by `seed`.
pub fn kfold_indices(n: usize, k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k == 0 || n < k {
        return Err(Error::CrossValidation(format!("cannot split {n} rows into {k} folds")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    idx.shuffle(&mut rng);
    let base = n / k;
    let extra = n % k;
    let mut folds = Vec::with_capacity(k);
    let mut cursor = 0usize;
    for f in 0..k {
        let size = base + usize::from(f < extra);
        folds.push(idx[cursor..cursor + size].to_vec());
        cursor += size;
    }
    Ok(folds)
}

/// Native model roster. SVM or other external regressors plug in through
/// the [`Regressor`] trait and [`cross_validate`] directly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum ModelSpec {
    Knn { k: usize },
    Linear,
    Tree { n_trees: usize, max_depth: usize, learning_rate: f64 },
}

impl ModelSpec {
    pub fn knn_default() -> Self {
        ModelSpec::Knn { k: 5 }
    }

    pub fn tree_default() -> Self {
        ModelSpec::Tree { n_trees: 100, max_depth: 3, learning_rate: 0.1 }
    }

    pub fn parse_list(raw: &str) -> Result<Vec<ModelSpec>> {
        raw.split(',')
            .map(|s| match s.trim().to_ascii_lowercase().as_str() {
                "knn" => Ok(ModelSpec::knn_default()),
                "linear" => Ok(ModelSpec::Linear),
                "tree" | "gbdt" => Ok(ModelSpec::tree_default()),
                other => Err(Error::InvalidParam(format!("unknown model {other:?}"))),
            })
            .collect()
    }

    pub fn name(&self) -> &'static str {
        match self {
            ModelSpec::Knn { .. } => "knn",
            ModelSpec::Linear => "linear",
            ModelSpec::Tree { .. } => "tree",
        }
    }

    pub fn describe(&self) -> String {
        match self {
            ModelSpec::Knn { k } => format!("knn(k={k})"),
            ModelSpec::Linear => "linear_least_squares".to_string(),
            ModelSpec::Tree { n_trees, max_depth, learning_rate } => {
                format!("gbdt(n_trees={n_trees},max_depth={max_depth},lr={learning_rate})")
            }
        }
    }

    pub fn build(&self) -> Box<dyn Regressor> {
        match *self {
            ModelSpec::Knn { k } => Box::new(KnnRegressor::new(k)),
            ModelSpec::Linear => Box::new(LinearRegressor::new()),
            ModelSpec::Tree { n_trees, max_depth, learning_rate } => {
                Box::new(GradientBoostRegressor::new(n_trees, max_depth, learning_rate))
            }
        }
    }

    /// Deterministic tuning grid searched inside each training fold when
    /// tuning is enabled.
    pub fn grid(&self) -> Vec<ModelSpec> {
        match self {
            ModelSpec::Knn { .. } => vec![3, 5, 10].into_iter().map(|k| ModelSpec::Knn { k }).collect(),
            ModelSpec::Linear => vec![ModelSpec::Linear],
            ModelSpec::Tree { learning_rate, .. } => {
                let mut out = Vec::new();
                for n_trees in [50, 100] {
                    for max_depth in [2, 3] {
                        out.push(ModelSpec::Tree { n_trees, max_depth, learning_rate: *learning_rate });
                    }
                }
                out
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportCell {
    pub model: String,
    pub target: TargetKind,
    pub hyperparameters: String,
    pub rmse: f64,
    pub mape: f64,
    pub fold_rmse: Vec<f64>,
    pub fold_mape: Vec<f64>,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub seed: u64,
    pub folds: usize,
    pub tuned: bool,
    pub cells: Vec<ReportCell>,
}

impl EvaluationReport {
    pub fn cell(&self, model: &str, target: TargetKind) -> Option<&ReportCell> {
        self.cells.iter().find(|c| c.model == model && c.target == target)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    /// Table-shaped CSV: one row per model, est/rep columns side by side.
    pub fn write_table_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        writeln!(w, "model,rmse_est,rmse_rep,mape_est,mape_rep").map_err(|e| Error::io(path, e))?;
        let mut models: Vec<&str> = Vec::new();
        for c in &self.cells {
            if !models.contains(&c.model.as_str()) {
                models.push(&c.model);
            }
        }
        for m in models {
            let est = self.cell(m, TargetKind::Estimated);
            let rep = self.cell(m, TargetKind::Reported);
            writeln!(
                w,
                "{},{},{},{},{}",
                m,
                est.map_or(String::new(), |c| c.rmse.to_string()),
                rep.map_or(String::new(), |c| c.rmse.to_string()),
                est.map_or(String::new(), |c| c.mape.to_string()),
                rep.map_or(String::new(), |c| c.mape.to_string()),
            )
            .map_err(|e| Error::io(path, e))?;
        }
        Ok(())
    }
}

/// Z-scoring statistics computed from training rows only.
struct Scaler {
    mean: Vec<f64>,
    std: Vec<f64>,
}

impl Scaler {
    fn fit(x: &[Vec<f64>]) -> Self {
        let d = x.first().map_or(0, Vec::len);
        let n = x.len() as f64;
        let mut mean = vec![0.0; d];
        for row in x {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        for m in &mut mean {
            *m /= n;
        }
        let mut var = vec![0.0; d];
        for row in x {
            for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let std = var
            .into_iter()
            .map(|s| {
                let sd = (s / n).sqrt();
                if sd > 0.0 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, std }
    }

    fn transform(&self, x: &[Vec<f64>]) -> Vec<Vec<f64>> {
        x.iter()
            .map(|row| {
                row.iter()
                    .zip(&self.mean)
                    .zip(&self.std)
                    .map(|((v, m), s)| (v - m) / s)
                    .collect()
            })
            .collect()
    }
}

fn gather(x: &[Vec<f64>], idx: &[usize]) -> Vec<Vec<f64>> {
    idx.iter().map(|&i| x[i].clone()).collect()
}

fn gather1(y: &[f64], idx: &[usize]) -> Vec<f64> {
    idx.iter().map(|&i| y[i]).collect()
}

pub struct CvOutcome {
    pub fold_rmse: Vec<f64>,
    pub fold_mape: Vec<f64>,
    pub notes: Vec<String>,
}

/// Cross-validate one model factory against one target vector. Features are
/// z-scored with training-fold statistics only.
pub fn cross_validate<F>(
    x: &[Vec<f64>],
    y: &[f64],
    folds: &[Vec<usize>],
    mut make: F,
) -> Result<CvOutcome>
where
    F: FnMut() -> Box<dyn Regressor>,
{
    let n = x.len();
    let mut fold_rmse = Vec::with_capacity(folds.len());
    let mut fold_mape = Vec::with_capacity(folds.len());
    let mut notes = Vec::new();
    for test_idx in folds {
        let in_test = {
            let mut mask = vec![false; n];
            for &i in test_idx {
                mask[i] = true;
            }
            mask
        };
        let train_idx: Vec<usize> = (0..n).filter(|&i| !in_test[i]).collect();
        if train_idx.len() < 2 {
            return Err(Error::CrossValidation(format!(
                "fold with {} training rows",
                train_idx.len()
            )));
        }
        let x_train = gather(x, &train_idx);
        let y_train = gather1(y, &train_idx);
        let scaler = Scaler::fit(&x_train);
        let x_train = scaler.transform(&x_train);
        let x_test = scaler.transform(&gather(x, test_idx));
        let y_test = gather1(y, test_idx);
        let mut model = make();
        model.fit(&x_train, &y_train)?;
        let preds = model.predict(&x_test)?;
        for note in model.notes() {
            if !notes.contains(&note) {
                notes.push(note);
            }
        }
        fold_rmse.push(rmse(&y_test, &preds)?);
        fold_mape.push(mape(&y_test, &preds)?);
    }
    Ok(CvOutcome { fold_rmse, fold_mape, notes })
}

/// Pick the grid candidate with the lowest RMSE on an inner 3-fold split of
/// the training rows. Fully deterministic; ties keep the first candidate.
fn tune_on_train(
    x: &[Vec<f64>],
    y: &[f64],
    train_idx: &[usize],
    candidates: &[ModelSpec],
    seed: u64,
) -> Result<ModelSpec> {
    if candidates.len() == 1 {
        return Ok(candidates[0]);
    }
    let x_train = gather(x, train_idx);
    let y_train = gather1(y, train_idx);
    let inner_k = 3.min(x_train.len());
    let inner = kfold_indices(x_train.len(), inner_k, seed ^ 0x5eed)?;
    let mut best: Option<(f64, ModelSpec)> = None;
    for cand in candidates {
        let outcome = cross_validate(&x_train, &y_train, &inner, || cand.build())?;
        let score = outcome.fold_rmse.iter().sum::<f64>() / outcome.fold_rmse.len() as f64;
        if best.map_or(true, |(b, _)| score < b) {
            best = Some((score, *cand));
        }
    }
    Ok(best.unwrap().1)
}

#[derive(Debug, Clone, Copy)]
pub struct ComparisonOptions {
    pub folds: usize,
    pub seed: u64,
    /// Grid-search hyperparameters inside each training fold.
    pub tune: bool,
}

impl Default for ComparisonOptions {
    fn default() -> Self {
        Self { folds: 10, seed: 7, tune: false }
    }
}

/// Score every model against both targets with k-fold cross-validation.
pub fn run_comparison(
    dataset: &Dataset,
    models: &[ModelSpec],
    opts: &ComparisonOptions,
) -> Result<EvaluationReport> {
    dataset.validate()?;
    if models.is_empty() {
        return Err(Error::InvalidParam("empty model list".into()));
    }
    let n = dataset.len();
    let folds = kfold_indices(n, opts.folds, opts.seed)?;
    let mut cells = Vec::new();
    for spec in models {
        for target in [TargetKind::Estimated, TargetKind::Reported] {
            let y = target.values(dataset);
            let (chosen, notes_prefix) = if opts.tune {
                let all: Vec<usize> = (0..n).collect();
                let chosen = tune_on_train(&dataset.x, y, &all, &spec.grid(), opts.seed)?;
                (chosen, vec![format!("tuned to {}", chosen.describe())])
            } else {
                (*spec, Vec::new())
            };
            let outcome = cross_validate(&dataset.x, y, &folds, || chosen.build())?;
            let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
            let mut notes = notes_prefix;
            notes.extend(outcome.notes);
            cells.push(ReportCell {
                model: spec.name().to_string(),
                target,
                hyperparameters: chosen.describe(),
                rmse: mean(&outcome.fold_rmse),
                mape: mean(&outcome.fold_mape),
                fold_rmse: outcome.fold_rmse,
                fold_mape: outcome.fold_mape,
                notes,
            });
        }
    }
    Ok(EvaluationReport {
        seed: opts.seed,
        folds: opts.folds,
        tuned: opts.tune,
        cells,
    })
}
