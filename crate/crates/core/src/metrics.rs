//! Pairwise window difference metrics and the sliding-window deviation series.
//!
//! All five metrics compare an observed speed window against the same window
//! of the tiled baseline profile. The sliding computation is causal: the
//! value at slot `i` only looks at slots `i - window_size + 1 ..= i`.

use std::fmt;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::SpeedSeries;
use crate::error::{Error, Result};

pub const DEFAULT_WINDOW: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricKind {
    Chebyshev,
    Wasserstein,
    Cosine,
    Euclidean,
    Minkowski,
}

impl MetricKind {
    pub fn apply(self, u: &[f64], v: &[f64]) -> Result<f64> {
        match self {
            MetricKind::Chebyshev => chebyshev_diff(u, v),
            MetricKind::Wasserstein => wasserstein_diff(u, v),
            MetricKind::Cosine => cosine_diff(u, v),
            MetricKind::Euclidean => euclidean_diff(u, v, None),
            // p = 3 so the family member is distinct from Euclidean here;
            // Manhattan is available as minkowski_diff with p = 1.
            MetricKind::Minkowski => minkowski_diff(u, v, 3.0, None),
        }
    }
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            MetricKind::Chebyshev => "chebyshev",
            MetricKind::Wasserstein => "wasserstein",
            MetricKind::Cosine => "cosine",
            MetricKind::Euclidean => "euclidean",
            MetricKind::Minkowski => "minkowski",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for MetricKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "chebyshev" => Ok(MetricKind::Chebyshev),
            "wasserstein" => Ok(MetricKind::Wasserstein),
            "cosine" => Ok(MetricKind::Cosine),
            "euclidean" => Ok(MetricKind::Euclidean),
            "minkowski" => Ok(MetricKind::Minkowski),
            other => Err(Error::InvalidParam(format!("unknown metric {other:?}"))),
        }
    }
}

/// Day-aligned per-slot deviation of a station from its baseline.
#[derive(Debug, Clone, PartialEq)]
pub struct DifferenceSeries {
    pub station_id: String,
    pub values: Vec<f64>,
    pub window_size: usize,
    pub metric: MetricKind,
}

impl DifferenceSeries {
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        writeln!(w, "slot_index,value").map_err(|e| Error::io(path, e))?;
        for (i, v) in self.values.iter().enumerate() {
            writeln!(w, "{i},{v}").map_err(|e| Error::io(path, e))?;
        }
        Ok(())
    }
}

fn check_pair(u: &[f64], v: &[f64]) -> Result<()> {
    if u.is_empty() || v.is_empty() {
        return Err(Error::EmptyInput);
    }
    if u.len() != v.len() {
        return Err(Error::LengthMismatch {
            left: u.len(),
            right: v.len(),
        });
    }
    Ok(())
}

fn check_weights(u: &[f64], w: Option<&[f64]>) -> Result<()> {
    if let Some(w) = w {
        if w.len() != u.len() {
            return Err(Error::LengthMismatch {
                left: u.len(),
                right: w.len(),
            });
        }
        if w.iter().any(|&x| x < 0.0 || !x.is_finite()) {
            return Err(Error::InvalidParam("weights must be finite and >= 0".into()));
        }
    }
    Ok(())
}

/// Maximum elementwise absolute difference.
pub fn chebyshev_diff(u: &[f64], v: &[f64]) -> Result<f64> {
    check_pair(u, v)?;
    Ok(u.iter()
        .zip(v)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max))
}

/// 1-D earth-mover distance between the equal-weight empirical distributions
/// of the two windows: mean absolute difference of the sorted sequences.
pub fn wasserstein_diff(u: &[f64], v: &[f64]) -> Result<f64> {
    check_pair(u, v)?;
    let mut su = u.to_vec();
    let mut sv = v.to_vec();
    su.sort_by(|a, b| a.total_cmp(b));
    sv.sort_by(|a, b| a.total_cmp(b));
    let sum: f64 = su.iter().zip(&sv).map(|(a, b)| (a - b).abs()).sum();
    Ok(sum / u.len() as f64)
}

/// Cosine similarity of the two windows, in [-1, 1].
pub fn cosine_similarity(u: &[f64], v: &[f64]) -> Result<f64> {
    check_pair(u, v)?;
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    let nu: f64 = u.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nv: f64 = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    if nu == 0.0 || nv == 0.0 {
        return Err(Error::ZeroNorm);
    }
    Ok(dot / (nu * nv))
}

/// One minus the cosine similarity, so disruptions show as positive peaks.
pub fn cosine_diff(u: &[f64], v: &[f64]) -> Result<f64> {
    Ok(1.0 - cosine_similarity(u, v)?)
}

/// Weighted L2 difference; unit weights when `w` is `None`.
pub fn euclidean_diff(u: &[f64], v: &[f64], w: Option<&[f64]>) -> Result<f64> {
    check_pair(u, v)?;
    check_weights(u, w)?;
    let sum: f64 = match w {
        Some(w) => u
            .iter()
            .zip(v)
            .zip(w)
            .map(|((a, b), &wi)| wi * (a - b) * (a - b))
            .sum(),
        None => u.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum(),
    };
    Ok(sum.sqrt())
}

/// Weighted Minkowski difference `(sum w_i |u_i - v_i|^p)^(1/p)`, `p >= 1`.
pub fn minkowski_diff(u: &[f64], v: &[f64], p: f64, w: Option<&[f64]>) -> Result<f64> {
    check_pair(u, v)?;
    check_weights(u, w)?;
    if !(p >= 1.0) {
        return Err(Error::InvalidParam(format!("minkowski p must be >= 1, got {p}")));
    }
    let sum: f64 = match w {
        Some(w) => u
            .iter()
            .zip(v)
            .zip(w)
            .map(|((a, b), &wi)| wi * (a - b).abs().powf(p))
            .sum(),
        None => u.iter().zip(v).map(|(a, b)| (a - b).abs().powf(p)).sum(),
    };
    Ok(sum.powf(1.0 / p))
}

/// Sliding-window deviation of a speed series from the tiled baseline.
///
/// `baseline` must be the tiled profile of the same length as the series.
/// `out[i]` for `i >= window_size - 1` compares the windows ending at `i`
/// (inclusive); the head is padded with the first computed value so output
/// indices stay day-aligned with the input.
pub fn moving_window_difference(
    series: &SpeedSeries,
    baseline: &[f64],
    window_size: usize,
    metric: MetricKind,
) -> Result<DifferenceSeries> {
    let values = series.values();
    if window_size == 0 {
        return Err(Error::InvalidParam("window_size must be positive".into()));
    }
    if values.len() != baseline.len() {
        return Err(Error::LengthMismatch {
            left: values.len(),
            right: baseline.len(),
        });
    }
    if values.len() < window_size {
        return Err(Error::SeriesTooShort {
            len: values.len(),
            window: window_size,
        });
    }
    let mut out = vec![0.0; values.len()];
    for i in (window_size - 1)..values.len() {
        let lo = i + 1 - window_size;
        out[i] = metric.apply(&values[lo..=i], &baseline[lo..=i])?;
    }
    let head = out[window_size - 1];
    for v in out.iter_mut().take(window_size - 1) {
        *v = head;
    }
    Ok(DifferenceSeries {
        station_id: series.station_id.clone(),
        values: out,
        window_size,
        metric,
    })
}
