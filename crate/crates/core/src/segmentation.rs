//! Disruption segmentation: selectivity power, min-max normalization,
//! first-order derivative, dilation convolution with kernel (1,1,1), and a
//! per-day threshold state machine emitting [`DisruptionInterval`]s.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{DisruptionInterval, MonthlyProfile, SpeedSeries, SLOTS_PER_DAY};
use crate::error::{Error, Result};
use crate::metrics::{moving_window_difference, DifferenceSeries, MetricKind};
use crate::profile::tile_profile;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmentationConfig {
    /// Exponent applied to the raw difference series; > 1 suppresses minor
    /// deviations relative to major ones.
    pub selectivity: f64,
    /// Positive derivative threshold opening a disruption.
    pub p_threshold: f64,
    /// Negative derivative threshold closing a disruption.
    pub n_threshold: f64,
    /// Moving-window length in slots (one hour at 5-minute readings).
    pub window_size: usize,
}

impl Default for SegmentationConfig {
    fn default() -> Self {
        Self {
            selectivity: 2.0,
            p_threshold: 0.3,
            n_threshold: -0.3,
            window_size: 12,
        }
    }
}

impl SegmentationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.selectivity > 0.0) {
            return Err(Error::InvalidParam(format!(
                "selectivity must be > 0, got {}",
                self.selectivity
            )));
        }
        if !(self.p_threshold > 0.0 && self.n_threshold < 0.0) {
            return Err(Error::InvalidParam(format!(
                "thresholds must satisfy p > 0 > n, got p={} n={}",
                self.p_threshold, self.n_threshold
            )));
        }
        if self.window_size == 0 {
            return Err(Error::InvalidParam("window_size must be positive".into()));
        }
        Ok(())
    }
}

/// Min-max bounds of the selectivity-powered difference series. Frozen from
/// a calibration month when streaming; computed from the full series offline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormBounds {
    pub min: f64,
    pub max: f64,
}

impl NormBounds {
    pub fn from_powered(powered: impl IntoIterator<Item = f64>) -> Self {
        let mut min = f64::INFINITY;
        let mut max = f64::NEG_INFINITY;
        for v in powered {
            min = min.min(v);
            max = max.max(v);
        }
        Self { min, max }
    }

    pub fn is_degenerate(&self) -> bool {
        !(self.max > self.min)
    }
}

/// Scale a powered value into [0, 1]; out-of-range values are clamped so
/// frozen calibration bounds stay usable on unseen data.
#[inline]
pub(crate) fn normalize_clamped(p: f64, bounds: NormBounds) -> f64 {
    if bounds.is_degenerate() {
        return 0.0;
    }
    ((p - bounds.min) / (bounds.max - bounds.min)).clamp(0.0, 1.0)
}

/// Kernel (1,1,1) applied left to right; shared by the batch and streaming
/// paths so both produce bit-identical sums.
#[inline]
pub(crate) fn conv3(a: f64, b: f64, c: f64) -> f64 {
    a + b + c
}

/// Same-length convolution with kernel (1,1,1), zero-padded at both ends.
pub fn dilation_convolution(d: &[f64]) -> Vec<f64> {
    let n = d.len();
    (0..n)
        .map(|i| {
            conv3(
                if i > 0 { d[i - 1] } else { 0.0 },
                d[i],
                if i + 1 < n { d[i + 1] } else { 0.0 },
            )
        })
        .collect()
}

/// Output of the preprocessing stage.
#[derive(Debug, Clone, PartialEq)]
pub struct Preprocessed {
    /// Normalized powered difference series, in [0, 1].
    pub nts: Vec<f64>,
    /// Convolved first-order derivative of `nts`.
    pub cts: Vec<f64>,
    /// True when normalization was degenerate (constant powered series);
    /// `nts` and `cts` are all zero in that case.
    pub degenerate: bool,
}

/// Power, normalize against explicit bounds, differentiate, convolve.
pub fn preprocess_with_bounds(
    values: &[f64],
    cfg: &SegmentationConfig,
    bounds: NormBounds,
) -> Result<Preprocessed> {
    cfg.validate()?;
    if values.len() < 2 {
        return Err(Error::SeriesTooShort {
            len: values.len(),
            window: 2,
        });
    }
    let degenerate = bounds.is_degenerate();
    let nts: Vec<f64> = values
        .iter()
        .map(|&v| normalize_clamped(v.powf(cfg.selectivity), bounds))
        .collect();
    let mut dts = vec![0.0; nts.len()];
    for i in 1..nts.len() {
        dts[i] = nts[i] - nts[i - 1];
    }
    let cts = dilation_convolution(&dts);
    Ok(Preprocessed { nts, cts, degenerate })
}

/// Bounds of the powered series, as used by offline normalization.
pub fn powered_bounds(values: &[f64], selectivity: f64) -> NormBounds {
    NormBounds::from_powered(values.iter().map(|&v| v.powf(selectivity)))
}

/// Full offline preprocessing: bounds are taken from the series itself.
pub fn preprocess(ts: &DifferenceSeries, cfg: &SegmentationConfig) -> Result<Preprocessed> {
    let bounds = powered_bounds(&ts.values, cfg.selectivity);
    preprocess_with_bounds(&ts.values, cfg, bounds)
}

/// The threshold state machine shared by offline segmentation and the
/// streaming detector. Fed one (slot, cts, nts) triple at a time, in order.
#[derive(Debug, Clone)]
pub(crate) struct SegmentMachine {
    p_threshold: f64,
    n_threshold: f64,
    window_size: usize,
    sign: i8,
    /// (global slot, cts, nts) of the current entry peak.
    enter: Option<(usize, f64, f64)>,
    /// (global slot, cts) of the current exit peak.
    exit: Option<(usize, f64)>,
    intervals: Vec<DisruptionInterval>,
}

/// State-machine transition visible to the streaming event log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Transition {
    /// Entry peak set or refreshed at this slot; payload is nts there.
    Open(usize, f64),
    /// Exit peak set or refreshed at this slot; payload is nts there.
    Close(usize, f64),
}

impl SegmentMachine {
    pub(crate) fn new(cfg: &SegmentationConfig) -> Self {
        Self {
            p_threshold: cfg.p_threshold,
            n_threshold: cfg.n_threshold,
            window_size: cfg.window_size,
            sign: 0,
            enter: None,
            exit: None,
            intervals: Vec::new(),
        }
    }

    /// Emit the pending interval if both peaks are set and ordered. The raw
    /// exit peak lags the real recovery by one window (the moving difference
    /// only clears once the last disrupted slot leaves the window), so the
    /// emitted exit index is pulled back by `window_size - 1`; on a sharp
    /// dip this recovers the injected span exactly.
    fn flush_pair(&mut self) {
        if let (Some((e_slot, _, e_nts)), Some((x_slot, _))) = (self.enter, self.exit) {
            if x_slot + 1 >= self.window_size {
                let corrected = x_slot + 1 - self.window_size;
                if corrected > e_slot {
                    let day = e_slot / SLOTS_PER_DAY;
                    self.intervals.push(DisruptionInterval {
                        day_index: day,
                        enter_idx: e_slot - day * SLOTS_PER_DAY,
                        exit_idx: corrected - day * SLOTS_PER_DAY,
                        metric_peak: e_nts,
                    });
                }
            }
        }
        self.enter = None;
        self.exit = None;
    }

    pub(crate) fn step(&mut self, slot: usize, cts: f64, nts: f64) -> Option<Transition> {
        if slot > 0 && slot % SLOTS_PER_DAY == 0 {
            self.flush_pair();
            self.sign = 0;
        }
        if cts > self.p_threshold {
            if self.sign == 1 {
                // Consecutive positive peaks: keep the largest.
                if let Some((_, e_cts, _)) = self.enter {
                    if cts > e_cts {
                        self.enter = Some((slot, cts, nts));
                        return Some(Transition::Open(slot, nts));
                    }
                }
            } else {
                // New positive run: the previous complete pair, if any,
                // becomes an interval of its own.
                self.flush_pair();
                self.sign = 1;
                self.enter = Some((slot, cts, nts));
                return Some(Transition::Open(slot, nts));
            }
        } else if cts < self.n_threshold {
            if self.sign == -1 {
                // Consecutive negative peaks: keep the most negative.
                if let Some((_, x_cts)) = self.exit {
                    if cts < x_cts {
                        self.exit = Some((slot, cts));
                        return Some(Transition::Close(slot, nts));
                    }
                }
            } else {
                self.sign = -1;
                self.exit = Some((slot, cts));
                return Some(Transition::Close(slot, nts));
            }
        }
        None
    }

    pub(crate) fn finish(&mut self) -> Vec<DisruptionInterval> {
        self.flush_pair();
        self.sign = 0;
        std::mem::take(&mut self.intervals)
    }
}

/// Walk the convolved derivative and emit day-relative disruption intervals.
pub fn segment(pre: &Preprocessed, cfg: &SegmentationConfig) -> Result<Vec<DisruptionInterval>> {
    cfg.validate()?;
    if pre.cts.len() % SLOTS_PER_DAY != 0 {
        return Err(Error::PartialDay {
            len: pre.cts.len(),
            slots_per_day: SLOTS_PER_DAY,
        });
    }
    let mut machine = SegmentMachine::new(cfg);
    for (i, (&c, &n)) in pre.cts.iter().zip(&pre.nts).enumerate() {
        machine.step(i, c, n);
    }
    Ok(machine.finish())
}

/// Convenience: preprocess and segment in one call.
pub fn segment_series(
    ts: &DifferenceSeries,
    cfg: &SegmentationConfig,
) -> Result<(Preprocessed, Vec<DisruptionInterval>)> {
    let pre = preprocess(ts, cfg)?;
    let intervals = segment(&pre, cfg)?;
    Ok((pre, intervals))
}

/// Pick the largest disruption on a day: the interval with maximal
/// integrated normalized difference, ties broken by earliest entry.
pub fn select_disruption_for_incident<'a>(
    intervals: &'a [DisruptionInterval],
    nts: &[f64],
) -> Option<&'a DisruptionInterval> {
    let area = |iv: &DisruptionInterval| -> f64 {
        let base = iv.day_index * SLOTS_PER_DAY;
        nts[base + iv.enter_idx..base + iv.exit_idx].iter().sum()
    };
    intervals
        .iter()
        .fold(None, |best: Option<(&DisruptionInterval, f64)>, iv| {
            let a = area(iv);
            match best {
                Some((b, ba)) if a > ba || (a == ba && iv.enter_idx < b.enter_idx) => Some((iv, a)),
                None => Some((iv, a)),
                keep => keep,
            }
        })
        .map(|(iv, _)| iv)
}

/// Impact-based duration of a segmented interval, in minutes.
pub fn estimate_duration(interval: &DisruptionInterval) -> u32 {
    interval.duration_minutes()
}

/// Wasserstein moving-window difference restricted to the interval, min-max
/// normalized over the interval's day so shapes compare across stations.
pub fn extract_disruption_shape(
    series: &SpeedSeries,
    profile: &MonthlyProfile,
    interval: &DisruptionInterval,
    window_size: usize,
) -> Result<Vec<f64>> {
    let n_days = series.len() / SLOTS_PER_DAY;
    if series.len() % SLOTS_PER_DAY != 0 {
        return Err(Error::PartialDay {
            len: series.len(),
            slots_per_day: SLOTS_PER_DAY,
        });
    }
    if interval.day_index >= n_days {
        return Err(Error::InvalidParam(format!(
            "interval day {} outside series of {} days",
            interval.day_index, n_days
        )));
    }
    let tiled = tile_profile(profile, n_days)?;
    let diff = moving_window_difference(series, &tiled, window_size, MetricKind::Wasserstein)?;
    let day = &diff.values[interval.day_index * SLOTS_PER_DAY..(interval.day_index + 1) * SLOTS_PER_DAY];
    let lo = day.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = day.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return Err(Error::Degenerate(format!(
            "constant difference on day {}",
            interval.day_index
        )));
    }
    Ok(day[interval.enter_idx..interval.exit_idx]
        .iter()
        .map(|&v| (v - lo) / (hi - lo))
        .collect())
}

/// Export intervals as `station_id,day_index,enter_idx,exit_idx,est_duration_min`.
pub fn write_intervals_csv(
    path: impl AsRef<Path>,
    rows: &[(String, DisruptionInterval)],
) -> Result<()> {
    let path = path.as_ref();
    let mut w = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    writeln!(w, "station_id,day_index,enter_idx,exit_idx,est_duration_min")
        .map_err(|e| Error::io(path, e))?;
    for (station, iv) in rows {
        writeln!(
            w,
            "{},{},{},{},{}",
            station,
            iv.day_index,
            iv.enter_idx,
            iv.exit_idx,
            iv.duration_minutes()
        )
        .map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

/// Load intervals written by [`write_intervals_csv`].
pub fn load_intervals_csv(path: impl AsRef<Path>) -> Result<Vec<(String, DisruptionInterval)>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::MalformedRow {
            path: path.to_path_buf(),
            line: e.position().map(|p| p.line()).unwrap_or(0),
            reason: e.to_string(),
        })?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let parse = |idx: usize, what: &str| -> Result<usize> {
            rec[idx].parse().map_err(|_| Error::MalformedRow {
                path: path.to_path_buf(),
                line,
                reason: format!("bad {what} {:?}", &rec[idx]),
            })
        };
        out.push((
            rec[0].to_string(),
            DisruptionInterval::new(parse(1, "day_index")?, parse(2, "enter_idx")?, parse(3, "exit_idx")?, 0.0)?,
        ));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::{TimeZone, Utc};
    use proptest::prelude::*;

    fn diff_series(values: Vec<f64>) -> DifferenceSeries {
        DifferenceSeries {
            station_id: "s".into(),
            values,
            window_size: 12,
            metric: MetricKind::Chebyshev,
        }
    }

    #[test]
    fn convolution_worked_example() {
        let out = dilation_convolution(&[0.3, 0.1, 0.1, 0.2, 0.2]);
        assert_eq!(&out[1..4], &[0.5, 0.4, 0.5]);
    }

    #[test]
    fn all_zero_series_is_degenerate_all_zero_cts() {
        let pre = preprocess(&diff_series(vec![0.0; 288]), &SegmentationConfig::default()).unwrap();
        assert!(pre.degenerate);
        assert!(pre.cts.iter().all(|&v| v == 0.0));
        assert!(pre.nts.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn all_zero_cts_emits_nothing() {
        let pre = Preprocessed {
            nts: vec![0.0; SLOTS_PER_DAY],
            cts: vec![0.0; SLOTS_PER_DAY],
            degenerate: false,
        };
        assert!(segment(&pre, &SegmentationConfig::default()).unwrap().is_empty());
    }

    #[test]
    fn config_validation() {
        let mut cfg = SegmentationConfig::default();
        cfg.p_threshold = -0.1;
        assert!(cfg.validate().is_err());
        cfg = SegmentationConfig::default();
        cfg.n_threshold = 0.1;
        assert!(cfg.validate().is_err());
        cfg = SegmentationConfig::default();
        cfg.selectivity = 0.0;
        assert!(cfg.validate().is_err());
    }

    /// One clean dip on a flat profile: slots 100..=140 at half speed.
    fn clean_dip_day() -> (SpeedSeries, Vec<f64>) {
        let baseline = vec![60.0; SLOTS_PER_DAY];
        let mut vals = baseline.clone();
        for v in vals.iter_mut().take(141).skip(100) {
            *v = 30.0;
        }
        let s = SpeedSeries::new(
            "s",
            Utc.with_ymd_and_hms(2020, 3, 1, 0, 0, 0).unwrap(),
            vals,
            vec![false; SLOTS_PER_DAY],
        )
        .unwrap();
        (s, baseline)
    }

    #[test]
    fn clean_dip_segments_within_one_window() {
        let cfg = SegmentationConfig::default();
        let (s, baseline) = clean_dip_day();
        let diff = moving_window_difference(&s, &baseline, cfg.window_size, MetricKind::Chebyshev).unwrap();
        let (_, intervals) = segment_series(&diff, &cfg).unwrap();
        assert_eq!(intervals.len(), 1, "{intervals:?}");
        let iv = &intervals[0];
        assert_eq!(iv.day_index, 0);
        assert!((88..=112).contains(&iv.enter_idx), "enter {}", iv.enter_idx);
        assert!((128..=152).contains(&iv.exit_idx), "exit {}", iv.exit_idx);
        // Duration close to the injected 41-slot span.
        let est = estimate_duration(iv) as i64;
        assert!((est - 205).abs() <= 10, "estimated {est} min");
    }

    #[test]
    fn consecutive_positive_peaks_keep_largest() {
        // Hand-constructed cts: two positive peaks (0.5 then 0.8, no negative
        // between), one negative peak, all on day 0.
        let mut cts = vec![0.0; SLOTS_PER_DAY];
        let mut nts = vec![0.0; SLOTS_PER_DAY];
        cts[40] = 0.5;
        cts[60] = 0.8;
        cts[120] = -0.9;
        for v in nts.iter_mut().take(108).skip(40) {
            *v = 1.0;
        }
        let pre = Preprocessed { nts, cts, degenerate: false };
        let cfg = SegmentationConfig::default();
        let intervals = segment(&pre, &cfg).unwrap();
        assert_eq!(intervals.len(), 1);
        assert_eq!(intervals[0].enter_idx, 60);
        assert_eq!(intervals[0].exit_idx, 120 + 1 - cfg.window_size);
    }

    #[test]
    fn consecutive_negative_peaks_keep_most_negative() {
        let mut cts = vec![0.0; SLOTS_PER_DAY];
        let nts = vec![0.0; SLOTS_PER_DAY];
        cts[40] = 0.9;
        cts[100] = -0.4;
        cts[130] = -0.7;
        let pre = Preprocessed { nts, cts, degenerate: false };
        let cfg = SegmentationConfig::default();
        let intervals = segment(&pre, &cfg).unwrap();
        assert_eq!(intervals.len(), 1);
        assert_eq!(intervals[0].exit_idx, 130 + 1 - cfg.window_size);
    }

    #[test]
    fn two_separated_dips_give_two_intervals() {
        let mut cts = vec![0.0; SLOTS_PER_DAY];
        let nts = vec![0.1; SLOTS_PER_DAY];
        cts[30] = 0.9;
        cts[80] = -0.9;
        cts[150] = 0.8;
        cts[200] = -0.8;
        let pre = Preprocessed { nts, cts, degenerate: false };
        let cfg = SegmentationConfig::default();
        let intervals = segment(&pre, &cfg).unwrap();
        assert_eq!(intervals.len(), 2);
        assert_eq!(intervals[0].enter_idx, 30);
        assert_eq!(intervals[1].enter_idx, 150);
    }

    #[test]
    fn enter_without_exit_is_dropped_at_day_boundary() {
        let mut cts = vec![0.0; 2 * SLOTS_PER_DAY];
        let nts = vec![0.0; 2 * SLOTS_PER_DAY];
        cts[250] = 0.9; // opens, never closes before midnight
        cts[SLOTS_PER_DAY + 50] = -0.9; // close on next day, no open
        let pre = Preprocessed { nts, cts, degenerate: false };
        assert!(segment(&pre, &SegmentationConfig::default()).unwrap().is_empty());
    }

    #[test]
    fn day_indices_are_relative() {
        let mut cts = vec![0.0; 3 * SLOTS_PER_DAY];
        let nts = vec![0.0; 3 * SLOTS_PER_DAY];
        cts[2 * SLOTS_PER_DAY + 40] = 0.9;
        cts[2 * SLOTS_PER_DAY + 90] = -0.9;
        let pre = Preprocessed { nts, cts, degenerate: false };
        let cfg = SegmentationConfig::default();
        let intervals = segment(&pre, &cfg).unwrap();
        assert_eq!(intervals.len(), 1);
        assert_eq!(intervals[0].day_index, 2);
        assert_eq!(intervals[0].enter_idx, 40);
        assert_eq!(intervals[0].exit_idx, 90 + 1 - cfg.window_size);
    }

    #[test]
    fn select_largest_area() {
        let mut nts = vec![0.0; SLOTS_PER_DAY];
        for v in nts.iter_mut().take(60).skip(40) {
            *v = 0.2; // area 4.0
        }
        for v in nts.iter_mut().take(215).skip(200) {
            *v = 0.5; // area 7.5
        }
        let a = DisruptionInterval::new(0, 40, 60, 0.2).unwrap();
        let b = DisruptionInterval::new(0, 200, 215, 0.5).unwrap();
        let intervals = vec![a, b.clone()];
        let chosen = select_disruption_for_incident(&intervals, &nts).unwrap();
        assert_eq!(chosen, &b);
        assert!(select_disruption_for_incident(&[], &nts).is_none());
        let only = &intervals[..1];
        assert_eq!(select_disruption_for_incident(only, &nts).unwrap(), &intervals[0]);
    }

    #[test]
    fn shape_restriction_contract() {
        let cfg = SegmentationConfig::default();
        let (s, _) = clean_dip_day();
        let profile = MonthlyProfile::new("s", vec![60.0; SLOTS_PER_DAY], 1).unwrap();
        let iv = DisruptionInterval::new(0, 99, 140, 1.0).unwrap();
        let shape = extract_disruption_shape(&s, &profile, &iv, cfg.window_size).unwrap();
        assert_eq!(shape.len(), iv.exit_idx - iv.enter_idx);
        assert!(shape.iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn shape_of_constant_day_is_degenerate() {
        let s = SpeedSeries::new(
            "s",
            Utc.with_ymd_and_hms(2020, 3, 1, 0, 0, 0).unwrap(),
            vec![60.0; SLOTS_PER_DAY],
            vec![false; SLOTS_PER_DAY],
        )
        .unwrap();
        let profile = MonthlyProfile::new("s", vec![60.0; SLOTS_PER_DAY], 1).unwrap();
        let iv = DisruptionInterval::new(0, 10, 40, 0.0).unwrap();
        assert!(matches!(
            extract_disruption_shape(&s, &profile, &iv, 12),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn dip_shape_is_unimodal_after_smoothing() {
        let cfg = SegmentationConfig::default();
        // Trapezoidal dip with a monotone ramp in and out.
        let baseline = vec![60.0; SLOTS_PER_DAY];
        let mut vals = baseline.clone();
        for k in 0..6 {
            vals[100 + k] = 60.0 - 5.0 * (k + 1) as f64;
        }
        for v in vals.iter_mut().take(131).skip(106) {
            *v = 30.0;
        }
        for k in 0..6 {
            vals[131 + k] = 30.0 + 5.0 * (k + 1) as f64;
        }
        let s = SpeedSeries::new(
            "s",
            Utc.with_ymd_and_hms(2020, 3, 1, 0, 0, 0).unwrap(),
            vals,
            vec![false; SLOTS_PER_DAY],
        )
        .unwrap();
        let profile = MonthlyProfile::new("s", baseline, 1).unwrap();
        let iv = DisruptionInterval::new(0, 95, 145, 1.0).unwrap();
        let shape = extract_disruption_shape(&s, &profile, &iv, cfg.window_size).unwrap();
        // 3-point moving average, then count strict local maxima.
        let smooth: Vec<f64> = (0..shape.len())
            .map(|i| {
                let lo = i.saturating_sub(1);
                let hi = (i + 1).min(shape.len() - 1);
                shape[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64
            })
            .collect();
        let maxima = (1..smooth.len() - 1)
            .filter(|&i| smooth[i] > smooth[i - 1] && smooth[i] > smooth[i + 1])
            .count();
        assert!(maxima <= 1, "expected a single hill, got {maxima} maxima");
    }

    proptest! {
        #[test]
        fn convolution_matches_naive_loop(d in proptest::collection::vec(-1.0f64..1.0, 2..300)) {
            let fast = dilation_convolution(&d);
            for i in 0..d.len() {
                let mut acc = 0.0;
                for offset in [-1i64, 0, 1] {
                    let j = i as i64 + offset;
                    if j >= 0 && (j as usize) < d.len() {
                        acc += d[j as usize];
                    }
                }
                prop_assert!((fast[i] - acc).abs() < 1e-15);
            }
        }

        #[test]
        fn segmentation_scale_covariant(
            raw in proptest::collection::vec(0.0f64..40.0, SLOTS_PER_DAY..=SLOTS_PER_DAY),
            scale in 0.01f64..100.0,
        ) {
            let cfg = SegmentationConfig::default();
            let a = diff_series(raw.clone());
            let b = diff_series(raw.iter().map(|v| v * scale).collect());
            let (pa, ia) = segment_series(&a, &cfg).unwrap();
            let (pb, ib) = segment_series(&b, &cfg).unwrap();
            for (x, y) in pa.nts.iter().zip(&pb.nts) {
                prop_assert!((x - y).abs() < 1e-9);
            }
            prop_assert_eq!(
                ia.iter().map(|v| (v.day_index, v.enter_idx, v.exit_idx)).collect::<Vec<_>>(),
                ib.iter().map(|v| (v.day_index, v.enter_idx, v.exit_idx)).collect::<Vec<_>>()
            );
        }

        #[test]
        fn intervals_well_formed_and_disjoint(
            raw in proptest::collection::vec(0.0f64..40.0, 2 * SLOTS_PER_DAY..=2 * SLOTS_PER_DAY),
        ) {
            let cfg = SegmentationConfig::default();
            let (_, intervals) = segment_series(&diff_series(raw), &cfg).unwrap();
            for w in intervals.windows(2) {
                if w[0].day_index == w[1].day_index {
                    prop_assert!(w[0].exit_idx <= w[1].enter_idx, "{:?}", w);
                }
            }
            for iv in &intervals {
                prop_assert!(iv.enter_idx < iv.exit_idx && iv.exit_idx < SLOTS_PER_DAY);
            }
        }

        #[test]
        fn thresholds_beyond_derivative_range_emit_nothing(
            raw in proptest::collection::vec(0.0f64..40.0, SLOTS_PER_DAY..=SLOTS_PER_DAY),
        ) {
            let base = SegmentationConfig::default();
            let pre = preprocess(&diff_series(raw), &base).unwrap();
            let peak = pre.cts.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
            let cfg = SegmentationConfig {
                p_threshold: peak + 1.0,
                n_threshold: -(peak + 1.0),
                ..base
            };
            prop_assert!(segment(&pre, &cfg).unwrap().is_empty());
        }
    }
}
