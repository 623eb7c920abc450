//! Causal streaming detector. Readings arrive one slot at a time;
//! normalization bounds are frozen from a calibration period, and the
//! convolved derivative for slot `i` is finalized as soon as slot `i + 1`
//! arrives (the kernel looks one slot ahead), so every decision lags the
//! data by exactly one slot. The detector drives the same threshold state
//! machine as offline segmentation, making the recovered intervals
//! bit-identical to a batch run over the same values with the same bounds.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::DisruptionInterval;
use crate::error::{Error, Result};
use crate::segmentation::{
    conv3, normalize_clamped, NormBounds, SegmentMachine, SegmentationConfig, Transition,
};

/// A threshold crossing observed by the detector. `slot` is the global slot
/// index of the crossing; `magnitude` is the normalized difference there.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub station_id: String,
    pub slot: usize,
    pub kind: EventKind,
    pub magnitude: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventKind {
    /// Positive derivative peak: a disruption entry candidate.
    Open,
    /// Negative derivative peak: a disruption exit candidate.
    Close,
}

/// Serialize events as newline-delimited JSON, one event per line.
pub fn events_to_ndjson(events: &[Event]) -> Result<String> {
    let mut out = String::new();
    for e in events {
        out.push_str(&serde_json::to_string(e)?);
        out.push('\n');
    }
    Ok(out)
}

pub fn write_events_ndjson(path: impl AsRef<Path>, events: &[Event]) -> Result<()> {
    let path = path.as_ref();
    let mut w = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    w.write_all(events_to_ndjson(events)?.as_bytes())
        .map_err(|e| Error::io(path, e))
}

pub fn load_events_ndjson(path: impl AsRef<Path>) -> Result<Vec<Event>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| Ok(serde_json::from_str(l)?))
        .collect()
}

/// One-pass detector over a single station's difference series.
#[derive(Debug, Clone)]
pub struct Detector {
    station_id: String,
    selectivity: f64,
    bounds: NormBounds,
    machine: SegmentMachine,
    next_slot: usize,
    /// Latest ingested slot, waiting for its successor: (slot, nts, dts).
    pending: Option<(usize, f64, f64)>,
    /// Derivative of the slot before `pending`.
    dts_prev: f64,
    finished: bool,
}

impl Detector {
    /// `bounds` must come from a calibration period (see
    /// [`crate::segmentation::powered_bounds`]); they are frozen for the
    /// detector's lifetime.
    pub fn new(
        station_id: impl Into<String>,
        cfg: &SegmentationConfig,
        bounds: NormBounds,
    ) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            station_id: station_id.into(),
            selectivity: cfg.selectivity,
            bounds,
            machine: SegmentMachine::new(cfg),
            next_slot: 0,
            pending: None,
            dts_prev: 0.0,
            finished: false,
        })
    }

    fn emit(&self, tr: Transition, nts_at: f64) -> Event {
        match tr {
            Transition::Open(slot, _) => Event {
                station_id: self.station_id.clone(),
                slot,
                kind: EventKind::Open,
                magnitude: nts_at,
            },
            Transition::Close(slot, _) => Event {
                station_id: self.station_id.clone(),
                slot,
                kind: EventKind::Close,
                magnitude: nts_at,
            },
        }
    }

    /// Ingest the raw difference value for the next slot. Returns the event
    /// finalized for the *previous* slot, if any.
    pub fn push(&mut self, value: f64) -> Result<Option<Event>> {
        if self.finished {
            return Err(Error::Degenerate("push after finish".into()));
        }
        let nts = normalize_clamped(value.powf(self.selectivity), self.bounds);
        let slot = self.next_slot;
        self.next_slot += 1;
        let dts = match self.pending {
            Some((_, prev_nts, _)) => nts - prev_nts,
            None => 0.0,
        };
        let mut event = None;
        if let Some((p_slot, p_nts, p_dts)) = self.pending.take() {
            let cts = conv3(self.dts_prev, p_dts, dts);
            if let Some(tr) = self.machine.step(p_slot, cts, p_nts) {
                event = Some(self.emit(tr, p_nts));
            }
            self.dts_prev = p_dts;
        }
        self.pending = Some((slot, nts, dts));
        Ok(event)
    }

    /// Finalize the last slot (the kernel's look-ahead is zero-padded, as in
    /// the batch path) and drain completed intervals.
    pub fn finish(&mut self) -> (Option<Event>, Vec<DisruptionInterval>) {
        self.finished = true;
        let mut event = None;
        if let Some((p_slot, p_nts, p_dts)) = self.pending.take() {
            let cts = conv3(self.dts_prev, p_dts, 0.0);
            if let Some(tr) = self.machine.step(p_slot, cts, p_nts) {
                event = Some(self.emit(tr, p_nts));
            }
        }
        (event, self.machine.finish())
    }

    /// Run a whole series through a fresh detector.
    pub fn replay(
        station_id: impl Into<String>,
        cfg: &SegmentationConfig,
        bounds: NormBounds,
        values: &[f64],
    ) -> Result<(Vec<Event>, Vec<DisruptionInterval>)> {
        if values.len() < 2 {
            return Err(Error::SeriesTooShort { len: values.len(), window: 2 });
        }
        let mut det = Detector::new(station_id, cfg, bounds)?;
        let mut events = Vec::new();
        for &v in values {
            if let Some(e) = det.push(v)? {
                events.push(e);
            }
        }
        let (last, intervals) = det.finish();
        events.extend(last);
        Ok((events, intervals))
    }
}
