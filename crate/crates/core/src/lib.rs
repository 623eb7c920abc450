//! Traffic-flow disruption detection from fixed-interval speed readings.
//!
//! The pipeline: ingest speed/incident/station files ([`data`]), build
//! per-station daily baseline profiles ([`profile`]), compute windowed
//! difference series against the baseline ([`metrics`]), segment disruptions
//! with a derivative-threshold state machine ([`segmentation`]), associate
//! incident reports to stations over a resampled road graph
//! ([`association`]), benchmark duration regressors against both reported
//! and impact-estimated targets ([`prediction`]), detect disruptions
//! causally on live streams ([`streaming`]), and generate ground-truth
//! scenarios for end-to-end validation ([`synth`]).

pub mod association;
pub mod data;
pub mod error;
pub mod metrics;
pub mod prediction;
pub mod profile;
pub mod segmentation;
pub mod streaming;
pub mod synth;

pub use data::{
    CoordinateMode, DisruptionInterval, IncidentRecord, IncidentTable, MonthlyProfile,
    SpeedSeries, StationRecord, INTERVAL_SECONDS, SLOTS_PER_DAY,
};
pub use error::{Error, Result};
pub use metrics::{DifferenceSeries, MetricKind};
pub use segmentation::{NormBounds, SegmentationConfig};
