//! Domain types and flat-file ingestion shared by all pipeline stages.
//!
//! Speed readings arrive as fixed 5-minute station aggregates; incidents and
//! stations carry point coordinates in either geographic (WGS84 degrees) or
//! planar (meters) form, selected per dataset via [`CoordinateMode`].

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use chrono::{DateTime, Duration, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of 5-minute slots in a day.
pub const SLOTS_PER_DAY: usize = 288;
/// Fixed reading interval in seconds.
pub const INTERVAL_SECONDS: i64 = 300;

/// How entity coordinates are to be interpreted when computing distances.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CoordinateMode {
    /// WGS84 degrees; distances via a local equirectangular projection.
    Geographic,
    /// Already-projected planar meters; distances are Euclidean.
    Planar,
}

/// One station's fixed-interval speed readings.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeedSeries {
    pub station_id: String,
    pub start_time: DateTime<Utc>,
    values: Vec<f64>,
    missing_mask: Vec<bool>,
}

impl SpeedSeries {
    pub fn new(
        station_id: impl Into<String>,
        start_time: DateTime<Utc>,
        values: Vec<f64>,
        missing_mask: Vec<bool>,
    ) -> Result<Self> {
        if values.len() != missing_mask.len() {
            return Err(Error::LengthMismatch {
                left: values.len(),
                right: missing_mask.len(),
            });
        }
        for (i, (&v, &m)) in values.iter().zip(&missing_mask).enumerate() {
            if !m && (!v.is_finite() || v < 0.0) {
                return Err(Error::InvalidParam(format!(
                    "negative or non-finite speed {v} at slot {i}"
                )));
            }
        }
        Ok(Self {
            station_id: station_id.into(),
            start_time,
            values,
            missing_mask,
        })
    }

    pub fn interval_seconds(&self) -> i64 {
        INTERVAL_SECONDS
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn missing_mask(&self) -> &[bool] {
        &self.missing_mask
    }

    /// Timestamp of slot `k`; slot <-> timestamp is a bijection.
    pub fn slot_time(&self, k: usize) -> DateTime<Utc> {
        self.start_time + Duration::seconds(INTERVAL_SECONDS * k as i64)
    }

    /// Inverse of [`slot_time`] for timestamps on the 300 s grid.
    pub fn time_slot(&self, t: DateTime<Utc>) -> Option<usize> {
        let d = (t - self.start_time).num_seconds();
        if d < 0 || d % INTERVAL_SECONDS != 0 {
            return None;
        }
        let k = (d / INTERVAL_SECONDS) as usize;
        (k < self.values.len()).then_some(k)
    }

    pub fn n_days(&self) -> usize {
        self.values.len() / SLOTS_PER_DAY
    }
}

/// One incident report row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IncidentRecord {
    pub incident_id: String,
    pub latitude: f64,
    pub longitude: f64,
    pub reported_start: DateTime<Utc>,
    pub reported_duration_min: u32,
    pub features: Vec<f64>,
}

/// Incident collection plus the dataset-wide feature names.
#[derive(Debug, Clone, PartialEq)]
pub struct IncidentTable {
    pub feature_names: Vec<String>,
    pub records: Vec<IncidentRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationRecord {
    pub station_id: String,
    pub latitude: f64,
    pub longitude: f64,
}

/// A per-day disruption segment emitted by the segmentation state machine.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisruptionInterval {
    pub day_index: usize,
    /// Day-relative slot index of the disruption entry, in [0, 288).
    pub enter_idx: usize,
    /// Day-relative slot index of the disruption exit, in (enter_idx, 288).
    pub exit_idx: usize,
    /// Normalized difference at the entry peak.
    pub metric_peak: f64,
}

impl DisruptionInterval {
    pub fn new(day_index: usize, enter_idx: usize, exit_idx: usize, metric_peak: f64) -> Result<Self> {
        if enter_idx >= exit_idx {
            return Err(Error::InvalidParam(format!(
                "enter_idx {enter_idx} must precede exit_idx {exit_idx}"
            )));
        }
        Ok(Self {
            day_index,
            enter_idx,
            exit_idx,
            metric_peak,
        })
    }

    pub fn duration_minutes(&self) -> u32 {
        ((self.exit_idx - self.enter_idx) * 5) as u32
    }
}

/// 288-slot average daily speed template for one station.
#[derive(Debug, Clone, PartialEq)]
pub struct MonthlyProfile {
    pub station_id: String,
    slots: Vec<f64>,
    pub n_days_observed: usize,
}

impl MonthlyProfile {
    pub fn new(station_id: impl Into<String>, slots: Vec<f64>, n_days_observed: usize) -> Result<Self> {
        if slots.len() != SLOTS_PER_DAY {
            return Err(Error::LengthMismatch {
                left: slots.len(),
                right: SLOTS_PER_DAY,
            });
        }
        if let Some(i) = slots.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidParam(format!("non-finite profile slot {i}")));
        }
        if n_days_observed == 0 {
            return Err(Error::InvalidParam("n_days_observed must be positive".into()));
        }
        Ok(Self {
            station_id: station_id.into(),
            slots,
            n_days_observed,
        })
    }

    pub fn slots(&self) -> &[f64] {
        &self.slots
    }
}

fn open_reader(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new().has_headers(true).from_reader(file))
}

fn parse_ts(raw: &str, path: &Path, line: u64) -> Result<DateTime<Utc>> {
    DateTime::parse_from_rfc3339(raw)
        .map(|t| t.with_timezone(&Utc))
        .map_err(|e| Error::MalformedRow {
            path: path.to_path_buf(),
            line,
            reason: format!("bad timestamp {raw:?}: {e}"),
        })
}

fn parse_f64(raw: &str, what: &str, path: &Path, line: u64) -> Result<f64> {
    raw.trim().parse::<f64>().map_err(|_| Error::MalformedRow {
        path: path.to_path_buf(),
        line,
        reason: format!("bad {what} {raw:?}"),
    })
}

/// Load a speed CSV (`station_id,timestamp,speed`) into one series per
/// station. Rows are sorted by timestamp within a station; slots absent from
/// the file are gap-filled and masked missing.
pub fn load_speed_csv(path: impl AsRef<Path>) -> Result<Vec<SpeedSeries>> {
    let path = path.as_ref();
    let mut rdr = open_reader(path)?;
    // station -> (timestamp, speed, line)
    let mut by_station: BTreeMap<String, Vec<(DateTime<Utc>, f64, u64)>> = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::MalformedRow {
            path: path.to_path_buf(),
            line: e.position().map(|p| p.line()).unwrap_or(0),
            reason: e.to_string(),
        })?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        if rec.len() < 3 {
            return Err(Error::MalformedRow {
                path: path.to_path_buf(),
                line,
                reason: format!("expected 3 columns, got {}", rec.len()),
            });
        }
        let ts = parse_ts(&rec[1], path, line)?;
        let speed = parse_f64(&rec[2], "speed", path, line)?;
        by_station.entry(rec[0].to_string()).or_default().push((ts, speed, line));
    }

    let mut out = Vec::with_capacity(by_station.len());
    for (station, mut rows) in by_station {
        // Detect out-of-order input before sorting so the offending row is named.
        for w in rows.windows(2) {
            if w[1].0 <= w[0].0 {
                return Err(Error::NonMonotoneTimestamps {
                    station,
                    line: w[1].2,
                });
            }
        }
        rows.sort_by_key(|r| r.0);
        let start = rows[0].0;
        let end = rows.last().unwrap().0;
        for &(ts, _, _) in &rows {
            let d = (ts - start).num_seconds();
            if d % INTERVAL_SECONDS != 0 {
                return Err(Error::BadInterval {
                    station,
                    got: d % INTERVAL_SECONDS,
                    expected: INTERVAL_SECONDS,
                });
            }
        }
        let n_slots = ((end - start).num_seconds() / INTERVAL_SECONDS) as usize + 1;
        let mut values = vec![0.0; n_slots];
        let mut missing = vec![true; n_slots];
        for &(ts, speed, _) in &rows {
            let k = ((ts - start).num_seconds() / INTERVAL_SECONDS) as usize;
            values[k] = speed;
            missing[k] = false;
        }
        out.push(SpeedSeries::new(station, start, values, missing)?);
    }
    Ok(out)
}

/// Write speed series in the format accepted by [`load_speed_csv`].
/// Missing slots are omitted.
pub fn write_speed_csv(path: impl AsRef<Path>, series: &[SpeedSeries]) -> Result<()> {
    let path = path.as_ref();
    let mut w = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    writeln!(w, "station_id,timestamp,speed").map_err(|e| Error::io(path, e))?;
    for s in series {
        for k in 0..s.len() {
            if s.missing_mask()[k] {
                continue;
            }
            writeln!(
                w,
                "{},{},{}",
                s.station_id,
                s.slot_time(k).to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
                s.values()[k]
            )
            .map_err(|e| Error::io(path, e))?;
        }
    }
    Ok(())
}

/// Load an incident CSV: `incident_id,latitude,longitude,start_time,duration_min`
/// followed by any number of numeric feature columns.
pub fn load_incidents_csv(path: impl AsRef<Path>) -> Result<IncidentTable> {
    let path = path.as_ref();
    let mut rdr = open_reader(path)?;
    let headers = rdr
        .headers()
        .map_err(|e| Error::MalformedRow {
            path: path.to_path_buf(),
            line: 1,
            reason: e.to_string(),
        })?
        .clone();
    if headers.len() < 5 {
        return Err(Error::MalformedRow {
            path: path.to_path_buf(),
            line: 1,
            reason: "expected at least 5 header columns".into(),
        });
    }
    let feature_names: Vec<String> = headers.iter().skip(5).map(str::to_string).collect();
    let n_features = feature_names.len();

    let mut records = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::MalformedRow {
            path: path.to_path_buf(),
            line: e.position().map(|p| p.line()).unwrap_or(0),
            reason: e.to_string(),
        })?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        if rec.len() != 5 + n_features {
            return Err(Error::MalformedRow {
                path: path.to_path_buf(),
                line,
                reason: format!("expected {} columns, got {}", 5 + n_features, rec.len()),
            });
        }
        let incident_id = rec[0].to_string();
        let latitude = parse_f64(&rec[1], "latitude", path, line)?;
        let longitude = parse_f64(&rec[2], "longitude", path, line)?;
        let reported_start = parse_ts(&rec[3], path, line)?;
        let duration: i64 = rec[4].trim().parse().map_err(|_| Error::MalformedRow {
            path: path.to_path_buf(),
            line,
            reason: format!("bad duration {:?}", &rec[4]),
        })?;
        if duration <= 0 {
            return Err(Error::InvalidIncident {
                incident: incident_id,
                reason: format!("reported duration must be positive, got {duration}"),
            });
        }
        let mut features = Vec::with_capacity(n_features);
        for j in 0..n_features {
            features.push(parse_f64(&rec[5 + j], &format!("feature {}", feature_names[j]), path, line)?);
        }
        records.push(IncidentRecord {
            incident_id,
            latitude,
            longitude,
            reported_start,
            reported_duration_min: duration as u32,
            features,
        });
    }
    Ok(IncidentTable {
        feature_names,
        records,
    })
}

pub fn write_incidents_csv(path: impl AsRef<Path>, table: &IncidentTable) -> Result<()> {
    let path = path.as_ref();
    let mut w = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write!(w, "incident_id,latitude,longitude,start_time,duration_min").map_err(|e| Error::io(path, e))?;
    for name in &table.feature_names {
        write!(w, ",{name}").map_err(|e| Error::io(path, e))?;
    }
    writeln!(w).map_err(|e| Error::io(path, e))?;
    for r in &table.records {
        write!(
            w,
            "{},{},{},{},{}",
            r.incident_id,
            r.latitude,
            r.longitude,
            r.reported_start.to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
            r.reported_duration_min
        )
        .map_err(|e| Error::io(path, e))?;
        for f in &r.features {
            write!(w, ",{f}").map_err(|e| Error::io(path, e))?;
        }
        writeln!(w).map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

/// Load a station CSV: `station_id,latitude,longitude`.
pub fn load_stations_csv(path: impl AsRef<Path>) -> Result<Vec<StationRecord>> {
    let path = path.as_ref();
    let mut rdr = open_reader(path)?;
    let mut out: Vec<StationRecord> = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::MalformedRow {
            path: path.to_path_buf(),
            line: e.position().map(|p| p.line()).unwrap_or(0),
            reason: e.to_string(),
        })?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        if rec.len() < 3 {
            return Err(Error::MalformedRow {
                path: path.to_path_buf(),
                line,
                reason: format!("expected 3 columns, got {}", rec.len()),
            });
        }
        let station_id = rec[0].to_string();
        if out.iter().any(|s| s.station_id == station_id) {
            return Err(Error::MalformedRow {
                path: path.to_path_buf(),
                line,
                reason: format!("duplicate station_id {station_id:?}"),
            });
        }
        out.push(StationRecord {
            station_id,
            latitude: parse_f64(&rec[1], "latitude", path, line)?,
            longitude: parse_f64(&rec[2], "longitude", path, line)?,
        });
    }
    Ok(out)
}

pub fn write_stations_csv(path: impl AsRef<Path>, stations: &[StationRecord]) -> Result<()> {
    let path = path.as_ref();
    let mut w = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    writeln!(w, "station_id,latitude,longitude").map_err(|e| Error::io(path, e))?;
    for s in stations {
        writeln!(w, "{},{},{}", s.station_id, s.latitude, s.longitude).map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

/// Write per-station profiles as `station_id,slot,mean_speed` (288 rows each).
pub fn write_profiles_csv(path: impl AsRef<Path>, profiles: &[MonthlyProfile]) -> Result<()> {
    let path = path.as_ref();
    let mut w = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    writeln!(w, "station_id,slot,mean_speed,n_days_observed").map_err(|e| Error::io(path, e))?;
    for p in profiles {
        for (k, v) in p.slots().iter().enumerate() {
            writeln!(w, "{},{},{},{}", p.station_id, k, v, p.n_days_observed)
                .map_err(|e| Error::io(path, e))?;
        }
    }
    Ok(())
}

pub fn load_profiles_csv(path: impl AsRef<Path>) -> Result<Vec<MonthlyProfile>> {
    let path = path.as_ref();
    let mut rdr = open_reader(path)?;
    let mut by_station: BTreeMap<String, (Vec<(usize, f64)>, usize)> = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::MalformedRow {
            path: path.to_path_buf(),
            line: e.position().map(|p| p.line()).unwrap_or(0),
            reason: e.to_string(),
        })?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let slot: usize = rec[1].parse().map_err(|_| Error::MalformedRow {
            path: path.to_path_buf(),
            line,
            reason: format!("bad slot {:?}", &rec[1]),
        })?;
        let v = parse_f64(&rec[2], "mean_speed", path, line)?;
        let days: usize = rec[3].parse().map_err(|_| Error::MalformedRow {
            path: path.to_path_buf(),
            line,
            reason: format!("bad n_days_observed {:?}", &rec[3]),
        })?;
        let e = by_station.entry(rec[0].to_string()).or_insert_with(|| (Vec::new(), days));
        e.0.push((slot, v));
        e.1 = days;
    }
    let mut out = Vec::new();
    for (station, (mut rows, days)) in by_station {
        rows.sort_by_key(|r| r.0);
        let slots: Vec<f64> = rows.iter().map(|r| r.1).collect();
        out.push(MonthlyProfile::new(station, slots, days)?);
    }
    Ok(out)
}
