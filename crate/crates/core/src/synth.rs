//! Synthetic scenario generator. Produces road layouts, station placements,
//! speed series with injected trapezoidal disruptions, incident reports with
//! jittered starts and placeholder-corrupted durations, and a ground-truth
//! table — everything end-to-end tests need, in the exact file formats the
//! rest of the pipeline consumes.

use std::io::Write;
use std::path::Path;

use chrono::{DateTime, TimeZone, Utc};
use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{
    IncidentRecord, IncidentTable, SpeedSeries, StationRecord, INTERVAL_SECONDS, SLOTS_PER_DAY,
};
use crate::error::{Error, Result};

const EARTH_RADIUS_M: f64 = 6_371_008.8;
/// Scenario origin, roughly San Francisco.
const BASE_LAT: f64 = 37.77;
const BASE_LON: f64 = -122.4;
/// Each station gets its own 1200 m west-east road, offset northward.
const ROAD_LENGTH_M: f64 = 1200.0;
const ROAD_SPACING_M: f64 = 50.0;
/// Station position along its road.
const STATION_ALONG_M: f64 = 100.0;
/// Incidents fall in this along-road range (within 500 m of the station).
const INCIDENT_ALONG_MIN_M: f64 = 20.0;
const INCIDENT_ALONG_MAX_M: f64 = 480.0;
/// Maximum lateral offset of an incident from the road centerline.
const INCIDENT_LATERAL_MAX_M: f64 = 3.0;
/// Free-flow speed of the daily template.
const FREE_FLOW_MPH: f64 = 70.0;
/// Fraction of baseline speed removed at the dip plateau.
const DIP_DEPTH: f64 = 0.6;
/// Linear ramp length at each end of the dip, in slots.
const DIP_RAMP_SLOTS: usize = 2;
/// Placeholder values used for corrupted reported durations.
pub const PLACEHOLDER_SHORT_MIN: u32 = 30;
pub const PLACEHOLDER_LONG_MIN: u32 = 360;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioSpec {
    pub n_stations: usize,
    pub n_incidents: usize,
    /// Days carrying injected disruptions, after the baseline period.
    pub observation_days: usize,
    /// Clean leading days used to build the monthly profile.
    pub profile_days: usize,
    /// Fraction of reported durations overwritten with 30 or 360.
    pub corruption_fraction: f64,
    /// Gaussian speed noise, as a fraction of the baseline template.
    pub noise_sigma_fraction: f64,
    /// Reported start times are jittered uniformly within +/- this.
    pub start_jitter_minutes: u32,
    /// Depth of the commuter-curve rush-hour valleys, mph.
    pub amplitude: f64,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        Self {
            n_stations: 4,
            n_incidents: 8,
            observation_days: 4,
            profile_days: 28,
            corruption_fraction: 0.4,
            noise_sigma_fraction: 0.0,
            start_jitter_minutes: 0,
            amplitude: 15.0,
        }
    }
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_stations == 0 || self.observation_days == 0 || self.profile_days == 0 {
            return Err(Error::InvalidParam(
                "n_stations, observation_days and profile_days must be positive".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.corruption_fraction) {
            return Err(Error::InvalidParam(format!(
                "corruption_fraction {} outside [0, 1]",
                self.corruption_fraction
            )));
        }
        if self.noise_sigma_fraction < 0.0 || !self.noise_sigma_fraction.is_finite() {
            return Err(Error::InvalidParam("noise_sigma_fraction must be >= 0".into()));
        }
        if !(self.amplitude >= 0.0 && self.amplitude < FREE_FLOW_MPH) {
            return Err(Error::InvalidParam(format!(
                "amplitude {} outside [0, {FREE_FLOW_MPH})",
                self.amplitude
            )));
        }
        // One disruption per station-day keeps the truth unambiguous.
        if self.n_incidents > self.n_stations * self.observation_days {
            return Err(Error::InfeasibleScenario(format!(
                "{} incidents exceed {} stations x {} observation days",
                self.n_incidents, self.n_stations, self.observation_days
            )));
        }
        Ok(())
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let spec: ScenarioSpec = serde_json::from_str(&text)?;
        spec.validate()?;
        Ok(spec)
    }
}

/// Ground truth for one injected disruption. `true_start_slot` is the global
/// slot index into the station's full series (baseline days included).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthRecord {
    pub incident_id: String,
    pub true_start_slot: usize,
    pub true_duration_min: u32,
    pub station_id: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    /// Roads as (latitude, longitude) vertex lists.
    pub polylines: Vec<Vec<(f64, f64)>>,
    pub stations: Vec<StationRecord>,
    pub incidents: IncidentTable,
    /// One series per station, `profile_days + observation_days` whole days.
    pub series: Vec<SpeedSeries>,
    pub truth: Vec<TruthRecord>,
    pub start_time: DateTime<Utc>,
}

fn meters_to_latlon(x: f64, y: f64) -> (f64, f64) {
    let lat = BASE_LAT + (y / EARTH_RADIUS_M).to_degrees();
    let lon = BASE_LON + (x / (EARTH_RADIUS_M * BASE_LAT.to_radians().cos())).to_degrees();
    (lat, lon)
}

/// Smooth double-valley commuter template: free flow with morning and
/// evening rush-hour slowdowns.
pub fn commuter_template(amplitude: f64) -> Vec<f64> {
    (0..SLOTS_PER_DAY)
        .map(|k| {
            let k = k as f64;
            let morning = (-((k - 96.0) * (k - 96.0)) / (2.0 * 10.0 * 10.0)).exp();
            let evening = (-((k - 204.0) * (k - 204.0)) / (2.0 * 12.0 * 12.0)).exp();
            FREE_FLOW_MPH - amplitude * (morning + evening)
        })
        .collect()
}

/// Trapezoidal multiplier for slot `j` of a `span`-slot dip: linear ramp
/// down, plateau at full depth, linear ramp up. Every slot of the span is
/// depressed, so the true duration is exactly `span * 5` minutes.
fn dip_weight(j: usize, span: usize) -> f64 {
    let ramp_in = (j + 1) as f64 / DIP_RAMP_SLOTS as f64;
    let ramp_out = (span - j) as f64 / DIP_RAMP_SLOTS as f64;
    ramp_in.min(ramp_out).min(1.0)
}

/// Clean duration law: a deterministic function of the incident features,
/// clamped to [30, 240] minutes and rounded to the 5-minute grid.
fn duration_from_features(lanes: f64, vehicles: f64, severity: f64, weather: f64, heavy: f64) -> u32 {
    let raw = 20.0 + 20.0 * lanes + 12.0 * vehicles + 18.0 * severity + 30.0 * weather + 25.0 * heavy;
    let clamped = raw.clamp(30.0, 240.0);
    ((clamped / 5.0).round() as u32) * 5
}

pub const FEATURE_NAMES: [&str; 6] = [
    "hour_of_day",
    "lanes_blocked",
    "vehicles_involved",
    "severity",
    "bad_weather",
    "heavy_vehicle",
];

/// Generate a full scenario deterministically from `spec` and `seed`.
pub fn generate_scenario(spec: &ScenarioSpec, seed: u64) -> Result<Scenario> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let start_time = Utc.with_ymd_and_hms(2020, 3, 1, 0, 0, 0).unwrap();
    let total_days = spec.profile_days + spec.observation_days;
    let template = commuter_template(spec.amplitude);

    // Geometry: one straight road per station, stations on their roads.
    let mut polylines = Vec::with_capacity(spec.n_stations);
    let mut stations = Vec::with_capacity(spec.n_stations);
    for i in 0..spec.n_stations {
        let y = i as f64 * ROAD_SPACING_M;
        polylines.push(vec![meters_to_latlon(0.0, y), meters_to_latlon(ROAD_LENGTH_M, y)]);
        let (lat, lon) = meters_to_latlon(STATION_ALONG_M, y);
        stations.push(StationRecord {
            station_id: format!("s{i:04}"),
            latitude: lat,
            longitude: lon,
        });
    }

    // Schedule: each incident takes a distinct (station, observation day).
    let mut slots_free: Vec<(usize, usize)> = (0..spec.n_stations)
        .flat_map(|s| (0..spec.observation_days).map(move |d| (s, d)))
        .collect();
    slots_free.shuffle(&mut rng);
    let schedule = &slots_free[..spec.n_incidents];

    // Per-station dip plans: (day-relative start slot, span slots, weight fn).
    let mut dips: Vec<Vec<(usize, usize, usize)>> = vec![Vec::new(); spec.n_stations]; // (obs day, start, span)
    let mut incidents = Vec::with_capacity(spec.n_incidents);
    let mut truth = Vec::with_capacity(spec.n_incidents);
    for (n, &(st, day)) in schedule.iter().enumerate() {
        let lanes = rng.gen_range(1..=3) as f64;
        let vehicles = rng.gen_range(1..=4) as f64;
        let severity = rng.gen_range(1..=5) as f64;
        let weather = rng.gen_range(0..=1) as f64;
        let heavy = rng.gen_range(0..=1) as f64;
        let duration_min = duration_from_features(lanes, vehicles, severity, weather, heavy);
        let span = duration_min as usize / 5;
        // Keep the dip well inside the day so the window can close.
        let start_slot = rng.gen_range(72..=(SLOTS_PER_DAY - span - 24));
        dips[st].push((day, start_slot, span));

        let global_start = (spec.profile_days + day) * SLOTS_PER_DAY + start_slot;
        let true_start = start_time + chrono::Duration::seconds(INTERVAL_SECONDS * global_start as i64);
        let jitter = if spec.start_jitter_minutes > 0 {
            rng.gen_range(-(spec.start_jitter_minutes as i64)..=spec.start_jitter_minutes as i64)
        } else {
            0
        };
        let reported_start = true_start + chrono::Duration::minutes(jitter);
        let reported_duration = if rng.gen_bool(spec.corruption_fraction) {
            if rng.gen_bool(0.5) {
                PLACEHOLDER_SHORT_MIN
            } else {
                PLACEHOLDER_LONG_MIN
            }
        } else {
            duration_min
        };

        let along = rng.gen_range(INCIDENT_ALONG_MIN_M..=INCIDENT_ALONG_MAX_M);
        let lateral = rng.gen_range(-INCIDENT_LATERAL_MAX_M..=INCIDENT_LATERAL_MAX_M);
        let (lat, lon) = meters_to_latlon(along, st as f64 * ROAD_SPACING_M + lateral);
        let incident_id = format!("i{n:05}");
        incidents.push(IncidentRecord {
            incident_id: incident_id.clone(),
            latitude: lat,
            longitude: lon,
            reported_start,
            reported_duration_min: reported_duration,
            features: vec![
                (start_slot / 12) as f64,
                lanes,
                vehicles,
                severity,
                weather,
                heavy,
            ],
        });
        truth.push(TruthRecord {
            incident_id,
            true_start_slot: global_start,
            true_duration_min: duration_min,
            station_id: stations[st].station_id.clone(),
        });
    }
    truth.sort_by(|a, b| a.incident_id.cmp(&b.incident_id));

    // Speed series: noisy template with the scheduled dips carved out.
    let mut series = Vec::with_capacity(spec.n_stations);
    for (st, station) in stations.iter().enumerate() {
        let mut values = Vec::with_capacity(total_days * SLOTS_PER_DAY);
        for _ in 0..total_days {
            for &base in &template {
                let v = if spec.noise_sigma_fraction > 0.0 {
                    let u1: f64 = rng.gen_range(1e-12..1.0);
                    let u2: f64 = rng.gen_range(0.0..1.0);
                    let z = (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos();
                    base + spec.noise_sigma_fraction * base * z
                } else {
                    base
                };
                values.push(v.max(1.0));
            }
        }
        for &(day, start_slot, span) in &dips[st] {
            let base_idx = (spec.profile_days + day) * SLOTS_PER_DAY + start_slot;
            for j in 0..span {
                let w = dip_weight(j, span);
                values[base_idx + j] *= 1.0 - DIP_DEPTH * w;
            }
        }
        series.push(SpeedSeries::new(
            station.station_id.clone(),
            start_time,
            values,
            vec![false; total_days * SLOTS_PER_DAY],
        )?);
    }

    Ok(Scenario {
        polylines,
        stations,
        incidents: IncidentTable {
            feature_names: FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
            records: incidents,
        },
        series,
        truth,
        start_time,
    })
}

/// Write the truth table as `incident_id,true_start_slot,true_duration_min,station_id`.
pub fn write_truth_csv(path: impl AsRef<Path>, truth: &[TruthRecord]) -> Result<()> {
    let path = path.as_ref();
    let mut w = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    writeln!(w, "incident_id,true_start_slot,true_duration_min,station_id")
        .map_err(|e| Error::io(path, e))?;
    for t in truth {
        writeln!(
            w,
            "{},{},{},{}",
            t.incident_id, t.true_start_slot, t.true_duration_min, t.station_id
        )
        .map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

pub fn load_truth_csv(path: impl AsRef<Path>) -> Result<Vec<TruthRecord>> {
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
        let bad = |what: &str, raw: &str| Error::MalformedRow {
            path: path.to_path_buf(),
            line,
            reason: format!("bad {what} {raw:?}"),
        };
        out.push(TruthRecord {
            incident_id: rec[0].to_string(),
            true_start_slot: rec[1].parse().map_err(|_| bad("true_start_slot", &rec[1]))?,
            true_duration_min: rec[2].parse().map_err(|_| bad("true_duration_min", &rec[2]))?,
            station_id: rec[3].to_string(),
        });
    }
    Ok(out)
}

/// Materialize a scenario into a directory using the pipeline's file formats:
/// roads.geojson, stations.csv, incidents.csv, speeds.csv, truth.csv.
pub fn write_scenario(dir: impl AsRef<Path>, scenario: &Scenario) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    crate::association::write_polylines_geojson(dir.join("roads.geojson"), &scenario.polylines)?;
    crate::data::write_stations_csv(dir.join("stations.csv"), &scenario.stations)?;
    crate::data::write_incidents_csv(dir.join("incidents.csv"), &scenario.incidents)?;
    crate::data::write_speed_csv(dir.join("speeds.csv"), &scenario.series)?;
    write_truth_csv(dir.join("truth.csv"), &scenario.truth)
}
