//! `flowseg`: command-line front-end for the traffic-flow disruption
//! pipeline. Subcommands wrap the library stages end to end and write
//! plot-ready CSV/NDJSON artifacts.
//!
//! Exit codes: 0 success, 1 runtime failure (I/O and similar), 2 invalid
//! input or configuration.

mod config;

use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use flowseg::association::{
    associate, load_polylines_csv, load_polylines_geojson, write_association_csv,
    AssociationParams,
};
use flowseg::data::{
    load_incidents_csv, load_profiles_csv, load_speed_csv, load_stations_csv, write_profiles_csv,
    CoordinateMode, MonthlyProfile, SpeedSeries, SLOTS_PER_DAY,
};
use flowseg::metrics::{moving_window_difference, MetricKind};
use flowseg::prediction::{run_comparison, ComparisonOptions, Dataset, ModelSpec};
use flowseg::profile::{build_monthly_profile, tile_profile};
use flowseg::segmentation::{
    powered_bounds, segment_series, write_intervals_csv, SegmentationConfig,
};
use flowseg::streaming::{write_events_ndjson, Detector, Event};
use flowseg::synth::{generate_scenario, write_scenario, ScenarioSpec};
use flowseg::Error;

use config::FileConfig;

/// Environment variable that re-roots relative output paths.
const OUT_DIR_ENV: &str = "FLOWSEG_OUT_DIR";

#[derive(Parser)]
#[command(name = "flowseg", version, about = "Traffic-flow disruption detection pipeline")]
struct Cli {
    /// TOML or JSON file supplying defaults for any flag; explicit flags win.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads for per-station parallel stages (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Build per-station 288-slot baseline profiles from a speed CSV.
    Profile(ProfileArgs),
    /// Segment disruption intervals from speeds against baseline profiles.
    Segment(SegmentArgs),
    /// Associate incident reports to stations over a road graph.
    Associate(AssociateArgs),
    /// Cross-validate duration regressors against both targets.
    Evaluate(EvaluateArgs),
    /// Replay speeds through the causal streaming detector.
    Stream(StreamArgs),
    /// Generate a synthetic scenario with ground truth.
    Synth(SynthArgs),
}

#[derive(Args)]
struct ProfileArgs {
    speed_csv: PathBuf,
    #[arg(long, default_value = "profile.csv")]
    out: PathBuf,
    /// Leading complete days averaged into the baseline.
    #[arg(long)]
    days: Option<usize>,
}

#[derive(Args)]
struct SegmentArgs {
    speed_csv: PathBuf,
    profile_csv: PathBuf,
    #[arg(long)]
    metric: Option<MetricArg>,
    #[arg(long)]
    selectivity: Option<f64>,
    /// Positive derivative threshold.
    #[arg(long, allow_hyphen_values = true)]
    pthr: Option<f64>,
    /// Negative derivative threshold.
    #[arg(long, allow_hyphen_values = true)]
    nthr: Option<f64>,
    #[arg(long)]
    window: Option<usize>,
    #[arg(long, default_value = "intervals.csv")]
    out: PathBuf,
    /// Also write the intermediate difference series here.
    #[arg(long)]
    emit_diff: Option<PathBuf>,
}

#[derive(Args)]
struct AssociateArgs {
    /// Road polylines: .geojson/.json (LineString) or .csv (polyline_id,seq,lat,lon).
    roads: PathBuf,
    stations_csv: PathBuf,
    incidents_csv: PathBuf,
    #[arg(long, default_value = "assoc.csv")]
    out: PathBuf,
    /// Treat coordinates as planar meters instead of WGS84 degrees.
    #[arg(long)]
    planar: bool,
    #[arg(long)]
    snap: Option<f64>,
    #[arg(long)]
    jump: Option<f64>,
    #[arg(long)]
    max_hops: Option<u32>,
    #[arg(long)]
    spacing: Option<f64>,
}

#[derive(Args)]
struct EvaluateArgs {
    incidents_csv: PathBuf,
    assoc_csv: PathBuf,
    intervals_csv: PathBuf,
    /// Comma-separated: knn,linear,tree.
    #[arg(long)]
    models: Option<String>,
    #[arg(long)]
    folds: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Grid-search hyperparameters inside training folds.
    #[arg(long)]
    tune: bool,
    /// RFC3339 timestamp of slot 0 / day 0 of the intervals file.
    /// Defaults to midnight UTC of the earliest reported incident start.
    #[arg(long)]
    epoch: Option<String>,
    #[arg(long, default_value = "report.json")]
    out: PathBuf,
    /// Table-shaped CSV companion of the JSON report.
    #[arg(long, default_value = "report.csv")]
    table: PathBuf,
}

#[derive(Args)]
struct StreamArgs {
    speed_csv: PathBuf,
    profile_csv: PathBuf,
    #[arg(long)]
    metric: Option<MetricArg>,
    #[arg(long)]
    selectivity: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pthr: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    nthr: Option<f64>,
    #[arg(long)]
    window: Option<usize>,
    #[arg(long, default_value = "events.ndjson")]
    out: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    /// Scenario spec JSON; defaults are used when omitted.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "scenario")]
    out: PathBuf,
}

/// Clap-friendly wrapper for the library metric enum.
#[derive(Clone, Copy)]
struct MetricArg(MetricKind);

impl std::str::FromStr for MetricArg {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        s.parse::<MetricKind>().map(MetricArg).map_err(|e| e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("flowseg: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}

/// 2 for invalid input or configuration, 1 for runtime failures.
fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(Error::Io { .. }) | Some(Error::Json(_)) | None => 1,
        Some(_) => 2,
    }
}

fn invalid(msg: impl Into<String>) -> anyhow::Error {
    Error::InvalidParam(msg.into()).into()
}

/// Re-root relative output paths under $FLOWSEG_OUT_DIR when set.
fn out_path(p: &Path) -> PathBuf {
    match std::env::var_os(OUT_DIR_ENV) {
        Some(dir) if p.is_relative() => PathBuf::from(dir).join(p),
        _ => p.to_path_buf(),
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let cfg = match &cli.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    let threads = cli.threads.or(cfg.threads);
    if let Some(n) = threads {
        if n == 0 {
            return Err(invalid("--threads must be positive"));
        }
        // Ignore the error if a pool already exists (e.g. repeated in tests).
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match cli.cmd {
        Cmd::Profile(a) => cmd_profile(a, &cfg),
        Cmd::Segment(a) => cmd_segment(a, &cfg),
        Cmd::Associate(a) => cmd_associate(a, &cfg),
        Cmd::Evaluate(a) => cmd_evaluate(a, &cfg),
        Cmd::Stream(a) => cmd_stream(a, &cfg),
        Cmd::Synth(a) => cmd_synth(a, &cfg),
    }
}

/// Leading whole-days sub-series used as the baseline window.
fn baseline_head(series: &SpeedSeries, days: usize) -> anyhow::Result<SpeedSeries> {
    let complete = series.n_days();
    if complete == 0 {
        return Err(Error::PartialDay { len: series.len(), slots_per_day: SLOTS_PER_DAY }.into());
    }
    let take = days.min(complete);
    Ok(SpeedSeries::new(
        series.station_id.clone(),
        series.start_time,
        series.values()[..take * SLOTS_PER_DAY].to_vec(),
        series.missing_mask()[..take * SLOTS_PER_DAY].to_vec(),
    )?)
}

fn cmd_profile(a: ProfileArgs, cfg: &FileConfig) -> anyhow::Result<()> {
    let days = a.days.or(cfg.days).unwrap_or(flowseg::profile::DEFAULT_PROFILE_DAYS);
    if days == 0 {
        return Err(invalid("--days must be positive"));
    }
    let series = load_speed_csv(&a.speed_csv)?;
    if series.is_empty() {
        return Err(Error::EmptyInput.into());
    }
    let profiles = series
        .par_iter()
        .map(|s| {
            let head = baseline_head(s, days)?;
            Ok(build_monthly_profile(&head)?)
        })
        .collect::<anyhow::Result<Vec<MonthlyProfile>>>()?;
    write_profiles_csv(out_path(&a.out), &profiles)?;
    println!("wrote {} profiles to {}", profiles.len(), out_path(&a.out).display());
    Ok(())
}

fn segmentation_config(
    selectivity: Option<f64>,
    pthr: Option<f64>,
    nthr: Option<f64>,
    window: Option<usize>,
    cfg: &FileConfig,
) -> anyhow::Result<SegmentationConfig> {
    let d = SegmentationConfig::default();
    let out = SegmentationConfig {
        selectivity: selectivity.or(cfg.selectivity).unwrap_or(d.selectivity),
        p_threshold: pthr.or(cfg.pthr).unwrap_or(d.p_threshold),
        n_threshold: nthr.or(cfg.nthr).unwrap_or(d.n_threshold),
        window_size: window.or(cfg.window).unwrap_or(d.window_size),
    };
    out.validate()?;
    Ok(out)
}

fn pick_metric(flag: Option<MetricArg>, cfg: &FileConfig) -> anyhow::Result<MetricKind> {
    match flag {
        Some(m) => Ok(m.0),
        None => match &cfg.metric {
            Some(s) => Ok(s.parse::<MetricKind>()?),
            None => Ok(MetricKind::Chebyshev),
        },
    }
}

/// Pair each speed series with its profile; a missing profile is an error.
fn pair_profiles<'a>(
    series: &'a [SpeedSeries],
    profiles: &'a [MonthlyProfile],
) -> anyhow::Result<Vec<(&'a SpeedSeries, &'a MonthlyProfile)>> {
    series
        .iter()
        .map(|s| {
            profiles
                .iter()
                .find(|p| p.station_id == s.station_id)
                .map(|p| (s, p))
                .ok_or_else(|| invalid(format!("no profile for station {:?}", s.station_id)))
        })
        .collect()
}

fn cmd_segment(a: SegmentArgs, cfg: &FileConfig) -> anyhow::Result<()> {
    let seg = segmentation_config(a.selectivity, a.pthr, a.nthr, a.window, cfg)?;
    let metric = pick_metric(a.metric, cfg)?;
    let series = load_speed_csv(&a.speed_csv)?;
    let profiles = load_profiles_csv(&a.profile_csv)?;
    let pairs = pair_profiles(&series, &profiles)?;

    let per_station: Vec<(String, Vec<flowseg::DisruptionInterval>, Vec<f64>)> = pairs
        .par_iter()
        .map(|(s, p)| {
            let tiled = tile_profile(p, s.n_days())?;
            let diff = moving_window_difference(s, &tiled, seg.window_size, metric)?;
            let (_, intervals) = segment_series(&diff, &seg)?;
            Ok((s.station_id.clone(), intervals, diff.values))
        })
        .collect::<flowseg::Result<_>>()?;

    if let Some(diff_path) = &a.emit_diff {
        let path = out_path(diff_path);
        let mut w = std::fs::File::create(&path)?;
        writeln!(w, "station_id,slot_index,value")?;
        for (station, _, values) in &per_station {
            for (i, v) in values.iter().enumerate() {
                writeln!(w, "{station},{i},{v}")?;
            }
        }
    }

    let mut rows = Vec::new();
    for (station, intervals, _) in per_station {
        for iv in intervals {
            rows.push((station.clone(), iv));
        }
    }
    write_intervals_csv(out_path(&a.out), &rows)?;
    println!("wrote {} intervals to {}", rows.len(), out_path(&a.out).display());
    Ok(())
}

fn cmd_associate(a: AssociateArgs, cfg: &FileConfig) -> anyhow::Result<()> {
    let d = AssociationParams::default();
    let params = AssociationParams {
        max_snap_m: a.snap.or(cfg.snap).unwrap_or(d.max_snap_m),
        jump_radius_m: a.jump.or(cfg.jump).unwrap_or(d.jump_radius_m),
        max_hops: a.max_hops.or(cfg.max_hops).unwrap_or(d.max_hops),
        spacing_m: a.spacing.or(cfg.spacing).unwrap_or(d.spacing_m),
        ..d
    };
    let polylines = match a.roads.extension().and_then(|e| e.to_str()) {
        Some("csv") => load_polylines_csv(&a.roads)?,
        _ => load_polylines_geojson(&a.roads)?,
    };
    let stations = load_stations_csv(&a.stations_csv)?;
    let incidents = load_incidents_csv(&a.incidents_csv)?;
    let mode = if a.planar || cfg.planar.unwrap_or(false) {
        CoordinateMode::Planar
    } else {
        CoordinateMode::Geographic
    };
    let out = associate(&polylines, &stations, &incidents.records, mode, &params)?;
    write_association_csv(out_path(&a.out), &out.results)?;
    println!(
        "associated {} of {} incidents ({} stations unsnapped, {} incidents unsnapped)",
        out.results.len(),
        incidents.records.len(),
        out.dropped_stations.len(),
        out.dropped_incidents.len()
    );
    Ok(())
}

fn cmd_evaluate(a: EvaluateArgs, cfg: &FileConfig) -> anyhow::Result<()> {
    let models = match a.models.as_deref().or(cfg.models.as_deref()) {
        Some(raw) => ModelSpec::parse_list(raw)?,
        None => vec![ModelSpec::knn_default(), ModelSpec::Linear, ModelSpec::tree_default()],
    };
    if models.is_empty() {
        return Err(invalid("empty model list"));
    }
    let opts = ComparisonOptions {
        folds: a.folds.or(cfg.folds).unwrap_or(10),
        seed: a.seed.or(cfg.seed).unwrap_or(7),
        tune: a.tune || cfg.tune.unwrap_or(false),
    };

    let incidents = load_incidents_csv(&a.incidents_csv)?;
    let assoc = flowseg::association::load_association_csv(&a.assoc_csv)?;
    let intervals = flowseg::segmentation::load_intervals_csv(&a.intervals_csv)?;

    let epoch = match a.epoch.as_deref().or(cfg.epoch.as_deref()) {
        Some(raw) => chrono::DateTime::parse_from_rfc3339(raw)
            .map_err(|e| invalid(format!("bad --epoch {raw:?}: {e}")))?
            .with_timezone(&chrono::Utc),
        None => {
            let earliest = incidents
                .records
                .iter()
                .map(|r| r.reported_start)
                .min()
                .ok_or_else(|| invalid("no incidents"))?;
            earliest
                .date_naive()
                .and_hms_opt(0, 0, 0)
                .unwrap()
                .and_utc()
        }
    };

    let dataset = build_dataset(&incidents, &assoc, &intervals, epoch)?;
    if dataset.len() < opts.folds {
        return Err(Error::CrossValidation(format!(
            "{} usable incidents for {} folds",
            dataset.len(),
            opts.folds
        ))
        .into());
    }
    let report = run_comparison(&dataset, &models, &opts)?;
    report.write_json(out_path(&a.out))?;
    report.write_table_csv(out_path(&a.table))?;
    println!(
        "evaluated {} incidents across {} models; report at {}",
        dataset.len(),
        models.len(),
        out_path(&a.out).display()
    );
    Ok(())
}

/// Join incidents to their associated station's segmented interval on the
/// incident's day: the interval with the longest estimated duration wins,
/// ties broken by earliest entry.
fn build_dataset(
    incidents: &flowseg::IncidentTable,
    assoc: &[flowseg::association::AssociationResult],
    intervals: &[(String, flowseg::DisruptionInterval)],
    epoch: chrono::DateTime<chrono::Utc>,
) -> anyhow::Result<Dataset> {
    let mut x = Vec::new();
    let mut y_reported = Vec::new();
    let mut y_estimated = Vec::new();
    for rec in &incidents.records {
        let Some(station) = assoc
            .iter()
            .find(|r| r.incident_id == rec.incident_id)
            .map(|r| r.station_id.as_str())
        else {
            continue;
        };
        let day = (rec.reported_start - epoch).num_days();
        if day < 0 {
            continue;
        }
        let day = day as usize;
        let best = intervals
            .iter()
            .filter(|(s, iv)| s == station && iv.day_index == day)
            .map(|(_, iv)| iv)
            .fold(None::<&flowseg::DisruptionInterval>, |best, iv| match best {
                Some(b)
                    if (b.duration_minutes(), std::cmp::Reverse(b.enter_idx))
                        >= (iv.duration_minutes(), std::cmp::Reverse(iv.enter_idx)) =>
                {
                    Some(b)
                }
                _ => Some(iv),
            });
        let Some(iv) = best else { continue };
        x.push(rec.features.clone());
        y_reported.push(rec.reported_duration_min as f64);
        y_estimated.push(iv.duration_minutes() as f64);
    }
    let ds = Dataset {
        feature_names: incidents.feature_names.clone(),
        x,
        y_reported,
        y_estimated,
    };
    ds.validate()?;
    Ok(ds)
}

fn cmd_stream(a: StreamArgs, cfg: &FileConfig) -> anyhow::Result<()> {
    let seg = segmentation_config(a.selectivity, a.pthr, a.nthr, a.window, cfg)?;
    let metric = pick_metric(a.metric, cfg)?;
    let series = load_speed_csv(&a.speed_csv)?;
    let profiles = load_profiles_csv(&a.profile_csv)?;
    let pairs = pair_profiles(&series, &profiles)?;

    let mut per_station: Vec<Vec<Event>> = pairs
        .par_iter()
        .map(|(s, p)| {
            let tiled = tile_profile(p, s.n_days())?;
            let diff = moving_window_difference(s, &tiled, seg.window_size, metric)?;
            // Bounds frozen from this series: replayed events pair exactly
            // like an offline segmentation of the same data.
            let bounds = powered_bounds(&diff.values, seg.selectivity);
            let (events, _) = Detector::replay(s.station_id.clone(), &seg, bounds, &diff.values)?;
            Ok(events)
        })
        .collect::<flowseg::Result<_>>()?;
    per_station.sort_by(|a, b| {
        let empty = String::new();
        let ka = a.first().map_or(&empty, |e| &e.station_id);
        let kb = b.first().map_or(&empty, |e| &e.station_id);
        ka.cmp(kb)
    });
    let events: Vec<Event> = per_station.into_iter().flatten().collect();
    write_events_ndjson(out_path(&a.out), &events)?;
    println!("wrote {} events to {}", events.len(), out_path(&a.out).display());
    Ok(())
}

fn cmd_synth(a: SynthArgs, cfg: &FileConfig) -> anyhow::Result<()> {
    let spec = match &a.spec {
        Some(path) => ScenarioSpec::from_json_file(path)?,
        None => ScenarioSpec::default(),
    };
    let seed = a.seed.or(cfg.seed).unwrap_or(7);
    let scenario = generate_scenario(&spec, seed)?;
    let dir = out_path(&a.out);
    write_scenario(&dir, &scenario)?;
    println!(
        "wrote scenario ({} stations, {} incidents, {} days) to {}",
        scenario.stations.len(),
        scenario.incidents.records.len(),
        scenario.series[0].n_days(),
        dir.display()
    );
    Ok(())
}
