//! Acceptance suite: one test per release criterion. Each test prints a
//! single `ACCEPTANCE <n> <name>: PASS` line when it holds; a failed
//! assertion marks the criterion as failed.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use flowseg::association::{
    associate, resample_polylines, AssociationParams, RoadPointGraph,
};
use flowseg::data::{CoordinateMode, IncidentRecord, SpeedSeries, StationRecord, SLOTS_PER_DAY};
use flowseg::metrics::{moving_window_difference, wasserstein_diff, MetricKind};
use flowseg::prediction::{mape, rmse, run_comparison, ComparisonOptions, Dataset, ModelSpec, TargetKind};
use flowseg::profile::build_monthly_profile;
use flowseg::segmentation::{
    dilation_convolution, powered_bounds, preprocess_with_bounds, segment, segment_series,
    select_disruption_for_incident, SegmentationConfig,
};
use flowseg::streaming::Detector;
use flowseg::synth::{generate_scenario, ScenarioSpec};

fn pass(n: u32, name: &str) {
    println!("ACCEPTANCE {n} {name}: PASS");
}

// --- 1. Dilation convolution worked example --------------------------------

#[test]
fn acceptance_1_convolution_worked_example() {
    let out = dilation_convolution(&[0.3, 0.1, 0.1, 0.2, 0.2]);
    // Zero tolerance: bit-for-bit equality on the interior values.
    assert_eq!(out[1], 0.5);
    assert_eq!(out[2], 0.4);
    assert_eq!(out[3], 0.5);
    pass(1, "dilation convolution worked example");
}

// --- 2. Metric axiom suite ---------------------------------------------------

fn rand_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(0.1..100.0)).collect()
}

#[test]
fn acceptance_2_metric_axioms_and_ot_oracle() {
    let metrics = [
        MetricKind::Chebyshev,
        MetricKind::Wasserstein,
        MetricKind::Cosine,
        MetricKind::Euclidean,
        MetricKind::Minkowski,
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for metric in metrics {
        let triangle_holds = metric != MetricKind::Cosine;
        for _ in 0..10_000 {
            let n = rng.gen_range(1..=12);
            let u = rand_vec(&mut rng, n);
            let v = rand_vec(&mut rng, n);
            let w = rand_vec(&mut rng, n);
            let duv = metric.apply(&u, &v).unwrap();
            let dvu = metric.apply(&v, &u).unwrap();
            assert!(duv >= 0.0, "{metric}: negative value {duv}");
            assert!((duv - dvu).abs() <= 1e-12, "{metric}: asymmetric");
            let duu = metric.apply(&u, &u).unwrap();
            assert!(duu.abs() <= 1e-12, "{metric}: d(u,u) = {duu}");
            if triangle_holds {
                let duw = metric.apply(&u, &w).unwrap();
                let dvw = metric.apply(&v, &w).unwrap();
                assert!(duw <= duv + dvw + 1e-9, "{metric}: triangle violated");
            }
        }
    }

    // 1-D Wasserstein vs a brute-force optimal-transport oracle: minimum
    // over all assignments of mean absolute difference.
    fn min_over_perms(u: &[f64], v: &mut Vec<f64>, used: &mut Vec<bool>, picked: &mut Vec<f64>) -> f64 {
        if picked.len() == u.len() {
            let cost: f64 = u.iter().zip(picked.iter()).map(|(a, b)| (a - b).abs()).sum();
            return cost / u.len() as f64;
        }
        let mut best = f64::INFINITY;
        for i in 0..v.len() {
            if !used[i] {
                used[i] = true;
                picked.push(v[i]);
                best = best.min(min_over_perms(u, v, used, picked));
                picked.pop();
                used[i] = false;
            }
        }
        best
    }
    for _ in 0..200 {
        let n = rng.gen_range(1..=6);
        let u = rand_vec(&mut rng, n);
        let mut v = rand_vec(&mut rng, n);
        let oracle = min_over_perms(&u, &mut v, &mut vec![false; n], &mut Vec::new());
        let got = wasserstein_diff(&u, &v).unwrap();
        assert!((got - oracle).abs() <= 1e-9, "wasserstein {got} vs oracle {oracle}");
    }
    pass(2, "metric axioms and Wasserstein transport oracle");
}

// --- 3. Segmentation recovery ------------------------------------------------

/// Run the full recovery pipeline over a generated scenario and return the
/// fraction of injected dips whose estimated duration lands within +/- 10
/// minutes of truth, plus the segmentation wall time per station.
fn recovery_fraction(spec: &ScenarioSpec, seed: u64) -> (f64, f64) {
    let sc = generate_scenario(spec, seed).unwrap();
    let cfg = SegmentationConfig::default();

    // Segment every station once, timing only the detection pipeline.
    let started = Instant::now();
    let mut segmented = BTreeMap::new();
    for series in &sc.series {
        let head = spec.profile_days * SLOTS_PER_DAY;
        let baseline = SpeedSeries::new(
            series.station_id.clone(),
            series.start_time,
            series.values()[..head].to_vec(),
            series.missing_mask()[..head].to_vec(),
        )
        .unwrap();
        let profile = build_monthly_profile(&baseline).unwrap();
        let tiled = flowseg::profile::tile_profile(&profile, series.n_days()).unwrap();
        let diff = moving_window_difference(series, &tiled, cfg.window_size, MetricKind::Chebyshev)
            .unwrap();
        let (pre, intervals) = segment_series(&diff, &cfg).unwrap();
        segmented.insert(series.station_id.clone(), (pre, intervals));
    }
    let per_station = started.elapsed().as_secs_f64() / sc.series.len() as f64;

    let mut hits = 0usize;
    for t in &sc.truth {
        let (pre, intervals) = &segmented[&t.station_id];
        let day = t.true_start_slot / SLOTS_PER_DAY;
        let on_day: Vec<_> = intervals.iter().filter(|iv| iv.day_index == day).cloned().collect();
        if let Some(iv) = select_disruption_for_incident(&on_day, &pre.nts) {
            if (iv.duration_minutes() as i64 - t.true_duration_min as i64).abs() <= 10 {
                hits += 1;
            }
        }
    }
    (hits as f64 / sc.truth.len() as f64, per_station)
}

#[test]
fn acceptance_3_segmentation_recovery() {
    let spec = ScenarioSpec {
        n_stations: 25,
        n_incidents: 100,
        observation_days: 4,
        profile_days: 28,
        corruption_fraction: 0.0,
        noise_sigma_fraction: 0.0,
        start_jitter_minutes: 0,
        amplitude: 15.0,
    };
    let (clean, per_station) = recovery_fraction(&spec, 31);
    assert!(clean >= 0.95, "zero-noise recovery {clean}");
    // Each station carries a 32-day series; budget 1 s per station-month.
    assert!(per_station < 1.0, "segmentation took {per_station:.3} s per station");

    let noisy_spec = ScenarioSpec { noise_sigma_fraction: 0.05, ..spec };
    let (noisy, _) = recovery_fraction(&noisy_spec, 32);
    assert!(noisy >= 0.80, "noisy recovery {noisy}");
    pass(3, "segmentation duration recovery");
}

// --- 4. Association vs BFS oracle ---------------------------------------------

/// Brute-force oracle sharing only the resampled point set: linear-scan
/// snapping, adjacency by pairwise distance, textbook BFS hop counts.
fn oracle_assign(
    graph: &RoadPointGraph,
    stations: &[(String, f64, f64)],
    incidents: &[(String, f64, f64)],
    params: &AssociationParams,
) -> HashMap<String, (String, u32)> {
    let points = graph.points();
    let nearest = |x: f64, y: f64| -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        for (i, p) in points.iter().enumerate() {
            let d = ((p[0] - x).powi(2) + (p[1] - y).powi(2)).sqrt();
            if best.map_or(true, |(_, bd)| d < bd) {
                best = Some((i, d));
            }
        }
        best.filter(|&(_, d)| d <= params.max_snap_m)
    };
    let mut adjacency: Vec<Vec<usize>> = vec![Vec::new(); points.len()];
    for i in 0..points.len() {
        for j in 0..points.len() {
            if i != j {
                let d = ((points[i][0] - points[j][0]).powi(2)
                    + (points[i][1] - points[j][1]).powi(2))
                .sqrt();
                if d <= params.jump_radius_m {
                    adjacency[i].push(j);
                }
            }
        }
    }
    let incident_points: Vec<Option<(usize, f64)>> =
        incidents.iter().map(|&(_, x, y)| nearest(x, y)).collect();

    let mut best: HashMap<String, (String, u32)> = HashMap::new();
    for (sid, sx, sy) in stations {
        let Some((start, _)) = nearest(*sx, *sy) else { continue };
        let mut dist: Vec<Option<u32>> = vec![None; points.len()];
        dist[start] = Some(0);
        let mut queue = VecDeque::from([start]);
        while let Some(at) = queue.pop_front() {
            let h = dist[at].unwrap();
            if h == params.max_hops {
                continue;
            }
            for &n in &adjacency[at] {
                if dist[n].is_none() {
                    dist[n] = Some(h + 1);
                    queue.push_back(n);
                }
            }
        }
        for (inc, snap) in incidents.iter().zip(&incident_points) {
            let Some((pt, d)) = snap else { continue };
            if *d > params.collect_radius_m {
                continue;
            }
            let Some(h) = dist[*pt] else { continue };
            let cand = (sid.clone(), h);
            match best.get(&inc.0) {
                Some((bsid, bh)) if (*bh, bsid.as_str()) <= (h, sid.as_str()) => {}
                _ => {
                    best.insert(inc.0.clone(), cand);
                }
            }
        }
    }
    best
}

#[test]
fn acceptance_4_association_matches_oracle() {
    let params = AssociationParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    for trial in 0..5 {
        // Random planar networks, total resampled size kept under 5,000 points.
        let n_roads = rng.gen_range(3..=6);
        let mut polylines_xy: Vec<Vec<[f64; 2]>> = Vec::new();
        for _ in 0..n_roads {
            let mut pts = vec![[rng.gen_range(0.0..400.0), rng.gen_range(0.0..400.0)]];
            for _ in 0..rng.gen_range(1..=3) {
                let last = *pts.last().unwrap();
                pts.push([
                    last[0] + rng.gen_range(50.0..300.0),
                    last[1] + rng.gen_range(-150.0..150.0),
                ]);
            }
            polylines_xy.push(pts);
        }
        let graph = resample_polylines(&polylines_xy, params.spacing_m).unwrap();
        assert!(graph.len() <= 5000, "graph has {} points", graph.len());

        let near_road = |rng: &mut ChaCha8Rng, spread: f64| -> (f64, f64) {
            let pl = &polylines_xy[rng.gen_range(0..polylines_xy.len())];
            let seg = rng.gen_range(0..pl.len() - 1);
            let t: f64 = rng.gen_range(0.0..1.0);
            let x = pl[seg][0] + t * (pl[seg + 1][0] - pl[seg][0]);
            let y = pl[seg][1] + t * (pl[seg + 1][1] - pl[seg][1]);
            (x + rng.gen_range(-spread..spread), y + rng.gen_range(-spread..spread))
        };
        let stations: Vec<(String, f64, f64)> = (0..4)
            .map(|i| {
                let (x, y) = near_road(&mut rng, 5.0);
                (format!("st{i}"), x, y)
            })
            .collect();
        let incidents: Vec<(String, f64, f64)> = (0..30)
            .map(|i| {
                // A few of these land beyond the snap radius on purpose.
                let spread = if i % 5 == 0 { 40.0 } else { 6.0 };
                let (x, y) = near_road(&mut rng, spread);
                (format!("in{i:02}"), x, y)
            })
            .collect();

        // Planar mode: latitude carries y, longitude carries x.
        let polylines: Vec<Vec<(f64, f64)>> = polylines_xy
            .iter()
            .map(|pl| pl.iter().map(|p| (p[1], p[0])).collect())
            .collect();
        let station_recs: Vec<StationRecord> = stations
            .iter()
            .map(|(id, x, y)| StationRecord { station_id: id.clone(), latitude: *y, longitude: *x })
            .collect();
        let incident_recs: Vec<IncidentRecord> = incidents
            .iter()
            .map(|(id, x, y)| IncidentRecord {
                incident_id: id.clone(),
                latitude: *y,
                longitude: *x,
                reported_start: chrono::Utc::now(),
                reported_duration_min: 30,
                features: vec![],
            })
            .collect();
        let out = associate(
            &polylines,
            &station_recs,
            &incident_recs,
            CoordinateMode::Planar,
            &params,
        )
        .unwrap();

        let oracle = oracle_assign(&graph, &stations, &incidents, &params);
        let got: HashMap<String, (String, u32)> = out
            .results
            .iter()
            .map(|r| (r.incident_id.clone(), (r.station_id.clone(), r.hops)))
            .collect();
        assert_eq!(got, oracle, "trial {trial}: assignment differs from BFS oracle");
        for r in &out.results {
            assert!(r.hops <= params.max_hops);
        }
    }

    // Straight-road case: station at 0 m, incidents at 300 m and 700 m on a
    // 1,000 m road; hop budget 250 at 2 m spacing reaches only the first.
    let road = vec![(0.0, 0.0), (0.0, 1000.0)]; // (lat=y', lon=x) planar: x from 0..1000
    let station = StationRecord { station_id: "s".into(), latitude: 0.0, longitude: 0.0 };
    let mk = |id: &str, x: f64| IncidentRecord {
        incident_id: id.into(),
        latitude: 0.0,
        longitude: x,
        reported_start: chrono::Utc::now(),
        reported_duration_min: 30,
        features: vec![],
    };
    let out = associate(
        &[road],
        &[station],
        &[mk("near", 300.0), mk("far", 700.0)],
        CoordinateMode::Planar,
        &AssociationParams::default(),
    )
    .unwrap();
    assert_eq!(out.results.len(), 1);
    assert_eq!(out.results[0].incident_id, "near");
    assert_eq!(out.results[0].hops, 150);
    pass(4, "association equals shortest-hop oracle");
}

// --- 5. Online/offline equivalence --------------------------------------------

#[test]
fn acceptance_5_streaming_offline_equivalence() {
    let cfg = SegmentationConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(55);
    for trial in 0..1_000 {
        let days = rng.gen_range(1..=2);
        let n = days * SLOTS_PER_DAY;
        // Random walks produce realistic threshold crossings.
        let mut values = Vec::with_capacity(n);
        let mut level: f64 = rng.gen_range(0.0..5.0);
        for _ in 0..n {
            level = (level + rng.gen_range(-4.0..4.0)).clamp(0.0, 50.0);
            values.push(level);
        }
        // Frozen bounds: calibration-style half the time, self-derived otherwise.
        let bounds = if trial % 2 == 0 {
            powered_bounds(&values, cfg.selectivity)
        } else {
            let lo = rng.gen_range(0.0..3.0);
            flowseg::NormBounds { min: lo, max: lo + rng.gen_range(1.0..2000.0) }
        };
        let pre = preprocess_with_bounds(&values, &cfg, bounds).unwrap();
        let offline = segment(&pre, &cfg).unwrap();
        let (_, streamed) = Detector::replay("s", &cfg, bounds, &values).unwrap();
        assert_eq!(streamed, offline, "trial {trial}");
    }
    pass(5, "streaming events equal offline intervals");
}

// --- 6. Evaluation-harness ordering --------------------------------------------

#[test]
fn acceptance_6_evaluation_ordering_and_runtime() {
    let spec = ScenarioSpec {
        n_stations: 100,
        n_incidents: 2_000,
        observation_days: 20,
        profile_days: 1,
        corruption_fraction: 0.4,
        noise_sigma_fraction: 0.0,
        start_jitter_minutes: 0,
        amplitude: 15.0,
    };
    let sc = generate_scenario(&spec, 66).unwrap();
    let truth_by_id: HashMap<&str, u32> = sc
        .truth
        .iter()
        .map(|t| (t.incident_id.as_str(), t.true_duration_min))
        .collect();
    let dataset = Dataset {
        feature_names: sc.incidents.feature_names.clone(),
        x: sc.incidents.records.iter().map(|r| r.features.clone()).collect(),
        y_reported: sc
            .incidents
            .records
            .iter()
            .map(|r| r.reported_duration_min as f64)
            .collect(),
        y_estimated: sc
            .incidents
            .records
            .iter()
            .map(|r| truth_by_id[r.incident_id.as_str()] as f64)
            .collect(),
    };
    let models = [ModelSpec::knn_default(), ModelSpec::Linear, ModelSpec::tree_default()];
    let opts = ComparisonOptions { folds: 10, seed: 7, tune: false };
    let started = Instant::now();
    let report = run_comparison(&dataset, &models, &opts).unwrap();
    let elapsed = started.elapsed().as_secs_f64();
    assert!(elapsed < 60.0, "evaluation took {elapsed:.1} s");
    for spec in &models {
        let est = report.cell(spec.name(), TargetKind::Estimated).unwrap();
        let rep = report.cell(spec.name(), TargetKind::Reported).unwrap();
        assert!(
            est.rmse < rep.rmse,
            "{}: rmse_est {} !< rmse_rep {}",
            spec.name(),
            est.rmse,
            rep.rmse
        );
    }
    pass(6, "clean target beats corrupted target for every model");
}

// --- 7. CLI determinism ----------------------------------------------------------

fn flowseg_bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_flowseg"))
}

fn run_ok(dir: &Path, args: &[&str]) {
    let out = flowseg_bin()
        .current_dir(dir)
        .env_remove("FLOWSEG_OUT_DIR")
        .args(args)
        .output()
        .expect("spawn flowseg");
    assert!(
        out.status.success(),
        "flowseg {:?} failed: {}",
        args,
        String::from_utf8_lossy(&out.stderr)
    );
}

fn run_pipeline_once(dir: &Path) {
    std::fs::write(
        dir.join("spec.json"),
        r#"{"n_stations": 4, "n_incidents": 12, "observation_days": 4, "profile_days": 6,
            "corruption_fraction": 0.4, "start_jitter_minutes": 10}"#,
    )
    .unwrap();
    run_ok(dir, &["synth", "--spec", "spec.json", "--seed", "7", "--out", "sc"]);
    run_ok(dir, &["profile", "sc/speeds.csv", "--days", "6", "--out", "profile.csv"]);
    run_ok(dir, &[
        "segment", "sc/speeds.csv", "profile.csv",
        "--out", "intervals.csv", "--emit-diff", "diff.csv",
    ]);
    run_ok(dir, &[
        "associate", "sc/roads.geojson", "sc/stations.csv", "sc/incidents.csv",
        "--out", "assoc.csv",
    ]);
    run_ok(dir, &[
        "evaluate", "sc/incidents.csv", "assoc.csv", "intervals.csv",
        "--folds", "4", "--seed", "7", "--epoch", "2020-03-01T00:00:00Z",
        "--out", "report.json", "--table", "report.csv",
    ]);
    run_ok(dir, &["stream", "sc/speeds.csv", "profile.csv", "--out", "events.ndjson"]);
}

#[test]
fn acceptance_7_cli_determinism() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run_pipeline_once(a.path());
    run_pipeline_once(b.path());
    let artifacts = [
        "sc/roads.geojson",
        "sc/stations.csv",
        "sc/incidents.csv",
        "sc/speeds.csv",
        "sc/truth.csv",
        "profile.csv",
        "intervals.csv",
        "diff.csv",
        "assoc.csv",
        "report.json",
        "report.csv",
        "events.ndjson",
    ];
    for name in artifacts {
        let left = std::fs::read(a.path().join(name)).unwrap();
        let right = std::fs::read(b.path().join(name)).unwrap();
        assert_eq!(left, right, "{name} differs between identical runs");
        assert!(!left.is_empty(), "{name} is empty");
    }
    pass(7, "byte-identical CLI reruns");
}

// --- 8. RMSE / MAPE unit checks -----------------------------------------------

#[test]
fn acceptance_8_error_measure_units() {
    assert!((rmse(&[2.0, 2.0], &[1.0, 3.0]).unwrap() - 1.0).abs() <= 1e-12);
    assert!((mape(&[100.0], &[90.0]).unwrap() - 10.0).abs() <= 1e-12);
    pass(8, "rmse and mape unit checks");
}
