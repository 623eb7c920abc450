//! Incident-to-station association over a resampled road point graph.
//!
//! Road polylines are resampled into points spaced 2 m along the arc, each
//! station and incident is snapped to its nearest road point, and a
//! breadth-first traversal from every station collects the incidents bound
//! to points reachable within the hop budget (250 hops, i.e. 500 m).

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{CoordinateMode, IncidentRecord, StationRecord};
use crate::error::{Error, Result};

const EARTH_RADIUS_M: f64 = 6_371_008.8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AssociationParams {
    /// Maximum entity-to-road snapping distance.
    pub max_snap_m: f64,
    /// Point-to-point jump radius during traversal.
    pub jump_radius_m: f64,
    /// Hop budget; 250 hops at 2 m spacing is the 500 m cap.
    pub max_hops: u32,
    /// An incident is collectible when its snap distance is within this
    /// radius.
    pub collect_radius_m: f64,
    /// Resampling spacing along polylines.
    pub spacing_m: f64,
}

impl Default for AssociationParams {
    fn default() -> Self {
        Self {
            max_snap_m: 10.0,
            jump_radius_m: 3.0,
            max_hops: 250,
            collect_radius_m: 10.0,
            spacing_m: 2.0,
        }
    }
}

/// Converts dataset coordinates (latitude, longitude) to planar meters.
/// Geographic input goes through a local equirectangular projection about
/// the dataset centroid; planar input is taken as (y, x) meters directly.
#[derive(Debug, Clone, Copy)]
pub struct Projector {
    mode: CoordinateMode,
    lat0: f64,
    lon0: f64,
    cos_lat0: f64,
}

impl Projector {
    /// Build a projector centered on the mean of the given (lat, lon) pairs.
    pub fn from_centroid(mode: CoordinateMode, coords: impl IntoIterator<Item = (f64, f64)>) -> Self {
        let mut n = 0usize;
        let (mut lat_sum, mut lon_sum) = (0.0, 0.0);
        for (lat, lon) in coords {
            lat_sum += lat;
            lon_sum += lon;
            n += 1;
        }
        let (lat0, lon0) = if n > 0 {
            (lat_sum / n as f64, lon_sum / n as f64)
        } else {
            (0.0, 0.0)
        };
        Self {
            mode,
            lat0,
            lon0,
            cos_lat0: lat0.to_radians().cos(),
        }
    }

    pub fn to_xy(&self, lat: f64, lon: f64) -> [f64; 2] {
        match self.mode {
            CoordinateMode::Planar => [lon, lat],
            CoordinateMode::Geographic => [
                EARTH_RADIUS_M * self.cos_lat0 * (lon - self.lon0).to_radians(),
                EARTH_RADIUS_M * (lat - self.lat0).to_radians(),
            ],
        }
    }
}

/// Uniform grid over road points for radius queries. Cell size is fixed at
/// 4 m, one cell ring covers every query radius used by the pipeline.
#[derive(Debug, Clone)]
struct GridIndex {
    cell: f64,
    cells: HashMap<(i64, i64), Vec<usize>>,
}

impl GridIndex {
    fn build(points: &[[f64; 2]], cell: f64) -> Self {
        let mut cells: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            cells
                .entry(((p[0] / cell).floor() as i64, (p[1] / cell).floor() as i64))
                .or_default()
                .push(i);
        }
        Self { cell, cells }
    }

    /// Indices of points within `radius` of (x, y), ascending.
    fn query_radius(&self, points: &[[f64; 2]], x: f64, y: f64, radius: f64) -> Vec<usize> {
        let r2 = radius * radius;
        let reach = (radius / self.cell).ceil() as i64;
        let (cx, cy) = ((x / self.cell).floor() as i64, (y / self.cell).floor() as i64);
        let mut out = Vec::new();
        for gx in (cx - reach)..=(cx + reach) {
            for gy in (cy - reach)..=(cy + reach) {
                if let Some(ids) = self.cells.get(&(gx, gy)) {
                    for &i in ids {
                        let dx = points[i][0] - x;
                        let dy = points[i][1] - y;
                        if dx * dx + dy * dy <= r2 {
                            out.push(i);
                        }
                    }
                }
            }
        }
        out.sort_unstable();
        out
    }
}

/// Road polylines resampled to equally spaced points, with a spatial index.
#[derive(Debug, Clone)]
pub struct RoadPointGraph {
    points: Vec<[f64; 2]>,
    polyline_of: Vec<usize>,
    grid: GridIndex,
    spacing_m: f64,
}

impl RoadPointGraph {
    pub fn points(&self) -> &[[f64; 2]] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn polyline_of(&self, point: usize) -> usize {
        self.polyline_of[point]
    }

    pub fn spacing_m(&self) -> f64 {
        self.spacing_m
    }

    /// Nearest road point within `max_dist`, ties broken by lowest index.
    pub fn nearest_point(&self, x: f64, y: f64, max_dist: f64) -> Option<(usize, f64)> {
        let candidates = self.grid.query_radius(&self.points, x, y, max_dist);
        let mut best: Option<(usize, f64)> = None;
        for i in candidates {
            let dx = self.points[i][0] - x;
            let dy = self.points[i][1] - y;
            let d = (dx * dx + dy * dy).sqrt();
            match best {
                Some((_, bd)) if bd <= d => {}
                _ => best = Some((i, d)),
            }
        }
        best
    }

    /// Points within `radius` of point `i`, excluding `i` itself.
    pub fn neighbors(&self, i: usize, radius: f64) -> Vec<usize> {
        let p = self.points[i];
        self.grid
            .query_radius(&self.points, p[0], p[1], radius)
            .into_iter()
            .filter(|&j| j != i)
            .collect()
    }
}

/// Resample projected polylines into points at arc-length multiples of
/// `spacing`, endpoints included.
pub fn resample_polylines(polylines: &[Vec<[f64; 2]>], spacing: f64) -> Result<RoadPointGraph> {
    if !(spacing > 0.0) {
        return Err(Error::InvalidParam(format!("spacing must be > 0, got {spacing}")));
    }
    let mut points = Vec::new();
    let mut polyline_of = Vec::new();
    for (pl_idx, pl) in polylines.iter().enumerate() {
        if pl.len() < 2 {
            return Err(Error::ZeroLengthPolyline(pl_idx));
        }
        let seg_len: Vec<f64> = pl
            .windows(2)
            .map(|w| ((w[1][0] - w[0][0]).powi(2) + (w[1][1] - w[0][1]).powi(2)).sqrt())
            .collect();
        let total: f64 = seg_len.iter().sum();
        if total <= 0.0 {
            return Err(Error::ZeroLengthPolyline(pl_idx));
        }
        let n_steps = (total / spacing).floor() as usize;
        let mut targets: Vec<f64> = (0..=n_steps).map(|k| k as f64 * spacing).collect();
        // Keep the far endpoint when the length is not a spacing multiple.
        if total - targets.last().unwrap() > 1e-9 {
            targets.push(total);
        }
        let mut seg = 0usize;
        let mut seg_start = 0.0;
        for d in targets {
            while seg + 1 < seg_len.len() && d > seg_start + seg_len[seg] + 1e-12 {
                seg_start += seg_len[seg];
                seg += 1;
            }
            let t = if seg_len[seg] > 0.0 {
                ((d - seg_start) / seg_len[seg]).clamp(0.0, 1.0)
            } else {
                0.0
            };
            let a = pl[seg];
            let b = pl[seg + 1];
            points.push([a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]);
            polyline_of.push(pl_idx);
        }
    }
    let grid = GridIndex::build(&points, 4.0);
    Ok(RoadPointGraph {
        points,
        polyline_of,
        grid,
        spacing_m: spacing,
    })
}

/// An entity bound to its nearest road point.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapped {
    pub id: String,
    pub point: usize,
    pub distance_m: f64,
}

/// Snap each (id, x, y) to its nearest road point within `max_snap`;
/// entities farther than that are dropped and reported separately.
pub fn snap_entities(
    graph: &RoadPointGraph,
    entities: &[(String, f64, f64)],
    max_snap: f64,
) -> (Vec<Snapped>, Vec<String>) {
    let mut snapped = Vec::new();
    let mut dropped = Vec::new();
    for (id, x, y) in entities {
        match graph.nearest_point(*x, *y, max_snap) {
            Some((point, distance_m)) => snapped.push(Snapped {
                id: id.clone(),
                point,
                distance_m,
            }),
            None => dropped.push(id.clone()),
        }
    }
    (snapped, dropped)
}

/// Breadth-first traversal from a station's snap point. Returns, per
/// reachable incident, the hop count of its bound road point at first visit
/// (minimal, by BFS order). Incidents whose snap distance exceeds
/// `collect_radius` are not collectible.
pub fn visit_from_station(
    graph: &RoadPointGraph,
    station: &Snapped,
    incidents: &[Snapped],
    jump_radius: f64,
    max_hops: u32,
    collect_radius: f64,
) -> Result<Vec<(usize, u32)>> {
    if station.point >= graph.len() {
        return Err(Error::UnsnappedStation {
            station: station.id.clone(),
        });
    }
    // Bound collectible incidents to their road points.
    let mut at_point: HashMap<usize, Vec<usize>> = HashMap::new();
    for (idx, inc) in incidents.iter().enumerate() {
        if inc.distance_m <= collect_radius {
            at_point.entry(inc.point).or_default().push(idx);
        }
    }

    let mut visited = vec![false; graph.len()];
    let mut queue = VecDeque::new();
    visited[station.point] = true;
    queue.push_back((station.point, 0u32));
    let mut collected = Vec::new();
    while let Some((p, hops)) = queue.pop_front() {
        if let Some(ids) = at_point.get(&p) {
            for &idx in ids {
                collected.push((idx, hops));
            }
        }
        if hops < max_hops {
            for n in graph.neighbors(p, jump_radius) {
                if !visited[n] {
                    visited[n] = true;
                    queue.push_back((n, hops + 1));
                }
            }
        }
    }
    collected.sort_unstable();
    Ok(collected)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssociationResult {
    pub incident_id: String,
    pub station_id: String,
    pub hops: u32,
    pub along_road_distance_m: f64,
}

#[derive(Debug, Clone, Default)]
pub struct AssociationOutput {
    pub results: Vec<AssociationResult>,
    pub dropped_stations: Vec<String>,
    pub dropped_incidents: Vec<String>,
}

/// Assign every reachable incident to its hop-nearest station; ties broken
/// by lexicographically smallest station id. Unreached incidents are simply
/// absent from the result.
pub fn associate_all(
    graph: &RoadPointGraph,
    stations: &[Snapped],
    incidents: &[Snapped],
    params: &AssociationParams,
) -> Result<AssociationOutput> {
    // incident ordinal -> (hops, station id)
    let mut best: BTreeMap<usize, (u32, &str)> = BTreeMap::new();
    let mut order: Vec<&Snapped> = stations.iter().collect();
    order.sort_by(|a, b| a.id.cmp(&b.id));
    for st in order {
        let collected = visit_from_station(
            graph,
            st,
            incidents,
            params.jump_radius_m,
            params.max_hops,
            params.collect_radius_m,
        )?;
        for (idx, hops) in collected {
            match best.get(&idx) {
                Some(&(h, sid)) if (h, sid) <= (hops, st.id.as_str()) => {}
                _ => {
                    best.insert(idx, (hops, st.id.as_str()));
                }
            }
        }
    }
    let mut results: Vec<AssociationResult> = best
        .into_iter()
        .map(|(idx, (hops, station))| AssociationResult {
            incident_id: incidents[idx].id.clone(),
            station_id: station.to_string(),
            hops,
            along_road_distance_m: hops as f64 * params.spacing_m,
        })
        .collect();
    results.sort_by(|a, b| a.incident_id.cmp(&b.incident_id));
    Ok(AssociationOutput {
        results,
        ..Default::default()
    })
}

/// Project, resample, snap and associate in one call. Polyline vertices are
/// (latitude, longitude) pairs in the dataset's coordinate convention.
pub fn associate(
    polylines: &[Vec<(f64, f64)>],
    stations: &[StationRecord],
    incidents: &[IncidentRecord],
    mode: CoordinateMode,
    params: &AssociationParams,
) -> Result<AssociationOutput> {
    let projector = Projector::from_centroid(
        mode,
        polylines.iter().flatten().copied(),
    );
    let projected: Vec<Vec<[f64; 2]>> = polylines
        .iter()
        .map(|pl| pl.iter().map(|&(lat, lon)| projector.to_xy(lat, lon)).collect())
        .collect();
    let graph = resample_polylines(&projected, params.spacing_m)?;

    let station_xy: Vec<(String, f64, f64)> = stations
        .iter()
        .map(|s| {
            let p = projector.to_xy(s.latitude, s.longitude);
            (s.station_id.clone(), p[0], p[1])
        })
        .collect();
    let incident_xy: Vec<(String, f64, f64)> = incidents
        .iter()
        .map(|r| {
            let p = projector.to_xy(r.latitude, r.longitude);
            (r.incident_id.clone(), p[0], p[1])
        })
        .collect();
    let (snapped_stations, dropped_stations) = snap_entities(&graph, &station_xy, params.max_snap_m);
    let (snapped_incidents, dropped_incidents) = snap_entities(&graph, &incident_xy, params.max_snap_m);
    let mut out = associate_all(&graph, &snapped_stations, &snapped_incidents, params)?;
    out.dropped_stations = dropped_stations;
    out.dropped_incidents = dropped_incidents;
    Ok(out)
}

/// Load polylines from GeoJSON (LineString / MultiLineString geometries,
/// bare or inside features) as (latitude, longitude) vertex lists.
pub fn load_polylines_geojson(path: impl AsRef<Path>) -> Result<Vec<Vec<(f64, f64)>>> {
    let path = path.as_ref();
    let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let value: serde_json::Value = serde_json::from_str(&raw)?;
    let mut out = Vec::new();
    collect_geojson(&value, &mut out)?;
    Ok(out)
}

fn collect_geojson(value: &serde_json::Value, out: &mut Vec<Vec<(f64, f64)>>) -> Result<()> {
    let bad = |what: &str| Error::InvalidParam(format!("geojson: {what}"));
    match value.get("type").and_then(|t| t.as_str()) {
        Some("FeatureCollection") => {
            for f in value
                .get("features")
                .and_then(|f| f.as_array())
                .ok_or_else(|| bad("FeatureCollection without features"))?
            {
                collect_geojson(f, out)?;
            }
        }
        Some("Feature") => {
            if let Some(g) = value.get("geometry").filter(|g| !g.is_null()) {
                collect_geojson(g, out)?;
            }
        }
        Some("LineString") => {
            out.push(parse_line_coords(
                value.get("coordinates").ok_or_else(|| bad("LineString without coordinates"))?,
            )?);
        }
        Some("MultiLineString") => {
            for line in value
                .get("coordinates")
                .and_then(|c| c.as_array())
                .ok_or_else(|| bad("MultiLineString without coordinates"))?
            {
                out.push(parse_line_coords(line)?);
            }
        }
        Some(other) => return Err(bad(&format!("unsupported geometry type {other:?}"))),
        None => return Err(bad("missing type")),
    }
    Ok(())
}

fn parse_line_coords(value: &serde_json::Value) -> Result<Vec<(f64, f64)>> {
    let arr = value
        .as_array()
        .ok_or_else(|| Error::InvalidParam("geojson: coordinates not an array".into()))?;
    let mut line = Vec::with_capacity(arr.len());
    for pos in arr {
        let pos = pos
            .as_array()
            .filter(|p| p.len() >= 2)
            .ok_or_else(|| Error::InvalidParam("geojson: bad position".into()))?;
        let lon = pos[0].as_f64().ok_or_else(|| Error::InvalidParam("geojson: bad longitude".into()))?;
        let lat = pos[1].as_f64().ok_or_else(|| Error::InvalidParam("geojson: bad latitude".into()))?;
        // GeoJSON order is [lon, lat]; the pipeline carries (lat, lon).
        line.push((lat, lon));
    }
    Ok(line)
}

/// Write polylines as a GeoJSON FeatureCollection of LineStrings.
pub fn write_polylines_geojson(path: impl AsRef<Path>, polylines: &[Vec<(f64, f64)>]) -> Result<()> {
    let path = path.as_ref();
    let features: Vec<serde_json::Value> = polylines
        .iter()
        .map(|pl| {
            serde_json::json!({
                "type": "Feature",
                "properties": {},
                "geometry": {
                    "type": "LineString",
                    "coordinates": pl.iter().map(|&(lat, lon)| vec![lon, lat]).collect::<Vec<_>>(),
                }
            })
        })
        .collect();
    let fc = serde_json::json!({ "type": "FeatureCollection", "features": features });
    std::fs::write(path, serde_json::to_string_pretty(&fc)? + "\n").map_err(|e| Error::io(path, e))
}

/// Load polylines from CSV rows `polyline_id,seq,lat,lon`.
pub fn load_polylines_csv(path: impl AsRef<Path>) -> Result<Vec<Vec<(f64, f64)>>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let mut by_id: BTreeMap<String, Vec<(u64, f64, f64)>> = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::MalformedRow {
            path: path.to_path_buf(),
            line: e.position().map(|p| p.line()).unwrap_or(0),
            reason: e.to_string(),
        })?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let mk = |what: &str, raw: &str| Error::MalformedRow {
            path: path.to_path_buf(),
            line,
            reason: format!("bad {what} {raw:?}"),
        };
        let seq: u64 = rec[1].parse().map_err(|_| mk("seq", &rec[1]))?;
        let lat: f64 = rec[2].parse().map_err(|_| mk("lat", &rec[2]))?;
        let lon: f64 = rec[3].parse().map_err(|_| mk("lon", &rec[3]))?;
        by_id.entry(rec[0].to_string()).or_default().push((seq, lat, lon));
    }
    let mut out = Vec::new();
    for (_, mut rows) in by_id {
        rows.sort_by_key(|r| r.0);
        out.push(rows.into_iter().map(|(_, lat, lon)| (lat, lon)).collect());
    }
    Ok(out)
}

/// Write association results as `incident_id,station_id,hops,distance_m`.
pub fn write_association_csv(path: impl AsRef<Path>, results: &[AssociationResult]) -> Result<()> {
    let path = path.as_ref();
    let mut w = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    writeln!(w, "incident_id,station_id,hops,distance_m").map_err(|e| Error::io(path, e))?;
    for r in results {
        writeln!(
            w,
            "{},{},{},{}",
            r.incident_id, r.station_id, r.hops, r.along_road_distance_m
        )
        .map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

pub fn load_association_csv(path: impl AsRef<Path>) -> Result<Vec<AssociationResult>> {
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
        let mk = |what: &str, raw: &str| Error::MalformedRow {
            path: path.to_path_buf(),
            line,
            reason: format!("bad {what} {raw:?}"),
        };
        out.push(AssociationResult {
            incident_id: rec[0].to_string(),
            station_id: rec[1].to_string(),
            hops: rec[2].parse().map_err(|_| mk("hops", &rec[2]))?,
            along_road_distance_m: rec[3].parse().map_err(|_| mk("distance_m", &rec[3]))?,
        });
    }
    Ok(out)
}
