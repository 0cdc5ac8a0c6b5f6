//! Station accessibility and morning transit hubs.

use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::fmt::{fmt_f64, fmt_opt};
use crate::geo::{haversine_m, GeoPoint};
use crate::grid::{CellId, GridError, HexGrid};
use crate::survey::{Mode, SurveyDataset};

#[derive(Debug, thiserror::Error)]
pub enum TransitError {
    #[error("no stations of kind {0}")]
    NoStations(StationKind),
    #[error("empty window: no qualifying arrivals between minute {0} and {1}")]
    EmptyWindow(u32, u32),
    #[error("no hubs")]
    NoHubs,
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("transit file: {0}")]
    Format(String),
    #[error(transparent)]
    Grid(#[from] GridError),
}

impl From<csv::Error> for TransitError {
    fn from(e: csv::Error) -> Self {
        TransitError::Format(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StationKind {
    Train,
    Bus,
}

impl StationKind {
    pub fn as_str(self) -> &'static str {
        match self {
            StationKind::Train => "train",
            StationKind::Bus => "bus",
        }
    }

    pub fn from_label(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "train" => Some(StationKind::Train),
            "bus" => Some(StationKind::Bus),
            _ => None,
        }
    }
}

impl std::fmt::Display for StationKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Station {
    pub station_id: String,
    pub kind: StationKind,
    pub point: GeoPoint,
    pub open_year: Option<i32>,
}

/// Drops stations opened after `survey_year`; keeps all when it is `None`
/// and keeps stations without an open year.
pub fn filter_open(stations: &[Station], survey_year: Option<i32>) -> Vec<Station> {
    stations
        .iter()
        .filter(|s| match (survey_year, s.open_year) {
            (Some(y), Some(o)) => o <= y,
            _ => true,
        })
        .cloned()
        .collect()
}

/// Distance from a point to a station, in meters.
pub trait DistanceProvider: Sync {
    fn distance_m(&self, from: GeoPoint, station: &Station) -> f64;
}

/// Great-circle distance.
#[derive(Debug, Clone, Copy, Default)]
pub struct GreatCircle;

impl DistanceProvider for GreatCircle {
    fn distance_m(&self, from: GeoPoint, station: &Station) -> f64 {
        haversine_m(from, station.point)
    }
}

/// Precomputed network distances keyed by (origin cell, station); pairs not
/// in the table fall back to great-circle.
#[derive(Debug, Clone)]
pub struct DistanceTable {
    grid: HexGrid,
    level: u8,
    table: HashMap<(CellId, String), f64>,
}

impl DistanceTable {
    pub fn new(grid: HexGrid, level: u8, table: HashMap<(CellId, String), f64>) -> Self {
        Self { grid, level, table }
    }

    /// Reads `cell_id,station_id,meters`.
    pub fn read(grid: HexGrid, level: u8, input: impl Read) -> Result<Self, TransitError> {
        let mut rdr = csv::Reader::from_reader(input);
        let mut table = HashMap::new();
        for rec in rdr.records() {
            let rec = rec?;
            if rec.len() < 3 {
                return Err(TransitError::Format(format!("distance table row has {} fields", rec.len())));
            }
            let cell: CellId = rec[0].parse().map_err(|_| TransitError::Format(format!("bad cell '{}'", &rec[0])))?;
            let m: f64 = rec[2].trim().parse().map_err(|_| TransitError::Format(format!("bad meters '{}'", &rec[2])))?;
            if !(m >= 0.0) {
                return Err(TransitError::Format(format!("negative distance {m}")));
            }
            table.insert((cell, rec[1].to_string()), m);
        }
        Ok(Self { grid, level, table })
    }
}

impl DistanceProvider for DistanceTable {
    fn distance_m(&self, from: GeoPoint, station: &Station) -> f64 {
        self.grid
            .bin_point(from, self.level)
            .ok()
            .and_then(|c| self.table.get(&(c, station.station_id.clone())).copied())
            .unwrap_or_else(|| haversine_m(from, station.point))
    }
}

pub fn nearest_station_distance(
    home: GeoPoint,
    stations: &[Station],
    kind: StationKind,
    provider: &dyn DistanceProvider,
) -> Result<f64, TransitError> {
    stations
        .iter()
        .filter(|s| s.kind == kind)
        .map(|s| provider.distance_m(home, s))
        .min_by(f64::total_cmp)
        .ok_or(TransitError::NoStations(kind))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccessThresholds {
    pub train_m: f64,
    pub bus_m: f64,
}

impl Default for AccessThresholds {
    fn default() -> Self {
        Self { train_m: 1000.0, bus_m: 800.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccessFlags {
    pub train_access: bool,
    pub bus_access: bool,
}

/// Boundary inclusive.
pub fn accessibility_flags(train_dist_m: f64, bus_dist_m: f64, th: &AccessThresholds) -> AccessFlags {
    AccessFlags { train_access: train_dist_m <= th.train_m, bus_access: bus_dist_m <= th.bus_m }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HubMode {
    Mono,
    Poly,
}

impl HubMode {
    pub fn as_str(self) -> &'static str {
        match self {
            HubMode::Mono => "mono",
            HubMode::Poly => "poly",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HubConfig {
    pub level: u8,
    /// Inclusive arrival window, minutes since midnight.
    pub window: (u32, u32),
    pub threshold: f64,
    /// Leg modes that count as arrivals; `None` counts every leg.
    pub modes: Option<Vec<Mode>>,
    /// Only arrivals at train stations define hubs.
    pub kind: StationKind,
}

impl Default for HubConfig {
    fn default() -> Self {
        Self { level: 8, window: (360, 660), threshold: 0.6, modes: Some(vec![Mode::PublicTransit]), kind: StationKind::Train }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HubSet {
    pub mode: HubMode,
    /// Hub cells with their arrival weight, heaviest first.
    pub cells: Vec<(CellId, f64)>,
    pub coverage_share: f64,
}

/// Expansion-weighted window arrivals per station-containing cell.
pub fn station_cell_arrivals(
    ds: &SurveyDataset,
    stations: &[Station],
    grid: &HexGrid,
    cfg: &HubConfig,
) -> Result<BTreeMap<CellId, f64>, TransitError> {
    let mut arrivals: BTreeMap<CellId, f64> = BTreeMap::new();
    for s in stations.iter().filter(|s| s.kind == cfg.kind) {
        arrivals.insert(grid.bin_point(s.point, cfg.level)?, 0.0);
    }
    let (lo, hi) = cfg.window;
    for (i, p) in ds.persons().iter().enumerate() {
        for leg in ds.legs_of(i) {
            if leg.arrive_min < lo || leg.arrive_min > hi {
                continue;
            }
            if let Some(modes) = &cfg.modes {
                if !modes.contains(&leg.mode) {
                    continue;
                }
            }
            if let Some(w) = arrivals.get_mut(&grid.bin_point(leg.dest, cfg.level)?) {
                *w += p.expansion_factor;
            }
        }
    }
    arrivals.retain(|_, w| *w > 0.0);
    Ok(arrivals)
}

/// Mono: the heaviest cell (ties to the smaller cell id). Poly: the shortest
/// heaviest-first prefix whose share of all arrivals reaches `threshold`.
pub fn select_hubs(arrivals: &BTreeMap<CellId, f64>, mode: HubMode, threshold: f64) -> Result<HubSet, TransitError> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(TransitError::Parameter(format!("hub threshold {threshold} outside (0, 1]")));
    }
    let total: f64 = arrivals.values().sum();
    if arrivals.is_empty() || !(total > 0.0) {
        return Err(TransitError::NoHubs);
    }
    let mut order: Vec<(CellId, f64)> = arrivals.iter().map(|(c, w)| (*c, *w)).collect();
    // Stable sort keeps ascending cell order among equal weights.
    order.sort_by(|a, b| b.1.total_cmp(&a.1));
    let take = match mode {
        HubMode::Mono => 1,
        HubMode::Poly => {
            let mut cum = 0.0;
            let mut n = order.len();
            for (i, (_, w)) in order.iter().enumerate() {
                cum += w;
                if cum / total >= threshold {
                    n = i + 1;
                    break;
                }
            }
            n
        }
    };
    order.truncate(take);
    let covered: f64 = order.iter().map(|c| c.1).sum();
    Ok(HubSet { mode, cells: order, coverage_share: covered / total })
}

pub fn identify_hubs(
    ds: &SurveyDataset,
    stations: &[Station],
    grid: &HexGrid,
    cfg: &HubConfig,
    mode: HubMode,
) -> Result<HubSet, TransitError> {
    let arrivals = station_cell_arrivals(ds, stations, grid, cfg)?;
    if arrivals.is_empty() {
        return Err(TransitError::EmptyWindow(cfg.window.0, cfg.window.1));
    }
    select_hubs(&arrivals, mode, cfg.threshold)
}

/// Distance band breakpoints in km; labels are `0-5 km`, ..., `>20 km`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HubBands {
    pub breaks_km: Vec<f64>,
}

impl Default for HubBands {
    fn default() -> Self {
        Self { breaks_km: vec![5.0, 10.0, 20.0] }
    }
}

impl HubBands {
    pub fn labels(&self) -> Vec<String> {
        let mut out = Vec::with_capacity(self.breaks_km.len() + 1);
        let mut lo = 0.0;
        for b in &self.breaks_km {
            out.push(format!("{}-{} km", fmt_f64(lo), fmt_f64(*b)));
            lo = *b;
        }
        out.push(format!(">{} km", fmt_f64(lo)));
        out
    }

    /// Bands are closed on the right: 5 km falls in `0-5 km`.
    pub fn label(&self, km: f64) -> String {
        let i = self.breaks_km.iter().position(|b| km <= *b).unwrap_or(self.breaks_km.len());
        self.labels().swap_remove(i)
    }
}

/// Distance in km from the home cell center to the nearest hub cell center.
pub fn home_hub_distance(
    home: GeoPoint,
    hubs: &HubSet,
    grid: &HexGrid,
    bands: &HubBands,
) -> Result<(f64, String), TransitError> {
    if hubs.cells.is_empty() {
        return Err(TransitError::NoHubs);
    }
    let level = hubs.cells[0].0.level;
    let from = grid.center(grid.bin_point(home, level)?);
    let km = hubs
        .cells
        .iter()
        .map(|(c, _)| haversine_m(from, grid.center(*c)) / 1000.0)
        .min_by(f64::total_cmp)
        .expect("non-empty");
    Ok((km, bands.label(km)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccessRow {
    pub person_id: String,
    pub train_m: Option<f64>,
    pub bus_m: Option<f64>,
    pub train_access: bool,
    pub bus_access: bool,
    pub mono_km: f64,
    pub mono_band: String,
    pub poly_km: f64,
    pub poly_band: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccessConfig {
    pub thresholds: AccessThresholds,
    pub hubs: HubConfig,
    pub bands: HubBands,
    pub survey_year: Option<i32>,
}

impl Default for AccessConfig {
    fn default() -> Self {
        Self { thresholds: AccessThresholds::default(), hubs: HubConfig::default(), bands: HubBands::default(), survey_year: None }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AccessReport {
    pub rows: Vec<AccessRow>,
    pub mono: HubSet,
    pub poly: HubSet,
    pub stations_used: usize,
}

/// Per-person station distances, access flags and hub distances.
///
/// A kind with no open stations yields missing distances and `false` flags.
pub fn compute_access(
    ds: &SurveyDataset,
    stations: &[Station],
    grid: &HexGrid,
    cfg: &AccessConfig,
    provider: &dyn DistanceProvider,
) -> Result<AccessReport, TransitError> {
    let open = filter_open(stations, cfg.survey_year);
    let mono = identify_hubs(ds, &open, grid, &cfg.hubs, HubMode::Mono)?;
    let poly = identify_hubs(ds, &open, grid, &cfg.hubs, HubMode::Poly)?;
    let rows = ds
        .persons()
        .par_iter()
        .map(|p| {
            let train = nearest_station_distance(p.home, &open, StationKind::Train, provider).ok();
            let bus = nearest_station_distance(p.home, &open, StationKind::Bus, provider).ok();
            let flags = accessibility_flags(train.unwrap_or(f64::INFINITY), bus.unwrap_or(f64::INFINITY), &cfg.thresholds);
            let (mono_km, mono_band) = home_hub_distance(p.home, &mono, grid, &cfg.bands)?;
            let (poly_km, poly_band) = home_hub_distance(p.home, &poly, grid, &cfg.bands)?;
            Ok(AccessRow {
                person_id: p.person_id.clone(),
                train_m: train,
                bus_m: bus,
                train_access: flags.train_access,
                bus_access: flags.bus_access,
                mono_km,
                mono_band,
                poly_km,
                poly_band,
            })
        })
        .collect::<Result<Vec<_>, TransitError>>()?;
    Ok(AccessReport { rows, mono, poly, stations_used: open.len() })
}

pub const STATION_COLUMNS: [&str; 5] = ["station_id", "kind", "lat", "lon", "open_year"];

pub fn read_stations(input: impl Read) -> Result<Vec<Station>, TransitError> {
    let mut rdr = csv::Reader::from_reader(input);
    let h = rdr.headers()?.clone();
    let col = |name: &str| h.iter().position(|c| c.trim() == name).ok_or_else(|| TransitError::Format(format!("stations.csv missing '{name}'")));
    let (ci, ck, cla, clo) = (col("station_id")?, col("kind")?, col("lat")?, col("lon")?);
    let cy = h.iter().position(|c| c.trim() == "open_year");
    let num = |s: &str, what: &str| s.trim().parse::<f64>().map_err(|_| TransitError::Format(format!("bad {what} '{s}'")));
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let kind = StationKind::from_label(&rec[ck]).ok_or_else(|| TransitError::Format(format!("bad station kind '{}'", &rec[ck])))?;
        let point = GeoPoint::new(num(&rec[cla], "lat")?, num(&rec[clo], "lon")?);
        if !point.is_finite() {
            return Err(TransitError::Format(format!("station '{}' has non-finite coordinates", &rec[ci])));
        }
        let open_year = match cy.map(|i| rec[i].trim()) {
            None | Some("") => None,
            Some(s) => Some(s.parse().map_err(|_| TransitError::Format(format!("bad open_year '{s}'")))?),
        };
        out.push(Station { station_id: rec[ci].to_string(), kind, point, open_year });
    }
    Ok(out)
}

pub fn write_stations(stations: &[Station], out: impl Write) -> Result<(), TransitError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(STATION_COLUMNS)?;
    for s in stations {
        w.write_record([
            s.station_id.clone(),
            s.kind.as_str().to_string(),
            fmt_f64(s.point.lat),
            fmt_f64(s.point.lon),
            s.open_year.map(|y| y.to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush().map_err(|e| TransitError::Format(e.to_string()))
}

const ACCESS_COLUMNS: [&str; 9] =
    ["person_id", "train_m", "bus_m", "train_access", "bus_access", "mono_km", "mono_band", "poly_km", "poly_band"];

pub fn write_access_csv(rows: &[AccessRow], out: impl Write) -> Result<(), TransitError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(ACCESS_COLUMNS)?;
    for r in rows {
        w.write_record([
            r.person_id.clone(),
            fmt_opt(r.train_m),
            fmt_opt(r.bus_m),
            r.train_access.to_string(),
            r.bus_access.to_string(),
            fmt_f64(r.mono_km),
            r.mono_band.clone(),
            fmt_f64(r.poly_km),
            r.poly_band.clone(),
        ])?;
    }
    w.flush().map_err(|e| TransitError::Format(e.to_string()))
}

pub fn read_access_csv(input: impl Read) -> Result<Vec<AccessRow>, TransitError> {
    let mut rdr = csv::Reader::from_reader(input);
    let h = rdr.headers()?.clone();
    let mut idx = [0usize; 9];
    for (k, name) in ACCESS_COLUMNS.iter().enumerate() {
        idx[k] = h.iter().position(|c| c == *name).ok_or_else(|| TransitError::Format(format!("access.csv missing '{name}'")))?;
    }
    let opt = |s: &str| -> Result<Option<f64>, TransitError> {
        if s.is_empty() {
            Ok(None)
        } else {
            s.parse().map(Some).map_err(|_| TransitError::Format(format!("bad number '{s}'")))
        }
    };
    let flag = |s: &str| s.parse::<bool>().map_err(|_| TransitError::Format(format!("bad flag '{s}'")));
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        rows.push(AccessRow {
            person_id: rec[idx[0]].to_string(),
            train_m: opt(&rec[idx[1]])?,
            bus_m: opt(&rec[idx[2]])?,
            train_access: flag(&rec[idx[3]])?,
            bus_access: flag(&rec[idx[4]])?,
            mono_km: opt(&rec[idx[5]])?.unwrap_or(f64::NAN),
            mono_band: rec[idx[6]].to_string(),
            poly_km: opt(&rec[idx[7]])?.unwrap_or(f64::NAN),
            poly_band: rec[idx[8]].to_string(),
        });
    }
    Ok(rows)
}

/// `hubs.csv`: one row per hub cell for each mode.
pub fn write_hubs_csv(sets: &[&HubSet], out: impl Write) -> Result<(), TransitError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["mode", "rank", "cell_id", "arrivals", "coverage_share"])?;
    for set in sets {
        for (i, (c, a)) in set.cells.iter().enumerate() {
            w.write_record([set.mode.as_str().to_string(), (i + 1).to_string(), c.to_string(), fmt_f64(*a), fmt_f64(set.coverage_share)])?;
        }
    }
    w.flush().map_err(|e| TransitError::Format(e.to_string()))
}
