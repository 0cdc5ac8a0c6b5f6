//! POI graphs over walking distance or transit travel time.

use std::collections::HashMap;
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use mixcity_core::fmt::fmt_f64;
use mixcity_core::geo::WALK_SPEED_M_PER_MIN;
use mixcity_core::places::PoiIndex;
use mixcity_core::transit::Station;
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::{EmbedError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeType {
    TransitBinary,
    TransitWeighted,
    DistBinary,
    DistWeighted,
}

impl EdgeType {
    pub const ALL: [EdgeType; 4] = [EdgeType::TransitBinary, EdgeType::TransitWeighted, EdgeType::DistBinary, EdgeType::DistWeighted];

    pub fn as_str(self) -> &'static str {
        match self {
            EdgeType::TransitBinary => "transit_binary",
            EdgeType::TransitWeighted => "transit_weighted",
            EdgeType::DistBinary => "dist_binary",
            EdgeType::DistWeighted => "dist_weighted",
        }
    }

    fn is_transit(self) -> bool {
        matches!(self, EdgeType::TransitBinary | EdgeType::TransitWeighted)
    }
}

impl fmt::Display for EdgeType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EdgeType {
    type Err = EmbedError;

    fn from_str(s: &str) -> Result<Self> {
        EdgeType::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| EmbedError::Parameter(format!("unknown edge type '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraphParams {
    /// Travel-time budget of `transit_binary`, minutes.
    pub t_minutes: f64,
    /// Distance budget of `dist_binary`, meters.
    pub dist_m: f64,
    pub alpha_minutes: f64,
    pub alpha_m: f64,
    /// Weighted edges with `w < epsilon` are dropped.
    pub epsilon: f64,
}

impl Default for GraphParams {
    fn default() -> Self {
        Self { t_minutes: 15.0, dist_m: 1260.0, alpha_minutes: 15.0, alpha_m: 1260.0, epsilon: (-3.0f64).exp() }
    }
}

impl GraphParams {
    pub fn validate(&self) -> Result<()> {
        let pos = [self.t_minutes, self.dist_m, self.alpha_minutes, self.alpha_m];
        if pos.iter().any(|v| !(*v > 0.0) || !v.is_finite()) || !(self.epsilon > 0.0 && self.epsilon <= 1.0) {
            return Err(EmbedError::Parameter(format!("{self:?}")));
        }
        Ok(())
    }

    pub fn alpha(&self, t: EdgeType) -> f64 {
        if t.is_transit() {
            self.alpha_minutes
        } else {
            self.alpha_m
        }
    }
}

/// Travel time between POIs, symmetric in its arguments.
pub trait TravelTime: Sync {
    fn minutes(&self, i: usize, j: usize) -> f64;
    /// Every `j` whose time from `i` may be within `budget`; a superset is fine.
    fn candidates(&self, i: usize, budget: f64) -> Vec<usize>;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransitParams {
    pub walk_m_per_min: f64,
    pub headway_min: f64,
    /// Straight-line ride speed used for station pairs missing from the table.
    pub ride_m_per_min: f64,
}

impl Default for TransitParams {
    fn default() -> Self {
        Self { walk_m_per_min: WALK_SPEED_M_PER_MIN, headway_min: 10.0, ride_m_per_min: 500.0 }
    }
}

/// Walk, or walk to the nearest stop, wait half a headway, ride, and walk
/// from the destination's nearest stop; whichever is faster.
pub struct TransitTimes<'a> {
    index: &'a PoiIndex,
    params: TransitParams,
    /// Nearest stop and walking minutes to it, per POI.
    access: Vec<Option<(usize, f64)>>,
    ride: Vec<Vec<f64>>,
    /// POIs served by each stop, ascending by walking time.
    served: Vec<Vec<(f64, usize)>>,
}

impl<'a> TransitTimes<'a> {
    /// `ride_table` maps `(from, to)` station ids to minutes; the faster
    /// direction is used for both so times stay symmetric.
    pub fn new(index: &'a PoiIndex, stations: &[Station], params: TransitParams, ride_table: &HashMap<(String, String), f64>) -> Self {
        let proj = index.projection();
        let sxy: Vec<(f64, f64)> = stations.iter().map(|s| proj.forward(s.point)).collect();
        let ns = stations.len();
        let mut ride = vec![vec![0.0; ns]; ns];
        for a in 0..ns {
            for b in 0..ns {
                if a == b {
                    continue;
                }
                let key = |x: usize, y: usize| (stations[x].station_id.clone(), stations[y].station_id.clone());
                let table = match (ride_table.get(&key(a, b)), ride_table.get(&key(b, a))) {
                    (Some(x), Some(y)) => Some(x.min(*y)),
                    (x, y) => x.or(y).copied(),
                };
                ride[a][b] = table.unwrap_or_else(|| (sxy[a].0 - sxy[b].0).hypot(sxy[a].1 - sxy[b].1) / params.ride_m_per_min);
            }
        }
        let mut access = Vec::with_capacity(index.len());
        let mut served = vec![Vec::new(); ns];
        for i in 0..index.len() {
            let (x, y) = index.xy(i);
            let best = sxy
                .iter()
                .enumerate()
                .map(|(s, p)| (s, (p.0 - x).hypot(p.1 - y) / params.walk_m_per_min))
                .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
            if let Some((s, w)) = best {
                served[s].push((w, i));
            }
            access.push(best);
        }
        for v in &mut served {
            v.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        }
        Self { index, params, access, ride, served }
    }

    fn walk(&self, i: usize, j: usize) -> f64 {
        let (a, b) = (self.index.xy(i), self.index.xy(j));
        (a.0 - b.0).hypot(a.1 - b.1) / self.params.walk_m_per_min
    }
}

impl TravelTime for TransitTimes<'_> {
    fn minutes(&self, i: usize, j: usize) -> f64 {
        // Fixed summation order keeps t(i, j) == t(j, i) bit for bit.
        let (i, j) = (i.min(j), i.max(j));
        let walk = self.walk(i, j);
        match (self.access[i], self.access[j]) {
            (Some((si, wi)), Some((sj, wj))) => walk.min(wi + self.params.headway_min / 2.0 + self.ride[si][sj] + wj),
            _ => walk,
        }
    }

    fn candidates(&self, i: usize, budget: f64) -> Vec<usize> {
        let (x, y) = self.index.xy(i);
        let mut out = self.index.within_xy(x, y, budget * self.params.walk_m_per_min);
        if let Some((si, wi)) = self.access[i] {
            let left = budget - wi - self.params.headway_min / 2.0;
            for (sj, members) in self.served.iter().enumerate() {
                let rem = left - self.ride[si][sj];
                if rem < 0.0 {
                    continue;
                }
                out.extend(members.iter().take_while(|(w, _)| *w <= rem + 1e-9).map(|(_, j)| *j));
            }
        }
        out.sort_unstable();
        out.dedup();
        out
    }
}

/// Straight-line walking only; used when no stations are available.
pub struct WalkTimes<'a> {
    pub index: &'a PoiIndex,
    pub walk_m_per_min: f64,
}

impl TravelTime for WalkTimes<'_> {
    fn minutes(&self, i: usize, j: usize) -> f64 {
        let (a, b) = (self.index.xy(i), self.index.xy(j));
        (a.0 - b.0).hypot(a.1 - b.1) / self.walk_m_per_min
    }

    fn candidates(&self, i: usize, budget: f64) -> Vec<usize> {
        let (x, y) = self.index.xy(i);
        self.index.within_xy(x, y, budget * self.walk_m_per_min)
    }
}

/// Undirected weighted POI graph; each edge stored once with `i < j`.
#[derive(Debug, Clone, PartialEq)]
pub struct PlaceGraph {
    pub n: usize,
    pub edge_type: EdgeType,
    pub alpha: f64,
    pub edges: Vec<(u32, u32, f64)>,
}

impl PlaceGraph {
    pub fn from_edges(n: usize, edge_type: EdgeType, alpha: f64, mut edges: Vec<(u32, u32, f64)>) -> Result<Self> {
        for e in &mut edges {
            if e.0 == e.1 {
                return Err(EmbedError::Input(format!("self edge at node {}", e.0)));
            }
            if e.0 > e.1 {
                std::mem::swap(&mut e.0, &mut e.1);
            }
            if e.1 as usize >= n || !(e.2 > 0.0 && e.2 <= 1.0) {
                return Err(EmbedError::Input(format!("bad edge {e:?} for {n} nodes")));
            }
        }
        edges.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        edges.dedup_by(|a, b| (a.0, a.1) == (b.0, b.1));
        Ok(Self { n, edge_type, alpha, edges })
    }

    /// Weighted degree per node.
    pub fn degree(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.n];
        for &(i, j, w) in &self.edges {
            d[i as usize] += w;
            d[j as usize] += w;
        }
        d
    }

    /// Symmetric adjacency without self loops.
    pub fn adjacency(&self) -> Csr {
        let mut rows: Vec<Vec<(u32, f64)>> = vec![Vec::new(); self.n];
        for &(i, j, w) in &self.edges {
            rows[i as usize].push((j, w));
            rows[j as usize].push((i, w));
        }
        Csr::from_rows(rows)
    }

    /// `D^-1/2 (A + I) D^-1/2` with `D` the degree of `A + I`.
    pub fn normalized_adjacency(&self) -> Csr {
        let deg: Vec<f64> = self.degree().iter().map(|d| d + 1.0).collect();
        let mut rows: Vec<Vec<(u32, f64)>> = (0..self.n).map(|i| vec![(i as u32, 1.0 / deg[i])]).collect();
        for &(i, j, w) in &self.edges {
            let v = w / (deg[i as usize] * deg[j as usize]).sqrt();
            rows[i as usize].push((j, v));
            rows[j as usize].push((i, v));
        }
        Csr::from_rows(rows)
    }
}

/// Compressed sparse rows with sorted column indices.
#[derive(Debug, Clone, PartialEq)]
pub struct Csr {
    pub n: usize,
    pub indptr: Vec<usize>,
    pub indices: Vec<u32>,
    pub values: Vec<f64>,
}

impl Csr {
    fn from_rows(mut rows: Vec<Vec<(u32, f64)>>) -> Self {
        let mut indptr = vec![0];
        let (mut indices, mut values) = (Vec::new(), Vec::new());
        for r in &mut rows {
            r.sort_by_key(|e| e.0);
            for &(j, v) in r.iter() {
                indices.push(j);
                values.push(v);
            }
            indptr.push(indices.len());
        }
        Self { n: rows.len(), indptr, indices, values }
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        (self.indptr[i]..self.indptr[i + 1]).map(move |k| (self.indices[k] as usize, self.values[k]))
    }

    /// `self * x` for a dense `x` with `n` rows.
    pub fn mul_dense(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        assert_eq!(x.nrows(), self.n);
        let mut out = DMatrix::zeros(self.n, x.ncols());
        for c in 0..x.ncols() {
            let col = x.column(c);
            for i in 0..self.n {
                let mut s = 0.0;
                for (j, v) in self.row(i) {
                    s += v * col[j];
                }
                out[(i, c)] = s;
            }
        }
        out
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                m[(i, j)] = v;
            }
        }
        m
    }
}

/// Builds the graph of `edge_type` over the POIs of `index`. Transit types
/// need `times`; distance types use planar distance.
pub fn build_place_graph(index: &PoiIndex, edge_type: EdgeType, params: &GraphParams, times: Option<&dyn TravelTime>) -> Result<PlaceGraph> {
    params.validate()?;
    let alpha = params.alpha(edge_type);
    let n = index.len();
    // Support radius in the unit of the edge type.
    let reach = match edge_type {
        EdgeType::TransitBinary => params.t_minutes,
        EdgeType::DistBinary => params.dist_m,
        EdgeType::TransitWeighted | EdgeType::DistWeighted => -alpha * params.epsilon.ln(),
    };
    let weight = |v: f64| -> Option<f64> {
        match edge_type {
            EdgeType::TransitBinary | EdgeType::DistBinary => (v <= reach).then_some(1.0),
            _ => {
                let w = (-v / alpha).exp();
                (w >= params.epsilon).then_some(w)
            }
        }
    };
    let times = if edge_type.is_transit() {
        Some(times.ok_or_else(|| EmbedError::Parameter(format!("{edge_type} needs a travel-time provider")))?)
    } else {
        None
    };
    let edges: Vec<(u32, u32, f64)> = (0..n)
        .into_par_iter()
        .flat_map_iter(|i| {
            let cands = match times {
                Some(t) => t.candidates(i, reach),
                None => {
                    let (x, y) = index.xy(i);
                    index.within_xy(x, y, reach)
                }
            };
            let (xi, yi) = index.xy(i);
            cands
                .into_iter()
                .filter(move |&j| j > i)
                .filter_map(move |j| {
                    let v = match times {
                        Some(t) => t.minutes(i, j),
                        None => {
                            let (xj, yj) = index.xy(j);
                            (xi - xj).hypot(yi - yj)
                        }
                    };
                    weight(v).map(|w| (i as u32, j as u32, w))
                })
                .collect::<Vec<_>>()
        })
        .collect();
    Ok(PlaceGraph { n, edge_type, alpha, edges })
}

pub fn write_graph_csv(g: &PlaceGraph, out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["i", "j", "w", "edge_type"])?;
    for &(i, j, v) in &g.edges {
        w.write_record([i.to_string(), j.to_string(), fmt_f64(v), g.edge_type.as_str().to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads `graph.csv`; node count and alpha are not stored in the file.
pub fn read_graph_csv(input: impl Read, n: usize, alpha: f64) -> Result<PlaceGraph> {
    let mut r = csv::Reader::from_reader(input);
    let mut edges = Vec::new();
    let mut kind: Option<EdgeType> = None;
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        let bad = |what: &str| EmbedError::Format(format!("graph.csv row {}: bad {what}", line + 2));
        let i: u32 = rec.get(0).and_then(|s| s.parse().ok()).ok_or_else(|| bad("i"))?;
        let j: u32 = rec.get(1).and_then(|s| s.parse().ok()).ok_or_else(|| bad("j"))?;
        let w: f64 = rec.get(2).and_then(|s| s.parse().ok()).ok_or_else(|| bad("w"))?;
        let t: EdgeType = rec.get(3).ok_or_else(|| bad("edge_type"))?.parse()?;
        if kind.is_some_and(|k| k != t) {
            return Err(bad("edge_type (mixed types)"));
        }
        kind = Some(t);
        edges.push((i, j, w));
    }
    let kind = kind.ok_or_else(|| EmbedError::Format("graph.csv has no edges".into()))?;
    PlaceGraph::from_edges(n, kind, alpha, edges)
}

/// Reads a ride-time table with columns `from_station,to_station,minutes`.
pub fn read_ride_table(input: impl Read) -> Result<HashMap<(String, String), f64>> {
    #[derive(Deserialize)]
    struct Row {
        from_station: String,
        to_station: String,
        minutes: f64,
    }
    let mut out = HashMap::new();
    for row in csv::Reader::from_reader(input).deserialize() {
        let row: Row = row?;
        if !(row.minutes >= 0.0) {
            return Err(EmbedError::Format(format!("negative ride time {} -> {}", row.from_station, row.to_station)));
        }
        out.insert((row.from_station, row.to_station), row.minutes);
    }
    Ok(out)
}
