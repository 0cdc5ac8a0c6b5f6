//! Census-style zones with point-in-polygon lookup.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::fmt::fmt_f64;
use crate::geo::GeoPoint;

#[derive(Debug, thiserror::Error)]
pub enum ZoneError {
    #[error("zone file: {0}")]
    Format(String),
    #[error("zone '{0}' has fewer than 3 vertices")]
    Degenerate(String),
}

impl From<csv::Error> for ZoneError {
    fn from(e: csv::Error) -> Self {
        ZoneError::Format(e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CensusZone {
    pub zone_id: String,
    /// Rings of lat/lon vertices; ring 0 is the outer boundary, later rings are
    /// holes. Containment uses the even-odd rule across all rings.
    pub rings: Vec<Vec<GeoPoint>>,
    pub median_income: f64,
    pub population: u64,
}

impl CensusZone {
    pub fn centroid(&self) -> GeoPoint {
        let ring = &self.rings[0];
        let n = ring.len() as f64;
        GeoPoint::new(ring.iter().map(|p| p.lat).sum::<f64>() / n, ring.iter().map(|p| p.lon).sum::<f64>() / n)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Containment {
    Outside,
    Inside,
    OnEdge,
}

/// Read-only zone index. Zones are held sorted by id with bounding boxes for
/// a cheap pre-filter, so the first containing zone is also the smallest id.
#[derive(Debug, Clone)]
pub struct ZoneIndex {
    zones: Vec<CensusZone>,
    bbox: Vec<[f64; 4]>,
}

impl ZoneIndex {
    pub fn new(mut zones: Vec<CensusZone>) -> Result<Self, ZoneError> {
        zones.sort_by(|a, b| a.zone_id.cmp(&b.zone_id));
        let mut bbox = Vec::with_capacity(zones.len());
        for z in &zones {
            if z.rings.is_empty() || z.rings[0].len() < 3 {
                return Err(ZoneError::Degenerate(z.zone_id.clone()));
            }
            let mut b = [f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY];
            for p in z.rings.iter().flatten() {
                b[0] = b[0].min(p.lat);
                b[1] = b[1].min(p.lon);
                b[2] = b[2].max(p.lat);
                b[3] = b[3].max(p.lon);
            }
            bbox.push(b);
        }
        Ok(Self { zones, bbox })
    }

    pub fn zones(&self) -> &[CensusZone] {
        &self.zones
    }

    pub fn get(&self, zone_id: &str) -> Option<&CensusZone> {
        self.zones.binary_search_by(|z| z.zone_id.as_str().cmp(zone_id)).ok().map(|i| &self.zones[i])
    }

    /// Zone containing `p`; points on a shared edge resolve to the
    /// lexicographically smallest zone id.
    pub fn assign(&self, p: GeoPoint) -> Option<&CensusZone> {
        const EPS: f64 = 1e-12;
        self.zones.iter().zip(&self.bbox).find_map(|(z, b)| {
            if p.lat < b[0] - EPS || p.lat > b[2] + EPS || p.lon < b[1] - EPS || p.lon > b[3] + EPS {
                return None;
            }
            (contains(&z.rings, p) != Containment::Outside).then_some(z)
        })
    }
}

pub fn assign_census_zone<'a>(p: GeoPoint, zones: &'a ZoneIndex) -> Option<&'a str> {
    zones.assign(p).map(|z| z.zone_id.as_str())
}

fn contains(rings: &[Vec<GeoPoint>], p: GeoPoint) -> Containment {
    let (x, y) = (p.lon, p.lat);
    let mut inside = false;
    for ring in rings {
        let n = ring.len();
        for i in 0..n {
            let a = ring[i];
            let b = ring[(i + 1) % n];
            if on_segment((a.lon, a.lat), (b.lon, b.lat), (x, y)) {
                return Containment::OnEdge;
            }
            if (a.lat > y) != (b.lat > y) {
                let xi = a.lon + (y - a.lat) * (b.lon - a.lon) / (b.lat - a.lat);
                if x < xi {
                    inside = !inside;
                }
            }
        }
    }
    if inside {
        Containment::Inside
    } else {
        Containment::Outside
    }
}

fn on_segment(a: (f64, f64), b: (f64, f64), p: (f64, f64)) -> bool {
    let scale = (b.0 - a.0).abs().max((b.1 - a.1).abs()).max(1e-12);
    let cross = (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0);
    if cross.abs() > 1e-12 * scale {
        return false;
    }
    let within = |u: f64, v: f64, w: f64| w >= u.min(v) - 1e-12 && w <= u.max(v) + 1e-12;
    within(a.0, b.0, p.0) && within(a.1, b.1, p.1)
}

/// Reads `zones.csv` (zone_id, median_income, population) and the vertex
/// file (zone_id, ring, lat, lon). Vertices keep file order within a ring.
pub fn read_zones(attrs: impl Read, vertices: impl Read) -> Result<Vec<CensusZone>, ZoneError> {
    let mut rings: BTreeMap<String, BTreeMap<u32, Vec<GeoPoint>>> = BTreeMap::new();
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(vertices);
    let h = rdr.headers()?.clone();
    let col = |name: &str| {
        h.iter().position(|c| c == name).ok_or_else(|| ZoneError::Format(format!("vertex file missing '{name}'")))
    };
    let (ci, cr, cla, clo) = (col("zone_id")?, col("ring")?, col("lat")?, col("lon")?);
    for rec in rdr.records() {
        let rec = rec?;
        let parse = |i: usize| rec[i].parse::<f64>().map_err(|_| ZoneError::Format(format!("bad number '{}'", &rec[i])));
        let ring: u32 = rec[cr].parse().map_err(|_| ZoneError::Format(format!("bad ring '{}'", &rec[cr])))?;
        rings
            .entry(rec[ci].to_string())
            .or_default()
            .entry(ring)
            .or_default()
            .push(GeoPoint::new(parse(cla)?, parse(clo)?));
    }

    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(attrs);
    let h = rdr.headers()?.clone();
    let col = |name: &str| {
        h.iter().position(|c| c == name).ok_or_else(|| ZoneError::Format(format!("zones file missing '{name}'")))
    };
    let (ci, cm, cp) = (col("zone_id")?, col("median_income")?, col("population")?);
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let id = rec[ci].to_string();
        let median_income: f64 =
            rec[cm].parse().map_err(|_| ZoneError::Format(format!("bad median_income '{}'", &rec[cm])))?;
        if !(median_income >= 0.0) {
            return Err(ZoneError::Format(format!("zone '{id}' has negative median_income")));
        }
        let population: u64 = rec[cp].parse().map_err(|_| ZoneError::Format(format!("bad population '{}'", &rec[cp])))?;
        let zone_rings = rings.remove(&id).ok_or_else(|| ZoneError::Format(format!("zone '{id}' has no vertices")))?;
        out.push(CensusZone { zone_id: id, rings: zone_rings.into_values().collect(), median_income, population });
    }
    Ok(out)
}

pub fn write_zones(zones: &[CensusZone], attrs: impl Write, vertices: impl Write) -> Result<(), ZoneError> {
    let mut w = csv::Writer::from_writer(attrs);
    w.write_record(["zone_id", "median_income", "population"])?;
    for z in zones {
        w.write_record([z.zone_id.clone(), fmt_f64(z.median_income), z.population.to_string()])?;
    }
    w.flush().map_err(|e| ZoneError::Format(e.to_string()))?;
    let mut w = csv::Writer::from_writer(vertices);
    w.write_record(["zone_id", "ring", "lat", "lon"])?;
    for z in zones {
        for (ri, ring) in z.rings.iter().enumerate() {
            for p in ring {
                w.write_record([z.zone_id.clone(), ri.to_string(), fmt_f64(p.lat), fmt_f64(p.lon)])?;
            }
        }
    }
    w.flush().map_err(|e| ZoneError::Format(e.to_string()))?;
    Ok(())
}
