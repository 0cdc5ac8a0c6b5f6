//! Hierarchical hexagonal binning.
//!
//! Each level is a flat-top hexagonal lattice in a local equirectangular
//! frame anchored at the grid origin. Edge lengths follow an aperture-7
//! progression: 530 m at level 8, scaled by sqrt(7) per level step. Cell
//! `(q, r)` has its center at `x = 1.5 s q`, `y = sqrt(3) s (r + q/2)` for
//! edge length `s`. Parents are found by binning a cell's center at the
//! coarser level, so nesting is exact away from coarse-cell boundaries.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::geo::{GeoPoint, Projection};

pub const MIN_LEVEL: u8 = 4;
pub const MAX_LEVEL: u8 = 10;
pub const LEVEL8_EDGE_M: f64 = 530.0;

const SQRT3: f64 = 1.732_050_807_568_877_2;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum GridError {
    #[error("non-finite coordinates ({0}, {1})")]
    NonFinite(f64, f64),
    #[error("level {0} outside {MIN_LEVEL}..={MAX_LEVEL}")]
    Level(u8),
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("cannot parse cell id '{0}'")]
    Parse(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct HexResolution {
    level: u8,
}

impl HexResolution {
    pub fn new(level: u8) -> Result<Self, GridError> {
        if (MIN_LEVEL..=MAX_LEVEL).contains(&level) {
            Ok(Self { level })
        } else {
            Err(GridError::Level(level))
        }
    }

    pub fn level(self) -> u8 {
        self.level
    }

    pub fn edge_length_m(self) -> f64 {
        LEVEL8_EDGE_M * 7f64.powf((8.0 - self.level as f64) / 2.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CellId {
    pub level: u8,
    pub q: i32,
    pub r: i32,
}

impl CellId {
    pub const fn new(level: u8, q: i32, r: i32) -> Self {
        Self { level, q, r }
    }
}

impl fmt::Display for CellId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.level, self.q, self.r)
    }
}

impl FromStr for CellId {
    type Err = GridError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split(':').collect();
        let bad = || GridError::Parse(s.to_string());
        if parts.len() != 3 {
            return Err(bad());
        }
        Ok(CellId {
            level: parts[0].parse().map_err(|_| bad())?,
            q: parts[1].parse().map_err(|_| bad())?,
            r: parts[2].parse().map_err(|_| bad())?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HexGrid {
    projection: Projection,
}

impl HexGrid {
    pub fn new(origin: GeoPoint) -> Self {
        Self { projection: Projection::new(origin) }
    }

    pub fn origin(&self) -> GeoPoint {
        self.projection.origin()
    }

    pub fn projection(&self) -> &Projection {
        &self.projection
    }

    pub fn bin_point(&self, p: GeoPoint, level: u8) -> Result<CellId, GridError> {
        if !p.is_finite() {
            return Err(GridError::NonFinite(p.lat, p.lon));
        }
        let s = HexResolution::new(level)?.edge_length_m();
        let (x, y) = self.projection.forward(p);
        let (q, r) = nearest_center(x, y, s);
        Ok(CellId { level, q, r })
    }

    pub fn center(&self, cell: CellId) -> GeoPoint {
        let (x, y) = self.center_xy(cell);
        self.projection.inverse(x, y)
    }

    /// Cell center in projected meters.
    pub fn center_xy(&self, cell: CellId) -> (f64, f64) {
        let s = HexResolution { level: cell.level }.edge_length_m();
        center_of(cell.q, cell.r, s)
    }

    pub fn parent_cell(&self, cell: CellId, coarser_level: u8) -> Result<CellId, GridError> {
        if coarser_level >= cell.level {
            return Err(GridError::Parameter(format!(
                "coarser level {coarser_level} must be below cell level {}",
                cell.level
            )));
        }
        let s = HexResolution::new(coarser_level)?.edge_length_m();
        let (x, y) = self.center_xy(cell);
        let (q, r) = nearest_center(x, y, s);
        Ok(CellId { level: coarser_level, q, r })
    }
}

fn center_of(q: i32, r: i32, s: f64) -> (f64, f64) {
    let (q, r) = (q as f64, r as f64);
    (1.5 * s * q, SQRT3 * s * (r + q / 2.0))
}

/// Nearest lattice center; exact distance ties go to the smaller `(q, r)`.
fn nearest_center(x: f64, y: f64, s: f64) -> (i32, i32) {
    let fq = (2.0 / 3.0) * x / s;
    let fr = (-x / 3.0 + SQRT3 / 3.0 * y) / s;
    let (q0, r0) = cube_round(fq, fr);
    const NEIGHBORS: [(i32, i32); 7] = [(0, 0), (1, 0), (-1, 0), (0, 1), (0, -1), (1, -1), (-1, 1)];
    let tie = 1e-9 * s * s;
    let mut best = (q0, r0);
    let mut best_d = f64::INFINITY;
    for (dq, dr) in NEIGHBORS {
        let cand = (q0 + dq, r0 + dr);
        let (cx, cy) = center_of(cand.0, cand.1, s);
        let d = (cx - x).powi(2) + (cy - y).powi(2);
        if d < best_d - tie || ((d - best_d).abs() <= tie && cand < best) {
            best = cand;
            best_d = d;
        }
    }
    best
}

fn cube_round(fq: f64, fr: f64) -> (i32, i32) {
    let fs = -fq - fr;
    let (mut q, mut r, s) = (fq.round(), fr.round(), fs.round());
    let (dq, dr, ds) = ((q - fq).abs(), (r - fr).abs(), (s - fs).abs());
    if dq > dr && dq > ds {
        q = -r - s;
    } else if dr > ds {
        r = -q - s;
    }
    (q as i32, r as i32)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::collections::HashMap;

    const ORIGIN: GeoPoint = GeoPoint::new(42.36, -71.06);

    #[test]
    fn edge_lengths_follow_aperture_seven() {
        let e8 = HexResolution::new(8).unwrap().edge_length_m();
        assert!((e8 - 530.0).abs() < 1e-9);
        for l in MIN_LEVEL..MAX_LEVEL {
            let a = HexResolution::new(l).unwrap().edge_length_m();
            let b = HexResolution::new(l + 1).unwrap().edge_length_m();
            assert!((a / b - 7f64.sqrt()).abs() < 1e-12);
        }
        assert!(HexResolution::new(3).is_err());
        assert!(HexResolution::new(11).is_err());
    }

    #[test]
    fn origin_bins_to_zero_cell() {
        let g = HexGrid::new(ORIGIN);
        assert_eq!(g.bin_point(ORIGIN, 8).unwrap(), CellId::new(8, 0, 0));
    }

    #[test]
    fn one_lattice_step_along_q() {
        // Flat-top lattice: the q basis vector points 30 degrees north of east.
        let g = HexGrid::new(ORIGIN);
        let s = HexResolution::new(8).unwrap().edge_length_m();
        let p = g.projection().inverse(1.5 * s, SQRT3 / 2.0 * s);
        assert_eq!(g.bin_point(p, 8).unwrap(), CellId::new(8, 1, 0));
        let p = g.projection().inverse(0.0, SQRT3 * s);
        assert_eq!(g.bin_point(p, 8).unwrap(), CellId::new(8, 0, 1));
    }

    #[test]
    fn non_finite_rejected() {
        let g = HexGrid::new(ORIGIN);
        assert!(matches!(g.bin_point(GeoPoint::new(f64::NAN, 0.0), 8), Err(GridError::NonFinite(..))));
        assert!(matches!(g.bin_point(ORIGIN, 12), Err(GridError::Level(12))));
    }

    #[test]
    fn boundary_tie_goes_to_smaller_cell() {
        // Midpoint between centers (0,0) and (1,0) is equidistant.
        let g = HexGrid::new(ORIGIN);
        let s = HexResolution::new(8).unwrap().edge_length_m();
        let p = g.projection().inverse(0.75 * s, SQRT3 / 4.0 * s);
        assert_eq!(g.bin_point(p, 8).unwrap(), CellId::new(8, 0, 0));
    }

    #[test]
    fn parent_of_origin() {
        let g = HexGrid::new(ORIGIN);
        assert_eq!(g.parent_cell(CellId::new(8, 0, 0), 7).unwrap(), CellId::new(7, 0, 0));
        assert!(g.parent_cell(CellId::new(8, 0, 0), 8).is_err());
    }

    #[test]
    fn cell_id_text_round_trip() {
        let c = CellId::new(9, -12, 7);
        assert_eq!(c.to_string().parse::<CellId>().unwrap(), c);
        assert!("9:x:1".parse::<CellId>().is_err());
    }

    #[test]
    fn hundred_random_points_round_trip() {
        let g = HexGrid::new(ORIGIN);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let p = GeoPoint::new(ORIGIN.lat + rng.random_range(-0.2..0.2), ORIGIN.lon + rng.random_range(-0.2..0.2));
            for level in MIN_LEVEL..=MAX_LEVEL {
                let c = g.bin_point(p, level).unwrap();
                assert_eq!(g.bin_point(g.center(c), level).unwrap(), c);
            }
        }
    }

    #[test]
    fn partition_argmin_is_unique() {
        // Brute force over a neighbourhood of lattice centers.
        let g = HexGrid::new(ORIGIN);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = HexResolution::new(8).unwrap().edge_length_m();
        for _ in 0..500 {
            let (x, y) = (rng.random_range(-5000.0..5000.0), rng.random_range(-5000.0..5000.0));
            let c = g.bin_point(g.projection().inverse(x, y), 8).unwrap();
            let mut best = (f64::INFINITY, (0, 0));
            for q in -20..=20 {
                for r in -20..=20 {
                    let (cx, cy) = center_of(q, r, s);
                    let d = (cx - x).hypot(cy - y);
                    if d < best.0 {
                        best = (d, (q, r));
                    }
                }
            }
            assert_eq!((c.q, c.r), best.1);
        }
    }

    #[test]
    fn persons_per_cell_scale_by_seven() {
        let g = HexGrid::new(ORIGIN);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pts: Vec<GeoPoint> = (0..60_000)
            .map(|_| g.projection().inverse(rng.random_range(-20_000.0..20_000.0), rng.random_range(-20_000.0..20_000.0)))
            .collect();
        let mean_per_cell = |level: u8| {
            let mut counts: HashMap<CellId, usize> = HashMap::new();
            for p in &pts {
                *counts.entry(g.bin_point(*p, level).unwrap()).or_default() += 1;
            }
            pts.len() as f64 / counts.len() as f64
        };
        for level in [9u8, 8] {
            let ratio = mean_per_cell(level - 1) / mean_per_cell(level);
            assert!((ratio / 7.0 - 1.0).abs() < 0.2, "level {level}: ratio {ratio}");
        }
    }

    proptest! {
        #[test]
        fn parent_is_stable_and_contains_center(q in -200i32..200, r in -200i32..200, level in 5u8..=10) {
            let g = HexGrid::new(ORIGIN);
            let cell = CellId::new(level, q, r);
            let a = g.parent_cell(cell, level - 1).unwrap();
            let b = g.parent_cell(cell, level - 1).unwrap();
            prop_assert_eq!(a, b);
            prop_assert_eq!(g.bin_point(g.center(cell), level - 1).unwrap(), a);
        }

        #[test]
        fn monotone_containment_away_from_edges(x in -30_000.0f64..30_000.0, y in -30_000.0f64..30_000.0, level in 6u8..=10) {
            let g = HexGrid::new(ORIGIN);
            let p = g.projection().inverse(x, y);
            let fine = g.bin_point(p, level).unwrap();
            for coarse in MIN_LEVEL..level {
                let s = HexResolution::new(coarse).unwrap().edge_length_m();
                let direct = g.bin_point(p, coarse).unwrap();
                // Distance from p to the nearest edge of its coarse hexagon is at least
                // the inradius minus the distance to the center; skip near-boundary points.
                let (cx, cy) = g.center_xy(direct);
                let margin = SQRT3 / 2.0 * s - (x - cx).hypot(y - cy);
                let fine_radius = HexResolution::new(level).unwrap().edge_length_m();
                if margin <= fine_radius * 1.01 {
                    continue;
                }
                prop_assert_eq!(g.parent_cell(fine, coarse).unwrap(), direct);
            }
        }
    }
}
