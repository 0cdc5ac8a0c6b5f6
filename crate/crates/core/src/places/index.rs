use std::collections::HashMap;

use crate::geo::{GeoPoint, Projection, WALK_SPEED_M_PER_MIN};
use crate::grid::{CellId, HexGrid};

use super::{CategorySet, PlacesError, Poi};

const DEFAULT_BUCKET_M: f64 = 500.0;

/// Immutable bucket index over projected POI coordinates.
#[derive(Debug, Clone)]
pub struct PoiIndex {
    pois: Vec<Poi>,
    set: CategorySet,
    proj: Projection,
    xy: Vec<(f64, f64)>,
    cat: Vec<usize>,
    bucket_m: f64,
    buckets: HashMap<(i64, i64), Vec<usize>>,
}

impl PoiIndex {
    /// POIs outside `set` are dropped; the rest keep their input order.
    pub fn new(pois: Vec<Poi>, set: CategorySet, origin: GeoPoint) -> Self {
        Self::with_bucket(pois, set, origin, DEFAULT_BUCKET_M)
    }

    pub fn with_bucket(pois: Vec<Poi>, set: CategorySet, origin: GeoPoint, bucket_m: f64) -> Self {
        let proj = Projection::new(origin);
        let pois: Vec<Poi> = pois.into_iter().filter(|p| set.position(p.category).is_some()).collect();
        let xy: Vec<(f64, f64)> = pois.iter().map(|p| proj.forward(p.point)).collect();
        let cat: Vec<usize> = pois.iter().map(|p| set.position(p.category).expect("filtered")).collect();
        let mut buckets: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
        for (i, &(x, y)) in xy.iter().enumerate() {
            buckets.entry(Self::key(x, y, bucket_m)).or_default().push(i);
        }
        Self { pois, set, proj, xy, cat, bucket_m, buckets }
    }

    fn key(x: f64, y: f64, b: f64) -> (i64, i64) {
        ((x / b).floor() as i64, (y / b).floor() as i64)
    }

    pub fn pois(&self) -> &[Poi] {
        &self.pois
    }

    pub fn len(&self) -> usize {
        self.pois.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pois.is_empty()
    }

    pub fn categories(&self) -> &CategorySet {
        &self.set
    }

    pub fn projection(&self) -> &Projection {
        &self.proj
    }

    pub fn xy(&self, i: usize) -> (f64, f64) {
        self.xy[i]
    }

    /// Position of POI `i`'s category in the category set.
    pub fn category_index(&self, i: usize) -> usize {
        self.cat[i]
    }

    /// Indices of POIs with projected coordinates inside the box, ascending.
    pub fn in_box(&self, min: (f64, f64), max: (f64, f64)) -> Vec<usize> {
        let (k0, k1) = (Self::key(min.0, min.1, self.bucket_m), Self::key(max.0, max.1, self.bucket_m));
        let mut out = Vec::new();
        for bx in k0.0..=k1.0 {
            for by in k0.1..=k1.1 {
                if let Some(b) = self.buckets.get(&(bx, by)) {
                    out.extend(b.iter().copied().filter(|&i| {
                        let (x, y) = self.xy[i];
                        x >= min.0 && x <= max.0 && y >= min.1 && y <= max.1
                    }));
                }
            }
        }
        out.sort_unstable();
        out
    }

    /// Indices of POIs within `radius_m` of projected point `(x, y)`, boundary inclusive.
    pub fn within_xy(&self, x: f64, y: f64, radius_m: f64) -> Vec<usize> {
        let mut ids = self.in_box((x - radius_m, y - radius_m), (x + radius_m, y + radius_m));
        ids.retain(|&i| {
            let (px, py) = self.xy[i];
            (px - x).hypot(py - y) <= radius_m
        });
        ids
    }

    pub fn within(&self, p: GeoPoint, radius_m: f64) -> Vec<usize> {
        let (x, y) = self.proj.forward(p);
        self.within_xy(x, y, radius_m)
    }

    /// Category counts over a set of POI indices.
    pub fn counts(&self, ids: &[usize]) -> Vec<f64> {
        let mut v = vec![0.0; self.set.len()];
        for &i in ids {
            v[self.cat[i]] += 1.0;
        }
        v
    }
}

/// Which POIs are reachable from a point within a time budget.
pub trait IsochroneProvider: Sync {
    fn index(&self) -> &PoiIndex;
    fn reachable(&self, point: GeoPoint, t_minutes: f64) -> Result<Vec<usize>, PlacesError>;
}

/// Straight-line disc of radius `speed * T`.
#[derive(Debug, Clone, Copy)]
pub struct DiscIsochrone<'a> {
    pub index: &'a PoiIndex,
    pub speed_m_per_min: f64,
}

impl<'a> DiscIsochrone<'a> {
    pub fn walking(index: &'a PoiIndex) -> Self {
        Self { index, speed_m_per_min: WALK_SPEED_M_PER_MIN }
    }
}

impl IsochroneProvider for DiscIsochrone<'_> {
    fn index(&self) -> &PoiIndex {
        self.index
    }

    fn reachable(&self, point: GeoPoint, t_minutes: f64) -> Result<Vec<usize>, PlacesError> {
        check_t(t_minutes)?;
        Ok(self.index.within(point, self.speed_m_per_min * t_minutes))
    }
}

/// Precomputed reachable POI sets per origin cell for one time budget
/// (e.g. from a street-network isochrone tool). Cells missing from the table
/// fall back to the disc.
#[derive(Debug, Clone)]
pub struct ReachableTable<'a> {
    pub index: &'a PoiIndex,
    pub grid: HexGrid,
    pub level: u8,
    pub t_minutes: f64,
    pub sets: HashMap<CellId, Vec<usize>>,
}

impl IsochroneProvider for ReachableTable<'_> {
    fn index(&self) -> &PoiIndex {
        self.index
    }

    fn reachable(&self, point: GeoPoint, t_minutes: f64) -> Result<Vec<usize>, PlacesError> {
        check_t(t_minutes)?;
        if t_minutes != self.t_minutes {
            return Err(PlacesError::Parameter(format!("table built for T={} but T={t_minutes} requested", self.t_minutes)));
        }
        match self.sets.get(&self.grid.bin_point(point, self.level)?) {
            Some(ids) => Ok(ids.clone()),
            None => DiscIsochrone::walking(self.index).reachable(point, t_minutes),
        }
    }
}

fn check_t(t: f64) -> Result<(), PlacesError> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(PlacesError::Parameter(format!("isochrone time must be positive, got {t}")));
    }
    Ok(())
}

/// Category count vector of the POIs reachable from `point`.
pub fn isochrone_pois(point: GeoPoint, t_minutes: f64, provider: &dyn IsochroneProvider) -> Result<Vec<f64>, PlacesError> {
    let ids = provider.reachable(point, t_minutes)?;
    Ok(provider.index().counts(&ids))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::places::PoiCategory;
    use proptest::prelude::*;

    const ORIGIN: GeoPoint = GeoPoint::new(40.0, -75.0);

    fn poi_at(id: usize, x: f64, y: f64, c: PoiCategory) -> Poi {
        Poi { poi_id: id.to_string(), point: Projection::new(ORIGIN).inverse(x, y), raw_tag: String::new(), category: c }
    }

    fn idx(pois: Vec<Poi>) -> PoiIndex {
        PoiIndex::new(pois, CategorySet::default(), ORIGIN)
    }

    #[test]
    fn empty_area_is_zero() {
        let index = idx(vec![poi_at(0, 5000.0, 0.0, PoiCategory::Cafe)]);
        let v = isochrone_pois(ORIGIN, 15.0, &DiscIsochrone::walking(&index)).unwrap();
        assert_eq!(v, vec![0.0; 18]);
    }

    #[test]
    fn two_cafes_in_one_out() {
        let index = idx(vec![
            poi_at(0, 100.0, 0.0, PoiCategory::Cafe),
            poi_at(1, 0.0, -100.0, PoiCategory::Cafe),
            poi_at(2, 2000.0, 0.0, PoiCategory::Cafe),
        ]);
        let v = isochrone_pois(ORIGIN, 15.0, &DiscIsochrone::walking(&index)).unwrap();
        let cafe = CategorySet::default().position(PoiCategory::Cafe).unwrap();
        assert_eq!(v[cafe], 2.0);
        assert_eq!(v.iter().sum::<f64>(), 2.0);
    }

    #[test]
    fn boundary_inclusive() {
        let index = idx(vec![poi_at(0, 1260.0, 0.0, PoiCategory::Food)]);
        let (x, y) = index.xy(0);
        let d = x.hypot(y);
        assert!((d - 1260.0).abs() < 1e-6);
        assert_eq!(index.within_xy(0.0, 0.0, d), vec![0]);
        assert!(index.within_xy(0.0, 0.0, d - 1e-6).is_empty());
    }

    #[test]
    fn non_positive_t_rejected() {
        let index = idx(vec![]);
        let iso = DiscIsochrone::walking(&index);
        assert!(matches!(isochrone_pois(ORIGIN, 0.0, &iso), Err(PlacesError::Parameter(_))));
        assert!(matches!(isochrone_pois(ORIGIN, -5.0, &iso), Err(PlacesError::Parameter(_))));
    }

    #[test]
    fn inactive_categories_not_indexed() {
        let index = idx(vec![poi_at(0, 0.0, 0.0, PoiCategory::Transportation), poi_at(1, 0.0, 0.0, PoiCategory::Cafe)]);
        assert_eq!(index.len(), 1);
    }

    #[test]
    fn reachable_table_overrides_cell() {
        let index = idx(vec![poi_at(0, 100.0, 0.0, PoiCategory::Cafe), poi_at(1, 3000.0, 0.0, PoiCategory::Food)]);
        let grid = HexGrid::new(ORIGIN);
        let cell = grid.bin_point(ORIGIN, 8).unwrap();
        let table = ReachableTable { index: &index, grid, level: 8, t_minutes: 15.0, sets: [(cell, vec![1])].into_iter().collect() };
        assert_eq!(table.reachable(ORIGIN, 15.0).unwrap(), vec![1]);
        assert!(table.reachable(ORIGIN, 10.0).is_err());
        let far = Projection::new(ORIGIN).inverse(50_000.0, 0.0);
        assert!(table.reachable(far, 15.0).unwrap().is_empty());
    }

    fn cats() -> impl Strategy<Value = PoiCategory> {
        (0usize..18).prop_map(|i| CategorySet::default().categories()[i])
    }

    proptest! {
        #[test]
        fn matches_brute_force_and_monotone(
            pts in prop::collection::vec((-3000.0f64..3000.0, -3000.0f64..3000.0, cats()), 0..80),
            qx in -3000.0f64..3000.0, qy in -3000.0f64..3000.0, t in 1.0f64..20.0, dt in 0.0f64..10.0,
        ) {
            let pois: Vec<Poi> = pts.iter().enumerate().map(|(i, (x, y, c))| poi_at(i, *x, *y, *c)).collect();
            let index = idx(pois);
            let r = 84.0 * t;
            let brute: Vec<usize> = (0..index.len()).filter(|&i| {
                let (x, y) = index.xy(i);
                (x - qx).hypot(y - qy) <= r
            }).collect();
            prop_assert_eq!(index.within_xy(qx, qy, r), brute);
            let p = index.projection().inverse(qx, qy);
            let iso = DiscIsochrone::walking(&index);
            let a = isochrone_pois(p, t, &iso).unwrap();
            let b = isochrone_pois(p, t + dt, &iso).unwrap();
            prop_assert!(a.iter().zip(&b).all(|(x, y)| x <= y));
        }

        #[test]
        fn translation_consistent(
            pts in prop::collection::vec((-2000.0f64..2000.0, -2000.0f64..2000.0, cats()), 0..40),
            qx in -2000.0f64..2000.0, qy in -2000.0f64..2000.0, dx in -5000.0f64..5000.0, dy in -5000.0f64..5000.0,
        ) {
            // Keep points clear of the boundary so rounding in the shift cannot flip membership.
            let pts: Vec<_> = pts.into_iter().filter(|(x, y, _)| ((x - qx).hypot(y - qy) - 1260.0).abs() > 1e-3).collect();
            let a_pois: Vec<Poi> = pts.iter().enumerate().map(|(i, (x, y, c))| poi_at(i, *x, *y, *c)).collect();
            let b_pois: Vec<Poi> = pts.iter().enumerate().map(|(i, (x, y, c))| poi_at(i, x + dx, y + dy, *c)).collect();
            let (a, b) = (idx(a_pois), idx(b_pois));
            let pa = a.projection().inverse(qx, qy);
            let pb = b.projection().inverse(qx + dx, qy + dy);
            prop_assert_eq!(
                isochrone_pois(pa, 15.0, &DiscIsochrone::walking(&a)).unwrap(),
                isochrone_pois(pb, 15.0, &DiscIsochrone::walking(&b)).unwrap()
            );
        }
    }
}
