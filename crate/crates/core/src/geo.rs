//! Geographic primitives shared by the binning, accessibility and exposure code.

use serde::{Deserialize, Serialize};

/// Mean Earth radius in meters (IUGG).
pub const EARTH_RADIUS_M: f64 = 6_371_008.8;

const METERS_PER_DEGREE: f64 = EARTH_RADIUS_M * std::f64::consts::PI / 180.0;

/// Walking speed used for isochrones and walk legs, meters per minute.
pub const WALK_SPEED_M_PER_MIN: f64 = 84.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub lat: f64,
    pub lon: f64,
}

impl GeoPoint {
    pub const fn new(lat: f64, lon: f64) -> Self {
        Self { lat, lon }
    }

    pub fn is_finite(&self) -> bool {
        self.lat.is_finite() && self.lon.is_finite()
    }
}

/// Great-circle distance in meters (haversine).
pub fn haversine_m(a: GeoPoint, b: GeoPoint) -> f64 {
    let (la1, la2) = (a.lat.to_radians(), b.lat.to_radians());
    let dlat = la2 - la1;
    let dlon = (b.lon - a.lon).to_radians();
    let h = (dlat / 2.0).sin().powi(2) + la1.cos() * la2.cos() * (dlon / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_M * h.sqrt().min(1.0).asin()
}

/// Local equirectangular projection around a fixed origin.
///
/// Coordinates are meters east (`x`) and north (`y`) of the origin. Over a
/// metro-scale extent (< 100 km) the distortion against great-circle distance
/// stays below about 0.1% at mid latitudes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Projection {
    origin: GeoPoint,
    cos_lat0: f64,
}

impl Projection {
    pub fn new(origin: GeoPoint) -> Self {
        Self { origin, cos_lat0: origin.lat.to_radians().cos() }
    }

    pub fn origin(&self) -> GeoPoint {
        self.origin
    }

    pub fn forward(&self, p: GeoPoint) -> (f64, f64) {
        let k = METERS_PER_DEGREE;
        let x = (p.lon - self.origin.lon) * self.cos_lat0 * k;
        let y = (p.lat - self.origin.lat) * k;
        (x, y)
    }

    pub fn inverse(&self, x: f64, y: f64) -> GeoPoint {
        let k = METERS_PER_DEGREE;
        GeoPoint { lat: self.origin.lat + y / k, lon: self.origin.lon + x / (k * self.cos_lat0) }
    }

    /// Planar distance between two points in the projected frame.
    pub fn distance_m(&self, a: GeoPoint, b: GeoPoint) -> f64 {
        let (ax, ay) = self.forward(a);
        let (bx, by) = self.forward(b);
        (ax - bx).hypot(ay - by)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn projection_round_trip() {
        let proj = Projection::new(GeoPoint::new(42.36, -71.06));
        let p = GeoPoint::new(42.41, -70.97);
        let (x, y) = proj.forward(p);
        let q = proj.inverse(x, y);
        assert!((p.lat - q.lat).abs() < 1e-12 && (p.lon - q.lon).abs() < 1e-12);
    }

    #[test]
    fn projected_distance_tracks_great_circle() {
        let origin = GeoPoint::new(42.36, -71.06);
        let proj = Projection::new(origin);
        let p = GeoPoint::new(42.45, -70.95);
        let planar = proj.distance_m(origin, p);
        let gc = haversine_m(origin, p);
        assert!((planar - gc).abs() / gc < 1e-3, "{planar} vs {gc}");
    }

    #[test]
    fn haversine_zero_and_symmetric() {
        let a = GeoPoint::new(22.3, 114.17);
        let b = GeoPoint::new(22.28, 114.16);
        assert_eq!(haversine_m(a, a), 0.0);
        assert!((haversine_m(a, b) - haversine_m(b, a)).abs() < 1e-9);
    }
}
