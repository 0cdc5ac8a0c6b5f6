//! Convex hulls of planar points and the activity region built from them.

type Pt = (f64, f64);

fn cross(o: Pt, a: Pt, b: Pt) -> f64 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

/// Monotone-chain hull, counter-clockwise, without repeated or collinear
/// vertices. One or two points come back for degenerate input.
pub fn convex_hull(points: &[Pt]) -> Vec<Pt> {
    let mut p: Vec<Pt> = points.to_vec();
    p.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    p.dedup();
    if p.len() < 3 {
        return p;
    }
    let mut hull: Vec<Pt> = Vec::with_capacity(2 * p.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &Pt>> = if pass == 0 { Box::new(p.iter()) } else { Box::new(p.iter().rev()) };
        for &q in iter {
            while hull.len() >= start + 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], q) <= 0.0 {
                hull.pop();
            }
            hull.push(q);
        }
        hull.pop();
    }
    if hull.len() < 3 {
        // All points collinear: keep the two extremes.
        return vec![p[0], p[p.len() - 1]];
    }
    hull
}

fn segment_distance(p: Pt, a: Pt, b: Pt) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 { (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0) } else { 0.0 };
    (p.0 - a.0 - t * dx).hypot(p.1 - a.1 - t * dy)
}

/// Area a person's day covers: the convex hull of the visited points, or,
/// when that hull has no area, the points within `radius` of it.
#[derive(Debug, Clone, PartialEq)]
pub enum Region {
    Polygon(Vec<Pt>),
    Buffered { core: Vec<Pt>, radius: f64 },
}

impl Region {
    pub fn from_points(points: &[Pt], buffer_radius: f64) -> Self {
        let hull = convex_hull(points);
        if hull.len() >= 3 {
            Region::Polygon(hull)
        } else {
            Region::Buffered { core: hull, radius: buffer_radius }
        }
    }

    pub fn is_degenerate(&self) -> bool {
        matches!(self, Region::Buffered { .. })
    }

    /// Boundary inclusive.
    pub fn contains(&self, p: Pt) -> bool {
        match self {
            Region::Polygon(h) => (0..h.len()).all(|i| {
                let (a, b) = (h[i], h[(i + 1) % h.len()]);
                let scale = (b.0 - a.0).hypot(b.1 - a.1);
                cross(a, b, p) >= -1e-9 * scale.max(1.0)
            }),
            Region::Buffered { core, radius } => match core.as_slice() {
                [] => false,
                [a] => (p.0 - a.0).hypot(p.1 - a.1) <= *radius,
                [a, b, ..] => segment_distance(p, *a, *b) <= *radius,
            },
        }
    }

    pub fn bbox(&self) -> (Pt, Pt) {
        let (pts, pad) = match self {
            Region::Polygon(h) => (h, 0.0),
            Region::Buffered { core, radius } => (core, *radius),
        };
        let min = pts.iter().fold((f64::INFINITY, f64::INFINITY), |m, p| (m.0.min(p.0), m.1.min(p.1)));
        let max = pts.iter().fold((f64::NEG_INFINITY, f64::NEG_INFINITY), |m, p| (m.0.max(p.0), m.1.max(p.1)));
        ((min.0 - pad, min.1 - pad), (max.0 + pad, max.1 + pad))
    }
}

/// Even-odd ray casting; strict interior only, any polygon.
pub fn ray_cast_contains(poly: &[Pt], p: Pt) -> bool {
    let mut inside = false;
    let n = poly.len();
    for i in 0..n {
        let (a, b) = (poly[i], poly[(i + n - 1) % n]);
        if (a.1 > p.1) != (b.1 > p.1) && p.0 < (b.0 - a.0) * (p.1 - a.1) / (b.1 - a.1) + a.0 {
            inside = !inside;
        }
    }
    inside
}
