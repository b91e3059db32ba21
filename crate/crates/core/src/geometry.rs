//! Container geometry: the convex domain, its boundary samples and wall heights.
//!
//! Points are stored as `[f64; 2]` in both dimensions; one-dimensional
//! domains keep the second coordinate at zero.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Point = [f64; 2];

#[inline]
pub fn dist(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

#[inline]
pub fn sub(a: Point, b: Point) -> Point {
    [a[0] - b[0], a[1] - b[1]]
}

#[inline]
pub fn norm(a: Point) -> f64 {
    a[0].hypot(a[1])
}

/// Volume of the unit ball in dimension `n`.
pub fn unit_ball_volume(n: usize) -> f64 {
    match n {
        0 => 1.0,
        1 => 2.0,
        _ => 2.0 * std::f64::consts::PI / n as f64 * unit_ball_volume(n - 2),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Shape {
    Interval { a: f64, b: f64 },
    Ball { center: Point, radius: f64 },
    /// Vertices in counterclockwise order.
    ConvexPolygon { vertices: Vec<Point> },
    Box { lo: Point, hi: Point },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainSpec {
    pub dimension: usize,
    pub shape: Shape,
    /// Number of boundary samples `m` (one-dimensional domains always use the two endpoints).
    pub boundary_samples: usize,
}

impl DomainSpec {
    pub fn new(dimension: usize, shape: Shape, boundary_samples: usize) -> Result<Self> {
        let spec = Self {
            dimension,
            shape,
            boundary_samples,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn interval(a: f64, b: f64) -> Result<Self> {
        Self::new(1, Shape::Interval { a, b }, 2)
    }

    pub fn ball(center: Point, radius: f64, boundary_samples: usize) -> Result<Self> {
        Self::new(2, Shape::Ball { center, radius }, boundary_samples)
    }

    pub fn validate(&self) -> Result<()> {
        if self.boundary_samples < 2 {
            return Err(Error::Geometry(format!(
                "need at least 2 boundary samples, got {}",
                self.boundary_samples
            )));
        }
        let finite = |p: &Point| p[0].is_finite() && p[1].is_finite();
        match (&self.shape, self.dimension) {
            (Shape::Interval { a, b }, 1) => {
                if !(a.is_finite() && b.is_finite() && a < b) {
                    return Err(Error::Geometry(format!("interval ({a}, {b}) is empty")));
                }
            }
            (Shape::Ball { center, radius }, 1 | 2) => {
                if !(finite(center) && radius.is_finite() && *radius > 0.0) {
                    return Err(Error::Geometry(format!("ball radius {radius} must be positive")));
                }
                if self.dimension == 1 && center[1] != 0.0 {
                    return Err(Error::Geometry("1D ball center must have zero second coordinate".into()));
                }
            }
            (Shape::Box { lo, hi }, 2) => {
                if !(finite(lo) && finite(hi) && lo[0] < hi[0] && lo[1] < hi[1]) {
                    return Err(Error::Geometry(format!("box {lo:?}..{hi:?} is empty")));
                }
            }
            (Shape::ConvexPolygon { vertices }, 2) => check_convex_polygon(vertices)?,
            (shape, n) => {
                return Err(Error::Geometry(format!(
                    "shape {shape:?} is not supported in dimension {n}"
                )))
            }
        }
        Ok(())
    }

    /// Vertices of polygonal shapes (boxes included), counterclockwise.
    fn polygon(&self) -> Option<Vec<Point>> {
        match &self.shape {
            Shape::ConvexPolygon { vertices } => Some(vertices.clone()),
            Shape::Box { lo, hi } => Some(vec![
                [lo[0], lo[1]],
                [hi[0], lo[1]],
                [hi[0], hi[1]],
                [lo[0], hi[1]],
            ]),
            _ => None,
        }
    }

    /// Interval endpoints of a one-dimensional domain.
    fn interval_bounds(&self) -> Option<(f64, f64)> {
        match (&self.shape, self.dimension) {
            (Shape::Interval { a, b }, _) => Some((*a, *b)),
            (Shape::Ball { center, radius }, 1) => Some((center[0] - radius, center[0] + radius)),
            _ => None,
        }
    }

    /// Axis-aligned bounding box `(lo, hi)`.
    pub fn bounding_box(&self) -> (Point, Point) {
        if let Some((a, b)) = self.interval_bounds() {
            return ([a, 0.0], [b, 0.0]);
        }
        match &self.shape {
            Shape::Ball { center, radius } => (
                [center[0] - radius, center[1] - radius],
                [center[0] + radius, center[1] + radius],
            ),
            _ => {
                let verts = self.polygon().unwrap_or_default();
                let mut lo = [f64::INFINITY; 2];
                let mut hi = [f64::NEG_INFINITY; 2];
                for v in &verts {
                    for k in 0..2 {
                        lo[k] = lo[k].min(v[k]);
                        hi[k] = hi[k].max(v[k]);
                    }
                }
                (lo, hi)
            }
        }
    }

    pub fn diameter(&self) -> f64 {
        if let Some((a, b)) = self.interval_bounds() {
            return b - a;
        }
        match &self.shape {
            Shape::Ball { radius, .. } => 2.0 * radius,
            _ => {
                let verts = self.polygon().unwrap_or_default();
                let mut d: f64 = 0.0;
                for (i, p) in verts.iter().enumerate() {
                    for q in &verts[i + 1..] {
                        d = d.max(dist(*p, *q));
                    }
                }
                d
            }
        }
    }

    /// Boundary measure: perimeter in 2D, number of endpoints in 1D.
    pub fn perimeter(&self) -> f64 {
        if self.dimension == 1 {
            return 2.0;
        }
        match &self.shape {
            Shape::Ball { radius, .. } => 2.0 * std::f64::consts::PI * radius,
            _ => {
                let verts = self.polygon().unwrap_or_default();
                (0..verts.len())
                    .map(|i| dist(verts[i], verts[(i + 1) % verts.len()]))
                    .sum()
            }
        }
    }

    pub fn volume(&self) -> f64 {
        if let Some((a, b)) = self.interval_bounds() {
            return b - a;
        }
        match &self.shape {
            Shape::Ball { radius, .. } => std::f64::consts::PI * radius * radius,
            _ => {
                let v = self.polygon().unwrap_or_default();
                0.5 * (0..v.len())
                    .map(|i| {
                        let (p, q) = (v[i], v[(i + 1) % v.len()]);
                        p[0] * q[1] - q[0] * p[1]
                    })
                    .sum::<f64>()
            }
        }
    }

    /// Distance from `p` to the boundary, positive inside, negative outside.
    pub fn signed_distance(&self, p: Point) -> f64 {
        if let Some((a, b)) = self.interval_bounds() {
            return (p[0] - a).min(b - p[0]);
        }
        match &self.shape {
            Shape::Ball { center, radius } => radius - dist(p, *center),
            _ => {
                let v = self.polygon().unwrap_or_default();
                let n = v.len();
                // inside: min over edge half-planes; outside: exact distance to the polygon
                let mut inside = f64::INFINITY;
                let mut outside_needed = false;
                for i in 0..n {
                    let (a, b) = (v[i], v[(i + 1) % n]);
                    let e = sub(b, a);
                    let len = norm(e);
                    // inward normal for a counterclockwise polygon
                    let s = (e[0] * (p[1] - a[1]) - e[1] * (p[0] - a[0])) / len;
                    inside = inside.min(s);
                    if s < 0.0 {
                        outside_needed = true;
                    }
                }
                if !outside_needed {
                    return inside;
                }
                let d = (0..n)
                    .map(|i| segment_distance(p, v[i], v[(i + 1) % n]))
                    .fold(f64::INFINITY, f64::min);
                -d
            }
        }
    }

    /// Strict interior test.
    pub fn contains(&self, p: Point) -> bool {
        self.signed_distance(p) > 0.0
    }

    /// Arclength-uniform boundary samples (endpoints in 1D).
    pub fn sample_boundary(&self) -> Vec<Point> {
        if let Some((a, b)) = self.interval_bounds() {
            return vec![[a, 0.0], [b, 0.0]];
        }
        let m = self.boundary_samples;
        match &self.shape {
            Shape::Ball { center, radius } => (0..m)
                .map(|k| {
                    let th = 2.0 * std::f64::consts::PI * k as f64 / m as f64;
                    [center[0] + radius * th.cos(), center[1] + radius * th.sin()]
                })
                .collect(),
            _ => {
                let v = self.polygon().unwrap_or_default();
                let n = v.len();
                let perim = self.perimeter();
                let mut out = Vec::with_capacity(m);
                let mut edge = 0;
                let mut edge_start = 0.0;
                for k in 0..m {
                    let s = perim * k as f64 / m as f64;
                    while edge + 1 < n && s >= edge_start + dist(v[edge], v[(edge + 1) % n]) {
                        edge_start += dist(v[edge], v[(edge + 1) % n]);
                        edge += 1;
                    }
                    let (a, b) = (v[edge], v[(edge + 1) % n]);
                    let t = ((s - edge_start) / dist(a, b)).clamp(0.0, 1.0);
                    out.push([a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]);
                }
                out
            }
        }
    }

    /// Default boundary sample count for grid spacing `h`: `max(256, ceil(perimeter / h))` in 2D.
    pub fn default_sample_count(&self, h: f64) -> usize {
        if self.dimension == 1 {
            2
        } else {
            256usize.max((self.perimeter() / h).ceil() as usize)
        }
    }
}

fn segment_distance(p: Point, a: Point, b: Point) -> f64 {
    let e = sub(b, a);
    let t = (((p[0] - a[0]) * e[0] + (p[1] - a[1]) * e[1]) / (e[0] * e[0] + e[1] * e[1])).clamp(0.0, 1.0);
    dist(p, [a[0] + t * e[0], a[1] + t * e[1]])
}

fn check_convex_polygon(v: &[Point]) -> Result<()> {
    let n = v.len();
    if n < 3 {
        return Err(Error::Geometry(format!("polygon needs at least 3 vertices, got {n}")));
    }
    for i in 0..n {
        let (a, b, c) = (v[i], v[(i + 1) % n], v[(i + 2) % n]);
        let cross = (b[0] - a[0]) * (c[1] - b[1]) - (b[1] - a[1]) * (c[0] - b[0]);
        if !cross.is_finite() || cross <= 0.0 {
            return Err(Error::Geometry(format!(
                "polygon is not strictly convex and counterclockwise at vertex {}",
                (i + 1) % n
            )));
        }
    }
    // a counterclockwise turn at every vertex still admits self-intersecting stars
    let total_turn: f64 = (0..n)
        .map(|i| {
            let (a, b, c) = (v[i], v[(i + 1) % n], v[(i + 2) % n]);
            let e1 = sub(b, a);
            let e2 = sub(c, b);
            (e1[0] * e2[1] - e1[1] * e2[0]).atan2(e1[0] * e2[0] + e1[1] * e2[1])
        })
        .sum();
    if (total_turn - 2.0 * std::f64::consts::PI).abs() > 1e-6 {
        return Err(Error::Geometry("polygon winds more than once".into()));
    }
    Ok(())
}

/// Boundary samples with their wall heights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryData {
    pub points: Vec<Point>,
    pub phi: Vec<f64>,
}

impl BoundaryData {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn min_phi(&self) -> f64 {
        self.phi.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn validate(&self) -> Result<()> {
        if self.points.is_empty() {
            return Err(Error::Data("empty boundary sample set".into()));
        }
        if self.points.len() != self.phi.len() {
            return Err(Error::Data(format!(
                "{} boundary points but {} wall heights",
                self.points.len(),
                self.phi.len()
            )));
        }
        if let Some(i) = self.phi.iter().position(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::Data(format!("wall height phi[{i}] = {} is negative", self.phi[i])));
        }
        Ok(())
    }
}

/// Samples the boundary of `spec` and evaluates the wall height at each sample.
pub fn build_domain(spec: DomainSpec, phi_fn: impl Fn(Point) -> f64) -> Result<(DomainSpec, BoundaryData)> {
    spec.validate()?;
    let points = spec.sample_boundary();
    let phi = points.iter().map(|&p| phi_fn(p)).collect();
    let data = BoundaryData { points, phi };
    data.validate()?;
    Ok((spec, data))
}

/// Like [`build_domain`] with wall heights given per sample.
pub fn build_domain_with_samples(spec: DomainSpec, phi: Vec<f64>) -> Result<(DomainSpec, BoundaryData)> {
    spec.validate()?;
    let points = spec.sample_boundary();
    if phi.len() != points.len() {
        return Err(Error::Data(format!(
            "expected {} wall heights, got {}",
            points.len(),
            phi.len()
        )));
    }
    let data = BoundaryData { points, phi };
    data.validate()?;
    Ok((spec, data))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interval_endpoints() {
        let (_, b) = build_domain(DomainSpec::interval(-1.0, 1.0).unwrap(), |_| 0.0).unwrap();
        assert_eq!(b.points, vec![[-1.0, 0.0], [1.0, 0.0]]);
        assert_eq!(b.phi, vec![0.0, 0.0]);
    }

    #[test]
    fn interval_wall_heights() {
        let (_, b) = build_domain(DomainSpec::interval(0.0, 1.0).unwrap(), |p| {
            if p[0] == 0.0 {
                0.2
            } else {
                0.0
            }
        })
        .unwrap();
        assert_eq!(b.phi, vec![0.2, 0.0]);
    }

    #[test]
    fn unit_circle_samples() {
        let spec = DomainSpec::ball([0.0, 0.0], 1.0, 360).unwrap();
        let (spec, b) = build_domain(spec, |_| 0.0).unwrap();
        assert_eq!(b.len(), 360);
        assert!(b.phi.iter().all(|&p| p == 0.0));
        let tol = 1e-12 * spec.diameter();
        assert!(b.points.iter().all(|&p| (norm(p) - 1.0).abs() <= tol));
    }

    #[test]
    fn polygon_samples_on_boundary() {
        let spec = DomainSpec::new(
            2,
            Shape::ConvexPolygon {
                vertices: vec![[0.0, 0.0], [1.0, 0.0], [0.3, 0.8]],
            },
            97,
        )
        .unwrap();
        let tol = 1e-12 * spec.diameter();
        for p in spec.sample_boundary() {
            assert!(spec.signed_distance(p).abs() <= tol, "{p:?}");
        }
    }

    #[test]
    fn rejects_nonconvex_polygon() {
        let err = DomainSpec::new(
            2,
            Shape::ConvexPolygon {
                vertices: vec![[0.0, 0.0], [2.0, 0.0], [1.0, 0.2], [2.0, 2.0], [0.0, 2.0]],
            },
            64,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Geometry(_)));
        // clockwise order is rejected as well
        let err = DomainSpec::new(
            2,
            Shape::ConvexPolygon {
                vertices: vec![[0.0, 0.0], [0.0, 1.0], [1.0, 0.0]],
            },
            64,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Geometry(_)));
    }

    #[test]
    fn rejects_negative_phi() {
        let err = build_domain(DomainSpec::interval(-1.0, 1.0).unwrap(), |p| p[0]).unwrap_err();
        assert!(matches!(err, Error::Data(_)));
    }

    #[test]
    fn rejects_degenerate_shapes() {
        assert!(DomainSpec::interval(1.0, 1.0).is_err());
        assert!(DomainSpec::ball([0.0, 0.0], 0.0, 64).is_err());
        assert!(DomainSpec::ball([0.0, 0.0], 1.0, 1).is_err());
    }

    #[test]
    fn polygon_signed_distance() {
        let spec = DomainSpec::new(2, Shape::Box { lo: [-1.0, -1.0], hi: [1.0, 1.0] }, 64).unwrap();
        assert!((spec.signed_distance([0.5, 0.0]) - 0.5).abs() < 1e-15);
        assert!((spec.signed_distance([2.0, 2.0]) + 2f64.sqrt()).abs() < 1e-12);
        assert!((spec.volume() - 4.0).abs() < 1e-12);
        assert!((spec.perimeter() - 8.0).abs() < 1e-12);
    }

    #[test]
    fn unit_ball_volumes() {
        assert_eq!(unit_ball_volume(1), 2.0);
        assert!((unit_ball_volume(2) - std::f64::consts::PI).abs() < 1e-15);
        assert!((unit_ball_volume(3) - 4.0 / 3.0 * std::f64::consts::PI).abs() < 1e-14);
    }
}
