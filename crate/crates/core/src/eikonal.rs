//! Lax–Hopf profile, boundary projections, transport rays, the ridge set and
//! the asymptotic profile of a source.
//!
//! Everything here is computed from the exact minimization over boundary
//! samples, `u(x) = min_y phi(y) + |x - y|`, so grid values are exact up to
//! boundary sampling and are 1-Lipschitz in the Euclidean metric.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::geometry::{dist, norm, sub, BoundaryData, DomainSpec, Point};
use crate::grid::Grid;

/// Relative slack under which two candidate projections count as tied.
const TIE_EPS: f64 = 1e-12;

/// Lax–Hopf value at an arbitrary point.
pub fn lax_hopf_at(p: Point, boundary: &BoundaryData) -> f64 {
    boundary
        .points
        .iter()
        .zip(&boundary.phi)
        .map(|(&y, &phi)| phi + dist(p, y))
        .fold(f64::INFINITY, f64::min)
}

/// Lax–Hopf value at `p` and the index of the minimizing sample.
///
/// Ties are resolved towards the lexicographically smallest sample.
pub fn nearest_projection(p: Point, boundary: &BoundaryData) -> (f64, usize) {
    let mut best = f64::INFINITY;
    let mut arg = 0;
    for (k, (&y, &phi)) in boundary.points.iter().zip(&boundary.phi).enumerate() {
        let v = phi + dist(p, y);
        let eps = TIE_EPS * (1.0 + v.abs());
        if v < best - eps {
            best = v;
            arg = k;
        } else if v <= best + eps {
            let cur = boundary.points[arg];
            if (y[0], y[1]) < (cur[0], cur[1]) {
                arg = k;
            }
            best = best.min(v);
        }
    }
    (best, arg)
}

/// Foot of the ray through `x` on the boundary polyline, searched from sample `k`.
///
/// Samples of a 2D boundary are ordered by arclength, so `k - 1` and `k + 1`
/// are the neighbouring vertices. The search first walks along the samples
/// while `phi(y) + |x - y|` decreases, then minimizes over the two adjacent
/// segments with `phi` taken linear on each. In 1D the sample itself is returned.
pub fn refined_foot(x: Point, boundary: &BoundaryData, k: usize) -> Point {
    let m = boundary.len();
    if m < 3 {
        return boundary.points[k];
    }
    let cost = |j: usize| boundary.phi[j] + dist(x, boundary.points[j]);
    let mut k = k;
    for _ in 0..m {
        let (prev, next) = ((k + m - 1) % m, (k + 1) % m);
        let here = cost(k);
        if cost(prev) < here {
            k = prev;
        } else if cost(next) < here {
            k = next;
        } else {
            break;
        }
    }
    let y = boundary.points[k];
    let mut best = (boundary.phi[k] + dist(x, y), y);
    for nb in [(k + m - 1) % m, (k + 1) % m] {
        let (a, b) = (y, boundary.points[nb]);
        let (pa, pb) = (boundary.phi[k], boundary.phi[nb]);
        let len = dist(a, b);
        if len == 0.0 {
            continue;
        }
        let e = [(b[0] - a[0]) / len, (b[1] - a[1]) / len];
        let rel = sub(x, a);
        let along = rel[0] * e[0] + rel[1] * e[1];
        let perp = (rel[0] * e[1] - rel[1] * e[0]).abs();
        let g = (pb - pa) / len;
        let s = if g.abs() < 1.0 {
            (along - g * perp / (1.0 - g * g).sqrt()).clamp(0.0, len)
        } else if g > 0.0 {
            0.0
        } else {
            len
        };
        let p = [a[0] + s * e[0], a[1] + s * e[1]];
        let val = pa + g * s + dist(x, p);
        if val < best.0 {
            best = (val, p);
        }
    }
    best.1
}

/// `u_phi` on the grid.
pub fn lax_hopf(grid: &Arc<Grid>, boundary: &BoundaryData) -> Result<ScalarField> {
    boundary.validate()?;
    Ok(ScalarField::from_fn(grid.clone(), |p| lax_hopf_at(p, boundary)))
}

/// Indices of all samples `y` with `phi(y) + |x - y| <= u_phi(x) + tol`.
pub fn projections(x: Point, boundary: &BoundaryData, u_phi_x: f64, tol: f64) -> Vec<usize> {
    let out: Vec<usize> = boundary
        .points
        .iter()
        .zip(&boundary.phi)
        .enumerate()
        .filter(|(_, (&y, &phi))| phi + dist(x, y) <= u_phi_x + tol)
        .map(|(k, _)| k)
        .collect();
    if out.is_empty() {
        // u_phi_x was below the true minimum; the argmin is still a projection
        vec![nearest_projection(x, boundary).1]
    } else {
        out
    }
}

/// A maximal segment from a boundary sample along which `u_phi` grows at unit rate.
#[derive(Debug, Clone, PartialEq)]
pub struct Ray {
    /// Index of the initial boundary sample.
    pub start_index: usize,
    pub start: Point,
    pub end: Point,
    pub length: f64,
}

impl Ray {
    /// Unit direction from the initial towards the final point.
    pub fn direction(&self) -> Point {
        let d = sub(self.end, self.start);
        let n = norm(d);
        [d[0] / n, d[1] / n]
    }
}

#[derive(Debug, Clone)]
pub struct RaySet {
    pub rays: Vec<Ray>,
    /// Per cell: the sample it projects onto.
    pub cell_sample: Vec<usize>,
    /// Per cell: the ray through it.
    pub cell_ray: Vec<Option<usize>>,
    /// Per cell: detected final point of its ray (the ridge set J).
    pub j_mask: Vec<bool>,
    grid: Arc<Grid>,
}

impl RaySet {
    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    /// Centers of the ridge cells.
    pub fn j_points(&self) -> Vec<Point> {
        self.j_mask
            .iter()
            .enumerate()
            .filter(|(_, &j)| j)
            .map(|(c, _)| self.grid.coord(c))
            .collect()
    }

    pub fn j_cells(&self) -> Vec<usize> {
        (0..self.j_mask.len()).filter(|&c| self.j_mask[c]).collect()
    }
}

/// Parameter interval `[0, s_exit]` of the ray `start + s d` inside the closed domain.
fn exit_length(domain: &DomainSpec, start: Point, d: Point) -> f64 {
    let at = |s: f64| [start[0] + s * d[0], start[1] + s * d[1]];
    let diam = domain.diameter();
    // the starting point is on the boundary; step in until strictly inside
    let mut lo = 0.0;
    let mut probe = 1e-9 * diam;
    while probe < diam && domain.signed_distance(at(probe)) <= 0.0 {
        probe *= 2.0;
    }
    if probe >= diam {
        return 0.0;
    }
    lo = f64::max(lo, probe);
    let mut hi = 1.01 * diam + probe;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if domain.signed_distance(at(mid)) >= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-14 * diam {
            break;
        }
    }
    lo
}

/// Largest `s <= s_max` with `u_phi(start + s d) = phi(start) + s`.
fn ray_length(boundary: &BoundaryData, start: usize, d: Point, s_min: f64, s_max: f64) -> f64 {
    let y = boundary.points[start];
    let phi = boundary.phi[start];
    let on_ray = |s: f64| {
        let p = [y[0] + s * d[0], y[1] + s * d[1]];
        let v = phi + s;
        lax_hopf_at(p, boundary) >= v - TIE_EPS * (1.0 + v) * 16.0
    };
    if on_ray(s_max) {
        return s_max;
    }
    let (mut lo, mut hi) = (s_min.min(s_max), s_max);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if on_ray(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-13 * (1.0 + s_max) {
            break;
        }
    }
    lo
}

/// Transport rays of `u_phi`, the per-cell ray assignment and the ridge set.
///
/// One ray is stored per boundary sample that some cell projects onto; its
/// direction points at the farthest such cell and its length is extended
/// along that line while the unit-growth identity holds. A cell belongs to
/// the ridge set when continuing its own segment `[y, x]` by one grid step
/// loses more than `h^2` against unit growth, or leaves the domain. Cells
/// closer than `h` to the wall try every direction of a fine fan.
pub fn transport_rays(domain: &DomainSpec, grid: &Arc<Grid>, boundary: &BoundaryData, u_phi: &ScalarField) -> Result<RaySet> {
    boundary.validate()?;
    if !grid.same_layout(u_phi.grid()) {
        return Err(Error::GridMismatch);
    }
    let h = grid.h();
    let n = grid.len();
    let mut cell_sample = Vec::with_capacity(n);
    // farthest assigned cell per sample
    let mut far: Vec<Option<(f64, usize)>> = vec![None; boundary.len()];
    for (c, &x) in grid.coords().iter().enumerate() {
        let (_, k) = nearest_projection(x, boundary);
        cell_sample.push(k);
        let r = dist(x, boundary.points[k]);
        if far[k].map_or(true, |(best, _)| r > best) {
            far[k] = Some((r, c));
        }
    }

    let mut rays = Vec::new();
    let mut ray_of_sample = vec![None; boundary.len()];
    for (k, entry) in far.iter().enumerate() {
        let Some((r, c)) = *entry else { continue };
        let y = boundary.points[k];
        let x = grid.coord(c);
        let d = {
            let v = sub(x, y);
            [v[0] / r, v[1] / r]
        };
        let s_exit = exit_length(domain, y, d).max(r);
        let s = ray_length(boundary, k, d, r, s_exit);
        ray_of_sample[k] = Some(rays.len());
        rays.push(Ray {
            start_index: k,
            start: y,
            end: [y[0] + s * d[0], y[1] + s * d[1]],
            length: s,
        });
    }
    let cell_ray = cell_sample.iter().map(|&k| ray_of_sample[k]).collect();

    let mut j_mask = Vec::with_capacity(n);
    for (c, &x) in grid.coords().iter().enumerate() {
        let k = cell_sample[c];
        let y = boundary.points[k];
        let v = sub(x, y);
        let r = norm(v);
        let ux = boundary.phi[k] + r;
        let is_final = if r < h {
            // within a step of the wall the segment direction is dominated by
            // the sample spacing, so search a fan of directions instead
            !fan(domain.dimension, h).any(|d| {
                let next = [x[0] + h * d[0], x[1] + h * d[1]];
                domain.signed_distance(next) >= 0.0 && lax_hopf_at(next, boundary) >= ux + h - h * h
            })
        } else {
            let next = [x[0] + h * v[0] / r, x[1] + h * v[1] / r];
            domain.signed_distance(next) < 0.0 || lax_hopf_at(next, boundary) < ux + h - h * h
        };
        j_mask.push(is_final);
    }

    Ok(RaySet {
        rays,
        cell_sample,
        cell_ray,
        j_mask,
        grid: grid.clone(),
    })
}

/// Unit directions fine enough that a step of `h` misses the best one by
/// less than `h^2 / 2`.
fn fan(dimension: usize, h: f64) -> impl Iterator<Item = Point> {
    let k = if dimension == 1 { 2 } else { ((std::f64::consts::TAU / h.sqrt()).ceil() as usize).max(16) };
    (0..k).map(move |i| {
        let t = std::f64::consts::TAU * i as f64 / k as f64;
        if dimension == 1 { [t.cos().round(), 0.0] } else { [t.cos(), t.sin()] }
    })
}

/// Boundary samples receiving material from the support of the source.
#[derive(Debug, Clone, PartialEq)]
pub struct DischargeBoundary {
    pub mask: Vec<bool>,
}

impl DischargeBoundary {
    pub fn count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    pub fn is_empty(&self) -> bool {
        self.count() == 0
    }

    pub fn indices(&self) -> Vec<usize> {
        (0..self.mask.len()).filter(|&k| self.mask[k]).collect()
    }
}

/// Union of the projections (tolerance `2h`) of every support cell.
pub fn discharge_boundary(f: &ScalarField, boundary: &BoundaryData, u_phi: &ScalarField) -> Result<DischargeBoundary> {
    f.ensure_same_grid(u_phi)?;
    if f.values().iter().any(|&v| v < 0.0) {
        return Err(Error::Data("source must be nonnegative".into()));
    }
    let grid = f.grid();
    let tol = 2.0 * grid.h();
    let mut mask = vec![false; boundary.len()];
    for (c, &s) in f.support_mask().iter().enumerate() {
        if !s {
            continue;
        }
        let x = grid.coord(c);
        let ux = u_phi.values()[c];
        for (k, (&y, &phi)) in boundary.points.iter().zip(&boundary.phi).enumerate() {
            if phi + dist(x, y) <= ux + tol {
                mask[k] = true;
            }
        }
    }
    Ok(DischargeBoundary { mask })
}

/// The minimal admissible profile agreeing with `u_phi` on the support of the
/// source: `u_f(x) = max(0, max_z u_phi(z) - |x - z|)` over support points `z`.
#[derive(Debug, Clone)]
pub struct AsymptoticProfile {
    anchors: Vec<(Point, f64)>,
}

impl AsymptoticProfile {
    /// Support cells of `f` plus, when the analytic density is known, points
    /// supersampled 10x per axis in the cells straddling the support boundary.
    pub fn new(
        domain: &DomainSpec,
        f: &ScalarField,
        u_phi: &ScalarField,
        boundary: &BoundaryData,
        f_fn: Option<&dyn Fn(Point) -> f64>,
    ) -> Result<Self> {
        f.ensure_same_grid(u_phi)?;
        if f.is_zero() {
            return Err(Error::Undefined("asymptotic profile undefined for zero source".into()));
        }
        let grid = f.grid();
        let support = f.support_mask();
        let mut anchors: Vec<(Point, f64)> = (0..grid.len())
            .filter(|&c| support[c])
            .map(|c| (grid.coord(c), u_phi.values()[c]))
            .collect();

        if let Some(f_fn) = f_fn {
            let h = grid.h();
            let sub = 10;
            let mut refine = vec![false; grid.len()];
            for c in 0..grid.len() {
                for &(di, dj) in grid.neighborhood() {
                    match grid.neighbor(c, di, dj) {
                        Some(nb) if support[nb] != support[c] => refine[c] = true,
                        None if support[c] => refine[c] = true,
                        _ => {}
                    }
                }
            }
            let offsets: Vec<f64> = (0..sub).map(|k| (k as f64 + 0.5) / sub as f64 - 0.5).collect();
            let dy_offsets: Vec<f64> = if grid.dimension() == 2 { offsets.clone() } else { vec![0.0] };
            for c in (0..grid.len()).filter(|&c| refine[c]) {
                let x = grid.coord(c);
                for &ox in &offsets {
                    for &oy in &dy_offsets {
                        let p = [x[0] + ox * h, x[1] + oy * h];
                        if f_fn(p) > 0.0 && domain.contains(p) {
                            anchors.push((p, lax_hopf_at(p, boundary)));
                        }
                    }
                }
            }
        }
        Ok(Self { anchors })
    }

    pub fn value_at(&self, x: Point) -> f64 {
        self.anchors
            .iter()
            .map(|&(z, uz)| uz - dist(x, z))
            .fold(0.0, f64::max)
    }

    pub fn to_field(&self, grid: &Arc<Grid>) -> ScalarField {
        ScalarField::from_fn(grid.clone(), |x| self.value_at(x))
    }
}

/// `u_f` on the grid (see [`AsymptoticProfile`]).
pub fn u_f_profile(
    domain: &DomainSpec,
    f: &ScalarField,
    u_phi: &ScalarField,
    boundary: &BoundaryData,
    f_fn: Option<&dyn Fn(Point) -> f64>,
) -> Result<ScalarField> {
    let profile = AsymptoticProfile::new(domain, f, u_phi, boundary, f_fn)?;
    Ok(profile.to_field(f.grid()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::build_domain;
    use crate::grid::build_grid;

    fn interval(h: f64) -> (DomainSpec, Arc<Grid>, BoundaryData) {
        let (d, b) = build_domain(DomainSpec::interval(-1.0, 1.0).unwrap(), |_| 0.0).unwrap();
        let g = Arc::new(build_grid(&d, h).unwrap());
        (d, g, b)
    }

    #[test]
    fn interval_distance_function() {
        let (_, g, b) = interval(0.02);
        let u = lax_hopf(&g, &b).unwrap();
        for (c, &x) in g.coords().iter().enumerate() {
            assert!((u.values()[c] - (1.0 - x[0].abs())).abs() < 1e-14);
        }
        assert_eq!(lax_hopf_at([0.0, 0.0], &b), 1.0);
    }

    #[test]
    fn unequal_walls() {
        let (_, b) = build_domain(DomainSpec::interval(0.0, 1.0).unwrap(), |p| if p[0] == 0.0 { 0.2 } else { 0.0 }).unwrap();
        assert!((lax_hopf_at([0.5, 0.0], &b) - 0.5).abs() < 1e-15);
        assert!((lax_hopf_at([0.2, 0.0], &b) - 0.4).abs() < 1e-15);
    }

    #[test]
    fn empty_boundary_is_an_error() {
        let (_, g, _) = interval(0.1);
        let b = BoundaryData { points: vec![], phi: vec![] };
        assert!(matches!(lax_hopf(&g, &b), Err(Error::Data(_))));
    }

    #[test]
    fn projection_sets() {
        let (_, _, b) = interval(0.1);
        let x = [-0.5, 0.0];
        assert_eq!(projections(x, &b, lax_hopf_at(x, &b), 0.2), vec![0]);
        let o = [0.0, 0.0];
        assert_eq!(projections(o, &b, lax_hopf_at(o, &b), 0.2), vec![0, 1]);
    }

    #[test]
    fn radial_projection_on_circle() {
        let (_, b) = build_domain(DomainSpec::ball([0.0, 0.0], 1.0, 360).unwrap(), |_| 0.0).unwrap();
        let x = [0.5, 0.0];
        let h = 0.02;
        let set = projections(x, &b, lax_hopf_at(x, &b), 2.0 * h);
        assert!(set.contains(&0), "sample at (1, 0) missing");
        for k in set {
            let y = b.points[k];
            assert!(dist(x, y) <= 0.5 + 2.0 * h + 1e-12);
        }
        assert_eq!(nearest_projection(x, &b).1, 0);
    }

    #[test]
    fn interval_rays_and_ridge() {
        let (d, g, b) = interval(0.1);
        let u = lax_hopf(&g, &b).unwrap();
        let rays = transport_rays(&d, &g, &b, &u).unwrap();
        assert_eq!(rays.rays.len(), 2);
        for r in &rays.rays {
            assert!(r.end[0].abs() < 1e-9, "ray ends at {:?}", r.end);
            assert!((r.length - 1.0).abs() < 1e-9);
        }
        let j = rays.j_points();
        assert!(!j.is_empty());
        assert!(j.iter().all(|p| p[0].abs() <= 0.1));
    }

    #[test]
    fn ray_reaching_a_high_wall_ends_on_the_wall() {
        let (d, b) = build_domain(DomainSpec::interval(0.0, 1.0).unwrap(), |p| if p[0] == 0.0 { 5.0 } else { 0.0 }).unwrap();
        let g = Arc::new(build_grid(&d, 0.05).unwrap());
        let u = lax_hopf(&g, &b).unwrap();
        let rays = transport_rays(&d, &g, &b, &u).unwrap();
        assert_eq!(rays.rays.len(), 1);
        assert!(rays.rays[0].end[0].abs() < 1e-9);
        assert!(rays.j_mask[0]);
        assert_eq!(rays.j_mask.iter().filter(|&&j| j).count(), 1);
    }

    #[test]
    fn partial_support_discharges_left() {
        let (_, g, b) = interval(0.1);
        let u = lax_hopf(&g, &b).unwrap();
        let f = ScalarField::from_fn(g.clone(), |p| if (-0.6..=-0.4).contains(&p[0]) { 1.0 } else { 0.0 });
        let gamma = discharge_boundary(&f, &b, &u).unwrap();
        assert_eq!(gamma.mask, vec![true, false]);
        let zero = ScalarField::zeros(g.clone());
        assert!(discharge_boundary(&zero, &b, &u).unwrap().is_empty());
    }

    #[test]
    fn partial_support_asymptotic_profile() {
        let (d, g, b) = interval(0.01);
        let u = lax_hopf(&g, &b).unwrap();
        let ind = |p: Point| if (-0.6..=-0.4).contains(&p[0]) { 1.0 } else { 0.0 };
        let f = ScalarField::from_fn(g.clone(), ind);
        let prof = AsymptoticProfile::new(&d, &f, &u, &b, Some(&ind)).unwrap();
        let tol = 2.0 * g.h();
        assert!((prof.value_at([0.0, 0.0]) - 0.2).abs() <= tol);
        assert_eq!(prof.value_at([0.5, 0.0]), 0.0);
        assert!((prof.value_at([-0.4, 0.0]) - 0.6).abs() <= tol);
    }

    #[test]
    fn zero_source_profile_is_undefined() {
        let (d, g, b) = interval(0.1);
        let u = lax_hopf(&g, &b).unwrap();
        let f = ScalarField::zeros(g.clone());
        assert!(matches!(u_f_profile(&d, &f, &u, &b, None), Err(Error::Undefined(_))));
    }
}
