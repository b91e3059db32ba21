//! Rolling layer and boundary discharge.
//!
//! The stationary flux `q = -v grad u_phi` runs along transport rays towards
//! the boundary. It is recovered with a conservative first-order upwind
//! finite-volume scheme: cells are visited from the ridge down (decreasing
//! `u_phi`), each one passes its accumulated mass through the faces the ray
//! direction at the face centre leaves by, and faces without a neighbouring cell drop the mass onto the
//! boundary sample the cell projects to.

use std::sync::Arc;

use serde::Serialize;

use crate::eikonal::{refined_foot, DischargeBoundary, RaySet};
use crate::error::{Error, Result};
use crate::evolution::SimTrajectory;
use crate::field::ScalarField;
use crate::geometry::{norm, sub, BoundaryData, Point};
use crate::grid::Grid;

/// Atoms of the boundary discharge, one weight per boundary sample.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundaryMeasure {
    pub weights: Vec<f64>,
}

impl BoundaryMeasure {
    pub fn zeros(m: usize) -> Self {
        Self { weights: vec![0.0; m] }
    }

    pub fn total(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Mass sitting on samples outside `mask`.
    pub fn mass_outside(&self, mask: &[bool]) -> f64 {
        self.weights.iter().zip(mask).filter(|(_, &m)| !m).map(|(w, _)| w).sum()
    }
}

/// Thickness `v >= 0` of the rolling layer.
#[derive(Debug, Clone)]
pub struct RollingLayer {
    pub v: ScalarField,
}

/// Face normals of a cell, as lattice offsets.
fn faces(dim: usize) -> &'static [(isize, isize)] {
    if dim == 1 {
        &[(1, 0), (-1, 0)]
    } else {
        &[(1, 0), (-1, 0), (0, 1), (0, -1)]
    }
}

/// Routes the mass `s dx` of a nonnegative density along the projection
/// directions; returns `(v, nu)`.
fn route(s: &[f64], order_key: &[f64], grid: &Arc<Grid>, rays: &RaySet, boundary: &BoundaryData) -> (Vec<f64>, Vec<f64>) {
    let n = grid.len();
    let h = grid.h();
    let dim = grid.dimension();
    let vol = grid.cell_volume();
    let face_area = vol / h;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| order_key[b].total_cmp(&order_key[a]).then(a.cmp(&b)));
    let mut done = vec![false; n];
    let mut inflow = vec![0.0; n];
    let mut v = vec![0.0; n];
    let mut nu = vec![0.0; boundary.len()];
    for &c in &order {
        done[c] = true;
        let k = rays.cell_sample[c];
        let x = grid.coord(c);
        let produced = s[c] * vol;
        let total = inflow[c] + produced;
        // outflow faces are those the downhill direction, taken at the face
        // centre, points through
        let mut width = 0.0;
        let mut targets: Vec<(Option<usize>, f64)> = Vec::with_capacity(4);
        for &(di, dj) in faces(dim) {
            let nb = grid.neighbor(c, di, dj);
            // a face without a neighbour may lie outside the container
            let xf = if nb.is_some() { [x[0] + 0.5 * h * di as f64, x[1] + 0.5 * h * dj as f64] } else { x };
            let away = sub(xf, refined_foot(xf, boundary, k));
            let r = norm(away);
            if r == 0.0 {
                continue;
            }
            let w = -(away[0] * di as f64 + away[1] * dj as f64) / r;
            if w <= 0.0 {
                continue;
            }
            width += w * face_area;
            targets.push((nb, w));
        }
        if width == 0.0 {
            nu[k] += total;
            continue;
        }
        // cell-centred value: upstream inflow plus half of the local production
        v[c] = (inflow[c] + 0.5 * produced) / width;
        let eligible: f64 = targets.iter().filter(|(nb, _)| nb.map_or(true, |nb| !done[nb])).map(|(_, w)| w).sum();
        if eligible == 0.0 {
            nu[k] += total;
            continue;
        }
        for (nb, w) in targets {
            let share = total * w / eligible;
            match nb {
                Some(nb) if !done[nb] => inflow[nb] += share,
                Some(_) => {}
                None => nu[k] += share,
            }
        }
    }
    (v, nu)
}

fn check_inputs(f: &ScalarField, u_phi: &ScalarField, rays: &RaySet, boundary: &BoundaryData) -> Result<()> {
    f.ensure_same_grid(u_phi)?;
    if !rays.grid().same_layout(f.grid()) {
        return Err(Error::GridMismatch);
    }
    if f.values().iter().any(|&v| v < 0.0) {
        return Err(Error::Data("source must be nonnegative".into()));
    }
    if rays.cell_sample.iter().any(|&k| k >= boundary.len()) {
        return Err(Error::Data("ray set does not match the boundary samples".into()));
    }
    Ok(())
}

/// Stationary rolling layer `v_f` paired with `u_phi`.
pub fn stationary_rolling_layer(f: &ScalarField, u_phi: &ScalarField, rays: &RaySet, boundary: &BoundaryData) -> Result<RollingLayer> {
    check_inputs(f, u_phi, rays, boundary)?;
    let (v, _) = route(f.values(), u_phi.values(), f.grid(), rays, boundary);
    Ok(RollingLayer {
        v: ScalarField::new(f.grid().clone(), v)?,
    })
}

/// Stationary discharge: every ray drops its source mass at its initial point.
///
/// Fails when more than 1% of the poured mass lands outside `gamma_f`.
pub fn boundary_discharge_stationary(
    f: &ScalarField,
    u_phi: &ScalarField,
    rays: &RaySet,
    boundary: &BoundaryData,
    gamma_f: &DischargeBoundary,
) -> Result<BoundaryMeasure> {
    check_inputs(f, u_phi, rays, boundary)?;
    let (_, nu) = route(f.values(), u_phi.values(), f.grid(), rays, boundary);
    let nu = BoundaryMeasure { weights: nu };
    let leak = nu.mass_outside(&gamma_f.mask);
    if leak > 0.01 * f.integral() {
        return Err(Error::Consistency(format!(
            "{leak:.3e} of {:.3e} discharged outside the discharge boundary",
            f.integral()
        )));
    }
    Ok(nu)
}

/// A smooth test function with its gradient.
pub struct TestFunction {
    pub name: String,
    pub value: Box<dyn Fn(Point) -> f64 + Send + Sync>,
    pub gradient: Box<dyn Fn(Point) -> Point + Send + Sync>,
}

impl TestFunction {
    pub fn new(
        name: impl Into<String>,
        value: impl Fn(Point) -> f64 + Send + Sync + 'static,
        gradient: impl Fn(Point) -> Point + Send + Sync + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            value: Box::new(value),
            gradient: Box::new(gradient),
        }
    }

    /// `c` with zero gradient.
    pub fn constant(c: f64) -> Self {
        Self::new(format!("const {c}"), move |_| c, |_| [0.0, 0.0])
    }

    /// `a + b.x + sum_k c_k sin(w_k . x + p_k)` with seeded random coefficients.
    pub fn random_trig(seed: u64, dim: usize) -> Self {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let a: f64 = rng.gen_range(-1.0..1.0);
        let mut b = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
        let mut modes = Vec::new();
        for _ in 0..3 {
            let mut w = [rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)];
            if dim == 1 {
                w[1] = 0.0;
            }
            modes.push((rng.gen_range(-0.5..0.5), w, rng.gen_range(0.0..std::f64::consts::TAU)));
        }
        if dim == 1 {
            b[1] = 0.0;
        }
        let m2 = modes.clone();
        Self::new(
            format!("trig seed {seed}"),
            move |x| a + b[0] * x[0] + b[1] * x[1] + modes.iter().map(|(c, w, p)| c * (w[0] * x[0] + w[1] * x[1] + p).sin()).sum::<f64>(),
            move |x| {
                let mut g = b;
                for (c, w, p) in &m2 {
                    let s = c * (w[0] * x[0] + w[1] * x[1] + p).cos();
                    g[0] += s * w[0];
                    g[1] += s * w[1];
                }
                g
            },
        )
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ResidualEntry {
    pub name: String,
    pub residual: f64,
    /// `sup |psi| + sup |grad psi|` over the grid and the boundary samples.
    pub c1_norm: f64,
    /// `|residual| / (h c1_norm)`.
    pub constant: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct WeakResidualReport {
    pub h: f64,
    pub entries: Vec<ResidualEntry>,
    pub max_residual: f64,
    pub max_constant: f64,
}

/// `r(psi) = int v grad_h u . grad psi - int f psi + sum psi(y) nu(y)` for each test function.
pub fn weak_residual(
    u: &ScalarField,
    v: &RollingLayer,
    nu: &BoundaryMeasure,
    f: &ScalarField,
    boundary: &BoundaryData,
    tests: &[TestFunction],
) -> Result<WeakResidualReport> {
    u.ensure_same_grid(&v.v)?;
    u.ensure_same_grid(f)?;
    if nu.weights.len() != boundary.len() {
        return Err(Error::Data("discharge weights do not match the boundary samples".into()));
    }
    let grid = u.grid();
    let vol = grid.cell_volume();
    let grads: Vec<Point> = (0..grid.len()).map(|c| u.gradient(c)).collect();
    let mut entries = Vec::with_capacity(tests.len());
    for t in tests {
        let mut r = 0.0;
        let mut sup_val: f64 = 0.0;
        let mut sup_grad: f64 = 0.0;
        for (c, &x) in grid.coords().iter().enumerate() {
            let gp = (t.gradient)(x);
            let val = (t.value)(x);
            r += (v.v.values()[c] * (grads[c][0] * gp[0] + grads[c][1] * gp[1]) - f.values()[c] * val) * vol;
            sup_val = sup_val.max(val.abs());
            sup_grad = sup_grad.max(norm(gp));
        }
        for (&y, &w) in boundary.points.iter().zip(&nu.weights) {
            let val = (t.value)(y);
            r += val * w;
            sup_val = sup_val.max(val.abs());
            sup_grad = sup_grad.max(norm((t.gradient)(y)));
        }
        let c1 = sup_val + sup_grad;
        entries.push(ResidualEntry {
            name: t.name.clone(),
            residual: r,
            c1_norm: c1,
            constant: if c1 > 0.0 { r.abs() / (grid.h() * c1) } else { 0.0 },
        });
    }
    let max_residual = entries.iter().map(|e| e.residual.abs()).fold(0.0, f64::max);
    let max_constant = entries.iter().map(|e| e.constant).fold(0.0, f64::max);
    Ok(WeakResidualReport {
        h: grid.h(),
        entries,
        max_residual,
        max_constant,
    })
}

/// Total discharge rate per step, `int f - d/dt int u`, clipped at zero.
pub fn evolution_discharge(traj: &SimTrajectory) -> Vec<(f64, f64)> {
    traj.diagnostics.iter().map(|d| (d.t, d.discharge_rate.max(0.0))).collect()
}

/// Rolling layer carried by the effective source `f - (u_k - u_(k-1))/dt` of
/// the last step of a trajectory, routed along the rays of `u_phi`.
pub fn rolling_layer_from_balance(
    traj: &SimTrajectory,
    f: &ScalarField,
    u_phi: &ScalarField,
    rays: &RaySet,
    boundary: &BoundaryData,
    last: &ScalarField,
    before: &ScalarField,
) -> Result<RollingLayer> {
    check_inputs(f, u_phi, rays, boundary)?;
    last.ensure_same_grid(before)?;
    let dt = traj.dt;
    let s: Vec<f64> = (0..f.len())
        .map(|c| (f.values()[c] - (last.values()[c] - before.values()[c]) / dt).max(0.0))
        .collect();
    let (v, _) = route(&s, u_phi.values(), f.grid(), rays, boundary);
    Ok(RollingLayer {
        v: ScalarField::new(f.grid().clone(), v)?,
    })
}

/// `max v (1 - |grad_h u|)` over the cells.
pub fn complementarity_check(u: &ScalarField, v: &RollingLayer) -> Result<f64> {
    u.ensure_same_grid(&v.v)?;
    Ok((0..u.len())
        .map(|c| v.v.values()[c] * (1.0 - norm(u.gradient(c))))
        .fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eikonal::{discharge_boundary, lax_hopf, transport_rays};
    use crate::geometry::{build_domain, DomainSpec};
    use crate::grid::build_grid;

    struct Case {
        grid: Arc<Grid>,
        boundary: BoundaryData,
        u_phi: ScalarField,
        rays: RaySet,
    }

    fn case(domain: DomainSpec, h: f64) -> Case {
        let (d, b) = build_domain(domain, |_| 0.0).unwrap();
        let g = Arc::new(build_grid(&d, h).unwrap());
        let u = lax_hopf(&g, &b).unwrap();
        let rays = transport_rays(&d, &g, &b, &u).unwrap();
        Case { grid: g, boundary: b, u_phi: u, rays }
    }

    #[test]
    fn zero_source() {
        let c = case(DomainSpec::interval(-1.0, 1.0).unwrap(), 0.1);
        let f = ScalarField::zeros(c.grid.clone());
        let v = stationary_rolling_layer(&f, &c.u_phi, &c.rays, &c.boundary).unwrap();
        assert!(v.v.is_zero());
        let gamma = discharge_boundary(&f, &c.boundary, &c.u_phi).unwrap();
        let nu = boundary_discharge_stationary(&f, &c.u_phi, &c.rays, &c.boundary, &gamma).unwrap();
        assert_eq!(nu.total(), 0.0);
        let r = weak_residual(&c.u_phi, &v, &nu, &f, &c.boundary, &[TestFunction::random_trig(1, 1)]).unwrap();
        assert_eq!(r.max_residual, 0.0);
    }

    #[test]
    fn interval_constant_source() {
        let c = case(DomainSpec::interval(-1.0, 1.0).unwrap(), 0.05);
        let f = ScalarField::from_fn(c.grid.clone(), |_| 1.0);
        let v = stationary_rolling_layer(&f, &c.u_phi, &c.rays, &c.boundary).unwrap();
        for (k, &x) in c.grid.coords().iter().enumerate() {
            assert!((v.v.values()[k] - x[0].abs()).abs() < 1e-12, "{x:?}");
        }
        let gamma = discharge_boundary(&f, &c.boundary, &c.u_phi).unwrap();
        let nu = boundary_discharge_stationary(&f, &c.u_phi, &c.rays, &c.boundary, &gamma).unwrap();
        assert!((nu.weights[0] - 1.0).abs() < 1e-12 && (nu.weights[1] - 1.0).abs() < 1e-12);
        let r = weak_residual(&c.u_phi, &v, &nu, &f, &c.boundary, &[TestFunction::constant(1.0)]).unwrap();
        assert!(r.max_residual.abs() < 1e-12);
    }

    #[test]
    fn localized_source_drains_left() {
        let c = case(DomainSpec::interval(-1.0, 1.0).unwrap(), 0.01);
        let f = ScalarField::from_fn(c.grid.clone(), |x| if (-0.6..=-0.4).contains(&x[0]) { 1.0 } else { 0.0 });
        let gamma = discharge_boundary(&f, &c.boundary, &c.u_phi).unwrap();
        let nu = boundary_discharge_stationary(&f, &c.u_phi, &c.rays, &c.boundary, &gamma).unwrap();
        assert!((nu.weights[0] - f.integral()).abs() < 1e-12);
        assert!((f.integral() - 0.2).abs() < 0.011);
        assert_eq!(nu.weights[1], 0.0);
    }

    #[test]
    fn radial_rolling_layer() {
        // f = 3r on the unit disk carries v = r^2
        let c = case(DomainSpec::ball([0.0, 0.0], 1.0, 720).unwrap(), 0.02);
        let f = ScalarField::from_fn(c.grid.clone(), |x| 3.0 * norm(x));
        let v = stationary_rolling_layer(&f, &c.u_phi, &c.rays, &c.boundary).unwrap();
        let exact = ScalarField::from_fn(c.grid.clone(), |x| norm(x).powi(2));
        let l1: f64 = v.v.zip_map(&exact, |a, b| (a - b).abs()).unwrap().integral();
        assert!(l1 < 0.02, "L1 error {l1}");
        let gamma = discharge_boundary(&f, &c.boundary, &c.u_phi).unwrap();
        let nu = boundary_discharge_stationary(&f, &c.u_phi, &c.rays, &c.boundary, &gamma).unwrap();
        assert!((nu.total() - f.integral()).abs() < 1e-9 * f.integral());
        let comp = complementarity_check(&c.u_phi, &v).unwrap();
        assert!(comp >= 0.0);
    }

    #[test]
    fn flat_profile_with_rolling_layer_is_flagged() {
        let c = case(DomainSpec::interval(-1.0, 1.0).unwrap(), 0.1);
        let flat = ScalarField::from_fn(c.grid.clone(), |_| 0.3);
        let v = RollingLayer {
            v: ScalarField::from_fn(c.grid.clone(), |_| 0.5),
        };
        assert!((complementarity_check(&flat, &v).unwrap() - 0.5).abs() < 1e-15);
        let none = RollingLayer {
            v: ScalarField::zeros(c.grid.clone()),
        };
        assert_eq!(complementarity_check(&c.u_phi, &none).unwrap(), 0.0);
    }

    #[test]
    fn constant_test_function_measures_global_balance() {
        let c = case(DomainSpec::interval(-1.0, 1.0).unwrap(), 0.1);
        let f = ScalarField::from_fn(c.grid.clone(), |_| 1.0);
        let v = RollingLayer {
            v: ScalarField::zeros(c.grid.clone()),
        };
        let nu = BoundaryMeasure { weights: vec![0.5, 0.5] };
        let r = weak_residual(&c.u_phi, &v, &nu, &f, &c.boundary, &[TestFunction::constant(1.0)]).unwrap();
        assert!((r.entries[0].residual + 1.0).abs() < 1e-12);
    }
}
