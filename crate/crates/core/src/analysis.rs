//! Finite-time convergence criteria and the classification of equilibria.

use std::sync::Arc;

use serde::Serialize;

use crate::eikonal::{discharge_boundary, lax_hopf, transport_rays, u_f_profile, RaySet};
use crate::error::{Error, Result};
use crate::field::{ScalarField, SUPPORT_EPS};
use crate::geometry::{dist, unit_ball_volume, BoundaryData, DomainSpec, Point};
use crate::grid::Grid;
use crate::quad::{integral_from_zero, tanh_sinh};
use crate::radial::ball_mean;
use crate::transport::{boundary_discharge_stationary, stationary_rolling_layer, weak_residual, BoundaryMeasure, RollingLayer, TestFunction, WeakResidualReport};

/// A value that may be reported as divergent. Never serialized as a float infinity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum Extended {
    Finite(f64),
    Infinite,
}

impl Extended {
    pub fn is_finite(&self) -> bool {
        matches!(self, Extended::Finite(_))
    }

    pub fn value(&self) -> Option<f64> {
        match self {
            Extended::Finite(v) => Some(*v),
            Extended::Infinite => None,
        }
    }

    fn max(self, other: Extended) -> Extended {
        match (self, other) {
            (Extended::Finite(a), Extended::Finite(b)) => Extended::Finite(a.max(b)),
            _ => Extended::Infinite,
        }
    }
}

/// `int_(B_rho(y) ∩ Omega) f` for a density given on a grid or in closed form.
pub trait BallMass {
    fn dimension(&self) -> usize;
    fn mass(&self, y: Point, rho: f64) -> f64;
    /// Smallest radius the data resolves.
    fn resolution(&self) -> f64;
    /// Exponent slack when deciding whether a fitted `rho^(-beta)` is integrable.
    fn beta_tolerance(&self) -> f64;
}

/// Cell sums of a grid field; cells count when their centre lies in the ball.
pub struct GridMass<'a> {
    f: &'a ScalarField,
}

impl<'a> GridMass<'a> {
    pub fn new(f: &'a ScalarField) -> Self {
        Self { f }
    }

    /// Sorted `(distance, cumulative mass)` pairs seen from `y`.
    fn profile(&self, y: Point) -> Vec<(f64, f64)> {
        let g = self.f.grid();
        let vol = g.cell_volume();
        let mut d: Vec<(f64, f64)> = g.coords().iter().zip(self.f.values()).map(|(&x, &v)| (dist(x, y), v * vol)).collect();
        d.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut acc = 0.0;
        for e in d.iter_mut() {
            acc += e.1;
            e.1 = acc;
        }
        d
    }
}

fn mass_from_profile(profile: &[(f64, f64)], rho: f64) -> f64 {
    let k = profile.partition_point(|&(d, _)| d <= rho);
    if k == 0 {
        0.0
    } else {
        profile[k - 1].1
    }
}

impl BallMass for GridMass<'_> {
    fn dimension(&self) -> usize {
        self.f.grid().dimension()
    }

    fn mass(&self, y: Point, rho: f64) -> f64 {
        mass_from_profile(&self.profile(y), rho)
    }

    fn resolution(&self) -> f64 {
        2.0 * self.f.grid().h()
    }

    fn beta_tolerance(&self) -> f64 {
        0.05
    }
}

/// A density known in closed form, integrated over `B_rho(y) ∩ Omega` by
/// tanh-sinh in the radius and the trapezoidal rule in the angle.
pub struct AnalyticMass<'a> {
    pub domain: &'a DomainSpec,
    pub f: &'a dyn Fn(Point) -> f64,
}

impl BallMass for AnalyticMass<'_> {
    fn dimension(&self) -> usize {
        self.domain.dimension
    }

    fn mass(&self, y: Point, rho: f64) -> f64 {
        let inside = |p: Point| self.domain.signed_distance(p) >= 0.0;
        if self.dimension() == 1 {
            let g = |x: f64| if inside([x, 0.0]) { (self.f)([x, 0.0]) } else { 0.0 };
            return tanh_sinh(g, y[0] - rho, y[0]) + tanh_sinh(g, y[0], y[0] + rho);
        }
        let n_theta = 256;
        let ring = |s: f64| {
            let mut acc = 0.0;
            for k in 0..n_theta {
                let th = std::f64::consts::TAU * k as f64 / n_theta as f64;
                let p = [y[0] + s * th.cos(), y[1] + s * th.sin()];
                if inside(p) {
                    acc += (self.f)(p);
                }
            }
            acc * std::f64::consts::TAU / n_theta as f64 * s
        };
        tanh_sinh(ring, 0.0, rho)
    }

    fn resolution(&self) -> f64 {
        1e-6 * self.domain.diameter()
    }

    fn beta_tolerance(&self) -> f64 {
        1e-3
    }
}

fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..n).map(|k| (a + (b - a) * k as f64 / (n - 1) as f64).exp()).collect()
}

/// Least-squares slope of `ln g` against `ln rho` over the first few points, negated.
fn fitted_exponent(rho: &[f64], g: &[f64]) -> f64 {
    let k = rho.len().min(4);
    let xs: Vec<f64> = rho[..k].iter().map(|r| r.ln()).collect();
    let ys: Vec<f64> = g[..k].iter().map(|v| v.ln()).collect();
    let mx = xs.iter().sum::<f64>() / k as f64;
    let my = ys.iter().sum::<f64>() / k as f64;
    let num: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let den: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    -num / den
}

/// Default upper limit of the density integral at `y`.
pub fn default_dens_upper(domain: &DomainSpec, y: Point) -> f64 {
    f64::min(1.0, 0.9 * domain.signed_distance(y).max(0.0) + 0.9 * domain.diameter())
}

/// `int_0^upper |B_rho| / int_(B_rho(y) ∩ Omega) f drho` on 64 log-spaced radii
/// down to the data resolution, with a fitted power-law tail below it.
pub fn dens_integral(source: &dyn BallMass, y: Point, upper: f64) -> Extended {
    let lo = source.resolution();
    if !(upper > lo) {
        return Extended::Finite(0.0);
    }
    let n = source.dimension();
    let rho = log_grid(lo, upper, 64);
    let mut g = Vec::with_capacity(rho.len());
    for &r in &rho {
        let m = source.mass(y, r);
        if !(m > 0.0) {
            return Extended::Infinite;
        }
        g.push(unit_ball_volume(n) * r.powi(n as i32) / m);
    }
    let beta = fitted_exponent(&rho, &g);
    if beta >= 1.0 - source.beta_tolerance() {
        return Extended::Infinite;
    }
    // trapezoid in ln(rho)
    let body: f64 = (1..rho.len())
        .map(|k| 0.5 * (g[k] * rho[k] + g[k - 1] * rho[k - 1]) * (rho[k].ln() - rho[k - 1].ln()))
        .sum();
    let tail = g[0] * rho[0] / (1.0 - beta);
    Extended::Finite(body + tail)
}

#[derive(Debug, Clone, Serialize)]
pub struct Dens2Estimate {
    pub point: Point,
    /// Minimum of the scaled ball mass over the radius grid; an estimate of the
    /// lower density, never its exact value.
    pub estimate: f64,
    pub radius_at_min: f64,
}

/// `min_r r^(-(N + alpha)) int_(B_r(y) ∩ Omega) f` over 32 log-spaced `r` in `[r_lo, r_hi]`.
pub fn dens2_density(source: &dyn BallMass, y: Point, alpha: f64, r_lo: f64, r_hi: f64) -> Result<Dens2Estimate> {
    if !(0.0..1.0).contains(&alpha) {
        return Err(Error::Data(format!("alpha = {alpha} must lie in [0, 1)")));
    }
    if !(r_lo > 0.0 && r_hi > r_lo) {
        return Err(Error::Data(format!("bad radius range [{r_lo}, {r_hi}]")));
    }
    let n = source.dimension() as f64;
    let mut best = (f64::INFINITY, r_lo);
    for r in log_grid(r_lo, r_hi, 32) {
        let v = source.mass(y, r) / r.powf(n + alpha);
        if v < best.0 {
            best = (v, r);
        }
    }
    Ok(Dens2Estimate {
        point: y,
        estimate: best.0,
        radius_at_min: best.1,
    })
}

/// True iff every ridge cell is in the support of `f` or next to it.
pub fn check_support_inclusion(j_mask: &[bool], f: &ScalarField) -> bool {
    if f.is_zero() {
        return false;
    }
    let g = f.grid();
    let support = f.support_mask();
    (0..g.len()).filter(|&c| j_mask[c]).all(|c| {
        let dim = g.dimension() as isize;
        (-1..=1).any(|di| {
            (-(dim - 1)..=(dim - 1)).any(|dj| g.neighbor(c, di, dj).is_some_and(|nb| support[nb]))
        })
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FinTimeBound {
    pub r: f64,
    pub eps: f64,
    pub tau: f64,
}

/// `([min phi + diam]^(N+1) + N r^(N+1)) / ((N+1) eps r^N)`.
pub fn fintime_tau(n: usize, min_phi: f64, diam: f64, r: f64, eps: f64) -> f64 {
    let k = (n + 1) as i32;
    ((min_phi + diam).powi(k) + n as f64 * r.powi(k)) / ((n + 1) as f64 * eps * r.powi(n as i32))
}

/// Searches `r` over `diam / 2^k`, `k = 1..=10` (down to `2h`) for `f >= eps`
/// on the cells within `r` of the ridge, with the largest `eps <= r`, and
/// returns the hypothesis giving the smallest time bound.
///
/// With `f_fn`, the lower bound on a cell is the minimum over a 5-point-per-axis
/// sub-sampling including its corners; otherwise the cell value is used.
pub fn fintime_hypothesis_and_bound(
    f: &ScalarField,
    j_mask: &[bool],
    boundary: &BoundaryData,
    domain: &DomainSpec,
    f_fn: Option<&dyn Fn(Point) -> f64>,
) -> Option<FinTimeBound> {
    let g = f.grid();
    let j_points: Vec<Point> = (0..g.len()).filter(|&c| j_mask[c]).map(|c| g.coord(c)).collect();
    if j_points.is_empty() {
        return None;
    }
    let h = g.h();
    let lower: Vec<f64> = match f_fn {
        Some(f_fn) => (0..g.len()).map(|c| cell_minimum(g, c, f_fn)).collect(),
        None => f.values().to_vec(),
    };
    // distance from each cell to the ridge
    let near: Vec<f64> = g
        .coords()
        .iter()
        .map(|&x| j_points.iter().map(|&y| dist(x, y)).fold(f64::INFINITY, f64::min))
        .collect();
    let diam = domain.diameter();
    let n = g.dimension();
    let zero = SUPPORT_EPS * f.max().max(0.0);
    let mut best: Option<FinTimeBound> = None;
    for k in 1..=10 {
        let r = diam / 2f64.powi(k);
        if r < 2.0 * h {
            break;
        }
        let m = (0..g.len()).filter(|&c| near[c] <= r).map(|c| lower[c]).fold(f64::INFINITY, f64::min);
        let eps = m.min(r);
        if !(eps > zero) {
            continue;
        }
        let tau = fintime_tau(n, boundary.min_phi(), diam, r, eps);
        if best.map_or(true, |b| tau < b.tau) {
            best = Some(FinTimeBound { r, eps, tau });
        }
    }
    best
}

fn cell_minimum(g: &Grid, c: usize, f_fn: &dyn Fn(Point) -> f64) -> f64 {
    let x = g.coord(c);
    let h = g.h();
    let offs = [-0.5, -0.25, 0.0, 0.25, 0.5];
    let ys: &[f64] = if g.dimension() == 2 { &offs } else { &[0.0] };
    let mut m = f64::INFINITY;
    for &a in &offs {
        for &b in ys {
            m = m.min(f_fn([x[0] + a * h, x[1] + b * h]));
        }
    }
    m
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RadialTau {
    /// `int_0^(1/2) |B_rho| / int_(B_rho) f drho`.
    pub integral: Extended,
    /// Time from the `u_1` profile to extinction of the crater, twice the integral.
    pub extinction_time: Extended,
}

/// Radial finite-time integral for the source `fbar(|x|)` on the unit ball.
pub fn radial_tau(fbar: &dyn Fn(f64) -> f64, n: usize) -> Result<RadialTau> {
    if n == 0 {
        return Err(Error::Data("dimension must be at least 1".into()));
    }
    let integral = match integral_from_zero(|s| 1.0 / ball_mean(fbar, n, s), 0.5) {
        Some(v) => Extended::Finite(v),
        None => Extended::Infinite,
    };
    Ok(RadialTau {
        integral,
        extinction_time: match integral {
            Extended::Finite(v) => Extended::Finite(2.0 * v),
            Extended::Infinite => Extended::Infinite,
        },
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceReport {
    pub j_subset_spt_f: bool,
    /// Supremum over (up to 32 sampled) ridge points of the density integral.
    pub dens_value: Extended,
    pub dens2_estimates: Vec<Dens2Estimate>,
    pub fintime_hypothesis: Option<FinTimeBound>,
    pub radial_tau: Option<RadialTau>,
    pub ridge_points: usize,
    pub sampled_ridge_points: usize,
}

/// Evaluates all criteria on one configuration.
#[allow(clippy::too_many_arguments)]
pub fn convergence_report(
    domain: &DomainSpec,
    boundary: &BoundaryData,
    f: &ScalarField,
    rays: &RaySet,
    f_fn: Option<&dyn Fn(Point) -> f64>,
    fbar: Option<&dyn Fn(f64) -> f64>,
    alpha: f64,
    dens_upper: Option<f64>,
) -> Result<ConvergenceReport> {
    let g = f.grid();
    let j = rays.j_points();
    let stride = j.len().div_ceil(32).max(1);
    let sampled: Vec<Point> = j.iter().copied().step_by(stride).collect();
    let analytic = f_fn.map(|f| AnalyticMass { domain, f });
    let grid_mass = GridMass::new(f);
    let source: &dyn BallMass = match &analytic {
        Some(a) => a,
        None => &grid_mass,
    };
    let mut dens = Extended::Finite(0.0);
    let mut dens2 = Vec::new();
    for &y in &sampled {
        let upper = dens_upper.unwrap_or_else(|| default_dens_upper(domain, y));
        dens = dens.max(dens_integral(source, y, upper));
        dens2.push(dens2_density(source, y, alpha, 2.0 * g.h(), 0.2 * domain.diameter())?);
    }
    if sampled.is_empty() {
        dens = Extended::Infinite;
    }
    let radial = match fbar {
        Some(fbar) => Some(radial_tau(fbar, g.dimension())?),
        None => None,
    };
    Ok(ConvergenceReport {
        j_subset_spt_f: check_support_inclusion(&rays.j_mask, f),
        dens_value: dens,
        dens2_estimates: dens2,
        fintime_hypothesis: fintime_hypothesis_and_bound(f, &rays.j_mask, boundary, domain, f_fn),
        radial_tau: radial,
        ridge_points: j.len(),
        sampled_ridge_points: sampled.len(),
    })
}

/// Stationary profiles and the shared rolling layer of one configuration.
#[derive(Debug, Clone)]
pub struct EquilibriumReport {
    pub u_phi: ScalarField,
    pub u_f: ScalarField,
    pub v_f: RollingLayer,
    pub nu: BoundaryMeasure,
    pub rays: RaySet,
    pub gamma_f: Vec<bool>,
    /// Whether `u_phi` is the only stationary profile (ridge inside the support).
    pub unique_u: bool,
    pub statement: String,
    /// `max(u_f, min(u_phi, u_f + c))` with `c = (max u_phi - max u_f) / 2`.
    pub intermediate: ScalarField,
    pub residual_u_phi: WeakResidualReport,
    pub residual_intermediate: WeakResidualReport,
}

/// Test functions used for the residual checks: a constant and `count` seeded trigonometric ones.
pub fn standard_tests(dim: usize, seed: u64, count: usize) -> Vec<TestFunction> {
    let mut t = vec![TestFunction::constant(1.0)];
    t.extend((0..count as u64).map(|k| TestFunction::random_trig(seed.wrapping_add(k), dim)));
    t
}

pub fn classify_equilibria(
    domain: &DomainSpec,
    boundary: &BoundaryData,
    grid: &Arc<Grid>,
    f: &ScalarField,
    f_fn: Option<&dyn Fn(Point) -> f64>,
    seed: u64,
) -> Result<EquilibriumReport> {
    if f.is_zero() {
        return Err(Error::Undefined(
            "zero source: every admissible profile with v = 0 and nu = 0 is stationary".into(),
        ));
    }
    let u_phi = lax_hopf(grid, boundary)?;
    let rays = transport_rays(domain, grid, boundary, &u_phi)?;
    let gamma = discharge_boundary(f, boundary, &u_phi)?;
    let v_f = stationary_rolling_layer(f, &u_phi, &rays, boundary)?;
    let nu = boundary_discharge_stationary(f, &u_phi, &rays, boundary, &gamma)?;
    let u_f = u_f_profile(domain, f, &u_phi, boundary, f_fn)?;
    let unique_u = check_support_inclusion(&rays.j_mask, f);
    let c = 0.5 * (u_phi.max() - u_f.max());
    let intermediate = u_f.zip_map(&u_phi, |a, b| a.max(b.min(a + c)))?;
    let tests = standard_tests(grid.dimension(), seed, 5);
    let residual_u_phi = weak_residual(&u_phi, &v_f, &nu, f, boundary, &tests)?;
    let residual_intermediate = weak_residual(&intermediate, &v_f, &nu, f, boundary, &tests)?;
    let statement = if unique_u {
        "the ridge lies in the support of f: u_phi is the only stationary profile, with rolling layer v_f".to_string()
    } else {
        "stationary profiles are exactly the admissible u with u_f <= u <= u_phi, all paired with the same rolling layer v_f".to_string()
    };
    Ok(EquilibriumReport {
        u_phi,
        u_f,
        v_f,
        nu,
        rays,
        gamma_f: gamma.mask,
        unique_u,
        statement,
        intermediate,
        residual_u_phi,
        residual_intermediate,
    })
}
