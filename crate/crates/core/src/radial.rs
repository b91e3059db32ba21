//! Reference solutions for radial sources on the unit ball with zero walls.
//!
//! Once the pile reaches `u1(r) = 1/2 - |r - 1/2|`, the profile keeps the form
//! `1 - 2 rho + r` on `r < rho` and `1 - r` outside, where the crater radius obeys
//! `-2 rho' = mean of f over B_rho`, `rho(0) = 1/2`. Times here are measured
//! from the moment the profile equals `u1`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::quad::{integral_from_zero, tanh_sinh};

/// Time at which a power-law source `(N + alpha) r^alpha` builds `u1` from zero.
pub fn t_alpha(n: usize, alpha: f64) -> Result<f64> {
    check_n(n)?;
    if !(alpha > 0.0) {
        return Err(Error::Data(format!("alpha = {alpha} must be positive")));
    }
    let k = (n + 1) as f64;
    if alpha < 1e-8 {
        return Ok(std::f64::consts::LN_2 / k);
    }
    Ok((2f64.powf(alpha) - 1.0) / (k * alpha))
}

/// Extinction time of the crater for `alpha < 1`: `2^alpha / (N (1 - alpha))`.
pub fn tau_alpha(n: usize, alpha: f64) -> Option<f64> {
    (alpha > 0.0 && alpha < 1.0 && n >= 1).then(|| 2f64.powf(alpha) / (n as f64 * (1.0 - alpha)))
}

/// The tent `1/2 - |r - 1/2|` on `[0, 1]`.
pub fn u1_profile(r: f64) -> Result<f64> {
    check_radius(r)?;
    Ok(0.5 - (r - 0.5).abs())
}

/// Closed-form crater radius for a power-law source.
pub fn rho_power_law(t: f64, n: usize, alpha: f64) -> Result<f64> {
    check_n(n)?;
    if !(t >= 0.0) {
        return Err(Error::Data(format!("time {t} must be nonnegative")));
    }
    if !(alpha > 0.0) {
        return Err(Error::Data(format!("alpha = {alpha} must be positive")));
    }
    // rho = (1/2) (1 - c t)^(1 / (1 - alpha)), written to stay accurate near alpha = 1
    let half_n = 0.5 * n as f64;
    if alpha == 1.0 {
        return Ok(0.5 * (-half_n * t).exp());
    }
    let c = half_n * (1.0 - alpha) * 2f64.powf(1.0 - alpha);
    if c * t >= 1.0 {
        return Ok(0.0);
    }
    Ok(0.5 * ((-c * t).ln_1p() / (1.0 - alpha)).exp())
}

/// Mean of the radial density `fbar` over the ball `B_rho` in dimension `n`,
/// `(N / rho^N) int_0^rho fbar(s) s^(N-1) ds`, with value 0 at `rho = 0`.
pub fn ball_mean(fbar: &dyn Fn(f64) -> f64, n: usize, rho: f64) -> f64 {
    if rho <= 0.0 {
        return 0.0;
    }
    let nn = n as f64;
    let integral = tanh_sinh(|s| fbar(s) * s.powi(n as i32 - 1), 0.0, rho);
    nn * integral / rho.powf(nn)
}

#[derive(Debug, Clone)]
pub struct RhoTrajectory {
    pub times: Vec<f64>,
    pub rho: Vec<f64>,
    /// First time at which `rho` reaches 0, if it does within the horizon.
    pub extinction: Option<f64>,
}

impl RhoTrajectory {
    /// `rho(t)` by linear interpolation between stored samples.
    pub fn rho_at(&self, t: f64) -> Result<f64> {
        let (first, last) = (self.times[0], *self.times.last().unwrap());
        if !(t >= first && t <= last) {
            if let Some(te) = self.extinction {
                if t >= te {
                    return Ok(0.0);
                }
            }
            return Err(Error::Data(format!("time {t} outside the trajectory [{first}, {last}]")));
        }
        let k = self.times.partition_point(|&s| s <= t);
        if k == 0 {
            return Ok(self.rho[0]);
        }
        if k >= self.times.len() {
            return Ok(*self.rho.last().unwrap());
        }
        let (t0, t1) = (self.times[k - 1], self.times[k]);
        let s = if t1 > t0 { (t - t0) / (t1 - t0) } else { 0.0 };
        Ok(self.rho[k - 1] + s * (self.rho[k] - self.rho[k - 1]))
    }

    /// Oracle height at time `t` and radius `r`.
    pub fn profile(&self, t: f64, r: f64) -> Result<f64> {
        oracle_profile(self.rho_at(t)?, r)
    }
}

/// Integrates `-2 rho' = mean_{B_rho} fbar` from `rho(0) = 1/2` and reports
/// `rho` at each time of `t_grid` (sorted, nonnegative).
///
/// Adaptive classical Runge–Kutta with step doubling (absolute tolerance
/// 1e-12 per step); the extinction event is located by bisection on the step.
pub fn rho_general(fbar: &dyn Fn(f64) -> f64, n: usize, t_grid: &[f64]) -> Result<RhoTrajectory> {
    check_n(n)?;
    check_monotone(fbar)?;
    if t_grid.windows(2).any(|w| w[1] < w[0]) || t_grid.first().is_some_and(|&t| t < 0.0) {
        return Err(Error::Data("time grid must be sorted and nonnegative".into()));
    }
    let rhs = |rho: f64| -0.5 * ball_mean(fbar, n, rho.max(0.0));
    let rk4 = |rho: f64, dt: f64| {
        let k1 = rhs(rho);
        let k2 = rhs(rho + 0.5 * dt * k1);
        let k3 = rhs(rho + 0.5 * dt * k2);
        let k4 = rhs(rho + dt * k3);
        rho + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    };
    let tol = 1e-12;
    let mut t: f64 = 0.0;
    let mut rho = 0.5;
    let mut dt: f64 = 1e-3;
    let mut extinction = None;
    let mut out = Vec::with_capacity(t_grid.len());
    for &target in t_grid {
        while t < target && extinction.is_none() {
            let step = dt.min(target - t);
            let full = rk4(rho, step);
            let halfway = rk4(rho, 0.5 * step);
            let two_half = rk4(halfway, 0.5 * step);
            let err = (full - two_half).abs();
            if err > tol && step > 1e-14 {
                dt = 0.5 * step;
                continue;
            }
            if two_half <= 0.0 {
                // bisect on the step length for the crossing of zero
                let (mut lo, mut hi) = (0.0, step);
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    let r = rk4(rk4(rho, 0.25 * mid), 0.75 * mid);
                    if r > 0.0 {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                    if hi - lo < 1e-15 {
                        break;
                    }
                }
                extinction = Some(t + hi);
                rho = 0.0;
                t += hi;
                break;
            }
            rho = two_half;
            t += step;
            if err < tol / 32.0 {
                dt = (2.0 * step).min(0.05);
            }
        }
        out.push(if extinction.is_some_and(|te| target >= te) { 0.0 } else { rho });
    }
    Ok(RhoTrajectory {
        times: t_grid.to_vec(),
        rho: out,
        extinction,
    })
}

/// Extinction time from the separable form `t(rho) = int_rho^(1/2) 2 / mean(s) ds`.
/// Returns `None` when the integral diverges numerically.
pub fn extinction_time_quadrature(fbar: &dyn Fn(f64) -> f64, n: usize) -> Option<f64> {
    integral_from_zero(|s| 2.0 / ball_mean(fbar, n, s), 0.5)
}

/// Profile `1 - 2 rho + r` inside the crater and `1 - r` outside.
pub fn oracle_profile(rho: f64, r: f64) -> Result<f64> {
    check_radius(r)?;
    Ok(if r < rho { 1.0 - 2.0 * rho + r } else { 1.0 - r })
}

/// Radius of the cone grown around the ridge in the finite-time argument:
/// `eps t` up to `t = r / eps`, then `[r^(N+1) + (N+1) eps r^N (t - r/eps)]^(1/(N+1))`.
pub fn cone_growth(t: f64, r: f64, eps: f64, n: usize) -> Result<f64> {
    check_n(n)?;
    if !(eps > 0.0 && r > 0.0 && eps <= r) {
        return Err(Error::Data(format!("need 0 < eps <= r, got eps = {eps}, r = {r}")));
    }
    if !(t >= 0.0) {
        return Err(Error::Data(format!("time {t} must be nonnegative")));
    }
    let t0 = r / eps;
    if t <= t0 {
        return Ok(eps * t);
    }
    let k = (n + 1) as f64;
    Ok((r.powf(k) + k * eps * r.powi(n as i32) * (t - t0)).powf(1.0 / k))
}

/// Oracle time at which the crater radius equals `rho`, `int_rho^(1/2) 2 / mean(s) ds`.
/// Infinite when the crater never shrinks that far.
pub fn time_to_radius(fbar: &dyn Fn(f64) -> f64, n: usize, rho: f64) -> Result<f64> {
    check_n(n)?;
    if !(0.0..=0.5).contains(&rho) {
        return Err(Error::Data(format!("crater radius {rho} outside [0, 1/2]")));
    }
    if rho == 0.0 {
        return Ok(extinction_time_quadrature(fbar, n).unwrap_or(f64::INFINITY));
    }
    let t = tanh_sinh(|s| 2.0 / ball_mean(fbar, n, s), rho, 0.5);
    Ok(if t.is_finite() { t } else { f64::INFINITY })
}

/// Where a simulated trajectory joins the crater family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CraterAlignment {
    /// Snapshot index of the first match.
    pub index: usize,
    pub t_match: f64,
    pub rho_match: f64,
    /// Simulation time that corresponds to the oracle's time 0 (the `u1` profile).
    pub offset: f64,
    pub distance: f64,
}

/// Finds the first snapshot within `tol` (sup norm) of a crater profile, with the
/// radius read off the centre cell, and the clock shift that maps it onto the oracle.
///
/// Started from rest the pile never passes through `u1` exactly (sand rolls
/// into the centre before the rim saturates), so the clocks are matched on the
/// crater family instead: the oracle time of the matched radius is subtracted
/// from the simulation time.
pub fn align_crater(
    times: &[f64],
    profiles: &[ScalarField],
    fbar: &dyn Fn(f64) -> f64,
    n: usize,
    tol: f64,
) -> Result<Option<CraterAlignment>> {
    let Some(first) = profiles.first() else {
        return Ok(None);
    };
    let grid = first.grid();
    let radii: Vec<f64> = grid.coords().iter().map(|p| p[0].hypot(p[1]).min(1.0)).collect();
    let centre = (0..radii.len())
        .min_by(|&a, &b| radii[a].total_cmp(&radii[b]))
        .ok_or_else(|| Error::Data("empty grid".into()))?;
    for (index, (&t, u)) in times.iter().zip(profiles).enumerate() {
        let rho = (0.5 * (1.0 + radii[centre] - u.values()[centre])).clamp(0.0, 0.5);
        let mut distance: f64 = 0.0;
        for (&r, &v) in radii.iter().zip(u.values()) {
            distance = distance.max((v - oracle_profile(rho, r)?).abs());
        }
        if distance > tol {
            continue;
        }
        let s = time_to_radius(fbar, n, rho)?;
        if s.is_finite() {
            return Ok(Some(CraterAlignment {
                index,
                t_match: t,
                rho_match: rho,
                offset: t - s,
                distance,
            }));
        }
    }
    Ok(None)
}

fn check_n(n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::Data("dimension must be at least 1".into()));
    }
    Ok(())
}

fn check_radius(r: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&r) {
        return Err(Error::Data(format!("radius {r} outside [0, 1]")));
    }
    Ok(())
}

fn check_monotone(fbar: &dyn Fn(f64) -> f64) -> Result<()> {
    let samples: Vec<f64> = (0..=512).map(|k| fbar(k as f64 / 512.0)).collect();
    if samples.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(Error::Data("radial source must be finite and nonnegative".into()));
    }
    if samples.windows(2).any(|w| w[1] < w[0] - 1e-12 * w[0].abs().max(1.0)) {
        return Err(Error::Data("radial source must be nondecreasing".into()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn t_alpha_values() {
        assert!((t_alpha(2, 1.0).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert!((t_alpha(1, 1.0).unwrap() - 0.5).abs() < 1e-15);
        assert!((t_alpha(1, 1e-10).unwrap() - std::f64::consts::LN_2 / 2.0).abs() < 1e-15);
        assert!(t_alpha(1, 0.0).is_err());
    }

    #[test]
    fn u1_values() {
        assert_eq!(u1_profile(0.0).unwrap(), 0.0);
        assert_eq!(u1_profile(0.5).unwrap(), 0.5);
        assert_eq!(u1_profile(1.0).unwrap(), 0.0);
        assert!(u1_profile(1.5).is_err());
    }

    #[test]
    fn rho_closed_forms() {
        assert_eq!(rho_power_law(0.0, 1, 1.0).unwrap(), 0.5);
        assert!((rho_power_law(2.0, 1, 1.0).unwrap() - 0.5 * (-1.0f64).exp()).abs() < 1e-15);
        let tau = tau_alpha(1, 0.5).unwrap();
        assert!((tau - 2.0 * 2f64.sqrt()).abs() < 1e-14);
        assert_eq!(rho_power_law(tau, 1, 0.5).unwrap(), 0.0);
        assert!(rho_power_law(tau * 0.999, 1, 0.5).unwrap() > 0.0);
        // positive branch stays positive
        assert!(rho_power_law(1e3, 2, 1.5).unwrap() > 0.0);
    }

    #[test]
    fn rho_general_constant_source() {
        let c = 2.0;
        let traj = rho_general(&|_| c, 2, &[0.0, 0.1, 0.25, 0.4, 1.0]).unwrap();
        for (&t, &r) in traj.times.iter().zip(&traj.rho) {
            assert!((r - (0.5 - c * t / 2.0).max(0.0)).abs() < 1e-10, "t = {t}: {r}");
        }
        assert!((traj.extinction.unwrap() - 1.0 / c).abs() < 1e-8);
    }

    #[test]
    fn rho_general_matches_power_law() {
        let times: Vec<f64> = (0..=30).map(|k| 0.1 * k as f64).collect();
        for &(n, alpha) in &[(1usize, 0.5), (2, 1.0), (1, 2.0), (3, 0.25)] {
            let nf = n as f64;
            let traj = rho_general(&|r| (nf + alpha) * r.powf(alpha), n, &times).unwrap();
            for (&t, &r) in traj.times.iter().zip(&traj.rho) {
                let exact = rho_power_law(t, n, alpha).unwrap();
                assert!((r - exact).abs() < 1e-8, "n {n} alpha {alpha} t {t}: {r} vs {exact}");
            }
        }
    }

    #[test]
    fn rho_general_zero_source() {
        let traj = rho_general(&|_| 0.0, 1, &[0.0, 10.0]).unwrap();
        assert_eq!(traj.rho, vec![0.5, 0.5]);
        assert_eq!(traj.extinction, None);
    }

    #[test]
    fn rejects_decreasing_source() {
        assert!(rho_general(&|r| 1.0 - r, 1, &[0.0, 1.0]).is_err());
    }

    #[test]
    fn extinction_by_quadrature() {
        let half = extinction_time_quadrature(&|r| 1.5 * r.sqrt(), 1).unwrap();
        assert!((half - tau_alpha(1, 0.5).unwrap()).abs() < 1e-9);
        assert!((extinction_time_quadrature(&|_| 4.0, 2).unwrap() - 0.25).abs() < 1e-12);
        assert!(extinction_time_quadrature(&|r| 3.0 * r, 2).is_none());
        assert!(extinction_time_quadrature(&|r| 3.0 * r * r, 1).is_none());
    }

    #[test]
    fn oracle_profile_branches() {
        for k in 0..=10 {
            let r = k as f64 / 10.0;
            assert!((oracle_profile(0.5, r).unwrap() - u1_profile(r).unwrap()).abs() < 1e-15);
            assert_eq!(oracle_profile(0.0, r).unwrap(), 1.0 - r);
        }
        let rho = rho_power_law(2.0, 1, 1.0).unwrap();
        assert!((oracle_profile(rho, 0.0).unwrap() - (1.0 - (-1.0f64).exp())).abs() < 1e-12);
    }

    #[test]
    fn cone_growth_values() {
        assert!((cone_growth(1.0, 0.1, 0.1, 1).unwrap() - 0.1).abs() < 1e-15);
        assert!((cone_growth(2.0, 0.1, 0.1, 1).unwrap() - 0.03f64.sqrt()).abs() < 1e-15);
        assert!(cone_growth(1.0, 0.1, 0.2, 1).is_err());
        let (r, eps, n) = (0.2, 0.05, 2);
        for &t in &[5.0, 7.5, 12.0] {
            let a = cone_growth(t, r, eps, n).unwrap();
            let d = 1e-6;
            let slope = (cone_growth(t + d, r, eps, n).unwrap() - cone_growth(t - d, r, eps, n).unwrap()) / (2.0 * d);
            assert!((slope - eps * r.powi(n as i32) / a.powi(n as i32)).abs() < 1e-8);
        }
    }

    #[test]
    fn time_to_radius_inverts_closed_form() {
        let fbar = |r: f64| 3.0 * r;
        for rho in [0.5, 0.3, 0.1, 0.01] {
            let s = time_to_radius(&fbar, 2, rho).unwrap();
            assert!((s - (0.5 / rho).ln()).abs() < 1e-9, "rho {rho}: {s}");
        }
        assert_eq!(time_to_radius(&fbar, 2, 0.0).unwrap(), f64::INFINITY);
        let half = |r: f64| 1.5 * r.sqrt();
        let tau = tau_alpha(1, 0.5).unwrap();
        assert!((time_to_radius(&half, 1, 0.0).unwrap() - tau).abs() < 1e-6);
    }

    #[test]
    fn alignment_recovers_clock_shift() {
        use crate::geometry::DomainSpec;
        use crate::grid::build_grid;
        use std::sync::Arc;
        let domain = DomainSpec::interval(-1.0, 1.0).unwrap();
        let grid = Arc::new(build_grid(&domain, 0.01).unwrap());
        let fbar = |r: f64| 1.5 * r.sqrt();
        let shift = 0.37;
        // a far-off start, then exact crater profiles on the shifted clock
        let mut times = vec![0.0];
        let mut profiles = vec![ScalarField::zeros(grid.clone())];
        for k in 1..=4 {
            let t = shift + 0.25 * k as f64;
            let rho = rho_power_law(t - shift, 1, 0.5).unwrap();
            times.push(t);
            profiles.push(ScalarField::from_fn(grid.clone(), |p| oracle_profile(rho, p[0].abs()).unwrap()));
        }
        let a = align_crater(&times, &profiles, &fbar, 1, 0.03).unwrap().unwrap();
        assert_eq!(a.index, 1);
        assert!(a.distance < 1e-12);
        // the centre cell sits at r = h/2, so the radius is read exactly
        assert!((a.offset - shift).abs() < 1e-6, "{a:?}");
    }
}
