use proptest::prelude::*;

use sandflow::quad::tanh_sinh;
use sandflow::radial::{
    ball_mean, cone_growth, extinction_time_quadrature, oracle_profile, rho_general, rho_power_law, t_alpha, tau_alpha,
    time_to_radius,
};

fn power(n: usize, alpha: f64) -> impl Fn(f64) -> f64 {
    move |r: f64| (n as f64 + alpha) * r.powf(alpha)
}

/// Material in the pile per unit solid angle: `int_0^1 u r^(N-1) dr`.
fn mass(rho: f64, n: usize) -> f64 {
    let w = |r: f64| r.powi(n as i32 - 1);
    let inner = tanh_sinh(|r| oracle_profile(rho, r).unwrap() * w(r), 0.0, rho.max(1e-300));
    let outer = tanh_sinh(|r| oracle_profile(rho, r).unwrap() * w(r), rho, 1.0);
    inner + outer
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn crater_shrinks_from_one_half(n in 1usize..=3, alpha in 0.05..3.0f64, t in 0.0..5.0f64, dt in 0.0..1.0f64) {
        prop_assert!((rho_power_law(0.0, n, alpha).unwrap() - 0.5).abs() < 1e-15);
        let a = rho_power_law(t, n, alpha).unwrap();
        let b = rho_power_law(t + dt, n, alpha).unwrap();
        prop_assert!((0.0..=0.5).contains(&a));
        prop_assert!(b <= a);
    }

    #[test]
    fn integrator_matches_closed_form(n in 1usize..=2, alpha in 0.1..2.5f64) {
        let times: Vec<f64> = (0..=20).map(|k| 0.1 * k as f64).collect();
        let traj = rho_general(&power(n, alpha), n, &times).unwrap();
        for (t, r) in times.iter().zip(&traj.rho) {
            prop_assert!((r - rho_power_law(*t, n, alpha).unwrap()).abs() < 1e-8, "t = {t}");
        }
    }

    #[test]
    fn extinction_agrees_with_closed_form(n in 1usize..=3, alpha in 0.1..0.9f64) {
        let tau = tau_alpha(n, alpha).unwrap();
        prop_assert!(rho_power_law(tau, n, alpha).unwrap() < 1e-12);
        prop_assert!(rho_power_law(0.999 * tau, n, alpha).unwrap() > 0.0);
        let quad = extinction_time_quadrature(&power(n, alpha), n).unwrap();
        prop_assert!((quad - tau).abs() < 1e-6 * tau, "quadrature {quad} vs {tau}");
        prop_assert!((time_to_radius(&power(n, alpha), n, 0.0).unwrap() - tau).abs() < 1e-6 * tau);
    }

    #[test]
    fn no_extinction_for_alpha_at_least_one(n in 1usize..=3, alpha in 1.0..3.0f64) {
        prop_assert!(tau_alpha(n, alpha).is_none());
        prop_assert!(rho_power_law(50.0, n, alpha).unwrap() > 0.0);
    }

    #[test]
    fn profile_is_lipschitz_and_rises_as_the_crater_closes(rho in 0.0..0.5f64, drho in 0.0..0.5f64, r in 0.0..1.0f64, dr in 0.0..1.0f64) {
        let r2 = (r + dr).min(1.0);
        let (a, b) = (oracle_profile(rho, r).unwrap(), oracle_profile(rho, r2).unwrap());
        prop_assert!((a - b).abs() <= r2 - r + 1e-15);
        let smaller = (rho - drho).max(0.0);
        prop_assert!(oracle_profile(smaller, r).unwrap() >= a);
        prop_assert!(a <= 1.0 - r + 1e-15);
        prop_assert_eq!(oracle_profile(0.0, r).unwrap(), 1.0 - r);
    }

    /// The pile gains exactly what the source drops inside the crater.
    #[test]
    fn mass_balance(n in 1usize..=2, alpha in 0.2..2.0f64, t in 0.05..1.0f64) {
        let f = power(n, alpha);
        let d = 1e-4;
        let traj = rho_general(&f, n, &[t - d, t, t + d]).unwrap();
        let rate = (mass(traj.rho[2], n) - mass(traj.rho[0], n)) / (2.0 * d);
        let rho = traj.rho[1];
        let inflow = tanh_sinh(|s| f(s) * s.powi(n as i32 - 1), 0.0, rho);
        prop_assert!((rate - inflow).abs() < 1e-6, "rate {rate} inflow {inflow}");
        // the same identity through the crater law
        prop_assert!((inflow - rho.powi(n as i32) / n as f64 * ball_mean(&f, n, rho)).abs() < 1e-10);
    }

    #[test]
    fn cone_growth_follows_its_ode(n in 1usize..=3, r in 0.05..1.0f64, frac in 0.05..1.0f64, t in 0.0..20.0f64) {
        let eps = frac * r;
        let t0 = r / eps;
        let big = |s: f64| cone_growth(s, r, eps, n).unwrap();
        prop_assert!((big(t0 - 1e-12) - big(t0 + 1e-12)).abs() < 1e-9);
        let d = 1e-6;
        let t = t.max(2.0 * d);
        if (t - t0).abs() < 2.0 * d {
            return Ok(());
        }
        let slope = (big(t + d) - big(t - d)) / (2.0 * d);
        prop_assert!(slope > 0.0);
        let expected = if t < t0 { eps } else { eps * (r / big(t)).powi(n as i32) };
        prop_assert!((slope - expected).abs() < 1e-6 * (1.0 + expected), "slope {slope} expected {expected}");
    }

    #[test]
    fn build_up_time_is_continuous_at_zero_exponent(n in 1usize..=3) {
        let limit = std::f64::consts::LN_2 / (n + 1) as f64;
        prop_assert!((t_alpha(n, 1e-6).unwrap() - limit).abs() < 1e-6);
        prop_assert!(t_alpha(n, 1e-9).unwrap() == limit);
    }
}
