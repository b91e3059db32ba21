//! Configuration through to the stationary state.

use std::path::Path;
use std::sync::Arc;

use sandflow::analysis::classify_equilibria;
use sandflow::config::{Config, Problem};
use sandflow::eikonal::lax_hopf;
use sandflow::evolution::{run, Termination};
use sandflow::projection::AdmissibleSet;

fn settle(json: &str) -> (Problem, sandflow::evolution::SimTrajectory, sandflow::analysis::EquilibriumReport) {
    let config = Config::from_json(json).unwrap();
    let problem = Problem::build(&config, Path::new(".")).unwrap();
    let u_phi = lax_hopf(&problem.grid, &problem.boundary).unwrap();
    let set = Arc::new(AdmissibleSet::new(&u_phi).unwrap());
    let traj = run(&config.sim_config(&problem.grid, 0), &set, &problem.f).unwrap();
    let report = {
        let f_fn = problem.f_fn();
        classify_equilibria(
            &problem.domain,
            &problem.boundary,
            &problem.grid,
            &problem.f,
            f_fn.as_ref().map(|f| f as &dyn Fn(_) -> f64),
            0,
        )
        .unwrap()
    };
    (problem, traj, report)
}

#[test]
fn disk_fills_to_the_distance_cone() {
    let (problem, traj, report) = settle(
        r#"{
            "domain": {"shape": {"type": "ball", "center": [0, 0], "radius": 1}, "m": 512},
            "source": {"type": "constant", "value": 1.0},
            "grid": {"h": 0.05},
            "evolution": {"t_end": 4.0, "snapshot_stride": 20, "steady_tol": 1e-7}
        }"#,
    );
    assert!(matches!(traj.termination, Termination::Steady { .. }), "{:?}", traj.termination);
    assert!(report.unique_u);
    let h = problem.grid.h();
    assert!(traj.last().sup_distance(&report.u_f) <= 3.0 * h);
    assert!(traj.last().sup_distance(&report.u_phi) <= 3.0 * h);
    let rate = traj.diagnostics.last().unwrap().discharge_rate;
    let poured = problem.f.integral();
    assert!((rate - poured).abs() <= 0.02 * poured, "discharge {rate} vs {poured}");
    assert!((report.nu.total() - poured).abs() <= 1e-9 * poured);
}

#[test]
fn offcentre_interval_settles_below_the_cone() {
    let (problem, traj, report) = settle(
        r#"{
            "domain": {"shape": {"type": "interval", "a": -1, "b": 1}},
            "source": {"type": "indicator", "lo": [-0.6], "hi": [-0.4], "value": 1.0},
            "grid": {"h": 0.01},
            "evolution": {"t_end": 10.0, "snapshot_stride": 50, "steady_tol": 1e-7}
        }"#,
    );
    assert!(matches!(traj.termination, Termination::Steady { .. }), "{:?}", traj.termination);
    assert!(!report.unique_u);
    let h = problem.grid.h();
    let u = traj.last();
    assert!(u.sup_distance(&report.u_f) <= 3.0 * h);
    // the ridge of u_phi at 0 is never reached
    assert!(u.sup_distance(&report.u_phi) > 0.3);
    // everything drains through the left wall
    let left = report.nu.weights[0];
    assert!((left - problem.f.integral()).abs() <= 1e-9);
    let rate = traj.diagnostics.last().unwrap().discharge_rate;
    assert!((rate - problem.f.integral()).abs() <= 0.02 * problem.f.integral());
}
