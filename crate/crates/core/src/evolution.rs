//! Implicit Euler time stepping `u+ = P_K(u + dt f)` for the growing pile.

use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::projection::{AdmissibleSet, ProjectionOptions, ProjectionStats, Projector};

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub dt: f64,
    pub t_end: f64,
    /// Keep every `snapshot_stride`-th step (the initial and final states are always kept).
    pub snapshot_stride: usize,
    /// Steady state when `max |u+ - u| < steady_tol * dt`.
    pub steady_tol: f64,
    pub stop_at_steady: bool,
    /// Initial profile; zero when absent.
    pub u0: Option<ScalarField>,
    pub projection: ProjectionOptions,
    /// Cells whose values are recorded after every step.
    pub probe_cells: Vec<usize>,
}

impl SimConfig {
    pub fn new(dt: f64, t_end: f64) -> Self {
        Self {
            dt,
            t_end,
            snapshot_stride: 1,
            steady_tol: 1e-8,
            stop_at_steady: true,
            u0: None,
            projection: ProjectionOptions::default(),
            probe_cells: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Config(format!("dt = {} must be positive", self.dt)));
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return Err(Error::Config(format!("t_end = {} must be nonnegative", self.t_end)));
        }
        if self.snapshot_stride == 0 {
            return Err(Error::Config("snapshot_stride must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepDiagnostics {
    pub t: f64,
    pub total_mass: f64,
    pub source_mass_rate: f64,
    /// `int f - (int u+ - int u) / dt`: mass leaving over the wall per unit time.
    pub discharge_rate: f64,
    pub step_change: f64,
    pub sweeps: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum Termination {
    EndTime,
    Steady { t: f64 },
}

#[derive(Debug, Clone)]
pub struct SimTrajectory {
    pub dt: f64,
    pub times: Vec<f64>,
    pub profiles: Vec<ScalarField>,
    /// One row per step.
    pub diagnostics: Vec<StepDiagnostics>,
    /// `probes[k][p]`: value at `probe_cells[p]` after step `k` (row 0 is the initial state).
    pub probes: Vec<Vec<f64>>,
    pub termination: Termination,
}

impl SimTrajectory {
    pub fn last(&self) -> &ScalarField {
        self.profiles.last().expect("trajectory holds at least the initial state")
    }

    pub fn final_time(&self) -> f64 {
        *self.times.last().expect("nonempty")
    }
}

/// One implicit Euler step from a cold start.
pub fn step(u: &ScalarField, f: &ScalarField, dt: f64, set: &Arc<AdmissibleSet>) -> Result<ScalarField> {
    let mut stepper = Stepper::new(set.clone(), f, dt, ProjectionOptions::default())?;
    let mut next = u.clone();
    stepper.advance(&mut next)?;
    Ok(next)
}

/// Repeated implicit Euler steps sharing a warm-started projector.
#[derive(Debug, Clone)]
pub struct Stepper {
    projector: Projector,
    f: Vec<f64>,
    dt: f64,
    cell_volume: f64,
    source_rate: f64,
}

impl Stepper {
    pub fn new(set: Arc<AdmissibleSet>, f: &ScalarField, dt: f64, options: ProjectionOptions) -> Result<Self> {
        if !f.grid().same_layout(set.grid()) {
            return Err(Error::GridMismatch);
        }
        if f.values().iter().any(|&v| v < 0.0) {
            return Err(Error::Data("source must be nonnegative".into()));
        }
        if !(dt > 0.0) {
            return Err(Error::Config(format!("dt = {dt} must be positive")));
        }
        let cell_volume = set.grid().cell_volume();
        Ok(Self {
            projector: Projector::new(set, options),
            f: f.values().to_vec(),
            dt,
            cell_volume,
            source_rate: f.integral(),
        })
    }

    pub fn projector_mut(&mut self) -> &mut Projector {
        &mut self.projector
    }

    /// Advances `u` by one step in place; returns the sup-norm change and solver stats.
    pub fn advance(&mut self, u: &mut ScalarField) -> Result<(f64, ProjectionStats)> {
        if !u.grid().same_layout(self.projector.set().grid()) {
            return Err(Error::GridMismatch);
        }
        let prev = u.values().to_vec();
        let values = u.values_mut();
        for (v, &s) in values.iter_mut().zip(&self.f) {
            *v += self.dt * s;
        }
        // the scheme is monotone, so the previous state is a valid lower bound
        let stats = self.projector.project_values(values, Some(&prev))?;
        let change = values.iter().zip(&prev).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        Ok((change, stats))
    }

    fn diagnostics(&self, t: f64, prev_mass: f64, u: &ScalarField, change: f64, sweeps: usize) -> StepDiagnostics {
        let mass = u.values().iter().sum::<f64>() * self.cell_volume;
        StepDiagnostics {
            t,
            total_mass: mass,
            source_mass_rate: self.source_rate,
            discharge_rate: self.source_rate - (mass - prev_mass) / self.dt,
            step_change: change,
            sweeps,
        }
    }
}

/// Runs the scheme from `config.u0` until `t_end` or a steady state.
pub fn run(config: &SimConfig, set: &Arc<AdmissibleSet>, f: &ScalarField) -> Result<SimTrajectory> {
    config.validate()?;
    let grid = set.grid().clone();
    let mut u = match &config.u0 {
        Some(u0) => {
            if !u0.grid().same_layout(&grid) {
                return Err(Error::GridMismatch);
            }
            let violation = set.max_violation(u0.values());
            if violation > set.tol_feas() {
                return Err(Error::Config(format!("initial profile is not admissible (violation {violation:.3e})")));
            }
            u0.clone()
        }
        None => ScalarField::zeros(grid.clone()),
    };
    let mut stepper = Stepper::new(set.clone(), f, config.dt, config.projection)?;
    let probe = |u: &ScalarField| config.probe_cells.iter().map(|&c| u.values()[c]).collect::<Vec<_>>();

    let n_steps = (config.t_end / config.dt - 1e-9).ceil().max(0.0) as usize;
    let mut traj = SimTrajectory {
        dt: config.dt,
        times: vec![0.0],
        profiles: vec![u.clone()],
        diagnostics: Vec::with_capacity(n_steps),
        probes: vec![probe(&u)],
        termination: Termination::EndTime,
    };
    let mut mass = u.integral();
    for k in 1..=n_steps {
        let t = k as f64 * config.dt;
        let (change, stats) = stepper.advance(&mut u).map_err(|e| match e {
            Error::NonFinite { cell, .. } => Error::NonFinite { cell, time: t },
            other => other,
        })?;
        let d = stepper.diagnostics(t, mass, &u, change, stats.sweeps);
        mass = d.total_mass;
        traj.diagnostics.push(d);
        if !config.probe_cells.is_empty() {
            traj.probes.push(probe(&u));
        }
        let steady = config.stop_at_steady && change < config.steady_tol * config.dt;
        if k % config.snapshot_stride == 0 || k == n_steps || steady {
            traj.times.push(t);
            traj.profiles.push(u.clone());
        }
        if steady {
            traj.termination = Termination::Steady { t };
            break;
        }
    }
    Ok(traj)
}

/// `max_w int (f - (u - u_prev)/dt)(w - u) dx` over the probe profiles.
pub fn vi_residual(u: &ScalarField, u_prev: &ScalarField, dt: f64, f: &ScalarField, probes: &[ScalarField]) -> Result<f64> {
    u.ensure_same_grid(u_prev)?;
    u.ensure_same_grid(f)?;
    let vol = u.grid().cell_volume();
    let mut worst = f64::NEG_INFINITY;
    for w in probes {
        u.ensure_same_grid(w)?;
        let r: f64 = (0..u.len())
            .map(|c| {
                let rate = f.values()[c] - (u.values()[c] - u_prev.values()[c]) / dt;
                rate * (w.values()[c] - u.values()[c])
            })
            .sum::<f64>()
            * vol;
        worst = worst.max(r);
    }
    Ok(if probes.is_empty() { 0.0 } else { worst })
}

/// Earliest snapshot time at which `max |u - u_phi| <= tol`.
pub fn detect_finite_time(traj: &SimTrajectory, u_phi: &ScalarField, tol: f64) -> Option<f64> {
    traj.times
        .iter()
        .zip(&traj.profiles)
        .find(|(_, u)| u.sup_distance(u_phi) <= tol)
        .map(|(&t, _)| t)
}

#[derive(Debug, Clone, Serialize)]
pub struct ComparisonReport {
    pub times: Vec<f64>,
    /// `max (u2 - u1)^+` at each snapshot.
    pub deficits: Vec<f64>,
    pub max_deficit: f64,
    /// `max |u1 - u2|` at each snapshot.
    pub gaps: Vec<f64>,
}

impl ComparisonReport {
    pub fn ordered(&self, tol: f64) -> bool {
        self.max_deficit <= tol
    }
}

/// Runs both problems with the same schedule and measures how far `u1 >= u2` is violated.
pub fn compare_runs(
    f1: &ScalarField,
    f2: &ScalarField,
    u01: &ScalarField,
    u02: &ScalarField,
    config: &SimConfig,
    set: &Arc<AdmissibleSet>,
) -> Result<ComparisonReport> {
    let mut cfg = config.clone();
    cfg.stop_at_steady = false;
    cfg.u0 = Some(u01.clone());
    let a = run(&cfg, set, f1)?;
    cfg.u0 = Some(u02.clone());
    let b = run(&cfg, set, f2)?;
    let deficits: Vec<f64> = a
        .profiles
        .iter()
        .zip(&b.profiles)
        .map(|(u1, u2)| {
            u1.values()
                .iter()
                .zip(u2.values())
                .map(|(x, y)| (y - x).max(0.0))
                .fold(0.0, f64::max)
        })
        .collect();
    let gaps = a.profiles.iter().zip(&b.profiles).map(|(u1, u2)| u1.sup_distance(u2)).collect();
    Ok(ComparisonReport {
        times: a.times.clone(),
        max_deficit: deficits.iter().copied().fold(0.0, f64::max),
        deficits,
        gaps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eikonal::lax_hopf;
    use crate::geometry::{build_domain, DomainSpec};
    use crate::grid::build_grid;
    use crate::projection::qp_oracle_project;

    fn line_setup(h: f64) -> (Arc<AdmissibleSet>, Arc<crate::grid::Grid>) {
        let d = DomainSpec::interval(-1.0, 1.0).unwrap();
        let (d, b) = build_domain(d, |_| 0.0).unwrap();
        let g = Arc::new(build_grid(&d, h).unwrap());
        let u_phi = lax_hopf(&g, &b).unwrap();
        (Arc::new(AdmissibleSet::new(&u_phi).unwrap()), g)
    }

    #[test]
    fn zero_source_is_stationary() {
        let (set, g) = line_setup(0.1);
        let u = set.upper_field().map(|v| 0.5 * v);
        let f = ScalarField::zeros(g);
        assert!(step(&u, &f, 0.05, &set).unwrap().sup_distance(&u) < 1e-10);
    }

    #[test]
    fn small_step_on_four_cells() {
        let (set, g) = line_setup(0.5);
        let f = ScalarField::from_fn(g.clone(), |p| 2.0 * p[0].abs());
        let dt = 0.1;
        let u = step(&ScalarField::zeros(g.clone()), &f, dt, &set).unwrap();
        let c = g.locate([0.75, 0.0]).unwrap();
        assert!((u.values()[c] - 1.5 * dt).abs() < 1e-9);
        let w = f.map(|v| dt * v);
        assert!(u.sup_distance(&qp_oracle_project(&w, &set).unwrap()) < 1e-8);
    }

    #[test]
    fn zero_source_run_stays_zero() {
        let (set, g) = line_setup(0.1);
        let f = ScalarField::zeros(g);
        let traj = run(&SimConfig::new(0.025, 1.0), &set, &f).unwrap();
        assert!(traj.profiles.iter().all(|u| u.is_zero()));
        assert!(matches!(traj.termination, Termination::Steady { .. }));
    }

    #[test]
    fn run_is_monotone_and_bounded() {
        let (set, g) = line_setup(0.05);
        let f = ScalarField::from_fn(g.clone(), |_| 1.0);
        let mut cfg = SimConfig::new(0.0125, 3.0);
        cfg.stop_at_steady = false;
        let traj = run(&cfg, &set, &f).unwrap();
        for pair in traj.profiles.windows(2) {
            let dec = pair[0].values().iter().zip(pair[1].values()).map(|(a, b)| a - b).fold(0.0, f64::max);
            assert!(dec <= 1e-7);
        }
        for u in &traj.profiles {
            assert!(set.max_violation(u.values()) <= set.tol_feas());
        }
        for d in &traj.diagnostics {
            assert!(d.discharge_rate >= -1e-6);
        }
        assert!(traj.times.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn vi_residual_self_probe_is_zero() {
        let (set, g) = line_setup(0.1);
        let f = ScalarField::from_fn(g.clone(), |_| 1.0);
        let u = set.upper_field();
        let r = vi_residual(&u, &u, 0.1, &f, &[u.clone()]).unwrap();
        assert_eq!(r, 0.0);
        let zero_f = ScalarField::zeros(g);
        assert_eq!(vi_residual(&u, &u, 0.1, &zero_f, &[ScalarField::zeros(u.grid().clone())]).unwrap(), 0.0);
    }

    #[test]
    fn rejects_inadmissible_start() {
        let (set, g) = line_setup(0.1);
        let mut cfg = SimConfig::new(0.1, 1.0);
        cfg.u0 = Some(set.upper_field().map(|v| v + 1.0));
        let f = ScalarField::zeros(g);
        assert!(matches!(run(&cfg, &set, &f), Err(Error::Config(_))));
    }

    #[test]
    fn detect_none_for_zero_source() {
        let d = DomainSpec::interval(-1.0, 1.0).unwrap();
        let (d, b) = build_domain(d, |_| 0.5).unwrap();
        let g = Arc::new(build_grid(&d, 0.1).unwrap());
        let u_phi = lax_hopf(&g, &b).unwrap();
        let set = Arc::new(AdmissibleSet::new(&u_phi).unwrap());
        let traj = run(&SimConfig::new(0.05, 1.0), &set, &ScalarField::zeros(g)).unwrap();
        assert_eq!(detect_finite_time(&traj, &u_phi, 0.3), None);
    }
}
