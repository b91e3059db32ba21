//! The subcommands. Each one fills a run directory and reports how it ended.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use serde::Serialize;
use serde_json::{json, Value};

use sandflow::analysis::{classify_equilibria, convergence_report, standard_tests, ConvergenceReport};
use sandflow::config::{Config, Problem};
use sandflow::eikonal::{lax_hopf, transport_rays};
use sandflow::evolution::{detect_finite_time, run, Stepper};
use sandflow::geometry::Point;
use sandflow::projection::AdmissibleSet;
use sandflow::radial::{align_crater, extinction_time_quadrature, oracle_profile, rho_general, t_alpha, tau_alpha, time_to_radius};
use sandflow::transport::weak_residual;
use sandflow::{Error, Grid, ScalarField};

use crate::output::{check_manifest, sha256_hex, GridInfo, Manifest, RunDir};

/// Why a command did not succeed; maps onto the exit status.
#[derive(Debug)]
pub enum Failure {
    Config(String),
    Numerical { message: String, details: Value },
    Tolerance(String),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Config(_) => 2,
            Failure::Numerical { .. } => 3,
            Failure::Tolerance(_) => 4,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            Failure::Config(m) | Failure::Tolerance(m) => m,
            Failure::Numerical { message, .. } => message,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let message = e.to_string();
        match e {
            Error::Config(_) | Error::Data(_) | Error::Geometry(_) | Error::Resolution(_) | Error::Undefined(_) => {
                Failure::Config(message)
            }
            Error::NonConvergence {
                sweeps,
                primal_change,
                kkt_residual,
            } => Failure::Numerical {
                message,
                details: json!({"sweeps": sweeps, "primal_change": primal_change, "kkt_residual": kkt_residual}),
            },
            _ => Failure::Numerical {
                message,
                details: Value::Null,
            },
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Numerical {
            message: format!("i/o error: {e}"),
            details: Value::Null,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Simulate,
    Equilibrium,
    Analyze,
    Verify,
    Trace { step: usize },
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Equilibrium => "equilibrium",
            Command::Analyze => "analyze",
            Command::Verify => "verify",
            Command::Trace { .. } => "trace",
        }
    }
}

/// One configured run.
pub struct Job {
    pub command: Command,
    pub config_bytes: Vec<u8>,
    /// Resolves relative paths inside the config.
    pub base: PathBuf,
    pub out: PathBuf,
    pub seed: u64,
    pub dry_run: bool,
}

/// Filled in by the command bodies; recorded in the manifest whatever the outcome.
#[derive(Default)]
struct Outcome {
    grid: Option<GridInfo>,
    termination: Value,
}

pub fn execute(job: &Job) -> Result<(), Failure> {
    let text = std::str::from_utf8(&job.config_bytes).map_err(|e| Failure::Config(format!("config is not UTF-8: {e}")))?;
    let config = Config::from_json(text)?;
    if job.dry_run {
        return check_manifest(&job.out, job.command.name(), &job.config_bytes).map_err(Failure::Config);
    }
    let echo: Value = serde_json::from_str(text).map_err(|e| Failure::Config(e.to_string()))?;
    let mut dir = RunDir::create(&job.out)?;
    dir.write_bytes("config.json", &job.config_bytes)?;
    let started = Instant::now();
    let mut outcome = Outcome::default();
    let result = match job.command {
        Command::Simulate => simulate(&config, job, &mut dir, &mut outcome),
        Command::Equilibrium => equilibrium(&config, job, &mut dir, &mut outcome),
        Command::Analyze => analyze(&config, job, &mut dir, &mut outcome),
        Command::Verify => verify(&config, job, &mut dir, &mut outcome),
        Command::Trace { step } => trace(&config, job, step, &mut dir, &mut outcome),
    };
    let termination = match &result {
        Ok(()) => outcome.termination,
        Err(f) => {
            let kind = match f {
                Failure::Config(_) => "config_error",
                Failure::Numerical { .. } => "numerical_failure",
                Failure::Tolerance(_) => "tolerance_breach",
            };
            let details = match f {
                Failure::Numerical { details, .. } => details.clone(),
                _ => Value::Null,
            };
            json!({"reason": kind, "message": f.message(), "details": details})
        }
    };
    Manifest {
        command: job.command.name().to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        config: echo,
        config_sha256: sha256_hex(&job.config_bytes),
        seed: job.seed,
        grid: outcome.grid,
        wall_clock_seconds: started.elapsed().as_secs_f64(),
        termination,
        files: Vec::new(),
    }
    .write(&mut dir)?;
    result
}

fn grid_info(problem: &Problem) -> GridInfo {
    let m = problem.grid.metadata();
    GridInfo {
        dimension: m.dimension,
        h: m.h,
        cells: m.cells,
        m: problem.boundary.len(),
        dims: m.dims,
        origin: m.origin,
    }
}

fn coord_header(dim: usize) -> Vec<&'static str> {
    if dim == 1 {
        vec!["x"]
    } else {
        vec!["x", "y"]
    }
}

fn coords(p: Point, dim: usize) -> Vec<f64> {
    p[..dim].to_vec()
}

/// One row per cell: coordinates followed by the given columns.
fn write_cells(dir: &mut RunDir, rel: &str, grid: &Grid, names: &[&str], columns: &[&[f64]]) -> std::io::Result<()> {
    let dim = grid.dimension();
    let mut header = coord_header(dim);
    header.extend_from_slice(names);
    let rows: Vec<Vec<f64>> = grid
        .coords()
        .iter()
        .enumerate()
        .map(|(c, &p)| {
            let mut row = coords(p, dim);
            row.extend(columns.iter().map(|col| col[c]));
            row
        })
        .collect();
    dir.write_table(rel, &header, &rows)
}

fn simulate(config: &Config, job: &Job, dir: &mut RunDir, outcome: &mut Outcome) -> Result<(), Failure> {
    let problem = Problem::build(config, &job.base)?;
    outcome.grid = Some(grid_info(&problem));
    let grid = &problem.grid;
    let u_phi = lax_hopf(grid, &problem.boundary)?;
    let set = Arc::new(AdmissibleSet::new(&u_phi)?);
    let sim = config.sim_config(grid, job.seed);
    let traj = run(&sim, &set, &problem.f)?;

    for (k, u) in traj.profiles.iter().enumerate() {
        write_cells(dir, &format!("snapshots/t_{k}.csv"), grid, &["u"], &[u.values()])?;
    }
    let times: Vec<Vec<f64>> = traj.times.iter().enumerate().map(|(k, &t)| vec![k as f64, t]).collect();
    dir.write_table("snapshots/times.csv", &["k", "t"], &times)?;
    let diag: Vec<Vec<f64>> = traj
        .diagnostics
        .iter()
        .map(|d| vec![d.t, d.total_mass, d.source_mass_rate, d.discharge_rate, d.step_change])
        .collect();
    dir.write_table(
        "diagnostics.csv",
        &["t", "total_mass", "source_mass_rate", "discharge_rate", "step_change"],
        &diag,
    )?;
    if !sim.probe_cells.is_empty() {
        let names: Vec<String> = sim.probe_cells.iter().map(|c| format!("cell_{c}")).collect();
        let mut header = vec!["t"];
        header.extend(names.iter().map(String::as_str));
        let rows: Vec<Vec<f64>> = traj
            .probes
            .iter()
            .enumerate()
            .map(|(k, vals)| {
                let mut row = vec![k as f64 * sim.dt];
                row.extend(vals);
                row
            })
            .collect();
        dir.write_table("probes.csv", &header, &rows)?;
    }

    let detected = detect_finite_time(&traj, &u_phi, config.finite_time_tol());
    let mut termination = serde_json::to_value(traj.termination).expect("plain enum");
    termination["steps"] = json!(traj.diagnostics.len());
    termination["final_time"] = json!(traj.final_time());
    termination["max_sweeps_per_step"] = json!(traj.diagnostics.iter().map(|d| d.sweeps).max().unwrap_or(0));
    termination["reached_u_phi_at"] = json!(detected);
    termination["probe_cells"] = json!(sim.probe_cells);
    outcome.termination = termination;
    Ok(())
}

fn equilibrium(config: &Config, job: &Job, dir: &mut RunDir, outcome: &mut Outcome) -> Result<(), Failure> {
    let problem = Problem::build(config, &job.base)?;
    outcome.grid = Some(grid_info(&problem));
    let grid = &problem.grid;
    let dim = grid.dimension();
    let f_fn = problem.f_fn();
    let f_ref = f_fn.as_ref().map(|g| g as &dyn Fn(Point) -> f64);
    let report = classify_equilibria(&problem.domain, &problem.boundary, grid, &problem.f, f_ref, job.seed)?;

    write_cells(dir, "v_f.csv", grid, &["v"], &[report.v_f.v.values()])?;
    write_cells(dir, "u_phi.csv", grid, &["u_phi"], &[report.u_phi.values()])?;
    write_cells(dir, "u_f.csv", grid, &["u_f"], &[report.u_f.values()])?;
    let samples = |value: &dyn Fn(usize) -> f64| -> Vec<Vec<f64>> {
        problem
            .boundary
            .points
            .iter()
            .enumerate()
            .map(|(k, &p)| {
                let mut row = vec![k as f64];
                row.extend(coords(p, dim));
                row.push(value(k));
                row
            })
            .collect()
    };
    let mut header = vec!["sample_index"];
    header.extend(coord_header(dim));
    let nu_rows = samples(&|k| report.nu.weights[k]);
    dir.write_table("nu.csv", &[header.clone(), vec!["weight"]].concat(), &nu_rows)?;
    let gamma_rows = samples(&|k| if report.gamma_f[k] { 1.0 } else { 0.0 });
    dir.write_table("gamma_f.csv", &[header, vec!["in_gamma"]].concat(), &gamma_rows)?;
    let j_rows: Vec<Vec<f64>> = report.rays.j_points().into_iter().map(|p| coords(p, dim)).collect();
    dir.write_table("J.csv", &coord_header(dim), &j_rows)?;

    let tests = standard_tests(dim, job.seed, config.analysis.test_functions);
    let res_phi = weak_residual(&report.u_phi, &report.v_f, &report.nu, &problem.f, &problem.boundary, &tests)?;
    let res_mid = weak_residual(&report.intermediate, &report.v_f, &report.nu, &problem.f, &problem.boundary, &tests)?;
    dir.write_json(
        "weak_residual.json",
        &json!({
            "h": grid.h(),
            "seed": job.seed,
            "u_phi": res_phi,
            "intermediate": res_mid,
            "nu_total": report.nu.total(),
            "source_total": problem.f.integral(),
            "unique_u": report.unique_u,
            "statement": report.statement,
        }),
    )?;
    outcome.termination = json!({"reason": "completed", "unique_u": report.unique_u});
    Ok(())
}

#[derive(Serialize)]
struct AnalyzeOutput<'a> {
    #[serde(flatten)]
    report: &'a ConvergenceReport,
    quadrature: Value,
}

fn analyze(config: &Config, job: &Job, dir: &mut RunDir, outcome: &mut Outcome) -> Result<(), Failure> {
    let problem = Problem::build(config, &job.base)?;
    outcome.grid = Some(grid_info(&problem));
    let grid = &problem.grid;
    let u_phi = lax_hopf(grid, &problem.boundary)?;
    let rays = transport_rays(&problem.domain, grid, &problem.boundary, &u_phi)?;
    let f_fn = problem.f_fn();
    let f_ref = f_fn.as_ref().map(|g| g as &dyn Fn(Point) -> f64);
    let fbar = problem.radial_profile();
    let fbar_ref = fbar.as_ref().map(|g| g.as_ref() as &dyn Fn(f64) -> f64);
    let report = convergence_report(
        &problem.domain,
        &problem.boundary,
        &problem.f,
        &rays,
        f_ref,
        fbar_ref,
        config.analysis.alpha,
        config.analysis.dens_upper,
    )?;
    let ball_mass = if f_ref.is_some() {
        json!({"source": "analytic", "radial_rule": "tanh-sinh", "angles": 256, "divergence_exponent_tolerance": 1e-3})
    } else {
        json!({"source": "grid", "rule": "cumulative cell mass", "divergence_exponent_tolerance": 0.05})
    };
    let quadrature = json!({
        "ball_mass": ball_mass,
        "dens_radii": 64,
        "dens_rule": "trapezoid in log radius with fitted power tail",
        "dens2_radii": 32,
        "dens2_range": [2.0 * grid.h(), 0.2 * problem.domain.diameter()],
        "radial_tau_rule": "tanh-sinh with endpoint exponent fit",
    });
    dir.write_json("convergence_report.json", &AnalyzeOutput { report: &report, quadrature })?;
    outcome.termination = json!({"reason": "completed"});
    Ok(())
}

/// Sup-norm error allowed between simulation and oracle: `3h`, capped at 0.03.
pub fn verify_tolerance(h: f64) -> f64 {
    (3.0 * h).min(0.03)
}

#[derive(Serialize)]
struct VerifyRow {
    /// Time since the `u1` alignment.
    t: f64,
    t_simulation: f64,
    rho: f64,
    sup_error: f64,
    centerline_gap: f64,
    oracle_centerline_gap: f64,
    pass: bool,
}

fn verify(config: &Config, job: &Job, dir: &mut RunDir, outcome: &mut Outcome) -> Result<(), Failure> {
    let problem = Problem::build(config, &job.base)?;
    outcome.grid = Some(grid_info(&problem));
    let fbar = problem.radial_profile().ok_or_else(|| {
        Failure::Config("verification needs a radial case: unit ball or (-1, 1), zero walls, radial source centred at 0".into())
    })?;
    let grid = &problem.grid;
    let n = grid.dimension();
    let h = grid.h();
    let tol = verify_tolerance(h);
    let align_tol = 3.0 * h;
    let u_phi = lax_hopf(grid, &problem.boundary)?;
    let set = Arc::new(AdmissibleSet::new(&u_phi)?);
    let mut sim = config.sim_config(grid, job.seed);
    sim.stop_at_steady = false;
    let traj = run(&sim, &set, &problem.f)?;
    let radii: Vec<f64> = grid.coords().iter().map(|p| p[0].hypot(p[1]).min(1.0)).collect();
    let centre = (0..grid.len())
        .min_by(|&a, &b| radii[a].total_cmp(&radii[b]))
        .expect("nonempty grid");

    let fbar_ref: &dyn Fn(f64) -> f64 = fbar.as_ref();
    let Some(alignment) = align_crater(&traj.times, &traj.profiles, fbar_ref, n, align_tol)? else {
        let msg = format!("the simulated profile never came within {align_tol} of a crater profile");
        dir.write_json("verify.json", &json!({"h": h, "tolerance": tol, "pass": false, "reason": msg}))?;
        outcome.termination = json!({"reason": "completed", "pass": false});
        return Err(Failure::Tolerance(msg));
    };
    let t_align = alignment.offset;

    let extinction = extinction_time_quadrature(fbar_ref, n);
    let horizon = traj.final_time() - t_align;
    let start = alignment.t_match - t_align;
    let end = extinction.map_or(horizon, |e| e.min(horizon));
    let targets: Vec<f64> = (1..=5).map(|k| start + k as f64 * (end - start) / 5.0).collect();
    // compare at the snapshot nearest to each target, on its own clock
    let picks: Vec<usize> = targets
        .iter()
        .map(|&s| {
            let gap = |k: usize| (traj.times[k] - t_align - s).abs();
            (alignment.index..traj.times.len())
                .min_by(|&a, &b| gap(a).total_cmp(&gap(b)))
                .expect("the matched snapshot qualifies")
        })
        .collect();
    let shifted: Vec<f64> = picks.iter().map(|&k| traj.times[k] - t_align).collect();
    let oracle = rho_general(fbar_ref, n, &shifted)?;
    let mut rows = Vec::new();
    for ((&k, &s), &rho) in picks.iter().zip(&shifted).zip(&oracle.rho) {
        let u = &traj.profiles[k];
        let mut err: f64 = 0.0;
        for (c, &r) in radii.iter().enumerate() {
            err = err.max((u.values()[c] - oracle_profile(rho, r)?).abs());
        }
        rows.push(VerifyRow {
            t: s,
            t_simulation: traj.times[k],
            rho,
            sup_error: err,
            centerline_gap: u_phi.values()[centre] - u.values()[centre],
            oracle_centerline_gap: 2.0 * rho,
            pass: err <= tol,
        });
    }

    // The oracle itself is within 3h of u_phi once 2 rho <= 3h; compare detection times like for like.
    let detected = detect_finite_time(&traj, &u_phi, align_tol).map(|t| t - t_align);
    let oracle_detection = time_to_radius(fbar_ref, n, (0.5 * align_tol).min(0.5))?;
    let expect_detection = oracle_detection <= horizon;
    let finite_time_pass = match detected {
        Some(d) if expect_detection => (d - oracle_detection).abs() <= 0.1 * oracle_detection,
        Some(d) => d >= 0.9 * oracle_detection,
        None => !expect_detection,
    };
    let extinction_error = match (detected, extinction) {
        (Some(d), Some(e)) => Some((d - e).abs() / e),
        _ => None,
    };
    let pass = finite_time_pass && rows.iter().all(|r| r.pass);
    let alpha_note = match problem.source.as_ref() {
        Some(sandflow::source::SourceSpec::PowerLaw { alpha, .. }) => {
            json!({"alpha": alpha, "t_alpha": t_alpha(n, *alpha).ok(), "tau_alpha": tau_alpha(n, *alpha)})
        }
        _ => Value::Null,
    };
    dir.write_json(
        "verify.json",
        &json!({
            "h": h,
            "tolerance": tol,
            "alignment_tolerance": align_tol,
            "alignment": alignment,
            "horizon": horizon,
            "power_law": alpha_note,
            "predicted_extinction": extinction,
            "detected_finite_time": detected,
            "oracle_detection_time": oracle_detection,
            "detection_error_vs_extinction": extinction_error,
            "finite_time_pass": finite_time_pass,
            "comparisons": rows,
            "pass": pass,
        }),
    )?;
    outcome.termination = json!({"reason": "completed", "pass": pass});
    if pass {
        Ok(())
    } else {
        Err(Failure::Tolerance(format!(
            "verification failed at h = {h} (tolerance {tol}, finite-time check {})",
            if finite_time_pass { "passed" } else { "failed" }
        )))
    }
}

/// Runs `step - 1` steps, then records the solver residuals of step `step`.
fn trace(config: &Config, job: &Job, step: usize, dir: &mut RunDir, outcome: &mut Outcome) -> Result<(), Failure> {
    if step == 0 {
        return Err(Failure::Config("--step counts from 1".into()));
    }
    let problem = Problem::build(config, &job.base)?;
    outcome.grid = Some(grid_info(&problem));
    let u_phi = lax_hopf(&problem.grid, &problem.boundary)?;
    let set = Arc::new(AdmissibleSet::new(&u_phi)?);
    let mut stepper = Stepper::new(set, &problem.f, config.dt(), config.projection_options())?;
    let mut u = ScalarField::zeros(problem.grid.clone());
    for _ in 1..step {
        stepper.advance(&mut u)?;
    }
    stepper.projector_mut().enable_trace();
    let result = stepper.advance(&mut u);
    let rows: Vec<Vec<f64>> = stepper
        .projector_mut()
        .take_trace()
        .iter()
        .map(|r| vec![r.sweep as f64, r.primal_change, r.kkt_residual])
        .collect();
    dir.write_table("trace.csv", &["sweep", "primal_change", "kkt_residual"], &rows)?;
    let (_, stats) = result?;
    outcome.termination = json!({"reason": "completed", "step": step, "sweeps": stats.sweeps});
    Ok(())
}

/// Flags of the `oracle` verb.
#[derive(Debug, Clone, Serialize)]
pub struct OracleArgs {
    pub n: usize,
    pub alpha: f64,
    /// `power` for `(N + alpha) r^alpha`, `monomial` for `r^alpha`.
    pub fbar: String,
    pub t_end: f64,
    pub out: PathBuf,
}

pub fn oracle(args: &OracleArgs) -> Result<(), Failure> {
    let (n, alpha) = (args.n, args.alpha);
    if !(args.t_end > 0.0 && args.t_end.is_finite()) {
        return Err(Failure::Config(format!("--t-end {} must be positive", args.t_end)));
    }
    let fbar: Box<dyn Fn(f64) -> f64> = match args.fbar.as_str() {
        "power" => {
            let c = n as f64 + alpha;
            Box::new(move |r: f64| c * r.powf(alpha))
        }
        "monomial" => Box::new(move |r: f64| r.powf(alpha)),
        other => return Err(Failure::Config(format!("unknown profile {other:?} (expected power or monomial)"))),
    };
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Failure::Config(format!("--alpha {alpha} must be positive")));
    }
    let echo = serde_json::to_value(args).expect("plain struct");
    let echo_bytes = serde_json::to_vec(&echo).expect("plain value");
    let started = Instant::now();
    let mut dir = RunDir::create(&args.out)?;
    let times: Vec<f64> = (0..=400).map(|k| args.t_end * k as f64 / 400.0).collect();
    let traj = rho_general(fbar.as_ref(), n, &times)?;
    let rows: Vec<Vec<f64>> = traj.times.iter().zip(&traj.rho).map(|(&t, &r)| vec![t, r]).collect();
    dir.write_table("rho.csv", &["t", "rho"], &rows)?;
    for k in 0..=10 {
        let t = args.t_end * k as f64 / 10.0;
        let rows = (0..=100)
            .map(|j| {
                let r = j as f64 / 100.0;
                Ok(vec![r, traj.profile(t, r)?])
            })
            .collect::<Result<Vec<_>, Error>>()?;
        dir.write_table(&format!("profiles/t_{k}.csv"), &["r", "u"], &rows)?;
    }
    let profile_times: Vec<Vec<f64>> = (0..=10).map(|k| vec![k as f64, args.t_end * k as f64 / 10.0]).collect();
    dir.write_table("profiles/times.csv", &["k", "t"], &profile_times)?;
    let power = args.fbar == "power";
    let tau = if power {
        tau_alpha(n, alpha)
    } else {
        extinction_time_quadrature(fbar.as_ref(), n)
    };
    dir.write_json(
        "summary.json",
        &json!({
            "n": n,
            "alpha": alpha,
            "fbar": args.fbar,
            "t_alpha": if power { t_alpha(n, alpha).ok() } else { None },
            "tau_alpha": tau.map_or(json!("none"), |t| json!(t)),
            "extinction_observed": traj.extinction,
        }),
    )?;
    Manifest {
        command: "oracle".into(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        config: echo,
        config_sha256: sha256_hex(&echo_bytes),
        seed: 0,
        grid: None,
        wall_clock_seconds: started.elapsed().as_secs_f64(),
        termination: json!({"reason": "completed"}),
        files: Vec::new(),
    }
    .write(&mut dir)?;
    Ok(())
}

pub fn config_base(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}
