//! `sandflow`: simulate, analyse and verify growing sandpiles from JSON configs.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use clap::{Args, Parser, Subcommand};
use serde_json::Value;

use commands::{config_base, execute, oracle, Command, Failure, Job, OracleArgs};

#[derive(Parser)]
#[command(name = "sandflow", version, about = "Growing sandpiles in a convex container")]
struct Cli {
    #[command(subcommand)]
    verb: Verb,
}

#[derive(Subcommand)]
enum Verb {
    /// Time-step the pile and write snapshots and diagnostics.
    Simulate(RunArgs),
    /// Stationary profiles, rolling layer and boundary discharge.
    Equilibrium(RunArgs),
    /// Finite-time convergence criteria.
    Analyze(RunArgs),
    /// Compare a radial simulation with the closed-form crater solution.
    Verify(RunArgs),
    /// Radial reference solution.
    Oracle(OracleFlags),
    /// Dump the projection solver residuals of one time step.
    Trace {
        #[command(flatten)]
        run: RunArgs,
        /// Step to trace, counting from 1.
        #[arg(long, default_value_t = 1)]
        step: usize,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// `dotted.key=v1,v2,...`; repeat for a product of sweeps. Each run writes to its own subdirectory.
    #[arg(long)]
    sweep: Vec<String>,
    /// Only check that the manifest in `--out` was produced from this config.
    #[arg(long)]
    dry_run: bool,
}

#[derive(Args)]
struct OracleFlags {
    #[arg(long = "N")]
    n: usize,
    #[arg(long)]
    alpha: f64,
    #[arg(long, default_value = "power")]
    fbar: String,
    #[arg(long)]
    t_end: f64,
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, args) = match cli.verb {
        Verb::Simulate(a) => (Command::Simulate, a),
        Verb::Equilibrium(a) => (Command::Equilibrium, a),
        Verb::Analyze(a) => (Command::Analyze, a),
        Verb::Verify(a) => (Command::Verify, a),
        Verb::Trace { run, step } => (Command::Trace { step }, run),
        Verb::Oracle(o) => {
            let args = OracleArgs {
                n: o.n,
                alpha: o.alpha,
                fbar: o.fbar,
                t_end: o.t_end,
                out: o.out,
            };
            return finish(oracle(&args));
        }
    };
    let bytes = match std::fs::read(&args.config) {
        Ok(b) => b,
        Err(e) => return finish(Err(Failure::Config(format!("cannot read {}: {e}", args.config.display())))),
    };
    let jobs = match expand_sweeps(&bytes, &args.sweep) {
        Ok(runs) => runs
            .into_iter()
            .map(|(label, config_bytes)| Job {
                command,
                config_bytes,
                base: config_base(&args.config),
                out: match label {
                    Some(l) => args.out.join(l),
                    None => args.out.clone(),
                },
                seed: args.seed,
                dry_run: args.dry_run,
            })
            .collect::<Vec<_>>(),
        Err(f) => return finish(Err(f)),
    };
    if jobs.len() == 1 {
        return finish(execute(&jobs[0]));
    }
    let mut worst = 0;
    for (job, result) in jobs.iter().zip(run_parallel(&jobs)) {
        if let Err(f) = result {
            eprintln!("sandflow: {}: {}", job.out.display(), f.message());
            worst = worst.max(f.exit_code());
        }
    }
    ExitCode::from(worst as u8)
}

fn finish(result: Result<(), Failure>) -> ExitCode {
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("sandflow: {}", f.message());
            ExitCode::from(f.exit_code() as u8)
        }
    }
}

fn worker_count() -> usize {
    let available = std::thread::available_parallelism().map_or(1, |n| n.get());
    std::env::var("SANDFLOW_THREADS")
        .ok()
        .and_then(|s| s.parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or(available)
}

/// Runs independent jobs on up to `SANDFLOW_THREADS` workers.
fn run_parallel(jobs: &[Job]) -> Vec<Result<(), Failure>> {
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<(), Failure>>>> = Mutex::new((0..jobs.len()).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..worker_count().min(jobs.len()) {
            s.spawn(|| loop {
                let k = next.fetch_add(1, Ordering::Relaxed);
                if k >= jobs.len() {
                    break;
                }
                let r = execute(&jobs[k]);
                results.lock().expect("no worker panics while holding the lock")[k] = Some(r);
            });
        }
    });
    results
        .into_inner()
        .expect("workers finished")
        .into_iter()
        .map(|r| r.expect("every job ran"))
        .collect()
}

/// One config per point of the sweep product, labelled `key=value_key=value`.
fn expand_sweeps(bytes: &[u8], sweeps: &[String]) -> Result<Vec<(Option<String>, Vec<u8>)>, Failure> {
    if sweeps.is_empty() {
        return Ok(vec![(None, bytes.to_vec())]);
    }
    let base: Value = serde_json::from_slice(bytes).map_err(|e| Failure::Config(format!("config: {e}")))?;
    let mut runs: Vec<(Vec<String>, Value)> = vec![(Vec::new(), base)];
    for sweep in sweeps {
        let (key, values) = sweep
            .split_once('=')
            .ok_or_else(|| Failure::Config(format!("--sweep {sweep:?} is not key=v1,v2,...")))?;
        let mut next = Vec::new();
        for (labels, config) in &runs {
            for raw in values.split(',') {
                let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
                let mut c = config.clone();
                set_dotted(&mut c, key, value)?;
                let mut l = labels.clone();
                l.push(format!("{key}={raw}"));
                next.push((l, c));
            }
        }
        runs = next;
    }
    Ok(runs
        .into_iter()
        .map(|(labels, c)| {
            let mut text = serde_json::to_string_pretty(&c).expect("JSON value");
            text.push('\n');
            (Some(labels.join("_")), text.into_bytes())
        })
        .collect())
}

fn set_dotted(config: &mut Value, key: &str, value: Value) -> Result<(), Failure> {
    let mut target = config;
    for part in key.split('.') {
        let obj = target
            .as_object_mut()
            .ok_or_else(|| Failure::Config(format!("--sweep key {key:?} does not name a config field")))?;
        target = obj.entry(part).or_insert(Value::Null);
    }
    *target = value;
    Ok(())
}
