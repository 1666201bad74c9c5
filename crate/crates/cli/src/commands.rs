//! Subcommand implementations. Each returns a process exit code.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::ops::ControlFlow;
use std::path::{Path, PathBuf};

use nalgebra::DVector;
use saddle_switch::diagnostics::{run_checks, ShiftedGradient};
use saddle_switch::experiments::{invariant_histogram, run_experiment, Experiment, ExperimentReport};
use saddle_switch::integrator::{RngStream, Simulator};
use saddle_switch::landscape::Potential;
use saddle_switch::Error as CoreError;

use crate::config::RunConfig;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_DIVERGED: i32 = 2;
pub const EXIT_IO: i32 = 3;
/// Bad command line or configuration.
pub const EXIT_USAGE: i32 = 64;

/// Settings shared by every subcommand after flag overrides.
#[derive(Debug, Clone)]
pub struct Invocation {
    pub config: RunConfig,
    pub out: PathBuf,
}

impl Invocation {
    pub fn new(mut config: RunConfig, seed: Option<u64>, out: Option<PathBuf>, workers: Option<usize>) -> Self {
        if let Some(s) = seed {
            config.seed = s;
        }
        if let Some(w) = workers {
            config.workers = w;
        }
        let out = out.unwrap_or_else(|| PathBuf::from(&config.output));
        Invocation { config, out }
    }
}

fn write_file(dir: &Path, name: &str, contents: &str) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(name), contents)
}

fn io_failure(path: &Path, e: io::Error) -> i32 {
    eprintln!("error: cannot write to {}: {e}", path.display());
    EXIT_IO
}

fn report_error(e: &CoreError) -> i32 {
    eprintln!("error: {e}");
    match e {
        CoreError::Divergence { .. } | CoreError::Evaluation(_) => EXIT_DIVERGED,
        _ => EXIT_USAGE,
    }
}

fn potential_or_exit(cfg: &RunConfig) -> Result<Box<dyn Potential>, i32> {
    cfg.build_potential().map_err(|e| report_error(&e))
}

pub const TRAJECTORY_FILE: &str = "trajectory.csv";

/// Trajectory CSV: `t,x0,…,x{d-1},energy,mode`, one row per stride.
pub fn simulate(inv: &Invocation) -> i32 {
    let cfg = &inv.config;
    let potential = match potential_or_exit(cfg) {
        Ok(p) => p,
        Err(code) => return code,
    };
    let dynamics = match cfg.dynamics_config() {
        Ok(d) => d,
        Err(e) => return report_error(&e),
    };
    let d = potential.dimension();
    let mut csv = String::from("t");
    for i in 0..d {
        write!(csv, ",x{i}").unwrap();
    }
    csv.push_str(",energy,mode\n");

    let x0 = cfg.start_point();
    let mut failure = None;
    let outcome = Simulator::new(&dynamics, potential.as_ref(), &x0, None, RngStream::new(cfg.seed, 0)).and_then(|mut sim| {
        sim.run(cfg.run.t_end, cfg.run.stride, |s, _| {
            match potential.energy(&s.x) {
                Ok(e) => {
                    write!(csv, "{}", s.t).unwrap();
                    for c in s.x.iter() {
                        write!(csv, ",{c}").unwrap();
                    }
                    writeln!(csv, ",{e},{}", s.mode.index()).unwrap();
                    ControlFlow::Continue(())
                }
                Err(err) => {
                    failure = Some(err);
                    ControlFlow::Break(())
                }
            }
        })
    });
    if let Err(e) = write_file(&inv.out, TRAJECTORY_FILE, &csv) {
        return io_failure(&inv.out, e);
    }
    match (outcome, failure) {
        (Err(e), _) | (Ok(_), Some(e)) => report_error(&e),
        (Ok(_), None) => EXIT_OK,
    }
}

fn experiment_spec(cfg: &RunConfig) -> Option<Experiment> {
    let e = cfg.experiment.as_ref()?;
    Some(Experiment {
        x0: cfg.experiment_start().iter().copied().collect(),
        predicate: cfg.predicate()?,
        t_max: e.t_max,
        n_trials: e.n_trials,
    })
}

pub const TRIALS_FILE: &str = "trials.csv";
pub const SUMMARY_FILE: &str = "summary.json";

/// Trial CSV plus JSON summary for the `[experiment]` section.
pub fn experiment(inv: &Invocation) -> i32 {
    let cfg = &inv.config;
    let Some(spec) = experiment_spec(cfg) else {
        eprintln!("error: the configuration has no [experiment] section");
        return EXIT_USAGE;
    };
    let potential = match potential_or_exit(cfg) {
        Ok(p) => p,
        Err(code) => return code,
    };
    let dynamics = match cfg.dynamics_config() {
        Ok(d) => d,
        Err(e) => return report_error(&e),
    };
    let label = cfg.experiment.as_ref().map(|e| e.kind.label()).unwrap_or("experiment");
    let report = match run_experiment(label, &dynamics, potential.as_ref(), &spec, cfg.seed, 0, cfg.workers) {
        Ok(r) => r,
        Err(e) => return report_error(&e),
    };
    let written = write_file(&inv.out, TRIALS_FILE, &report.trials_csv())
        .and_then(|_| write_file(&inv.out, SUMMARY_FILE, &report.summary_json()));
    if let Err(e) = written {
        return io_failure(&inv.out, e);
    }
    print_summary(&report);
    EXIT_OK
}

fn print_summary(r: &ExperimentReport) {
    let fmt = |v: Option<f64>| v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.6}"));
    println!(
        "{}: mean={} stderr={} failure_rate={} ({} trials)",
        r.label,
        fmt(r.mean()),
        fmt(r.stderr()),
        r.failure_rate(),
        r.summary.n_trials
    );
}

pub const SWEEP_FILE: &str = "sweep.json";
pub const SWEEP_CSV: &str = "sweep.csv";

/// One report per `[sweep]` grid point: `sweep_<k>_trials.csv`, a summary
/// table and a JSON array of summaries.
pub fn sweep(inv: &Invocation) -> i32 {
    let cfg = &inv.config;
    let Some(spec) = experiment_spec(cfg) else {
        eprintln!("error: a sweep needs an [experiment] section");
        return EXIT_USAGE;
    };
    let points = cfg.sweep_points();
    if points.is_empty() {
        eprintln!("error: the configuration has no [sweep] grid");
        return EXIT_USAGE;
    }
    let potential = match potential_or_exit(cfg) {
        Ok(p) => p,
        Err(code) => return code,
    };
    let grid: Vec<_> = points
        .into_iter()
        .map(|(label, config)| saddle_switch::experiments::SweepPoint { label, config })
        .collect();
    let reports = match saddle_switch::experiments::sweep(&grid, potential.as_ref(), &spec, cfg.seed, cfg.workers) {
        Ok(r) => r,
        Err(e) => return report_error(&e),
    };
    let mut table = String::from("index,label,epsilon,nu,cut,n_trials,n_success,mean,stderr,failure_rate\n");
    let mut summaries = Vec::new();
    for (k, r) in reports.iter().enumerate() {
        if let Err(e) = write_file(&inv.out, &format!("sweep_{k}_trials.csv"), &r.trials_csv()) {
            return io_failure(&inv.out, e);
        }
        let cut = serde_json::to_value(r.config.regularizer.kind).unwrap();
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        writeln!(
            table,
            "{k},\"{}\",{},{},{},{},{},{},{},{}",
            r.label,
            r.config.epsilon,
            r.config.nu,
            cut.as_str().unwrap_or(""),
            r.summary.n_trials,
            r.summary.n_success,
            opt(r.mean()),
            opt(r.stderr()),
            r.failure_rate()
        )
        .unwrap();
        summaries.push(serde_json::from_str::<serde_json::Value>(&r.summary_json()).unwrap());
        print_summary(r);
    }
    let json = serde_json::to_string_pretty(&summaries).unwrap();
    let written = write_file(&inv.out, SWEEP_CSV, &table).and_then(|_| write_file(&inv.out, SWEEP_FILE, &json));
    match written {
        Ok(()) => EXIT_OK,
        Err(e) => io_failure(&inv.out, e),
    }
}

pub const HISTOGRAM_FILE: &str = "histogram.csv";

/// Occupation histogram of the `[histogram]` section: `ix,iy,x,y,mass`.
pub fn histogram(inv: &Invocation) -> i32 {
    let cfg = &inv.config;
    let Some(h) = &cfg.histogram else {
        eprintln!("error: the configuration has no [histogram] section");
        return EXIT_USAGE;
    };
    let potential = match potential_or_exit(cfg) {
        Ok(p) => p,
        Err(code) => return code,
    };
    let dynamics = match cfg.dynamics_config() {
        Ok(d) => d,
        Err(e) => return report_error(&e),
    };
    let burn_in = h.burn_in.unwrap_or(0.1 * h.t_end);
    let result = invariant_histogram(
        &dynamics,
        potential.as_ref(),
        &cfg.start_point(),
        h.t_end,
        burn_in,
        h.bins,
        RngStream::new(cfg.seed, 0),
    );
    match result {
        Ok(hist) => match write_file(&inv.out, HISTOGRAM_FILE, &hist.to_csv()) {
            Ok(()) => EXIT_OK,
            Err(e) => io_failure(&inv.out, e),
        },
        Err(e) => report_error(&e),
    }
}

/// Derivative, spectral, reflection and sphere checks at the start point
/// and three seeded perturbations of it.
pub fn check(inv: &Invocation, corrupt_gradient: bool) -> i32 {
    let cfg = &inv.config;
    let mut potential = match potential_or_exit(cfg) {
        Ok(p) => p,
        Err(code) => return code,
    };
    if corrupt_gradient {
        potential = Box::new(ShiftedGradient { inner: potential, shift: 1e-3 });
    }
    let x0 = cfg.start_point();
    let mut rng = RngStream::new(cfg.seed, 0);
    let mut points: Vec<DVector<f64>> = vec![x0.clone()];
    for _ in 0..3 {
        points.push(&x0 + rng.gaussian_vector(x0.len()) * 0.1);
    }
    let results = match run_checks(potential.as_ref(), &points) {
        Ok(r) => r,
        Err(e) => return report_error(&e),
    };
    let mut failed = Vec::new();
    for r in &results {
        let status = if r.passed { "PASS" } else { "FAIL" };
        println!("{status} {} value={:e} tolerance={:e}", r.name, r.value, r.tolerance);
        if !r.passed {
            failed.push(r.name.clone());
        }
    }
    if failed.is_empty() {
        println!("all {} checks passed", results.len());
        EXIT_OK
    } else {
        eprintln!("failed checks: {}", failed.join(", "));
        EXIT_CHECK_FAILED
    }
}
