//! Measurement protocols built on top of the integrator.
//!
//! Every Monte Carlo experiment is a batch of independent trials. Trial `i`
//! of an experiment with stream offset `o` draws all of its randomness from
//! `RngStream::new(seed, o + i)`, so reports depend only on the master seed
//! and never on the number of worker threads.

use std::fmt::Write as _;
use std::ops::ControlFlow;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrator::{DynamicsConfig, RngStream, Simulator};
use crate::landscape::{wrap_in_place, Geometry, Potential};

const ROUNDING_SLACK: f64 = 1e-14;

/// Gradient-descent settings used to identify the basin of a point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuenchSettings {
    pub step: f64,
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for QuenchSettings {
    fn default() -> Self {
        QuenchSettings {
            step: 1e-3,
            tol: 1e-6,
            max_iters: 200_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuenchResult {
    pub x: DVector<f64>,
    pub energy: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    /// `false` when `max_iters` ran out before `|∇U| < tol`.
    pub converged: bool,
}

/// Gradient descent from `x0` until `|∇U| < tol`.
///
/// The step starts at `step` and is halved whenever a move would raise the
/// energy by more than rounding (`1e-14·max(1, |U|)`), so energies along the
/// iterates never increase beyond that.
pub fn quench(
    potential: &dyn Potential,
    x0: &DVector<f64>,
    step: f64,
    tol: f64,
    max_iters: usize,
) -> Result<QuenchResult> {
    if !(step.is_finite() && step > 0.0) {
        return Err(Error::param("step", format!("must be > 0, got {step}")));
    }
    let geometry = potential.geometry();
    let mut x = x0.clone();
    wrap_in_place(&mut x, geometry);
    let mut energy = potential.energy(&x)?;
    let mut grad = potential.gradient(&x)?;
    let mut h = step;
    let mut iterations = 0;
    while iterations < max_iters {
        if grad.norm() < tol {
            break;
        }
        iterations += 1;
        let mut trial = &x - &grad * h;
        wrap_in_place(&mut trial, geometry);
        match potential.energy(&trial) {
            Ok(e) if e <= energy + ROUNDING_SLACK * energy.abs().max(1.0) => {
                x = trial;
                energy = e;
                grad = potential.gradient(&x)?;
            }
            _ => {
                h *= 0.5;
                if h < 1e-300 {
                    break;
                }
            }
        }
    }
    let grad_norm = grad.norm();
    Ok(QuenchResult {
        x,
        energy,
        grad_norm,
        iterations,
        converged: grad_norm < tol,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CatalogEntry {
    pub energy: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub configuration: Option<Vec<f64>>,
}

/// Known local minima, identified by energy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinimaCatalog {
    entries: Vec<CatalogEntry>,
    tolerance: f64,
}

impl MinimaCatalog {
    pub fn new(entries: Vec<CatalogEntry>, tolerance: f64) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::param("catalog", "must contain at least one minimum"));
        }
        if !(tolerance.is_finite() && tolerance > 0.0) {
            return Err(Error::param("tolerance", format!("must be > 0, got {tolerance}")));
        }
        for w in entries.windows(2) {
            let gap = w[1].energy - w[0].energy;
            if !(gap > 0.0) {
                return Err(Error::param("catalog", "energies must be strictly increasing"));
            }
            if tolerance >= gap {
                return Err(Error::param(
                    "tolerance",
                    format!("{tolerance} is not below the energy spacing {gap}"),
                ));
            }
        }
        Ok(MinimaCatalog { entries, tolerance })
    }

    pub fn from_energies(energies: &[f64], tolerance: f64) -> Result<Self> {
        Self::new(
            energies
                .iter()
                .map(|&energy| CatalogEntry {
                    energy,
                    configuration: None,
                })
                .collect(),
            tolerance,
        )
    }

    /// The four minima of the planar seven-particle Lennard-Jones cluster, to
    /// two decimals, with a 0.01 matching tolerance.
    pub fn lennard_jones_7() -> Self {
        Self::from_energies(&[-12.53, -11.50, -11.47, -11.40], 0.01).expect("valid catalog")
    }

    pub fn entries(&self) -> &[CatalogEntry] {
        &self.entries
    }

    pub fn tolerance(&self) -> f64 {
        self.tolerance
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Index of the catalog entry within tolerance of `energy`.
pub fn match_minimum(catalog: &MinimaCatalog, energy: f64) -> Result<Option<usize>> {
    let mut hits = catalog
        .entries
        .iter()
        .enumerate()
        .filter(|(_, e)| (e.energy - energy).abs() <= catalog.tolerance)
        .map(|(i, _)| i);
    match (hits.next(), hits.next()) {
        (None, _) => Ok(None),
        (Some(i), None) => Ok(Some(i)),
        (Some(first), Some(second)) => Err(Error::AmbiguousMatch {
            energy,
            first,
            second,
        }),
    }
}

/// One distinct energy level found by [`survey_minima`].
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyLevel {
    pub energy: f64,
    pub count: usize,
    pub representative: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MinimaSurvey {
    /// Ascending by energy.
    pub levels: Vec<EnergyLevel>,
    /// Quenches that hit `max_iters`.
    pub unconverged: usize,
}

impl MinimaSurvey {
    pub fn to_catalog(&self, tolerance: f64) -> Result<MinimaCatalog> {
        MinimaCatalog::new(
            self.levels
                .iter()
                .map(|l| CatalogEntry {
                    energy: l.energy,
                    configuration: Some(l.representative.iter().copied().collect()),
                })
                .collect(),
            tolerance,
        )
    }
}

/// Quench every start and group converged energies into levels: sorted
/// energies closer than `merge_tol` to their predecessor share a level.
pub fn survey_minima(
    potential: &dyn Potential,
    starts: &[DVector<f64>],
    settings: &QuenchSettings,
    merge_tol: f64,
) -> Result<MinimaSurvey> {
    let mut found = Vec::new();
    let mut unconverged = 0;
    for x0 in starts {
        let q = quench(potential, x0, settings.step, settings.tol, settings.max_iters)?;
        if q.converged {
            found.push((q.energy, q.x));
        } else {
            unconverged += 1;
        }
    }
    found.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut levels: Vec<EnergyLevel> = Vec::new();
    let mut last = f64::NEG_INFINITY;
    for (e, x) in found {
        match levels.last_mut() {
            Some(level) if e - last <= merge_tol => {
                level.count += 1;
                // running mean of the level energy
                level.energy += (e - level.energy) / level.count as f64;
            }
            _ => levels.push(EnergyLevel {
                energy: e,
                count: 1,
                representative: x,
            }),
        }
        last = e;
    }
    Ok(MinimaSurvey { levels, unconverged })
}

/// `n` particles uniformly in a disc of radius `radius`, rejecting placements
/// closer than `min_distance` to an earlier particle.
pub fn random_cluster(n: usize, radius: f64, min_distance: f64, rng: &mut RngStream) -> DVector<f64> {
    use rand::Rng;
    let mut pts: Vec<[f64; 2]> = Vec::with_capacity(n);
    while pts.len() < n {
        let p = [rng.random_range(-radius..radius), rng.random_range(-radius..radius)];
        if p[0] * p[0] + p[1] * p[1] > radius * radius {
            continue;
        }
        let ok = pts
            .iter()
            .all(|q| (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) >= min_distance * min_distance);
        if ok {
            pts.push(p);
        }
    }
    DVector::from_iterator(2 * n, pts.into_iter().flatten())
}

/// Stopping rule for a hitting-time trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StopPredicate {
    /// `dist(x, center) < radius` (minimum image on a torus).
    Ball { center: Vec<f64>, radius: f64 },
    /// `U(x) < threshold`.
    EnergyBelow { threshold: f64 },
    /// Every catalog entry has been matched by a quench. Quenches happen at
    /// `t = period, 2·period, …`.
    AllMinimaVisited {
        catalog: MinimaCatalog,
        period: f64,
        #[serde(default)]
        quench: QuenchSettings,
    },
}

impl StopPredicate {
    pub fn ball(center: &[f64], radius: f64) -> Self {
        StopPredicate::Ball {
            center: center.to_vec(),
            radius,
        }
    }

    pub fn validate(&self, dimension: usize) -> Result<()> {
        match self {
            StopPredicate::Ball { center, radius } => {
                if center.len() != dimension {
                    return Err(Error::param("center", format!("needs {dimension} coordinates")));
                }
                if !(radius.is_finite() && *radius > 0.0) {
                    return Err(Error::param("radius", format!("must be > 0, got {radius}")));
                }
            }
            StopPredicate::EnergyBelow { threshold } => {
                if threshold.is_nan() {
                    return Err(Error::param("threshold", "must be a number"));
                }
            }
            StopPredicate::AllMinimaVisited { period, quench, .. } => {
                if !(period.is_finite() && *period > 0.0) {
                    return Err(Error::param("quench_period", format!("must be > 0, got {period}")));
                }
                if !(quench.step > 0.0 && quench.tol > 0.0) {
                    return Err(Error::param("quench", "step and tol must be > 0"));
                }
            }
        }
        Ok(())
    }
}

/// Incremental evaluation of a [`StopPredicate`] along one trajectory.
struct Tracker<'a> {
    predicate: &'a StopPredicate,
    center: Option<DVector<f64>>,
    visited: Vec<bool>,
    next_check: f64,
    flagged: u64,
}

impl<'a> Tracker<'a> {
    fn new(predicate: &'a StopPredicate) -> Self {
        let (center, visited, next_check) = match predicate {
            StopPredicate::Ball { center, .. } => (Some(DVector::from_column_slice(center)), Vec::new(), 0.0),
            StopPredicate::EnergyBelow { .. } => (None, Vec::new(), 0.0),
            StopPredicate::AllMinimaVisited { catalog, period, .. } => (None, vec![false; catalog.len()], *period),
        };
        Tracker {
            predicate,
            center,
            visited,
            next_check,
            flagged: 0,
        }
    }

    fn reached(&mut self, t: f64, x: &DVector<f64>, potential: &dyn Potential, time_tol: f64) -> Result<bool> {
        match self.predicate {
            StopPredicate::Ball { radius, .. } => {
                let c = self.center.as_ref().expect("ball centre");
                Ok(potential.geometry().distance(x, c) < *radius)
            }
            StopPredicate::EnergyBelow { threshold } => Ok(potential.energy(x)? < *threshold),
            StopPredicate::AllMinimaVisited { catalog, period, quench: q } => {
                if t < self.next_check - time_tol {
                    return Ok(false);
                }
                while self.next_check <= t + time_tol {
                    self.next_check += period;
                }
                let found = match quench(potential, x, q.step, q.tol, q.max_iters) {
                    Ok(r) if r.converged => match_minimum(catalog, r.energy)?,
                    _ => None,
                };
                match found {
                    Some(i) => self.visited[i] = true,
                    None => self.flagged += 1,
                }
                Ok(self.visited.iter().all(|&v| v))
            }
        }
    }
}

/// How a single trial ended.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TrialOutcome {
    Hit { time: f64 },
    /// `t_max` elapsed first.
    Timeout { time: f64 },
    /// Divergence ceiling crossed, or the potential could not be evaluated.
    Diverged { time: f64 },
}

impl TrialOutcome {
    pub fn kind(&self) -> &'static str {
        match self {
            TrialOutcome::Hit { .. } => "hit",
            TrialOutcome::Timeout { .. } => "timeout",
            TrialOutcome::Diverged { .. } => "diverged",
        }
    }

    pub fn time(&self) -> f64 {
        match *self {
            TrialOutcome::Hit { time } | TrialOutcome::Timeout { time } | TrialOutcome::Diverged { time } => time,
        }
    }

    pub fn hit_time(&self) -> Option<f64> {
        match *self {
            TrialOutcome::Hit { time } => Some(time),
            _ => None,
        }
    }

    pub fn is_failure(&self) -> bool {
        !matches!(self, TrialOutcome::Hit { .. })
    }
}

/// First time the predicate holds along one trajectory.
pub fn hitting_time(
    config: &DynamicsConfig,
    potential: &dyn Potential,
    x0: &DVector<f64>,
    predicate: &StopPredicate,
    t_max: f64,
    rng: RngStream,
) -> Result<TrialOutcome> {
    hitting_trial(config, potential, x0, predicate, t_max, rng).map(|(o, _)| o)
}

fn hitting_trial(
    config: &DynamicsConfig,
    potential: &dyn Potential,
    x0: &DVector<f64>,
    predicate: &StopPredicate,
    t_max: f64,
    rng: RngStream,
) -> Result<(TrialOutcome, u64)> {
    if !(t_max.is_finite() && t_max > 0.0) {
        return Err(Error::param("t_max", format!("must be > 0, got {t_max}")));
    }
    predicate.validate(potential.dimension())?;
    let mut sim = Simulator::new(config, potential, x0, None, rng)?;
    let mut tracker = Tracker::new(predicate);
    let time_tol = 1e-9 * config.dt;
    let mut failure: Option<Error> = None;
    let stopped = sim.run(t_max, 1, |s, _| match tracker.reached(s.t, &s.x, potential, time_tol) {
        Ok(true) => ControlFlow::Break(()),
        Ok(false) => ControlFlow::Continue(()),
        Err(e) => {
            failure = Some(e);
            ControlFlow::Break(())
        }
    });
    if let Some(e) = failure {
        return Err(e);
    }
    let t = sim.state().t;
    let outcome = match stopped {
        Ok(true) => TrialOutcome::Hit { time: t },
        Ok(false) => TrialOutcome::Timeout { time: t },
        Err(Error::Divergence { t, .. }) => TrialOutcome::Diverged { time: t },
        Err(Error::Evaluation(_)) => TrialOutcome::Diverged { time: t },
        Err(e) => return Err(e),
    };
    Ok((outcome, tracker.flagged))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial_index: usize,
    /// Random stream index used by this trial.
    pub stream: u64,
    pub outcome: TrialOutcome,
    /// Quenches that matched no catalog entry.
    #[serde(default)]
    pub flagged_quenches: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub n_trials: usize,
    pub n_success: usize,
    /// Mean hitting time over successful trials.
    pub mean: Option<f64>,
    /// `sqrt(sample variance / n_success)`.
    pub stderr: Option<f64>,
    pub failure_rate: f64,
    pub flagged_quenches: u64,
}

impl Summary {
    pub fn from_trials(trials: &[TrialRecord]) -> Self {
        let times: Vec<f64> = trials.iter().filter_map(|t| t.outcome.hit_time()).collect();
        let n = trials.len();
        let k = times.len();
        let mean = (k > 0).then(|| times.iter().sum::<f64>() / k as f64);
        let stderr = mean.filter(|_| k > 1).map(|m| {
            let var = times.iter().map(|t| (t - m).powi(2)).sum::<f64>() / (k - 1) as f64;
            (var / k as f64).sqrt()
        });
        Summary {
            n_trials: n,
            n_success: k,
            mean,
            stderr,
            failure_rate: if n == 0 { 0.0 } else { (n - k) as f64 / n as f64 },
            flagged_quenches: trials.iter().map(|t| t.flagged_quenches).sum(),
        }
    }
}

/// Monte Carlo hitting-time experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Experiment {
    pub x0: Vec<f64>,
    pub predicate: StopPredicate,
    pub t_max: f64,
    pub n_trials: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub label: String,
    pub master_seed: u64,
    pub rng: String,
    pub summary: Summary,
    pub config: DynamicsConfig,
    pub experiment: Experiment,
    pub trials: Vec<TrialRecord>,
}

pub const TRIAL_CSV_HEADER: &str = "trial_index,outcome_kind,time,seed";

impl ExperimentReport {
    pub fn mean(&self) -> Option<f64> {
        self.summary.mean
    }

    pub fn stderr(&self) -> Option<f64> {
        self.summary.stderr
    }

    pub fn failure_rate(&self) -> f64 {
        self.summary.failure_rate
    }

    /// One row per trial; `seed` is the trial's random stream index.
    pub fn trials_csv(&self) -> String {
        let mut out = String::from(TRIAL_CSV_HEADER);
        out.push('\n');
        for t in &self.trials {
            writeln!(out, "{},{},{},{}", t.trial_index, t.outcome.kind(), t.outcome.time(), t.stream).unwrap();
        }
        out
    }

    pub fn summary_json(&self) -> String {
        #[derive(Serialize)]
        struct View<'a> {
            label: &'a str,
            master_seed: u64,
            rng: &'a str,
            #[serde(flatten)]
            summary: &'a Summary,
            config: &'a DynamicsConfig,
            experiment: &'a Experiment,
        }
        serde_json::to_string_pretty(&View {
            label: &self.label,
            master_seed: self.master_seed,
            rng: &self.rng,
            summary: &self.summary,
            config: &self.config,
            experiment: &self.experiment,
        })
        .expect("report serializes")
    }
}

/// Run `n` independent jobs on `workers` threads (0 = all cores), results in
/// index order.
pub fn run_parallel<T, F>(n: usize, workers: usize, job: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    if workers == 1 {
        return (0..n).map(job).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Input(format!("cannot start worker pool: {e}")))?;
    pool.install(|| (0..n).into_par_iter().map(job).collect())
}

/// Run the trials of `experiment` using streams `stream_offset ..`.
pub fn run_experiment(
    label: impl Into<String>,
    config: &DynamicsConfig,
    potential: &dyn Potential,
    experiment: &Experiment,
    seed: u64,
    stream_offset: u64,
    workers: usize,
) -> Result<ExperimentReport> {
    if experiment.n_trials == 0 {
        return Err(Error::param("n_trials", "must be ≥ 1"));
    }
    config.validate()?;
    experiment.predicate.validate(potential.dimension())?;
    let x0 = DVector::from_column_slice(&experiment.x0);
    let trials = run_parallel(experiment.n_trials, workers, |i| {
        let stream = stream_offset + i as u64;
        let (outcome, flagged) = hitting_trial(
            config,
            potential,
            &x0,
            &experiment.predicate,
            experiment.t_max,
            RngStream::new(seed, stream),
        )?;
        Ok(TrialRecord {
            trial_index: i,
            stream,
            outcome,
            flagged_quenches: flagged,
        })
    })?;
    Ok(ExperimentReport {
        label: label.into(),
        master_seed: seed,
        rng: RngStream::ALGORITHM.to_string(),
        summary: Summary::from_trials(&trials),
        config: config.clone(),
        experiment: experiment.clone(),
        trials,
    })
}

/// Repeated hitting-time trials; the report's `failure_rate` is the fraction
/// of trials that timed out or diverged.
#[allow(clippy::too_many_arguments)]
pub fn failure_probability(
    config: &DynamicsConfig,
    potential: &dyn Potential,
    x0: &[f64],
    predicate: &StopPredicate,
    t_max: f64,
    n_trials: usize,
    seed: u64,
    workers: usize,
) -> Result<ExperimentReport> {
    let exp = Experiment {
        x0: x0.to_vec(),
        predicate: predicate.clone(),
        t_max,
        n_trials,
    };
    run_experiment("failure_probability", config, potential, &exp, seed, 0, workers)
}

/// Time to enter the ball `target` (typically around another minimum).
#[allow(clippy::too_many_arguments)]
pub fn transition_time(
    config: &DynamicsConfig,
    potential: &dyn Potential,
    x0: &[f64],
    target_center: &[f64],
    target_radius: f64,
    t_max: f64,
    n_trials: usize,
    seed: u64,
    workers: usize,
) -> Result<ExperimentReport> {
    let exp = Experiment {
        x0: x0.to_vec(),
        predicate: StopPredicate::ball(target_center, target_radius),
        t_max,
        n_trials,
    };
    run_experiment("transition_time", config, potential, &exp, seed, 0, workers)
}

/// Time until quenches along the trajectory have matched every catalog entry.
#[allow(clippy::too_many_arguments)]
pub fn visit_all_minima_time(
    config: &DynamicsConfig,
    potential: &dyn Potential,
    x0: &[f64],
    catalog: &MinimaCatalog,
    quench_settings: QuenchSettings,
    quench_period: f64,
    t_max: f64,
    n_trials: usize,
    seed: u64,
    workers: usize,
) -> Result<ExperimentReport> {
    let exp = Experiment {
        x0: x0.to_vec(),
        predicate: StopPredicate::AllMinimaVisited {
            catalog: catalog.clone(),
            period: quench_period,
            quench: quench_settings,
        },
        t_max,
        n_trials,
    };
    run_experiment("visit_all_minima", config, potential, &exp, seed, 0, workers)
}

/// One grid point of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub label: String,
    pub config: DynamicsConfig,
}

/// One report per grid point. Grid point `k` uses streams
/// `k·n_trials .. (k+1)·n_trials`, so every trial of the sweep is seeded
/// independently.
pub fn sweep(
    points: &[SweepPoint],
    potential: &dyn Potential,
    experiment: &Experiment,
    seed: u64,
    workers: usize,
) -> Result<Vec<ExperimentReport>> {
    if points.is_empty() {
        return Err(Error::param("grid", "sweep grid is empty"));
    }
    points
        .iter()
        .enumerate()
        .map(|(k, p)| {
            run_experiment(
                p.label.clone(),
                &p.config,
                potential,
                experiment,
                seed,
                (k * experiment.n_trials) as u64,
                workers,
            )
        })
        .collect()
}

/// Occupation histogram on a square torus grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram2d {
    pub bins: usize,
    pub period: f64,
    /// Row-major: `masses[i * bins + j]` covers `x ∈ bin i`, `y ∈ bin j`.
    pub masses: Vec<f64>,
}

impl Histogram2d {
    pub fn mass(&self, i: usize, j: usize) -> f64 {
        self.masses[i * self.bins + j]
    }

    pub fn bin_width(&self) -> f64 {
        self.period / self.bins as f64
    }

    pub fn bin_center(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.bin_width()
    }

    /// Total mass of bins whose centre lies within `radius` of `point`
    /// (minimum image).
    pub fn mass_near(&self, point: [f64; 2], radius: f64) -> f64 {
        let g = Geometry::Torus { period: self.period };
        let p = DVector::from_column_slice(&point);
        let mut total = 0.0;
        for i in 0..self.bins {
            for j in 0..self.bins {
                let c = DVector::from_vec(vec![self.bin_center(i), self.bin_center(j)]);
                if g.distance(&p, &c) <= radius {
                    total += self.mass(i, j);
                }
            }
        }
        total
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("ix,iy,x,y,mass\n");
        for i in 0..self.bins {
            for j in 0..self.bins {
                writeln!(out, "{i},{j},{},{},{}", self.bin_center(i), self.bin_center(j), self.mass(i, j)).unwrap();
            }
        }
        out
    }
}

/// `½ Σ |pᵢ - qᵢ|`.
pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// Time-weighted occupation of a single trajectory over `[burn_in, t_end]`.
///
/// Each step contributes its length to the bin holding the post-step state.
#[allow(clippy::too_many_arguments)]
pub fn invariant_histogram(
    config: &DynamicsConfig,
    potential: &dyn Potential,
    x0: &DVector<f64>,
    t_end: f64,
    burn_in: f64,
    bins: usize,
    rng: RngStream,
) -> Result<Histogram2d> {
    let Geometry::Torus { period } = potential.geometry() else {
        return Err(Error::UnsupportedDomain(
            "occupation histograms need a torus (bounded support)".into(),
        ));
    };
    if potential.dimension() != 2 {
        return Err(Error::UnsupportedDomain("occupation histograms are two-dimensional".into()));
    }
    if bins == 0 {
        return Err(Error::param("bins", "must be ≥ 1"));
    }
    if !(burn_in >= 0.0 && burn_in < t_end) {
        return Err(Error::param("burn_in", format!("must lie in [0, T), got {burn_in}")));
    }
    let mut counts = vec![0.0; bins * bins];
    let width = period / bins as f64;
    let index = |c: f64| ((c / width) as usize).min(bins - 1);
    let mut sim = Simulator::new(config, potential, x0, None, rng)?;
    sim.run(t_end, 1, |s, h| {
        if h > 0.0 && s.t > burn_in {
            let w = h.min(s.t - burn_in);
            counts[index(s.x[0]) * bins + index(s.x[1])] += w;
        }
        ControlFlow::Continue(())
    })?;
    let total: f64 = counts.iter().sum();
    Ok(Histogram2d {
        bins,
        period,
        masses: counts.into_iter().map(|c| c / total).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::DriftKind;
    use crate::landscape::{make_double_well, make_lennard_jones, ClusterParams, LennardJones};
    use approx::assert_abs_diff_eq;
    use nalgebra::DMatrix;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    struct FlatTorus;

    impl Potential for FlatTorus {
        fn dimension(&self) -> usize {
            2
        }
        fn geometry(&self) -> Geometry {
            Geometry::Torus { period: 1.0 }
        }
        fn energy(&self, _: &DVector<f64>) -> Result<f64> {
            Ok(0.0)
        }
        fn gradient(&self, _: &DVector<f64>) -> Result<DVector<f64>> {
            Ok(DVector::zeros(2))
        }
        fn hessian(&self, _: &DVector<f64>) -> Result<DMatrix<f64>> {
            Ok(DMatrix::zeros(2, 2))
        }
        fn name(&self) -> &'static str {
            "flat"
        }
    }

    #[test]
    fn quench_examples() {
        let p = make_double_well();
        let q = quench(&p, &v(&[1.0, 0.0]), 0.01, 1e-10, 100).unwrap();
        assert_eq!(q.x, v(&[1.0, 0.0]));
        assert_eq!(q.iterations, 0);
        let q = quench(&p, &v(&[0.5, 0.3]), 0.01, 1e-9, 100_000).unwrap();
        assert!(q.converged);
        assert_abs_diff_eq!(q.x, v(&[1.0, 0.0]), epsilon = 1e-8);
        assert_abs_diff_eq!(q.energy, 0.0, epsilon = 1e-15);
        let q = quench(&p, &v(&[0.5, 0.3]), 0.01, 1e-12, 3).unwrap();
        assert!(!q.converged);
    }

    #[test]
    fn quench_is_monotone_even_with_a_large_step() {
        let p = make_double_well();
        let mut last = f64::INFINITY;
        for iters in 0..40 {
            let q = quench(&p, &v(&[1.8, 1.2]), 0.5, 1e-12, iters).unwrap();
            assert!(q.energy <= last + ROUNDING_SLACK);
            last = q.energy;
        }
    }

    #[test]
    fn quench_lennard_jones_global_minimum() {
        let p = make_lennard_jones(ClusterParams { particles: 7 }).unwrap();
        let mut rng = RngStream::new(3, 0);
        let x = LennardJones::centered_hexagon(1.1) + rng.gaussian_vector(14) * 0.01;
        let q = quench(&p, &x, 2e-3, 1e-6, 500_000).unwrap();
        assert!(q.converged);
        assert!((q.energy + 12.53).abs() < 0.01, "{}", q.energy);
    }

    #[test]
    fn catalog_matching() {
        let cat = MinimaCatalog::lennard_jones_7();
        assert_eq!(match_minimum(&cat, -12.53).unwrap(), Some(0));
        assert_eq!(match_minimum(&cat, -11.47).unwrap(), Some(2));
        assert_eq!(match_minimum(&cat, 0.0).unwrap(), None);
        let wide = MinimaCatalog::from_energies(&[0.0, 1.0], 0.8).unwrap();
        assert!(matches!(match_minimum(&wide, 0.5), Err(Error::AmbiguousMatch { .. })));
        assert!(MinimaCatalog::from_energies(&[0.0, 0.5], 0.6).is_err());
        assert!(MinimaCatalog::from_energies(&[1.0, 0.5], 0.1).is_err());
        assert!(MinimaCatalog::from_energies(&[], 0.1).is_err());
    }

    #[test]
    fn summary_statistics() {
        let rec = |i, outcome| TrialRecord { trial_index: i, stream: i as u64, outcome, flagged_quenches: 0 };
        let trials = vec![
            rec(0, TrialOutcome::Hit { time: 1.0 }),
            rec(1, TrialOutcome::Hit { time: 2.0 }),
            rec(2, TrialOutcome::Diverged { time: 3.5 }),
            rec(3, TrialOutcome::Hit { time: 6.0 }),
        ];
        let s = Summary::from_trials(&trials);
        assert_eq!(s.mean, Some(3.0));
        // sample variance of (1, 2, 6) is 7
        assert_abs_diff_eq!(s.stderr.unwrap(), (7.0f64 / 3.0).sqrt(), epsilon = 1e-15);
        assert_eq!(s.failure_rate, 0.25);
        assert_eq!(s.failure_rate + s.n_success as f64 / s.n_trials as f64, 1.0);
    }

    #[test]
    fn hitting_time_examples() {
        let p = make_double_well();
        let cfg = DynamicsConfig::new(DriftKind::Isd, 0.0);
        let ball = StopPredicate::ball(&[0.0, 0.0], 0.1);
        let o = hitting_time(&cfg, &p, &v(&[0.05, 0.0]), &ball, 10.0, RngStream::new(0, 0)).unwrap();
        assert_eq!(o, TrialOutcome::Hit { time: 0.0 });
        let o = hitting_time(&cfg, &p, &v(&[0.9, 0.05]), &ball, 100.0, RngStream::new(0, 0)).unwrap();
        assert!(matches!(o, TrialOutcome::Diverged { .. }));
        let slow = DynamicsConfig::new(DriftKind::Langevin, 0.0);
        let o = hitting_time(&slow, &p, &v(&[0.5, 0.0]), &ball, 1.0, RngStream::new(0, 0)).unwrap();
        assert!(matches!(o, TrialOutcome::Timeout { .. }));
    }

    #[test]
    fn isd_hitting_time_matches_fine_step_flow() {
        // along y = 0 the ISD reduces to ẋ = -4x(1 - x²) for |x| < √(2/3),
        // so t = ⅛ ln[x₀²(1 - x₁²) / (x₁²(1 - x₀²))] from 0.5 to 0.1
        let exact = 0.125 * ((0.25f64 * 0.99) / (0.01 * 0.75)).ln();
        let p = make_double_well();
        let ball = StopPredicate::ball(&[0.0, 0.0], 0.1);
        let run = |dt: f64| {
            let cfg = DynamicsConfig::new(DriftKind::Isd, 0.0).with_dt(dt);
            hitting_time(&cfg, &p, &v(&[0.5, 0.0]), &ball, 10.0, RngStream::new(0, 0)).unwrap().hit_time().unwrap()
        };
        assert!((run(1e-5) - exact).abs() < 2e-5);
        assert!((run(1e-3) - exact).abs() < 2e-3);
    }

    #[test]
    fn failure_rate_of_an_always_successful_setup() {
        let p = make_double_well();
        let cfg = DynamicsConfig::new(DriftKind::Isd, 0.0);
        let r = failure_probability(&cfg, &p, &[0.5, 0.0], &StopPredicate::ball(&[0.0, 0.0], 0.1), 10.0, 4, 1, 1).unwrap();
        assert_eq!(r.failure_rate(), 0.0);
        assert_eq!(r.summary.n_success, 4);
    }

    #[test]
    fn transition_from_inside_target_is_instant() {
        let p = make_double_well();
        let cfg = DynamicsConfig::switched(DriftKind::Isd, 0.05, 1.0);
        let r = transition_time(&cfg, &p, &[1.0, 0.0], &[1.0, 0.0], 0.3, 5.0, 3, 9, 1).unwrap();
        assert!(r.trials.iter().all(|t| t.outcome == TrialOutcome::Hit { time: 0.0 }));
    }

    #[test]
    fn single_entry_catalog_is_visited_at_first_check() {
        let p = make_double_well();
        let cfg = DynamicsConfig::new(DriftKind::Langevin, 0.01);
        let cat = MinimaCatalog::from_energies(&[0.0], 0.01).unwrap();
        let r = visit_all_minima_time(&cfg, &p, &[1.0, 0.0], &cat, QuenchSettings::default(), 0.5, 5.0, 2, 0, 1).unwrap();
        for t in &r.trials {
            assert_abs_diff_eq!(t.outcome.hit_time().unwrap(), 0.5, epsilon = 1e-9);
        }
        // never crosses the unit barrier at this temperature
        let both = MinimaCatalog::from_energies(&[-0.5, 0.0], 0.01).unwrap();
        let r = visit_all_minima_time(&cfg, &p, &[1.0, 0.0], &both, QuenchSettings::default(), 0.5, 3.0, 2, 0, 1).unwrap();
        assert_eq!(r.failure_rate(), 1.0);
    }

    #[test]
    fn sweep_of_one_point_equals_the_experiment() {
        let p = make_double_well();
        let cfg = DynamicsConfig::new(DriftKind::IsdRegularized, 0.05);
        let exp = Experiment { x0: vec![0.9, 0.0], predicate: StopPredicate::ball(&[0.0, 0.0], 0.1), t_max: 20.0, n_trials: 5 };
        let single = run_experiment("p", &cfg, &p, &exp, 12, 0, 1).unwrap();
        let swept = sweep(&[SweepPoint { label: "p".into(), config: cfg.clone() }], &p, &exp, 12, 1).unwrap();
        assert_eq!(swept, vec![single.clone()]);
        let again = run_experiment("p", &cfg, &p, &exp, 12, 0, 3).unwrap();
        assert_eq!(again.trials_csv(), single.trials_csv());
        let back: ExperimentReport = serde_json::from_str(&serde_json::to_string(&single).unwrap()).unwrap();
        assert_eq!(back, single);
    }

    #[test]
    fn flat_histogram_is_uniform() {
        let cfg = DynamicsConfig::new(DriftKind::Langevin, 0.5).with_dt(1e-2);
        let bins = 4;
        let h = invariant_histogram(&cfg, &FlatTorus, &v(&[0.2, 0.7]), 4000.0, 10.0, bins, RngStream::new(5, 0)).unwrap();
        assert_abs_diff_eq!(h.masses.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        // correlated samples: allow 3σ of the multinomial error with an
        // effective sample count of T / (bin width² / 2ε)
        let n_eff = 3990.0 / (0.25f64.powi(2) / 1.0);
        let p = 1.0 / 16.0;
        let sigma = (p * (1.0 - p) / n_eff).sqrt();
        for m in &h.masses {
            assert!((m - p).abs() < 3.0 * sigma, "{m} vs {p} ± {sigma}");
        }
        let err = invariant_histogram(&cfg, &make_double_well(), &v(&[0.0, 0.0]), 1.0, 0.1, 4, RngStream::new(0, 0));
        assert!(matches!(err, Err(Error::UnsupportedDomain(_))));
    }

    #[test]
    fn random_clusters_respect_spacing() {
        let mut rng = RngStream::new(1, 2);
        let x = random_cluster(7, 1.6, 0.8, &mut rng);
        for i in 0..7 {
            for j in (i + 1)..7 {
                let d = ((x[2 * i] - x[2 * j]).powi(2) + (x[2 * i + 1] - x[2 * j + 1]).powi(2)).sqrt();
                assert!(d >= 0.8);
            }
        }
    }
}
