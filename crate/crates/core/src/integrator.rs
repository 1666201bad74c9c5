//! Euler–Maruyama time stepping for every process variant.
//!
//! A trajectory is `(t, x, [v, v2], mode)`. In mode 0 the position follows
//! the overdamped Langevin drift; in mode 1 it follows the configured saddle
//! search drift. Switching times come from an exponential clock of rate `ν`
//! and the step straddling a switch is truncated at the switch time, so the
//! switching law is exact.

use std::ops::ControlFlow;

use nalgebra::DVector;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dynamics::{
    drift_isd, drift_isd_regularized, gad_parts, gad_two_vector_parts, tangent_project, DriftKind,
    RegularizerSpec, UNIT_TOLERANCE,
};
use crate::error::{Error, Result};
use crate::landscape::{wrap_in_place, Geometry, Potential};
use crate::spectral::smallest_eigenpairs;

pub const DEFAULT_DIVERGENCE_CEILING: f64 = 1e6;

/// Discrete component of a switched process.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum Mode {
    /// Gradient descent (Langevin drift).
    Descent,
    /// Saddle search drift.
    Search,
}

impl Mode {
    pub fn index(self) -> u8 {
        match self {
            Mode::Descent => 0,
            Mode::Search => 1,
        }
    }

    pub fn flipped(self) -> Mode {
        match self {
            Mode::Descent => Mode::Search,
            Mode::Search => Mode::Descent,
        }
    }
}

impl From<Mode> for u8 {
    fn from(m: Mode) -> u8 {
        m.index()
    }
}

impl TryFrom<u8> for Mode {
    type Error = String;

    fn try_from(v: u8) -> std::result::Result<Self, String> {
        match v {
            0 => Ok(Mode::Descent),
            1 => Ok(Mode::Search),
            _ => Err(format!("mode must be 0 or 1, got {v}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GuardMode {
    /// Use the Langevin drift while `|x| > R`; the mode is left alone.
    RevertToLangevin,
    /// Jump to mode 0 as soon as `|x| ≥ R`.
    ForceModeZero,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Guard {
    pub radius: f64,
    pub mode: GuardMode,
}

/// How the auxiliary directions of the gentle variants are initialised when
/// not given explicitly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DirectionInit {
    /// Lowest Hessian eigenvector(s) at the initial point.
    #[default]
    Lowest,
    /// Uniform on the sphere (Gram–Schmidt for the second vector).
    Uniform,
}

/// Full parameterization of one process variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynamicsConfig {
    pub variant: DriftKind,
    /// Position temperature `ε`.
    pub epsilon: f64,
    /// Direction temperature `ε′` (gentle variants).
    pub epsilon_dir: f64,
    /// Direction relaxation time `η` (gentle variants).
    pub eta: f64,
    /// Switching rate `ν`; zero freezes the mode.
    pub nu: f64,
    /// Time step `δ`.
    pub dt: f64,
    pub regularizer: RegularizerSpec,
    pub guard: Option<Guard>,
    pub initial_mode: Mode,
    pub direction_init: DirectionInit,
    /// `|x|` beyond which a Euclidean trajectory is declared divergent.
    pub divergence_ceiling: f64,
}

impl DynamicsConfig {
    /// Noise-free-mode defaults around a variant: `ν = 0`, mode 1, `δ = 10⁻³`.
    pub fn new(variant: DriftKind, epsilon: f64) -> Self {
        DynamicsConfig {
            variant,
            epsilon,
            epsilon_dir: 0.0,
            eta: 0.1,
            nu: 0.0,
            dt: 1e-3,
            regularizer: RegularizerSpec::none(),
            guard: None,
            initial_mode: if variant == DriftKind::Langevin {
                Mode::Descent
            } else {
                Mode::Search
            },
            direction_init: DirectionInit::Lowest,
            divergence_ceiling: DEFAULT_DIVERGENCE_CEILING,
        }
    }

    /// Switched process started in mode 0.
    pub fn switched(variant: DriftKind, epsilon: f64, nu: f64) -> Self {
        DynamicsConfig {
            nu,
            initial_mode: Mode::Descent,
            ..DynamicsConfig::new(variant, epsilon)
        }
    }

    pub fn with_dt(mut self, dt: f64) -> Self {
        self.dt = dt;
        self
    }

    pub fn with_regularizer(mut self, spec: RegularizerSpec) -> Self {
        self.regularizer = spec;
        self
    }

    pub fn with_guard(mut self, guard: Guard) -> Self {
        self.guard = Some(guard);
        self
    }

    pub fn validate(&self) -> Result<()> {
        let nonneg = |name: &'static str, v: f64| {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                Err(Error::param(name, format!("must be ≥ 0, got {v}")))
            }
        };
        let pos = |name: &'static str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::param(name, format!("must be > 0, got {v}")))
            }
        };
        nonneg("epsilon", self.epsilon)?;
        nonneg("epsilon_dir", self.epsilon_dir)?;
        nonneg("nu", self.nu)?;
        pos("eta", self.eta)?;
        pos("dt", self.dt)?;
        pos("divergence_ceiling", self.divergence_ceiling)?;
        self.regularizer.validate()?;
        if let Some(g) = &self.guard {
            pos("guard.radius", g.radius)?;
        }
        if self.variant == DriftKind::GadTwoVector && self.epsilon_dir > 0.0 {
            return Err(Error::param(
                "epsilon_dir",
                "the two-vector variant only supports ε′ = 0",
            ));
        }
        Ok(())
    }
}

/// Instantaneous state of any process variant.
#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub t: f64,
    pub x: DVector<f64>,
    pub v: Option<DVector<f64>>,
    pub v2: Option<DVector<f64>>,
    pub mode: Mode,
    pub next_switch: f64,
}

/// Deterministic random stream addressed by `(master seed, stream index)`.
///
/// ChaCha8 keyed by the seed, with the stream index selecting ChaCha's
/// 64-bit stream id, so streams never overlap and are platform independent.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    index: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub const ALGORITHM: &'static str = "chacha8";

    pub fn new(seed: u64, index: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(index);
        RngStream { seed, index, rng }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn index(&self) -> u64 {
        self.index
    }

    pub fn gaussian(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }

    pub fn gaussian_vector(&mut self, d: usize) -> DVector<f64> {
        DVector::from_fn(d, |_, _| self.gaussian())
    }

    pub fn unit_vector(&mut self, d: usize) -> DVector<f64> {
        loop {
            let g = self.gaussian_vector(d);
            let n = g.norm();
            if n > 1e-12 {
                return g / n;
            }
        }
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}

/// Next event time of a Poisson clock of rate `nu`; `+∞` when `nu = 0`.
pub fn sample_switch_time(nu: f64, now: f64, rng: &mut RngStream) -> f64 {
    if nu <= 0.0 {
        return f64::INFINITY;
    }
    let exp = Exp::new(nu).expect("rate is positive");
    now + exp.sample(rng)
}

fn outside_guard(x: &DVector<f64>, geometry: Geometry, guard: &Guard) -> bool {
    geometry == Geometry::Euclidean && x.norm() > guard.radius
}

/// Radius-based stability modification.
///
/// With [`GuardMode::ForceModeZero`] a mode-1 state with `|x| ≥ R` jumps to
/// mode 0 and gets a fresh switching time. [`GuardMode::RevertToLangevin`]
/// acts inside the drift selection and leaves the state untouched here. On a
/// torus the guard never fires.
pub fn apply_guard(
    state: &SimState,
    config: &DynamicsConfig,
    geometry: Geometry,
    rng: &mut RngStream,
) -> SimState {
    let mut out = state.clone();
    if let Some(guard) = &config.guard {
        if guard.mode == GuardMode::ForceModeZero
            && geometry == Geometry::Euclidean
            && state.mode == Mode::Search
            && state.x.norm() >= guard.radius
        {
            out.mode = Mode::Descent;
            out.next_switch = sample_switch_time(config.nu, state.t, rng);
        }
    }
    out
}

/// Build the initial state, filling in default directions for the gentle
/// variants.
pub fn initial_state(
    config: &DynamicsConfig,
    potential: &dyn Potential,
    x0: &DVector<f64>,
    directions: Option<&[DVector<f64>]>,
    rng: &mut RngStream,
) -> Result<SimState> {
    config.validate()?;
    let d = potential.dimension();
    if x0.len() != d {
        return Err(Error::Input(format!("x0 has dimension {}, expected {d}", x0.len())));
    }
    if x0.iter().any(|c| !c.is_finite()) {
        return Err(Error::Input("x0 has non-finite entries".into()));
    }
    let needed = config.variant.direction_count();
    let mut dirs: Vec<DVector<f64>> = match directions {
        Some(given) if !given.is_empty() => {
            if given.len() != needed {
                return Err(Error::Input(format!(
                    "variant {:?} carries {needed} direction(s), {} given",
                    config.variant,
                    given.len()
                )));
            }
            for v in given {
                if v.len() != d || (v.norm() - 1.0).abs() > UNIT_TOLERANCE {
                    return Err(Error::Contract("initial directions must be unit vectors in ℝᵈ".into()));
                }
            }
            given.to_vec()
        }
        _ if needed == 0 => Vec::new(),
        _ => match config.direction_init {
            DirectionInit::Lowest => smallest_eigenpairs(&potential.hessian(x0)?, needed)?.eigenvectors,
            DirectionInit::Uniform => {
                let v1 = rng.unit_vector(d);
                let mut out = vec![v1];
                if needed == 2 {
                    loop {
                        let w = tangent_project(&out[0], &rng.unit_vector(d));
                        if w.norm() > 1e-6 {
                            out.push(w.normalize());
                            break;
                        }
                    }
                }
                out
            }
        },
    };
    if needed == 2 && dirs[0].dot(&dirs[1]).abs() > UNIT_TOLERANCE {
        return Err(Error::Contract("initial directions must be orthogonal".into()));
    }
    let v2 = if needed == 2 { dirs.pop() } else { None };
    let v = dirs.pop();
    let mut x = x0.clone();
    wrap_in_place(&mut x, potential.geometry());
    Ok(SimState {
        t: 0.0,
        x,
        v,
        v2,
        mode: config.initial_mode,
        next_switch: sample_switch_time(config.nu, 0.0, rng),
    })
}

/// One Euler–Maruyama step of length `config.dt`.
///
/// Requires `t + δ ≤ next_switch`: the mode is held fixed over the step.
pub fn em_step(
    state: &SimState,
    config: &DynamicsConfig,
    potential: &dyn Potential,
    rng: &mut RngStream,
) -> Result<SimState> {
    if state.t + config.dt > state.next_switch {
        return Err(Error::Contract(format!(
            "step [{}, {}] straddles the switch at {}",
            state.t,
            state.t + config.dt,
            state.next_switch
        )));
    }
    let mut next = state.clone();
    advance(&mut next, config, potential, rng, config.dt)?;
    Ok(next)
}

/// Advance `state` in place by `h` with the mode held fixed.
fn advance(
    state: &mut SimState,
    config: &DynamicsConfig,
    potential: &dyn Potential,
    rng: &mut RngStream,
    h: f64,
) -> Result<()> {
    let geometry = potential.geometry();
    let d = state.x.len();
    let search = state.mode == Mode::Search
        && !config
            .guard
            .as_ref()
            .is_some_and(|g| g.mode == GuardMode::RevertToLangevin && outside_guard(&state.x, geometry, g));

    let mut new_v = None;
    let mut new_v2 = None;
    let drift = match config.variant {
        DriftKind::Langevin => -potential.gradient(&state.x)?,
        DriftKind::Isd if search => drift_isd(potential, &state.x)?,
        DriftKind::IsdRegularized if search => drift_isd_regularized(potential, &state.x, &config.regularizer)?,
        DriftKind::Isd | DriftKind::IsdRegularized => -potential.gradient(&state.x)?,
        DriftKind::Gad => {
            let v = state.v.as_ref().ok_or_else(|| Error::Contract("gentle variant without direction".into()))?;
            let g = potential.gradient(&state.x)?;
            let hess = potential.hessian(&state.x)?;
            let (dx, dv) = gad_parts(&g, &hess, v, config.eta);
            let mut v_new = v + dv * h;
            if config.epsilon_dir > 0.0 {
                let noise = rng.gaussian_vector(d) * (2.0 * config.epsilon_dir * h).sqrt();
                v_new += tangent_project(v, &noise);
                v_new -= v * (d as f64 * config.epsilon_dir * h);
            }
            new_v = Some(normalized(v_new)?);
            if search {
                dx
            } else {
                -g
            }
        }
        DriftKind::GadTwoVector => {
            let (v1, v2) = match (&state.v, &state.v2) {
                (Some(a), Some(b)) => (a, b),
                _ => return Err(Error::Contract("two-vector variant without directions".into())),
            };
            let g = potential.gradient(&state.x)?;
            let hess = potential.hessian(&state.x)?;
            let (dx, dv1, dv2) = gad_two_vector_parts(&g, &hess, v1, v2, config.eta, &config.regularizer);
            let v1_new = normalized(v1 + dv1 * h)?;
            let w = v2 + dv2 * h;
            let w = &w - &v1_new * v1_new.dot(&w);
            new_v2 = Some(normalized(w)?);
            new_v = Some(v1_new);
            if search {
                dx
            } else {
                -g
            }
        }
    };

    state.x.axpy(h, &drift, 1.0);
    if config.epsilon > 0.0 {
        let scale = (2.0 * config.epsilon * h).sqrt();
        for c in state.x.iter_mut() {
            *c += scale * rng.gaussian();
        }
    }
    wrap_in_place(&mut state.x, geometry);
    if new_v.is_some() {
        state.v = new_v;
    }
    if new_v2.is_some() {
        state.v2 = new_v2;
    }
    state.t += h;
    Ok(())
}

fn normalized(v: DVector<f64>) -> Result<DVector<f64>> {
    let n = v.norm();
    if !(n.is_finite() && n > 1e-300) {
        return Err(Error::Evaluation(format!("direction update degenerated (|v| = {n})")));
    }
    Ok(v / n)
}

/// Step-driven simulation of one trajectory.
pub struct Simulator<'a> {
    config: &'a DynamicsConfig,
    potential: &'a dyn Potential,
    rng: RngStream,
    state: SimState,
    steps: u64,
}

impl<'a> Simulator<'a> {
    pub fn new(
        config: &'a DynamicsConfig,
        potential: &'a dyn Potential,
        x0: &DVector<f64>,
        directions: Option<&[DVector<f64>]>,
        mut rng: RngStream,
    ) -> Result<Self> {
        let state = initial_state(config, potential, x0, directions, &mut rng)?;
        Ok(Simulator {
            config,
            potential,
            rng,
            state,
            steps: 0,
        })
    }

    pub fn state(&self) -> &SimState {
        &self.state
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn potential(&self) -> &dyn Potential {
        self.potential
    }

    /// Take one step, shortened to land exactly on the next switch or on
    /// `t_end`. Returns the length of the step taken.
    pub fn step_towards(&mut self, t_end: f64) -> Result<f64> {
        let geometry = self.potential.geometry();
        let t = self.state.t;
        let to_switch = self.state.next_switch - t;
        let to_end = t_end - t;
        // a remainder within rounding of one step lands exactly on t_end
        let last = to_end <= self.config.dt * (1.0 + 1e-9);
        let h = if last { to_end } else { self.config.dt }.min(to_switch);
        let hits_switch = h >= to_switch;
        let hits_end = last && h >= to_end;
        advance(&mut self.state, self.config, self.potential, &mut self.rng, h)?;
        if hits_switch {
            let ts = self.state.next_switch;
            self.state.t = ts;
            self.state.mode = self.state.mode.flipped();
            self.state.next_switch = sample_switch_time(self.config.nu, ts, &mut self.rng);
        } else if hits_end {
            self.state.t = t_end;
        }
        if self.config.guard.is_some() {
            self.state = apply_guard(&self.state, self.config, geometry, &mut self.rng);
        }
        if geometry == Geometry::Euclidean {
            let norm = self.state.x.norm();
            if !(norm <= self.config.divergence_ceiling) {
                return Err(Error::Divergence { t: self.state.t, norm });
            }
        }
        self.steps += 1;
        Ok(h)
    }

    /// Run until `t_end` (or until the observer breaks).
    ///
    /// The observer sees the initial state and then the state after every
    /// `stride`-th step, together with the length of that step (zero for the
    /// initial call).
    pub fn run<F>(&mut self, t_end: f64, stride: u64, mut observer: F) -> Result<bool>
    where
        F: FnMut(&SimState, f64) -> ControlFlow<()>,
    {
        let stride = stride.max(1);
        if observer(&self.state, 0.0).is_break() {
            return Ok(true);
        }
        let tol = 1e-9 * self.config.dt;
        while self.state.t < t_end - tol {
            let h = self.step_towards(t_end)?;
            if self.steps.is_multiple_of(stride) && observer(&self.state, h).is_break() {
                return Ok(true);
            }
        }
        Ok(false)
    }

    pub fn into_state(self) -> SimState {
        self.state
    }
}

/// Simulate `[0, t_end]` and return the final state.
#[allow(clippy::too_many_arguments)]
pub fn simulate<F>(
    config: &DynamicsConfig,
    potential: &dyn Potential,
    x0: &DVector<f64>,
    directions: Option<&[DVector<f64>]>,
    t_end: f64,
    stride: u64,
    rng: RngStream,
    observer: F,
) -> Result<SimState>
where
    F: FnMut(&SimState, f64) -> ControlFlow<()>,
{
    if !(t_end.is_finite() && t_end > 0.0) {
        return Err(Error::param("T", format!("horizon must be > 0, got {t_end}")));
    }
    let mut sim = Simulator::new(config, potential, x0, directions, rng)?;
    sim.run(t_end, stride, observer)?;
    Ok(sim.into_state())
}
