//! TOML run configuration.
//!
//! ```toml
//! seed = 1
//! workers = 0          # 0 = all cores
//! output = "out"
//!
//! [potential]
//! name = "double_well" # or "mixture", "lennard_jones"
//!
//! [dynamics]
//! variant = "isd"
//! epsilon = 0.05
//! dt = 1e-3
//!
//! [run]
//! t_end = 10.0
//! ```
//!
//! [`parse_config`] fills every documented default, so a parsed config
//! serializes (with [`to_toml`]) to a file that parses back to an equal value.

use std::fmt;

use nalgebra::DVector;
use saddle_switch::dynamics::{CutKind, DriftKind, RegularizerSpec};
use saddle_switch::experiments::{MinimaCatalog, QuenchSettings, StopPredicate};
use saddle_switch::integrator::{DirectionInit, DynamicsConfig, Guard, GuardMode, Mode, DEFAULT_DIVERGENCE_CEILING};
use saddle_switch::landscape::{
    make_double_well, make_lennard_jones, make_mixture, ClusterParams, LennardJones, MixtureParams, Potential,
};
use saddle_switch::Error as CoreError;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConfigErrorKind {
    Syntax,
    UnknownKey,
    TypeMismatch,
    MissingField,
    Constraint,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub kind: ConfigErrorKind,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PotentialName {
    DoubleWell,
    Mixture,
    LennardJones,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialSection {
    pub name: PotentialName,
    /// Mixture: centre of the second component.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub center: Option<[f64; 2]>,
    /// Mixture: `(s_x, s_y)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stiffness: Option<[f64; 2]>,
    /// Mixture: periodization length; the torus has period `π·L`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub period_length: Option<f64>,
    /// Lennard-Jones: particle count.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub particles: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DynamicsSection {
    pub variant: DriftKind,
    pub epsilon: f64,
    #[serde(default)]
    pub epsilon_dir: f64,
    #[serde(default = "default_eta")]
    pub eta: f64,
    #[serde(default)]
    pub nu: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_cut")]
    pub cut: CutKind,
    #[serde(default = "default_r_star")]
    pub r_star: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub guard_radius: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub guard_mode: Option<GuardMode>,
    /// 0 or 1; defaults to 1 for a saddle-search variant with `nu = 0`,
    /// else 0.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_mode: Option<u8>,
    #[serde(default)]
    pub direction_init: DirectionInit,
    #[serde(default = "default_ceiling")]
    pub divergence_ceiling: f64,
}

fn default_eta() -> f64 {
    0.1
}
fn default_dt() -> f64 {
    1e-3
}
fn default_cut() -> CutKind {
    CutKind::None
}
fn default_r_star() -> f64 {
    1.0
}
fn default_ceiling() -> f64 {
    DEFAULT_DIVERGENCE_CEILING
}
fn default_t_end() -> f64 {
    10.0
}
fn default_stride() -> u64 {
    1
}
fn default_n_trials() -> usize {
    100
}
fn default_bins() -> usize {
    40
}
fn default_output() -> String {
    "out".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    #[serde(default = "default_t_end")]
    pub t_end: f64,
    #[serde(default = "default_stride")]
    pub stride: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            t_end: default_t_end(),
            stride: default_stride(),
            x0: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    HittingTime,
    FailureProbability,
    TransitionTime,
    VisitAllMinima,
}

impl ExperimentKind {
    pub fn label(self) -> &'static str {
        match self {
            ExperimentKind::HittingTime => "hitting_time",
            ExperimentKind::FailureProbability => "failure_probability",
            ExperimentKind::TransitionTime => "transition_time",
            ExperimentKind::VisitAllMinima => "visit_all_minima",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    pub kind: ExperimentKind,
    #[serde(default = "default_n_trials")]
    pub n_trials: usize,
    pub t_max: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
    /// Ball target; hitting-time experiments default to radius 0.1 around
    /// the origin.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_center: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_radius: Option<f64>,
    /// Stop when `U(x)` drops below this instead of entering a ball.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub energy_below: Option<f64>,
    /// Catalog energies for `visit_all_minima` (the seven-particle
    /// Lennard-Jones catalog by default).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub catalog: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub match_tolerance: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quench_period: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quench: Option<QuenchSettings>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HistogramSection {
    pub t_end: f64,
    /// Defaults to 10% of `t_end`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub burn_in: Option<f64>,
    #[serde(default = "default_bins")]
    pub bins: usize,
}

/// Cartesian grid; a missing axis keeps the `[dynamics]` value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nu: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cut: Option<Vec<CutKind>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub workers: usize,
    #[serde(default = "default_output")]
    pub output: String,
    pub potential: PotentialSection,
    pub dynamics: DynamicsSection,
    #[serde(default)]
    pub run: RunSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub experiment: Option<ExperimentSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub histogram: Option<HistogramSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSection>,
}

/// Parse, fill defaults and validate.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let mut cfg: RunConfig = toml::from_str(text).map_err(|e| classify_toml_error(&e))?;
    cfg.fill_defaults();
    cfg.validate().map_err(|(section, key, reason)| {
        let shown = match symbol(key) {
            Some(s) => format!("`{key}` ({s})"),
            None => format!("`{key}`"),
        };
        let at = locate(text, section, key).map(|l| format!(" at line {l}")).unwrap_or_default();
        let place = if section.is_empty() { String::new() } else { format!(" in [{section}]") };
        ConfigError {
            kind: ConfigErrorKind::Constraint,
            message: format!("invalid value for {shown}{place}{at}: {reason}"),
        }
    })?;
    Ok(cfg)
}

pub fn to_toml(cfg: &RunConfig) -> String {
    toml::to_string(cfg).expect("configuration serializes")
}

fn classify_toml_error(e: &toml::de::Error) -> ConfigError {
    let msg = e.message();
    let kind = if msg.starts_with("unknown field") || msg.starts_with("unknown variant") {
        ConfigErrorKind::UnknownKey
    } else if msg.starts_with("missing field") {
        ConfigErrorKind::MissingField
    } else if msg.starts_with("invalid type") || msg.starts_with("invalid value") || msg.starts_with("invalid length") {
        ConfigErrorKind::TypeMismatch
    } else {
        ConfigErrorKind::Syntax
    };
    let prefix = match kind {
        ConfigErrorKind::UnknownKey => "unknown key",
        ConfigErrorKind::MissingField => "missing required key",
        ConfigErrorKind::TypeMismatch => "type mismatch",
        _ => "syntax error",
    };
    ConfigError {
        kind,
        message: format!("{prefix}: {}", e.to_string().trim_end()),
    }
}

fn symbol(key: &str) -> Option<&'static str> {
    Some(match key {
        "epsilon" => "ε",
        "epsilon_dir" => "ε′",
        "nu" => "ν",
        "dt" => "δ",
        "eta" => "η",
        "r_star" => "r*",
        "t_end" | "t_max" => "T",
        _ => return None,
    })
}

/// 1-based line of `key = …` inside `[section]` (top level when empty).
pub fn locate(text: &str, section: &str, key: &str) -> Option<usize> {
    let mut current = String::new();
    for (i, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if let Some(rest) = trimmed.strip_prefix('[') {
            current = rest.trim_end_matches(']').trim().to_string();
            continue;
        }
        if current == section {
            if let Some((k, _)) = trimmed.split_once('=') {
                if k.trim().trim_matches('"') == key {
                    return Some(i + 1);
                }
            }
        }
    }
    None
}

type Violation = (&'static str, &'static str, String);

fn check(ok: bool, section: &'static str, key: &'static str, reason: impl FnOnce() -> String) -> Result<(), Violation> {
    if ok {
        Ok(())
    } else {
        Err((section, key, reason()))
    }
}

fn positive(section: &'static str, key: &'static str, v: f64) -> Result<(), Violation> {
    check(v.is_finite() && v > 0.0, section, key, || format!("must be > 0, got {v}"))
}

/// Map a core parameter name onto the config key that feeds it.
fn core_key(name: &str) -> (&'static str, &'static str) {
    match name {
        "epsilon" => ("dynamics", "epsilon"),
        "epsilon_dir" => ("dynamics", "epsilon_dir"),
        "nu" => ("dynamics", "nu"),
        "eta" => ("dynamics", "eta"),
        "dt" => ("dynamics", "dt"),
        "divergence_ceiling" => ("dynamics", "divergence_ceiling"),
        "guard.radius" => ("dynamics", "guard_radius"),
        "r_star" => ("dynamics", "r_star"),
        "s_x" | "s_y" => ("potential", "stiffness"),
        "L" => ("potential", "period_length"),
        "N" | "particles" => ("potential", "particles"),
        _ => ("", "configuration"),
    }
}

fn from_core(e: CoreError) -> Violation {
    match e {
        CoreError::Parameter { name, reason } => {
            let (section, key) = core_key(name);
            (section, key, reason)
        }
        other => ("", "configuration", other.to_string()),
    }
}

impl RunConfig {
    fn fill_defaults(&mut self) {
        if self.potential.name == PotentialName::Mixture {
            let d = MixtureParams::default();
            self.potential.center.get_or_insert(d.center);
            self.potential.stiffness.get_or_insert(d.stiffness);
        }
        if self.potential.name == PotentialName::LennardJones {
            self.potential.particles.get_or_insert(ClusterParams::default().particles);
        }
        let dynamics = &mut self.dynamics;
        if dynamics.initial_mode.is_none() {
            let search = dynamics.nu == 0.0 && dynamics.variant != DriftKind::Langevin;
            dynamics.initial_mode = Some(u8::from(search));
        }
        if dynamics.guard_radius.is_some() && dynamics.guard_mode.is_none() {
            dynamics.guard_mode = Some(GuardMode::ForceModeZero);
        }
        if let Some(h) = &mut self.histogram {
            h.burn_in.get_or_insert(0.1 * h.t_end);
        }
        let lj7 = self.potential.name == PotentialName::LennardJones && self.potential.particles == Some(7);
        if let Some(e) = &mut self.experiment {
            match e.kind {
                ExperimentKind::HittingTime | ExperimentKind::FailureProbability => {
                    if e.energy_below.is_none() {
                        e.target_radius.get_or_insert(0.1);
                    }
                }
                ExperimentKind::TransitionTime => {
                    e.target_radius.get_or_insert(0.3);
                }
                ExperimentKind::VisitAllMinima => {
                    if e.catalog.is_none() && lj7 {
                        let cat = MinimaCatalog::lennard_jones_7();
                        e.catalog = Some(cat.entries().iter().map(|c| c.energy).collect());
                        e.match_tolerance.get_or_insert(cat.tolerance());
                    }
                    e.match_tolerance.get_or_insert(0.01);
                    e.quench_period.get_or_insert(0.5);
                    e.quench.get_or_insert_with(QuenchSettings::default);
                }
            }
        }
    }

    fn validate(&self) -> Result<(), Violation> {
        let potential = self.build_potential().map_err(from_core)?;
        let d = potential.dimension();
        let dynamics = self.dynamics_config().map_err(from_core)?;
        dynamics.validate().map_err(from_core)?;
        check(
            matches!(self.dynamics.initial_mode, Some(0 | 1)),
            "dynamics",
            "initial_mode",
            || "must be 0 or 1".into(),
        )?;
        if self.dynamics.variant == DriftKind::IsdRegularized && d < 2 {
            return Err(("dynamics", "variant", "isd_regularized needs d ≥ 2".into()));
        }
        positive("run", "t_end", self.run.t_end)?;
        check(self.run.stride >= 1, "run", "stride", || "must be ≥ 1".into())?;
        if let Some(x0) = &self.run.x0 {
            check(x0.len() == d, "run", "x0", || format!("needs {d} coordinates, got {}", x0.len()))?;
        }
        if let Some(e) = &self.experiment {
            check(e.n_trials >= 1, "experiment", "n_trials", || "must be ≥ 1".into())?;
            positive("experiment", "t_max", e.t_max)?;
            if let Some(x0) = &e.x0 {
                check(x0.len() == d, "experiment", "x0", || format!("needs {d} coordinates, got {}", x0.len()))?;
            }
            if let Some(c) = &e.target_center {
                check(c.len() == d, "experiment", "target_center", || {
                    format!("needs {d} coordinates, got {}", c.len())
                })?;
            }
            if let Some(r) = e.target_radius {
                positive("experiment", "target_radius", r)?;
            }
            match e.kind {
                ExperimentKind::TransitionTime => {
                    check(e.target_center.is_some(), "experiment", "target_center", || {
                        "required for transition_time".into()
                    })?;
                }
                ExperimentKind::VisitAllMinima => {
                    check(e.catalog.is_some(), "experiment", "catalog", || {
                        "required for visit_all_minima on this potential".into()
                    })?;
                    positive("experiment", "quench_period", e.quench_period.unwrap_or(0.0))?;
                    self.catalog()
                        .expect("catalog present")
                        .map_err(|err| ("experiment", "catalog", err.to_string()))?;
                    let q = e.quench.unwrap_or_default();
                    positive("experiment", "quench", q.step.min(q.tol))?;
                }
                _ => {}
            }
        }
        if let Some(h) = &self.histogram {
            positive("histogram", "t_end", h.t_end)?;
            check(h.bins >= 1, "histogram", "bins", || "must be ≥ 1".into())?;
            let b = h.burn_in.unwrap_or(0.0);
            check(b >= 0.0 && b < h.t_end, "histogram", "burn_in", || format!("must lie in [0, t_end), got {b}"))?;
        }
        if let Some(s) = &self.sweep {
            check(
                s.epsilon.is_some() || s.nu.is_some() || s.cut.is_some(),
                "sweep",
                "epsilon",
                || "the grid needs at least one of epsilon, nu, cut".into(),
            )?;
            for (key, len) in [
                ("epsilon", s.epsilon.as_ref().map(Vec::len)),
                ("nu", s.nu.as_ref().map(Vec::len)),
                ("cut", s.cut.as_ref().map(Vec::len)),
            ] {
                check(len != Some(0), "sweep", key, || "grid axis is empty".into())?;
            }
            for p in self.sweep_points() {
                p.1.validate().map_err(|e| {
                    let (_, key, reason) = from_core(e);
                    ("sweep", key, reason)
                })?;
            }
        }
        Ok(())
    }

    pub fn build_potential(&self) -> Result<Box<dyn Potential>, CoreError> {
        let p = &self.potential;
        Ok(match p.name {
            PotentialName::DoubleWell => Box::new(make_double_well()),
            PotentialName::Mixture => {
                let d = MixtureParams::default();
                Box::new(make_mixture(MixtureParams {
                    center: p.center.unwrap_or(d.center),
                    stiffness: p.stiffness.unwrap_or(d.stiffness),
                    period_length: p.period_length,
                })?)
            }
            PotentialName::LennardJones => Box::new(make_lennard_jones(ClusterParams {
                particles: p.particles.unwrap_or(ClusterParams::default().particles),
            })?),
        })
    }

    pub fn dynamics_config(&self) -> Result<DynamicsConfig, CoreError> {
        let s = &self.dynamics;
        let regularizer = RegularizerSpec {
            kind: s.cut,
            r_star: s.r_star,
        };
        regularizer.validate()?;
        let mut cfg = DynamicsConfig::new(s.variant, s.epsilon);
        cfg.epsilon_dir = s.epsilon_dir;
        cfg.eta = s.eta;
        cfg.nu = s.nu;
        cfg.dt = s.dt;
        cfg.regularizer = regularizer;
        cfg.guard = s.guard_radius.map(|radius| Guard {
            radius,
            mode: s.guard_mode.unwrap_or(GuardMode::ForceModeZero),
        });
        cfg.initial_mode = if s.initial_mode == Some(1) { Mode::Search } else { Mode::Descent };
        cfg.direction_init = s.direction_init;
        cfg.divergence_ceiling = s.divergence_ceiling;
        Ok(cfg)
    }

    /// Starting point: `[run] x0`, else a potential-specific default.
    pub fn start_point(&self) -> DVector<f64> {
        if let Some(x0) = &self.run.x0 {
            return DVector::from_column_slice(x0);
        }
        match self.potential.name {
            PotentialName::DoubleWell => DVector::from_vec(vec![1.0, 0.0]),
            PotentialName::Mixture => {
                let c = self.potential.center.unwrap_or(MixtureParams::default().center);
                DVector::from_vec(c.to_vec())
            }
            PotentialName::LennardJones => {
                let n = self.potential.particles.unwrap_or(7);
                let lj = LennardJones::new(ClusterParams { particles: n }).expect("validated particle count");
                if n == 7 {
                    LennardJones::centered_hexagon(1.12)
                } else {
                    lj.lattice_start(1.12)
                }
            }
        }
    }

    pub fn experiment_start(&self) -> DVector<f64> {
        match self.experiment.as_ref().and_then(|e| e.x0.as_ref()) {
            Some(x0) => DVector::from_column_slice(x0),
            None => self.start_point(),
        }
    }

    fn catalog(&self) -> Option<Result<MinimaCatalog, CoreError>> {
        let e = self.experiment.as_ref()?;
        let energies = e.catalog.as_ref()?;
        Some(MinimaCatalog::from_energies(energies, e.match_tolerance.unwrap_or(0.01)))
    }

    /// Stopping rule of the `[experiment]` section.
    pub fn predicate(&self) -> Option<StopPredicate> {
        let e = self.experiment.as_ref()?;
        let d = self.potential_dimension();
        Some(match e.kind {
            ExperimentKind::VisitAllMinima => StopPredicate::AllMinimaVisited {
                catalog: self.catalog()?.ok()?,
                period: e.quench_period.unwrap_or(0.5),
                quench: e.quench.unwrap_or_default(),
            },
            _ => match e.energy_below {
                Some(threshold) => StopPredicate::EnergyBelow { threshold },
                None => StopPredicate::Ball {
                    center: e.target_center.clone().unwrap_or_else(|| vec![0.0; d]),
                    radius: e.target_radius.unwrap_or(0.1),
                },
            },
        })
    }

    pub fn potential_dimension(&self) -> usize {
        match self.potential.name {
            PotentialName::DoubleWell | PotentialName::Mixture => 2,
            PotentialName::LennardJones => 2 * self.potential.particles.unwrap_or(7),
        }
    }

    /// `(label, config)` for every grid point, epsilon outermost.
    pub fn sweep_points(&self) -> Vec<(String, DynamicsConfig)> {
        let Some(s) = &self.sweep else {
            return Vec::new();
        };
        let Ok(base) = self.dynamics_config() else {
            return Vec::new();
        };
        let eps = s.epsilon.clone().unwrap_or_else(|| vec![base.epsilon]);
        let nus = s.nu.clone().unwrap_or_else(|| vec![base.nu]);
        let cuts = s.cut.clone().unwrap_or_else(|| vec![base.regularizer.kind]);
        let mut out = Vec::new();
        for &e in &eps {
            for &n in &nus {
                for &c in &cuts {
                    let mut cfg = base.clone();
                    cfg.epsilon = e;
                    cfg.nu = n;
                    cfg.regularizer.kind = c;
                    let cut = serde_json::to_value(c).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default();
                    out.push((format!("epsilon={e},nu={n},cut={cut}"), cfg));
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
seed = 1

[potential]
name = "double_well"

[dynamics]
variant = "isd"
epsilon = 0.05
dt = 1e-3

[run]
t_end = 10.0
"#;

    #[test]
    fn minimal_config_gets_defaults() {
        let c = parse_config(MINIMAL).unwrap();
        assert_eq!(c.seed, 1);
        assert_eq!(c.workers, 0);
        assert_eq!(c.output, "out");
        assert_eq!(c.dynamics.nu, 0.0);
        assert_eq!(c.dynamics.eta, 0.1);
        assert_eq!(c.dynamics.cut, CutKind::None);
        assert_eq!(c.dynamics.initial_mode, Some(1));
        assert_eq!(c.dynamics.divergence_ceiling, 1e6);
        assert_eq!(c.run.stride, 1);
        assert_eq!(c.start_point(), DVector::from_vec(vec![1.0, 0.0]));
    }

    #[test]
    fn negative_epsilon_names_the_key() {
        let text = MINIMAL.replace("epsilon = 0.05", "epsilon = -1.0");
        let e = parse_config(&text).unwrap_err();
        assert_eq!(e.kind, ConfigErrorKind::Constraint);
        assert!(e.message.contains("ε"), "{}", e.message);
        assert!(e.message.contains("epsilon"));
        assert!(e.message.contains("line 9"), "{}", e.message);
    }

    #[test]
    fn error_kinds_are_distinct() {
        let unknown = parse_config(&format!("{MINIMAL}\nbogus = 3\n")).unwrap_err();
        assert_eq!(unknown.kind, ConfigErrorKind::UnknownKey);
        assert!(unknown.message.contains("bogus"));
        let mismatch = parse_config(&MINIMAL.replace("dt = 1e-3", "dt = \"small\"")).unwrap_err();
        assert_eq!(mismatch.kind, ConfigErrorKind::TypeMismatch);
        assert!(mismatch.message.contains("line 10"), "{}", mismatch.message);
        let missing = parse_config(&MINIMAL.replace("epsilon = 0.05\n", "")).unwrap_err();
        assert_eq!(missing.kind, ConfigErrorKind::MissingField);
        assert!(missing.message.contains("epsilon"));
        let zero_dt = parse_config(&MINIMAL.replace("dt = 1e-3", "dt = 0.0")).unwrap_err();
        assert_eq!(zero_dt.kind, ConfigErrorKind::Constraint);
        assert!(zero_dt.message.contains("δ"));
        let kinds = [unknown.kind, mismatch.kind, missing.kind, zero_dt.kind];
        for i in 0..kinds.len() {
            for j in (i + 1)..kinds.len() {
                assert_ne!(kinds[i], kinds[j]);
            }
        }
    }

    #[test]
    fn round_trip() {
        let full = r#"
seed = 7
workers = 2
output = "results"

[potential]
name = "mixture"
stiffness = [1.0, 3.0]
period_length = 4.0

[dynamics]
variant = "isd_regularized"
epsilon = 0.03
nu = 0.2
cut = "linear"
r_star = 2.0
guard_radius = 50.0

[run]
t_end = 10.0
stride = 5
x0 = [4.0, 0.0]

[experiment]
kind = "transition_time"
n_trials = 15
t_max = 500.0
target_center = [0.0, 0.0]

[histogram]
t_end = 100.0
bins = 20

[sweep]
nu = [0.01, 0.1, 1.0]
"#;
        for text in [MINIMAL, full] {
            let c = parse_config(text).unwrap();
            let again = parse_config(&to_toml(&c)).unwrap();
            assert_eq!(again, c);
        }
    }

    #[test]
    fn sweep_grid() {
        let text = format!("{MINIMAL}\n[sweep]\nnu = [0.1, 1.0, 10.0]\ncut = [\"none\", \"step\"]\n");
        let c = parse_config(&text).unwrap();
        let pts = c.sweep_points();
        assert_eq!(pts.len(), 6);
        assert_eq!(pts[0].0, "epsilon=0.05,nu=0.1,cut=none");
        assert_eq!(pts[5].1.regularizer.kind, CutKind::Step);
        let empty = format!("{MINIMAL}\n[sweep]\nnu = []\n");
        assert_eq!(parse_config(&empty).unwrap_err().kind, ConfigErrorKind::Constraint);
    }

    #[test]
    fn lennard_jones_visit_defaults_to_catalog() {
        let text = r#"
[potential]
name = "lennard_jones"

[dynamics]
variant = "isd"
epsilon = 0.1
nu = 1.0

[experiment]
kind = "visit_all_minima"
t_max = 100.0
"#;
        let c = parse_config(text).unwrap();
        let e = c.experiment.as_ref().unwrap();
        assert_eq!(e.catalog.as_ref().unwrap().len(), 4);
        assert_eq!(e.quench_period, Some(0.5));
        assert!(matches!(c.predicate(), Some(StopPredicate::AllMinimaVisited { .. })));
        assert_eq!(c.dynamics.initial_mode, Some(0));
        assert_eq!(c.start_point().len(), 14);
    }

    #[test]
    fn potential_parameter_errors_point_at_keys() {
        let text = r#"
[potential]
name = "mixture"
stiffness = [0.0, 1.0]

[dynamics]
variant = "langevin"
epsilon = 0.1
"#;
        let e = parse_config(text).unwrap_err();
        assert!(e.message.contains("stiffness") && e.message.contains("line 4"), "{}", e.message);
    }
}
