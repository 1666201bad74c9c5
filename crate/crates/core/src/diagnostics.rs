//! Numerical self-checks for potentials and the spectral layer.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::dynamics::DriftKind;
use crate::error::Result;
use crate::integrator::{em_step, initial_state, DynamicsConfig, RngStream};
use crate::landscape::{Geometry, Potential};
use crate::spectral::smallest_eigenpairs;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl CheckResult {
    fn new(name: impl Into<String>, value: f64, tolerance: f64) -> Self {
        CheckResult {
            name: name.into(),
            value,
            tolerance,
            passed: value <= tolerance,
        }
    }
}

/// Largest relative deviation between `∇U` and a central difference of `U`.
pub fn gradient_error(potential: &dyn Potential, x: &DVector<f64>, h: f64) -> Result<f64> {
    let g = potential.gradient(x)?;
    let mut worst: f64 = 0.0;
    for i in 0..x.len() {
        let mut up = x.clone();
        let mut dn = x.clone();
        up[i] += h;
        dn[i] -= h;
        let fd = (potential.energy(&up)? - potential.energy(&dn)?) / (2.0 * h);
        worst = worst.max((fd - g[i]).abs() / (1.0 + g[i].abs()));
    }
    Ok(worst)
}

/// Largest relative deviation between `∇²U` and a central difference of `∇U`.
pub fn hessian_error(potential: &dyn Potential, x: &DVector<f64>, h: f64) -> Result<f64> {
    let hess = potential.hessian(x)?;
    let d = x.len();
    let mut fd = DMatrix::zeros(d, d);
    for j in 0..d {
        let mut up = x.clone();
        let mut dn = x.clone();
        up[j] += h;
        dn[j] -= h;
        let col = (potential.gradient(&up)? - potential.gradient(&dn)?) / (2.0 * h);
        fd.set_column(j, &col);
    }
    let scale = 1.0 + hess.amax();
    Ok((fd - &hess).amax() / scale)
}

/// `max |Hv - λv|` over the lowest two eigenpairs, relative to `1 + |λ|`.
pub fn eigen_residual(potential: &dyn Potential, x: &DVector<f64>) -> Result<f64> {
    let h = potential.hessian(x)?;
    let k = h.nrows().min(2);
    let r = smallest_eigenpairs(&h, k)?;
    Ok(r
        .eigenvalues
        .iter()
        .zip(&r.eigenvectors)
        .map(|(l, v)| (&h * v - v * *l).norm() / (1.0 + l.abs()))
        .fold(0.0, f64::max))
}

/// `| |(I - 2v₁v₁ᵀ)∇U| - |∇U| |`.
pub fn reflection_defect(potential: &dyn Potential, x: &DVector<f64>) -> Result<f64> {
    let g = potential.gradient(x)?;
    let r = smallest_eigenpairs(&potential.hessian(x)?, 1)?;
    let v = &r.eigenvectors[0];
    let reflected = &g - v * (2.0 * v.dot(&g));
    Ok((reflected.norm() - g.norm()).abs())
}

/// `|H t|` for unit rigid translations `t` of a planar particle system.
pub fn translation_defect(potential: &dyn Potential, x: &DVector<f64>) -> Result<f64> {
    let h = potential.hessian(x)?;
    let n = x.len() / 2;
    let mut worst: f64 = 0.0;
    for axis in 0..2 {
        let mut t = DVector::zeros(x.len());
        for p in 0..n {
            t[2 * p + axis] = 1.0 / (n as f64).sqrt();
        }
        worst = worst.max((&h * t).norm() / (1.0 + h.amax()));
    }
    Ok(worst)
}

/// `max ||v| - 1|` over `steps` noisy GAD steps from `x` with a generic
/// starting direction.
pub fn sphere_defect(potential: &dyn Potential, x: &DVector<f64>, steps: usize) -> Result<f64> {
    let mut config = DynamicsConfig::new(DriftKind::Gad, 0.0);
    config.epsilon_dir = 0.1;
    let mut rng = RngStream::new(0, 0);
    let d = x.len();
    let v0 = DVector::from_fn(d, |i, _| 1.0 + i as f64).normalize();
    let mut state = initial_state(&config, potential, x, Some(std::slice::from_ref(&v0)), &mut rng)?;
    let mut worst: f64 = 0.0;
    for _ in 0..steps {
        state = em_step(&state, &config, potential, &mut rng)?;
        let v = state.v.as_ref().expect("GAD carries a direction");
        worst = worst.max((v.norm() - 1.0).abs());
    }
    Ok(worst)
}

/// All applicable checks at each of `points`.
pub fn run_checks(potential: &dyn Potential, points: &[DVector<f64>]) -> Result<Vec<CheckResult>> {
    let mut out = Vec::new();
    for (k, x) in points.iter().enumerate() {
        out.push(CheckResult::new(format!("gradient[{k}]"), gradient_error(potential, x, 1e-6)?, 1e-5));
        out.push(CheckResult::new(format!("hessian[{k}]"), hessian_error(potential, x, 1e-5)?, 1e-5));
        out.push(CheckResult::new(format!("eigen_residual[{k}]"), eigen_residual(potential, x)?, 1e-8));
        out.push(CheckResult::new(format!("reflection[{k}]"), reflection_defect(potential, x)?, 1e-9));
        out.push(CheckResult::new(format!("sphere[{k}]"), sphere_defect(potential, x, 10)?, 1e-12));
        if potential.name() == "lennard_jones" && potential.geometry() == Geometry::Euclidean {
            out.push(CheckResult::new(format!("translation[{k}]"), translation_defect(potential, x)?, 1e-8));
        }
    }
    Ok(out)
}

/// A potential whose gradient is shifted by a constant vector.
#[doc(hidden)]
pub struct ShiftedGradient {
    pub inner: Box<dyn Potential>,
    pub shift: f64,
}

impl Potential for ShiftedGradient {
    fn dimension(&self) -> usize {
        self.inner.dimension()
    }
    fn geometry(&self) -> Geometry {
        self.inner.geometry()
    }
    fn name(&self) -> &'static str {
        self.inner.name()
    }
    fn energy(&self, x: &DVector<f64>) -> Result<f64> {
        self.inner.energy(x)
    }
    fn gradient(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(self.inner.gradient(x)?.add_scalar(self.shift))
    }
    fn hessian(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.inner.hessian(x)
    }
}
