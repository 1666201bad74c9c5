//! Drift fields of the Langevin, saddle-search and switched processes.
//!
//! Every function here is deterministic. Stochastic forcing, Itô corrections
//! and renormalization onto the sphere belong to the integrator.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::landscape::Potential;
use crate::spectral::smallest_eigenpairs;

/// Tolerance on `|v| = 1` and `v₁·v₂ = 0` for direction inputs.
pub const UNIT_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CutKind {
    /// `f ≡ 2`: plain reflection everywhere.
    None,
    /// `f(r) = 1 + 1{r > r*}`.
    Step,
    /// `f(r) = 1 + (r / r*) 1{r ≤ r*} + 1{r > r*}`.
    Linear,
}

/// Cut function `f: ℝ₊ → [1, 2]` applied to the spectral gap.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegularizerSpec {
    pub kind: CutKind,
    pub r_star: f64,
}

impl Default for RegularizerSpec {
    fn default() -> Self {
        RegularizerSpec::none()
    }
}

impl RegularizerSpec {
    pub fn none() -> Self {
        RegularizerSpec {
            kind: CutKind::None,
            r_star: 1.0,
        }
    }

    pub fn step(r_star: f64) -> Self {
        RegularizerSpec {
            kind: CutKind::Step,
            r_star,
        }
    }

    pub fn linear(r_star: f64) -> Self {
        RegularizerSpec {
            kind: CutKind::Linear,
            r_star,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.kind != CutKind::None && !(self.r_star.is_finite() && self.r_star > 0.0) {
            return Err(Error::param("r_star", format!("must be > 0, got {}", self.r_star)));
        }
        Ok(())
    }

    /// `a = f(gap)`; negative gaps are treated as zero.
    pub fn weight(&self, gap: f64) -> f64 {
        let r = gap.max(0.0);
        match self.kind {
            CutKind::None => 2.0,
            CutKind::Step => {
                if r > self.r_star {
                    2.0
                } else {
                    1.0
                }
            }
            CutKind::Linear => {
                if r > self.r_star {
                    2.0
                } else {
                    1.0 + r / self.r_star
                }
            }
        }
    }
}

/// Which drift drives the position in the saddle-search mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DriftKind {
    Langevin,
    Isd,
    IsdRegularized,
    Gad,
    GadTwoVector,
}

impl DriftKind {
    /// Number of auxiliary unit vectors carried by the state.
    pub fn direction_count(&self) -> usize {
        match self {
            DriftKind::Gad => 1,
            DriftKind::GadTwoVector => 2,
            _ => 0,
        }
    }
}

fn check_unit(v: &DVector<f64>, what: &str) -> Result<()> {
    let n = v.norm();
    if !((n - 1.0).abs() <= UNIT_TOLERANCE) {
        return Err(Error::Contract(format!("{what} must be a unit vector, |{what}| = {n}")));
    }
    Ok(())
}

/// `(I - vvᵀ) w`.
pub fn tangent_project(v: &DVector<f64>, w: &DVector<f64>) -> DVector<f64> {
    w - v * v.dot(w)
}

/// `-(I - a v₁v₁ᵀ - (2 - a) v₂v₂ᵀ) g`; with `v2 = None` this is the plain
/// reflection `-(I - 2v₁v₁ᵀ) g`.
fn reflected_descent(g: &DVector<f64>, v1: &DVector<f64>, a: f64, v2: Option<&DVector<f64>>) -> DVector<f64> {
    let mut out = -g + v1 * (a * v1.dot(g));
    if let Some(v2) = v2 {
        out += v2 * ((2.0 - a) * v2.dot(g));
    }
    out
}

pub fn drift_langevin(potential: &dyn Potential, x: &DVector<f64>) -> Result<DVector<f64>> {
    Ok(-potential.gradient(x)?)
}

/// `-(I - 2v₁v₁ᵀ)∇U(x)` with `v₁` the lowest Hessian eigenvector.
pub fn drift_isd(potential: &dyn Potential, x: &DVector<f64>) -> Result<DVector<f64>> {
    let g = potential.gradient(x)?;
    let spec = smallest_eigenpairs(&potential.hessian(x)?, 1)?;
    Ok(reflected_descent(&g, &spec.eigenvectors[0], 2.0, None))
}

/// ISD drift with the reflection relaxed into a projection wherever the two
/// lowest eigenvalues are closer than `spec.r_star`.
pub fn drift_isd_regularized(
    potential: &dyn Potential,
    x: &DVector<f64>,
    spec: &RegularizerSpec,
) -> Result<DVector<f64>> {
    if potential.dimension() < 2 {
        return Err(Error::Contract("regularized drift needs dimension ≥ 2".into()));
    }
    let g = potential.gradient(x)?;
    let eig = smallest_eigenpairs(&potential.hessian(x)?, 2)?;
    let a = spec.weight(eig.gap()?);
    Ok(reflected_descent(&g, &eig.eigenvectors[0], a, Some(&eig.eigenvectors[1])))
}

/// Position and direction drifts of the gentlest ascent dynamics.
///
/// Returns `(-(I - 2vvᵀ)∇U, -(1/η)(I - vvᵀ)∇²U v)`.
pub fn drift_gad(
    potential: &dyn Potential,
    x: &DVector<f64>,
    v: &DVector<f64>,
    eta: f64,
) -> Result<(DVector<f64>, DVector<f64>)> {
    check_unit(v, "v")?;
    let g = potential.gradient(x)?;
    let h = potential.hessian(x)?;
    Ok(gad_parts(&g, &h, v, eta))
}

pub(crate) fn gad_parts(
    g: &DVector<f64>,
    h: &DMatrix<f64>,
    v: &DVector<f64>,
    eta: f64,
) -> (DVector<f64>, DVector<f64>) {
    let dx = reflected_descent(g, v, 2.0, None);
    let dv = tangent_project(v, &(h * v)) * (-1.0 / eta);
    (dx, dv)
}

/// Two-direction variant: `v1` relaxes towards the lowest eigenvector, `v2`
/// towards the next one, and the position drift is the regularized one built
/// from `(v1, v2)` with `a = f(v2ᵀHv2 - v1ᵀHv1)`.
pub fn drift_gad_two_vector(
    potential: &dyn Potential,
    x: &DVector<f64>,
    v1: &DVector<f64>,
    v2: &DVector<f64>,
    eta: f64,
    spec: &RegularizerSpec,
) -> Result<(DVector<f64>, DVector<f64>, DVector<f64>)> {
    check_unit(v1, "v1")?;
    check_unit(v2, "v2")?;
    let overlap = v1.dot(v2);
    if overlap.abs() > UNIT_TOLERANCE {
        return Err(Error::Contract(format!("v1 and v2 must be orthogonal, v1·v2 = {overlap}")));
    }
    let g = potential.gradient(x)?;
    let h = potential.hessian(x)?;
    Ok(gad_two_vector_parts(&g, &h, v1, v2, eta, spec))
}

pub(crate) fn gad_two_vector_parts(
    g: &DVector<f64>,
    h: &DMatrix<f64>,
    v1: &DVector<f64>,
    v2: &DVector<f64>,
    eta: f64,
    spec: &RegularizerSpec,
) -> (DVector<f64>, DVector<f64>, DVector<f64>) {
    let hv1 = h * v1;
    let hv2 = h * v2;
    let a = spec.weight(v2.dot(&hv2) - v1.dot(&hv1));
    let dx = reflected_descent(g, v1, a, Some(v2));
    let dv1 = tangent_project(v1, &hv1) * (-1.0 / eta);
    // (I - v2v2ᵀ - 2v1v1ᵀ) H v2
    let dv2 = (&hv2 - v2 * v2.dot(&hv2) - v1 * (2.0 * v1.dot(&hv2))) * (-1.0 / eta);
    (dx, dv1, dv2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::landscape::{make_double_well, make_lennard_jones, ClusterParams, Geometry};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    /// `U(x) = Σ cᵢ xᵢ² + bᵢ xᵢ⁴`: separable, diagonal Hessian.
    struct Separable {
        quad: Vec<f64>,
        quart: Vec<f64>,
    }

    impl Potential for Separable {
        fn dimension(&self) -> usize {
            self.quad.len()
        }
        fn geometry(&self) -> Geometry {
            Geometry::Euclidean
        }
        fn energy(&self, x: &DVector<f64>) -> Result<f64> {
            Ok((0..x.len()).map(|i| self.quad[i] * x[i].powi(2) + self.quart[i] * x[i].powi(4)).sum())
        }
        fn gradient(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
            Ok(DVector::from_fn(x.len(), |i, _| 2.0 * self.quad[i] * x[i] + 4.0 * self.quart[i] * x[i].powi(3)))
        }
        fn hessian(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
            Ok(DMatrix::from_diagonal(&DVector::from_fn(x.len(), |i, _| {
                2.0 * self.quad[i] + 12.0 * self.quart[i] * x[i].powi(2)
            })))
        }
        fn name(&self) -> &'static str {
            "separable"
        }
    }

    #[test]
    fn cut_functions() {
        assert_eq!(RegularizerSpec::none().weight(0.0), 2.0);
        assert_eq!(RegularizerSpec::step(2.0).weight(0.0), 1.0);
        assert_eq!(RegularizerSpec::step(2.0).weight(2.0), 1.0);
        assert_eq!(RegularizerSpec::step(2.0).weight(2.0 + 1e-9), 2.0);
        assert_eq!(RegularizerSpec::linear(2.0).weight(1.0), 1.5);
        assert_eq!(RegularizerSpec::linear(2.0).weight(2.0), 2.0);
        assert_eq!(RegularizerSpec::linear(2.0).weight(-0.5), 1.0);
        assert!(RegularizerSpec::step(0.0).validate().is_err());
        assert!(RegularizerSpec::none().validate().is_ok());
    }

    #[test]
    fn langevin_drift_examples() {
        let p = make_double_well();
        assert_eq!(drift_langevin(&p, &v(&[1.0, 0.0])).unwrap(), v(&[0.0, 0.0]));
        assert_abs_diff_eq!(drift_langevin(&p, &v(&[0.9, 0.0])).unwrap(), v(&[0.684, 0.0]), epsilon = 1e-12);
    }

    #[test]
    fn isd_drift_examples() {
        let p = make_double_well();
        assert_eq!(drift_isd(&p, &v(&[1.0, 0.0])).unwrap().norm(), 0.0);
        assert_eq!(drift_isd(&p, &v(&[0.0, 0.0])).unwrap().norm(), 0.0);
        assert_abs_diff_eq!(drift_isd(&p, &v(&[0.5, 0.0])).unwrap(), v(&[-1.5, 0.0]), epsilon = 1e-12);
        assert_abs_diff_eq!(drift_isd(&p, &v(&[0.9, 0.1])).unwrap(), v(&[0.684, 0.4]), epsilon = 1e-12);
    }

    #[test]
    fn regularized_drift_examples() {
        let p = make_double_well();
        let x = v(&[0.3, 0.2]); // gap = |12·0.09 - 8| = 6.92
        assert_eq!(
            drift_isd_regularized(&p, &x, &RegularizerSpec::step(2.0)).unwrap(),
            drift_isd(&p, &x).unwrap()
        );
        let on_line = v(&[(2.0f64 / 3.0).sqrt(), 0.4]);
        let d = drift_isd_regularized(&p, &on_line, &RegularizerSpec::step(2.0)).unwrap();
        assert_abs_diff_eq!(d.norm(), 0.0, epsilon = 1e-12);
        // gap = 1 with r* = 2 gives a = 1.5: x reflected by 1.5, y by 0.5
        let x = v(&[(0.75f64).sqrt(), 0.3]);
        let g = p.gradient(&x).unwrap();
        let d = drift_isd_regularized(&p, &x, &RegularizerSpec::linear(2.0)).unwrap();
        assert_abs_diff_eq!(d, v(&[-g[0] + 0.5 * g[0], -g[1] + 1.5 * g[1]]), epsilon = 1e-12);
        assert!(drift_isd_regularized(&Separable { quad: vec![1.0], quart: vec![0.0] }, &v(&[0.1]), &RegularizerSpec::none()).is_err());
    }

    #[test]
    fn gad_examples() {
        let p = make_double_well();
        let x = v(&[0.4, -0.3]);
        let (_, dv) = drift_gad(&p, &x, &v(&[0.0, 1.0]), 0.1).unwrap();
        assert_eq!(dv.norm(), 0.0);
        let s = Separable { quad: vec![1.0, 2.0, 0.5], quart: vec![0.3, -0.1, 0.2] };
        let x = v(&[0.7, -1.1, 0.2]);
        let (_, dv) = drift_gad(&s, &x, &v(&[1.0, 0.0, 0.0]), 0.5).unwrap();
        assert_eq!(dv.norm(), 0.0);
        // v ⊥ ∇U
        let x = v(&[0.5, 0.0]);
        let (dx, _) = drift_gad(&p, &x, &v(&[0.0, 1.0]), 1.0).unwrap();
        assert_eq!(dx, -p.gradient(&x).unwrap());
        assert!(matches!(drift_gad(&p, &x, &v(&[0.0, 1.1]), 1.0), Err(Error::Contract(_))));
    }

    #[test]
    fn gad_two_vector_examples() {
        let s = Separable { quad: vec![1.0, 2.0, 3.5], quart: vec![0.0; 3] };
        let x = v(&[0.3, -0.2, 0.5]);
        let e1 = v(&[1.0, 0.0, 0.0]);
        let e2 = v(&[0.0, 1.0, 0.0]);
        let spec = RegularizerSpec::linear(4.0);
        let (dx, dv1, dv2) = drift_gad_two_vector(&s, &x, &e1, &e2, 0.2, &spec).unwrap();
        assert_eq!(dv1.norm(), 0.0);
        assert_eq!(dv2.norm(), 0.0);
        // h = (2, 4, 7): gap 2, a = 1.5
        let g = s.gradient(&x).unwrap();
        assert_abs_diff_eq!(dx, v(&[-g[0] + 1.5 * g[0], -g[1] + 0.5 * g[1], -g[2]]), epsilon = 1e-14);
        assert!(drift_gad_two_vector(&s, &x, &e1, &e1, 0.2, &spec).is_err());
    }

    #[test]
    fn tangent_projection_examples() {
        let u = v(&[0.6, 0.8]);
        assert_abs_diff_eq!(tangent_project(&u, &u).norm(), 0.0, epsilon = 1e-15);
        let w = v(&[-0.8, 0.6]);
        assert_abs_diff_eq!(tangent_project(&u, &w), w, epsilon = 1e-15);
    }

    #[test]
    fn regularized_drift_is_continuous_across_threshold() {
        // H = diag(-1, -1 + r): gap r, walked across r* = 1.5
        struct Family(f64);
        impl Potential for Family {
            fn dimension(&self) -> usize { 2 }
            fn geometry(&self) -> Geometry { Geometry::Euclidean }
            fn energy(&self, x: &DVector<f64>) -> Result<f64> {
                Ok(-0.5 * x[0] * x[0] + 0.5 * (-1.0 + self.0) * x[1] * x[1])
            }
            fn gradient(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
                Ok(v(&[-x[0], (-1.0 + self.0) * x[1]]))
            }
            fn hessian(&self, _: &DVector<f64>) -> Result<DMatrix<f64>> {
                Ok(DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, -1.0 + self.0]))
            }
            fn name(&self) -> &'static str { "family" }
        }
        let spec = RegularizerSpec::linear(1.5);
        let x = v(&[0.7, -0.4]);
        let lo = drift_isd_regularized(&Family(1.5 - 1e-6), &x, &spec).unwrap();
        let hi = drift_isd_regularized(&Family(1.5 + 1e-6), &x, &spec).unwrap();
        assert!((lo - hi).norm() < 1e-5);
        let step = RegularizerSpec::step(1.5);
        let lo = drift_isd_regularized(&Family(1.5 - 1e-6), &x, &step).unwrap();
        let hi = drift_isd_regularized(&Family(1.5 + 1e-6), &x, &step).unwrap();
        assert!((lo - hi).norm() > 0.1);
    }

    fn unit(d: usize) -> impl Strategy<Value = DVector<f64>> {
        proptest::collection::vec(-1.0f64..1.0, d)
            .prop_filter("nonzero", |w| w.iter().map(|c| c * c).sum::<f64>() > 1e-3)
            .prop_map(|w| DVector::from_vec(w).normalize())
    }

    proptest! {
        #[test]
        fn reflection_is_an_isometry(x in -2.0f64..2.0, y in -2.0f64..2.0) {
            let p = make_double_well();
            let z = v(&[x, y]);
            let d = drift_isd(&p, &z).unwrap();
            let g = p.gradient(&z).unwrap();
            prop_assert!((d.norm() - g.norm()).abs() <= 1e-12 * (1.0 + g.norm()));
            prop_assert_eq!(drift_isd_regularized(&p, &z, &RegularizerSpec::none()).unwrap(), d);
        }

        #[test]
        fn isd_is_sign_invariant(coords in proptest::collection::vec(-1.5f64..1.5, 8)) {
            let p = make_lennard_jones(ClusterParams { particles: 4 }).unwrap();
            let base = p.lattice_start(1.12);
            let x = &base + DVector::from_vec(coords) * 0.1;
            let g = p.gradient(&x).unwrap();
            let eig = smallest_eigenpairs(&p.hessian(&x).unwrap(), 1).unwrap();
            let v1 = &eig.eigenvectors[0];
            let flipped = -v1;
            let a = reflected_descent(&g, v1, 2.0, None);
            let b = reflected_descent(&g, &flipped, 2.0, None);
            prop_assert!((a - b).norm() <= 1e-12 * (1.0 + g.norm()));
        }

        #[test]
        fn direction_drifts_are_tangent(
            (v1, w) in (unit(4), unit(4)),
            xs in proptest::collection::vec(-1.0f64..1.0, 4),
        ) {
            let w2 = tangent_project(&v1, &w);
            prop_assume!(w2.norm() > 1e-3);
            let v2 = w2.normalize();
            let s = Separable { quad: vec![1.0, -0.5, 2.0, 0.3], quart: vec![0.2, 0.4, 0.1, 0.3] };
            let x = DVector::from_vec(xs);
            let (_, dv) = drift_gad(&s, &x, &v1, 0.3).unwrap();
            prop_assert!(dv.dot(&v1).abs() <= 1e-12);
            let (_, dv1, dv2) = drift_gad_two_vector(&s, &x, &v1, &v2, 0.3, &RegularizerSpec::linear(1.0)).unwrap();
            prop_assert!(dv1.dot(&v1).abs() <= 1e-12);
            prop_assert!(dv2.dot(&v2).abs() <= 1e-12);
        }
    }
}
