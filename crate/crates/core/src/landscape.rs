//! Potential energy landscapes.
//!
//! Every landscape exposes its energy together with an analytic gradient and
//! Hessian. Four concrete landscapes are provided:
//!
//! - [`Mixture`]: minus the log of an equal-weight mixture of two Gaussians in
//!   the plane, optionally periodized onto a torus of period `πL`.
//! - [`DoubleWell`]: `(1 - x²)² + 2y²`, whose Hessian has a doubly degenerate
//!   spectrum along the lines `x = ±√(2/3)`.
//! - [`LennardJones`]: a planar cluster of `N` particles interacting through
//!   `W(r) = 4(r⁻¹² - r⁻⁶)`, stored flat as `(x₀, y₀, x₁, y₁, …)`.

use nalgebra::{DMatrix, DVector, Matrix2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Distance below which two Lennard-Jones particles are considered coincident.
pub const COINCIDENCE_DISTANCE: f64 = 1e-12;

/// Shape of the state space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Geometry {
    Euclidean,
    /// Periodic box, same period length along every coordinate.
    Torus { period: f64 },
}

impl Geometry {
    pub fn torus(period: f64) -> Result<Self> {
        if !(period.is_finite() && period > 0.0) {
            return Err(Error::param("period", format!("must be > 0, got {period}")));
        }
        Ok(Geometry::Torus { period })
    }

    pub fn is_torus(&self) -> bool {
        matches!(self, Geometry::Torus { .. })
    }

    /// Displacement `b - a`, using the minimum image on a torus.
    pub fn displacement(&self, a: &DVector<f64>, b: &DVector<f64>) -> DVector<f64> {
        let mut d = b - a;
        if let Geometry::Torus { period } = *self {
            for c in d.iter_mut() {
                *c -= period * (*c / period).round();
            }
        }
        d
    }

    pub fn distance(&self, a: &DVector<f64>, b: &DVector<f64>) -> f64 {
        self.displacement(a, b).norm()
    }
}

/// An energy landscape with analytic first and second derivatives.
pub trait Potential: Send + Sync {
    fn dimension(&self) -> usize;

    fn geometry(&self) -> Geometry;

    fn energy(&self, x: &DVector<f64>) -> Result<f64>;

    fn gradient(&self, x: &DVector<f64>) -> Result<DVector<f64>>;

    /// Symmetric `d × d` Hessian.
    fn hessian(&self, x: &DVector<f64>) -> Result<DMatrix<f64>>;

    /// Short identifier used in reports.
    fn name(&self) -> &'static str;
}

/// Reduce `x` to the canonical representative of its class on the domain.
///
/// Identity on Euclidean space; coordinates land in `[0, period)` on a torus.
pub fn wrap_to_domain(x: &DVector<f64>, geometry: Geometry) -> DVector<f64> {
    let mut out = x.clone();
    wrap_in_place(&mut out, geometry);
    out
}

pub(crate) fn wrap_in_place(x: &mut DVector<f64>, geometry: Geometry) {
    if let Geometry::Torus { period } = geometry {
        for c in x.iter_mut() {
            let mut r = c.rem_euclid(period);
            // rem_euclid rounds tiny negatives up to `period` itself
            if r >= period {
                r = 0.0;
            }
            *c = r;
        }
    }
}

fn check_dim(x: &DVector<f64>, d: usize) -> Result<()> {
    if x.len() != d {
        return Err(Error::Input(format!(
            "state has dimension {}, potential expects {d}",
            x.len()
        )));
    }
    Ok(())
}

/// Parameters of the two-Gaussian mixture landscape.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixtureParams {
    /// Centre of the second mode.
    pub center: [f64; 2],
    /// Stiffness `(s_x, s_y)` of the second mode.
    pub stiffness: [f64; 2],
    /// Periodization length `L`; `None` keeps the landscape on the plane.
    pub period_length: Option<f64>,
}

impl Default for MixtureParams {
    fn default() -> Self {
        MixtureParams {
            center: [4.0, 0.0],
            stiffness: [3.0, 1.0],
            period_length: None,
        }
    }
}

/// `U(x, y) = -ln(½e^{-A} + ½e^{-B})` with `A` a unit Gaussian exponent at the
/// origin and `B` an anisotropic one at `center`.
///
/// On the torus each squared offset `u²` is replaced by `L² sin²(u / L)`.
#[derive(Debug, Clone)]
pub struct Mixture {
    params: MixtureParams,
    geometry: Geometry,
}

pub fn make_mixture(params: MixtureParams) -> Result<Mixture> {
    Mixture::new(params)
}

impl Mixture {
    pub fn new(params: MixtureParams) -> Result<Self> {
        let [sx, sy] = params.stiffness;
        if !(sx.is_finite() && sx > 0.0) {
            return Err(Error::param("s_x", format!("must be > 0, got {sx}")));
        }
        if !(sy.is_finite() && sy > 0.0) {
            return Err(Error::param("s_y", format!("must be > 0, got {sy}")));
        }
        if !params.center.iter().all(|c| c.is_finite()) {
            return Err(Error::param("m", "centre must be finite"));
        }
        let geometry = match params.period_length {
            None => Geometry::Euclidean,
            Some(l) if l.is_finite() && l > 0.0 => Geometry::torus(std::f64::consts::PI * l)?,
            Some(l) => return Err(Error::param("L", format!("must be > 0, got {l}"))),
        };
        Ok(Mixture { params, geometry })
    }

    pub fn params(&self) -> &MixtureParams {
        &self.params
    }

    /// Per-coordinate squared offset and its first two derivatives.
    #[inline]
    fn offset(&self, u: f64) -> (f64, f64, f64) {
        match self.params.period_length {
            None => (u * u, 2.0 * u, 2.0),
            Some(l) => {
                let s = (u / l).sin();
                let (s2, c2) = (2.0 * u / l).sin_cos();
                (l * l * s * s, l * s2, 2.0 * c2)
            }
        }
    }

    /// Exponents `A`, `B` with gradients and (diagonal) Hessians.
    fn exponents(&self, x: &DVector<f64>) -> ([f64; 2], [[f64; 2]; 2], [[f64; 2]; 2]) {
        let m = self.params.center;
        let s = self.params.stiffness;
        let mut a = 0.0;
        let mut b = 0.0;
        let mut ga = [0.0; 2];
        let mut gb = [0.0; 2];
        let mut ha = [0.0; 2];
        let mut hb = [0.0; 2];
        for i in 0..2 {
            let (f, df, ddf) = self.offset(x[i]);
            a += f;
            ga[i] = df;
            ha[i] = ddf;
            let (f, df, ddf) = self.offset(x[i] - m[i]);
            b += s[i] * f;
            gb[i] = s[i] * df;
            hb[i] = s[i] * ddf;
        }
        ([a, b], [ga, gb], [ha, hb])
    }

    /// Softmax weights of the two modes, `w_A = e^{-A} / (e^{-A} + e^{-B})`.
    fn weights(a: f64, b: f64) -> (f64, f64) {
        if a <= b {
            let e = (a - b).exp();
            (1.0 / (1.0 + e), e / (1.0 + e))
        } else {
            let e = (b - a).exp();
            (e / (1.0 + e), 1.0 / (1.0 + e))
        }
    }
}

impl Potential for Mixture {
    fn dimension(&self) -> usize {
        2
    }

    fn geometry(&self) -> Geometry {
        self.geometry
    }

    fn energy(&self, x: &DVector<f64>) -> Result<f64> {
        check_dim(x, 2)?;
        let ([a, b], _, _) = self.exponents(x);
        let lo = a.min(b);
        // -ln(½e^{-a} + ½e^{-b}) = ln 2 + lo - ln(1 + e^{-|a-b|})
        Ok(std::f64::consts::LN_2 + lo - (-(a - b).abs()).exp().ln_1p())
    }

    fn gradient(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim(x, 2)?;
        let ([a, b], [ga, gb], _) = self.exponents(x);
        let (wa, wb) = Self::weights(a, b);
        Ok(DVector::from_fn(2, |i, _| wa * ga[i] + wb * gb[i]))
    }

    fn hessian(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        check_dim(x, 2)?;
        let ([a, b], [ga, gb], [ha, hb]) = self.exponents(x);
        let (wa, wb) = Self::weights(a, b);
        let diff = [ga[0] - gb[0], ga[1] - gb[1]];
        let mix = wa * wb;
        let h = Matrix2::new(
            wa * ha[0] + wb * hb[0] - mix * diff[0] * diff[0],
            -mix * diff[0] * diff[1],
            -mix * diff[1] * diff[0],
            wa * ha[1] + wb * hb[1] - mix * diff[1] * diff[1],
        );
        Ok(DMatrix::from_fn(2, 2, |i, j| h[(i, j)]))
    }

    fn name(&self) -> &'static str {
        if self.params.period_length.is_some() {
            "periodized_mixture"
        } else {
            "mixture"
        }
    }
}

/// `U(x, y) = (1 - x²)² + 2y²`: minima at `(±1, 0)`, saddle at the origin.
#[derive(Debug, Clone, Copy, Default)]
pub struct DoubleWell;

pub fn make_double_well() -> DoubleWell {
    DoubleWell
}

impl Potential for DoubleWell {
    fn dimension(&self) -> usize {
        2
    }

    fn geometry(&self) -> Geometry {
        Geometry::Euclidean
    }

    fn energy(&self, x: &DVector<f64>) -> Result<f64> {
        check_dim(x, 2)?;
        let w = 1.0 - x[0] * x[0];
        Ok(w * w + 2.0 * x[1] * x[1])
    }

    fn gradient(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim(x, 2)?;
        Ok(DVector::from_vec(vec![
            -4.0 * x[0] * (1.0 - x[0] * x[0]),
            4.0 * x[1],
        ]))
    }

    fn hessian(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        check_dim(x, 2)?;
        Ok(DMatrix::from_row_slice(
            2,
            2,
            &[-4.0 + 12.0 * x[0] * x[0], 0.0, 0.0, 4.0],
        ))
    }

    fn name(&self) -> &'static str {
        "double_well"
    }
}

/// Planar Lennard-Jones cluster.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusterParams {
    pub particles: usize,
}

impl Default for ClusterParams {
    fn default() -> Self {
        ClusterParams { particles: 7 }
    }
}

/// Sum of `W(r) = 4(r⁻¹² - r⁻⁶)` over all particle pairs, no cutoff.
#[derive(Debug, Clone)]
pub struct LennardJones {
    particles: usize,
}

pub fn make_lennard_jones(params: ClusterParams) -> Result<LennardJones> {
    LennardJones::new(params)
}

/// Pair energy as a function of the squared distance, with its first two
/// derivatives in `s = r²`.
#[inline]
fn pair_terms(s: f64) -> (f64, f64, f64) {
    let inv = 1.0 / s;
    let i3 = inv * inv * inv;
    let i6 = i3 * i3;
    let w = 4.0 * (i6 - i3);
    let dw = 4.0 * (-6.0 * i6 + 3.0 * i3) * inv;
    let ddw = 4.0 * (42.0 * i6 - 12.0 * i3) * inv * inv;
    (w, dw, ddw)
}

impl LennardJones {
    pub fn new(params: ClusterParams) -> Result<Self> {
        if params.particles < 2 {
            return Err(Error::param(
                "N",
                format!("need at least 2 particles, got {}", params.particles),
            ));
        }
        Ok(LennardJones {
            particles: params.particles,
        })
    }

    pub fn particles(&self) -> usize {
        self.particles
    }

    /// Visit every pair `(i, j, dx, dy, r²)`, failing on coincident particles.
    fn for_each_pair(
        &self,
        x: &DVector<f64>,
        mut f: impl FnMut(usize, usize, f64, f64, f64),
    ) -> Result<()> {
        check_dim(x, 2 * self.particles)?;
        let min_sq = COINCIDENCE_DISTANCE * COINCIDENCE_DISTANCE;
        for i in 0..self.particles {
            for j in (i + 1)..self.particles {
                let dx = x[2 * i] - x[2 * j];
                let dy = x[2 * i + 1] - x[2 * j + 1];
                let s = dx * dx + dy * dy;
                if !(s >= min_sq) {
                    return Err(Error::Evaluation(format!(
                        "particles {i} and {j} are coincident (r² = {s:e})"
                    )));
                }
                f(i, j, dx, dy, s);
            }
        }
        Ok(())
    }

    /// Centred hexagon with one particle in the middle, nearest-neighbour
    /// spacing `spacing`. Needs exactly seven particles.
    pub fn centered_hexagon(spacing: f64) -> DVector<f64> {
        let mut x = DVector::zeros(14);
        for k in 0..6 {
            let theta = std::f64::consts::FRAC_PI_3 * k as f64;
            x[2 * (k + 1)] = spacing * theta.cos();
            x[2 * (k + 1) + 1] = spacing * theta.sin();
        }
        x
    }

    /// Particles placed on a triangular lattice, filled row by row.
    pub fn lattice_start(&self, spacing: f64) -> DVector<f64> {
        let n = self.particles;
        let per_row = (n as f64).sqrt().ceil() as usize;
        let mut x = DVector::zeros(2 * n);
        for p in 0..n {
            let (row, col) = (p / per_row, p % per_row);
            let shift = if row % 2 == 1 { 0.5 } else { 0.0 };
            x[2 * p] = spacing * (col as f64 + shift);
            x[2 * p + 1] = spacing * row as f64 * 3f64.sqrt() / 2.0;
        }
        x
    }
}

impl Potential for LennardJones {
    fn dimension(&self) -> usize {
        2 * self.particles
    }

    fn geometry(&self) -> Geometry {
        Geometry::Euclidean
    }

    fn energy(&self, x: &DVector<f64>) -> Result<f64> {
        let mut e = 0.0;
        self.for_each_pair(x, |_, _, _, _, s| e += pair_terms(s).0)?;
        Ok(e)
    }

    fn gradient(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        let mut g = DVector::zeros(self.dimension());
        self.for_each_pair(x, |i, j, dx, dy, s| {
            let (_, dw, _) = pair_terms(s);
            // ∂/∂x_i W(|x_i - x_j|²) = 2 W'(s) (x_i - x_j)
            let (fx, fy) = (2.0 * dw * dx, 2.0 * dw * dy);
            g[2 * i] += fx;
            g[2 * i + 1] += fy;
            g[2 * j] -= fx;
            g[2 * j + 1] -= fy;
        })?;
        Ok(g)
    }

    fn hessian(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        let d = self.dimension();
        let mut h = DMatrix::zeros(d, d);
        self.for_each_pair(x, |i, j, dx, dy, s| {
            let (_, dw, ddw) = pair_terms(s);
            let del = [dx, dy];
            for a in 0..2 {
                for b in 0..2 {
                    let diag = if a == b { 2.0 * dw } else { 0.0 };
                    let blk = diag + 4.0 * ddw * del[a] * del[b];
                    h[(2 * i + a, 2 * i + b)] += blk;
                    h[(2 * j + a, 2 * j + b)] += blk;
                    h[(2 * i + a, 2 * j + b)] -= blk;
                    h[(2 * j + a, 2 * i + b)] -= blk;
                }
            }
        })?;
        Ok(h)
    }

    fn name(&self) -> &'static str {
        "lennard_jones"
    }
}
