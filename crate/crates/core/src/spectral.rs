//! Smallest eigenpairs of small dense symmetric matrices.
//!
//! The saddle dynamics need `x ↦ v₁(x)` (and sometimes `v₂(x)`) to be a
//! deterministic function of the Hessian. Pairs come from a dense symmetric
//! eigendecomposition, are sorted ascending (ties keep the solver's column
//! order), and each vector is sign-canonicalized so that its largest-magnitude
//! component is positive, the lowest index winning ties.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Relative tolerance used when comparing component magnitudes for the sign rule.
const SIGN_TIE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralResult {
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    /// Orthonormal, sign-canonicalized, aligned with `eigenvalues`.
    pub eigenvectors: Vec<DVector<f64>>,
}

impl SpectralResult {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    /// `λ₂ - λ₁`, clamped at zero against roundoff.
    pub fn gap(&self) -> Result<f64> {
        spectral_gap(self)
    }
}

pub fn spectral_gap(result: &SpectralResult) -> Result<f64> {
    match result.eigenvalues.as_slice() {
        [l1, l2, ..] => Ok((l2 - l1).max(0.0)),
        _ => Err(Error::Contract(format!(
            "spectral gap needs at least 2 eigenpairs, have {}",
            result.len()
        ))),
    }
}

/// Flip `v` so that its largest-magnitude component is positive.
pub fn canonicalize_sign(v: &mut DVector<f64>) {
    let max = v.amax();
    if max == 0.0 {
        return;
    }
    let pivot = v
        .iter()
        .position(|c| c.abs() >= max * (1.0 - SIGN_TIE_TOL))
        .expect("some component attains the max");
    if v[pivot] < 0.0 {
        v.neg_mut();
    }
}

/// The `k` smallest eigenpairs of the symmetric part of `h`.
pub fn smallest_eigenpairs(h: &DMatrix<f64>, k: usize) -> Result<SpectralResult> {
    let d = h.nrows();
    if h.ncols() != d {
        return Err(Error::Input(format!("matrix is {}×{}, not square", d, h.ncols())));
    }
    if k == 0 || k > d {
        return Err(Error::Contract(format!("requested {k} eigenpairs of a {d}×{d} matrix")));
    }
    if h.iter().any(|c| !c.is_finite()) {
        return Err(Error::Input("matrix has non-finite entries".into()));
    }

    let sym = (h + h.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);

    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]).then(a.cmp(&b)));

    let mut eigenvalues = Vec::with_capacity(k);
    let mut eigenvectors = Vec::with_capacity(k);
    for &i in order.iter().take(k) {
        eigenvalues.push(eig.eigenvalues[i]);
        let mut v = eig.eigenvectors.column(i).into_owned();
        let n = v.norm();
        if n > 0.0 {
            v /= n;
        }
        canonicalize_sign(&mut v);
        eigenvectors.push(v);
    }
    Ok(SpectralResult {
        eigenvalues,
        eigenvectors,
    })
}
