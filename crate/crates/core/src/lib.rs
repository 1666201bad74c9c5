//! Switched stochastic dynamics for locating local minima and index-1 saddle
//! points of non-convex potentials.
//!
//! The building blocks, bottom-up:
//!
//! - [`landscape`]: potentials with analytic gradients and Hessians.
//! - [`spectral`]: deterministic lowest eigenpairs of the Hessian.
//! - [`dynamics`]: Langevin, saddle-search (ISD), regularized and gentle
//!   ascent (GAD) drift fields.
//! - [`integrator`]: Euler–Maruyama stepping with exact Poisson mode switching.
//! - [`experiments`]: hitting times, failure rates, histograms, minima
//!   cataloguing and parameter sweeps.
//! - [`diagnostics`]: derivative, spectral and drift self-checks.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diagnostics;
pub mod dynamics;
pub mod error;
pub mod experiments;
pub mod integrator;
pub mod landscape;
pub mod spectral;

pub use error::{Error, Result};
