//! Superiorized adaptive projected subgradient method (APSM) for MIMO detection.
//!
//! The crate is split along the detection pipeline:
//!
//! - [`geometry`]: box and constellation projections, soft thresholding, and the
//!   superiorization perturbations built on them.
//! - [`cost`]: the sublevel cost family `Θ_n(x) = (‖Hx − y‖² − ρ_n)₊`, its
//!   subgradient, the `ρ` schedule and the relaxed subgradient-projection map.
//! - [`engine`]: the perturbed APSM iteration with per-iteration traces and
//!   runtime audits of the quasi-Fejér and attracting inequalities.
//! - [`mimo`]: real-valued signal model, channel and symbol generation, SER.
//! - [`detectors`]: APSM variants plus LMMSE, constrained LMMSE, box relaxation
//!   and brute-force ML baselines.
//! - [`sim`]: deterministic (optionally parallel) Monte-Carlo sweeps.
//! - [`validate`]: invariant suites shared by the CLI `validate` command.

// `!(x > 0.0)` style checks are meant to reject NaN too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cost;
pub mod detectors;
pub mod engine;
mod error;
mod numfmt;
pub mod geometry;
pub mod mimo;
pub mod sim;
pub mod validate;

pub use error::{Error, Result};
pub use numfmt::g17;

/// Dense real vector in `R^{2K}` (or `R^{2N}` for received signals).
pub type RealVector = nalgebra::DVector<f64>;
/// Dense real matrix.
pub type RealMatrix = nalgebra::DMatrix<f64>;
