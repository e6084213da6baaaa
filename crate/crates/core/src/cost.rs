//! The sublevel cost family `Θ_n(x) = (‖Hx − y‖² − ρ_n)₊`, its subgradient,
//! the relaxed subgradient-projection map `T_n`, and the parameter schedules
//! that drive the iteration.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::check_dim;
use crate::geometry::{project_box_mut, BoxSet};
use crate::{Error, RealMatrix, RealVector, Result};

/// Saturation level of the `ρ` schedule.
pub const RHO_MAX: f64 = 1e12;

/// Quadratic data-fit residual `‖Hx − y‖²` with its Gram quantities cached.
///
/// With `G = HᵀH` and `b = Hᵀy`, the residual is `xᵀGx − 2xᵀb + yᵀy` and the
/// subgradient is `2(Gx − b)`, so an evaluation costs one `2K×2K` product.
#[derive(Debug, Clone)]
pub struct QuadraticResidualCost {
    h: RealMatrix,
    y: RealVector,
    gram: RealMatrix,
    hty: RealVector,
    yty: f64,
}

/// Residual and subgradient at one point, sharing the `Gx` product.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub residual_sq: f64,
    pub subgradient: RealVector,
}

impl QuadraticResidualCost {
    pub fn new(h: RealMatrix, y: RealVector) -> Result<Self> {
        check_dim("cost: rows of H vs length of y", h.nrows(), y.len())?;
        let gram = h.tr_mul(&h);
        let hty = h.tr_mul(&y);
        let yty = y.norm_squared();
        Ok(Self {
            h,
            y,
            gram,
            hty,
            yty,
        })
    }

    pub fn h(&self) -> &RealMatrix {
        &self.h
    }

    pub fn y(&self) -> &RealVector {
        &self.y
    }

    pub fn gram(&self) -> &RealMatrix {
        &self.gram
    }

    pub fn hty(&self) -> &RealVector {
        &self.hty
    }

    /// Dimension `2K` of the search space.
    pub fn dim(&self) -> usize {
        self.h.ncols()
    }

    fn check(&self, x: &RealVector) -> Result<()> {
        check_dim("cost: length of x vs columns of H", self.dim(), x.len())
    }

    /// Residual and subgradient `2Hᵀ(Hx − y)` at `x`.
    pub fn evaluate(&self, x: &RealVector) -> Result<Evaluation> {
        self.check(x)?;
        let gx = &self.gram * x;
        let residual_sq = clamp_nonneg(x.dot(&gx) - 2.0 * x.dot(&self.hty) + self.yty);
        let subgradient = (gx - &self.hty) * 2.0;
        Ok(Evaluation {
            residual_sq,
            subgradient,
        })
    }

    /// `‖Hx − y‖²` via the cached Gram matrix.
    pub fn residual_sq(&self, x: &RealVector) -> Result<f64> {
        self.check(x)?;
        let gx = &self.gram * x;
        Ok(clamp_nonneg(x.dot(&gx) - 2.0 * x.dot(&self.hty) + self.yty))
    }

    /// `‖Hx − y‖²` computed from `H` directly.
    pub fn residual_sq_direct(&self, x: &RealVector) -> Result<f64> {
        self.check(x)?;
        Ok((&self.h * x - &self.y).norm_squared())
    }

    /// `Θ(x) = max(‖Hx − y‖² − ρ, 0)`.
    pub fn theta(&self, x: &RealVector, rho: f64) -> Result<f64> {
        Ok((self.residual_sq(x)? - rho).max(0.0))
    }

    /// `2Hᵀ(Hx − y)`, a subgradient of `Θ` wherever `Θ(x) > 0`.
    pub fn subgradient(&self, x: &RealVector) -> Result<RealVector> {
        Ok(self.evaluate(x)?.subgradient)
    }

    /// One relaxed subgradient-projection step followed by projection onto the box.
    pub fn apsm_map(&self, x: &RealVector, rho: f64, mu: f64, b: &BoxSet) -> Result<RealVector> {
        let eval = self.evaluate(x)?;
        let mut out = x.clone();
        subgradient_step(&mut out, &eval, rho, mu);
        project_box_mut(&mut out, b);
        Ok(out)
    }
}

// Rounding can push the expanded quadratic slightly below zero; NaN passes through.
#[inline]
fn clamp_nonneg(r: f64) -> f64 {
    if r < 0.0 {
        0.0
    } else {
        r
    }
}

/// Applies `x ← x − μ·Θ(x)/‖Θ'(x)‖²·Θ'(x)` when `Θ(x) > 0` and the subgradient
/// is numerically nonzero. Returns `Θ(x)`.
pub(crate) fn subgradient_step(x: &mut RealVector, eval: &Evaluation, rho: f64, mu: f64) -> f64 {
    let theta = (eval.residual_sq - rho).max(0.0);
    if theta > 0.0 {
        let g_norm_sq = eval.subgradient.norm_squared();
        let g_tol = 1e-12 * (1.0 + x.norm());
        if g_norm_sq.sqrt() > g_tol {
            x.axpy(-mu * theta / g_norm_sq, &eval.subgradient, 1.0);
        }
    }
    theta
}

/// Geometric schedule `ρ_n = ρ_0·growth^n`, saturating at [`RHO_MAX`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RhoSchedule {
    pub rho0: f64,
    pub growth: f64,
}

impl RhoSchedule {
    pub fn new(rho0: f64, growth: f64) -> Result<Self> {
        let s = Self { rho0, growth };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rho0 > 0.0 && self.rho0.is_finite()) {
            return Err(Error::config(format!("rho0 must be positive, got {}", self.rho0)));
        }
        if !(self.growth >= 1.0 && self.growth.is_finite()) {
            return Err(Error::config(format!("rho growth must be >= 1, got {}", self.growth)));
        }
        Ok(())
    }

    pub fn rho_at(&self, n: usize) -> f64 {
        let v = self.rho0 * self.growth.powf(n as f64);
        if v.is_finite() {
            v.min(RHO_MAX)
        } else {
            RHO_MAX
        }
    }
}

impl Default for RhoSchedule {
    fn default() -> Self {
        Self {
            rho0: 5e-5,
            growth: 1.06,
        }
    }
}

/// Scaling `β_n` of the superiorization perturbations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BetaSchedule {
    /// `β_n = 0`.
    None,
    /// `β_n = base^n`, summable for `base ∈ (0, 1)`.
    Geometric { base: f64 },
    /// `β_n = value`; not summable unless zero.
    Constant { value: f64 },
}

impl BetaSchedule {
    pub fn beta_at(&self, n: usize) -> f64 {
        match *self {
            BetaSchedule::None => 0.0,
            BetaSchedule::Geometric { base } => base.powf(n as f64),
            BetaSchedule::Constant { value } => value,
        }
    }

    /// Whether `(β_n)` lies in `ℓ¹₊`, the hypothesis of the convergence theory.
    pub fn is_summable(&self) -> bool {
        match *self {
            BetaSchedule::None => true,
            BetaSchedule::Geometric { base } => base < 1.0,
            BetaSchedule::Constant { value } => value == 0.0,
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            BetaSchedule::None => Ok(()),
            BetaSchedule::Geometric { base } if base > 0.0 && base < 1.0 => Ok(()),
            BetaSchedule::Geometric { base } => Err(Error::config(format!(
                "geometric beta base must lie in (0, 1), got {base}"
            ))),
            BetaSchedule::Constant { value } if (0.0..=1.0).contains(&value) => Ok(()),
            BetaSchedule::Constant { value } => Err(Error::config(format!(
                "constant beta must lie in [0, 1], got {value}"
            ))),
        }
    }
}

/// Which superiorization perturbation the engine applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Unperturbed basic algorithm.
    Plain,
    /// `v_n = P_S(x_n) − x_n`.
    L2,
    /// `v_n = prox_{τ f_ℓ1}(x_n) − x_n`.
    L1,
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Plain => "plain",
            Variant::L2 => "l2",
            Variant::L1 => "l1",
        })
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "plain" => Ok(Variant::Plain),
            "l2" => Ok(Variant::L2),
            "l1" => Ok(Variant::L1),
            other => Err(Error::config(format!("unknown APSM variant `{other}`"))),
        }
    }
}

/// Parameters of one APSM run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApsmConfig {
    pub rho: RhoSchedule,
    /// Relaxation `μ_n`, held constant.
    pub mu: f64,
    /// Lower margin: `μ ≥ eps1`.
    pub eps1: f64,
    /// Upper margin: `μ ≤ 2 − eps2`.
    pub eps2: f64,
    pub beta: BetaSchedule,
    pub tau: f64,
    pub variant: Variant,
    pub max_iters: usize,
    /// Stop once `‖x_{n+1} − x_n‖ ≤ stop_eps`; zero disables the rule.
    pub stop_eps: f64,
    /// Keep every iterate in the trace (needed by the diagnostics).
    #[serde(default)]
    pub record_iterates: bool,
}

impl ApsmConfig {
    pub const DEFAULT_MAX_ITERS: usize = 300;

    /// Published parameters: `ρ_n = 5e−5·1.06ⁿ`, `μ = 0.7`; `β_n = 0.9ⁿ` for the
    /// `ℓ2` variant and `τ = 0.005`, `β_n = 0.9999` for the `ℓ1` variant.
    pub fn for_variant(variant: Variant) -> Self {
        let (beta, tau) = match variant {
            Variant::Plain => (BetaSchedule::None, 0.0),
            Variant::L2 => (BetaSchedule::Geometric { base: 0.9 }, 0.0),
            Variant::L1 => (BetaSchedule::Constant { value: 0.9999 }, 0.005),
        };
        Self {
            rho: RhoSchedule::default(),
            mu: 0.7,
            eps1: 1e-3,
            eps2: 1e-3,
            beta,
            tau,
            variant,
            max_iters: Self::DEFAULT_MAX_ITERS,
            stop_eps: 0.0,
            record_iterates: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.rho.validate()?;
        if !(self.eps1 > 0.0 && self.eps2 > 0.0 && self.eps1 <= 2.0 - self.eps2) {
            return Err(Error::config(format!(
                "relaxation margins must satisfy 0 < eps1 <= 2 - eps2 (eps1={}, eps2={})",
                self.eps1, self.eps2
            )));
        }
        if !(self.mu >= self.eps1 && self.mu <= 2.0 - self.eps2) {
            return Err(Error::config(format!(
                "mu = {} outside [{}, {}]",
                self.mu,
                self.eps1,
                2.0 - self.eps2
            )));
        }
        self.beta.validate()?;
        if !(self.tau >= 0.0 && self.tau.is_finite()) {
            return Err(Error::config(format!("tau must be >= 0, got {}", self.tau)));
        }
        if !(self.stop_eps >= 0.0) {
            return Err(Error::config("stop_eps must be >= 0"));
        }
        Ok(())
    }

    /// Attraction constant `κ = 1 − μ/2` of the relaxed map.
    pub fn kappa(&self) -> f64 {
        1.0 - self.mu / 2.0
    }

    /// Perturbation scale actually used at iteration `n` (zero for the plain variant).
    pub fn beta_at(&self, n: usize) -> f64 {
        match self.variant {
            Variant::Plain => 0.0,
            _ => self.beta.beta_at(n),
        }
    }

    /// Whether the convergence guarantees apply to this configuration.
    pub fn summable_beta(&self) -> bool {
        self.variant == Variant::Plain || self.beta.is_summable()
    }

    /// FNV-1a hash of the JSON form; identifies the configuration in traces.
    pub fn fingerprint(&self) -> u64 {
        let json = serde_json::to_string(self).expect("config serializes");
        json.bytes().fold(0xcbf2_9ce4_8422_2325_u64, |h, b| {
            (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3)
        })
    }
}

impl Default for ApsmConfig {
    fn default() -> Self {
        Self::for_variant(Variant::Plain)
    }
}
