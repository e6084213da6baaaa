//! End-to-end detectors: the three APSM variants and the LMMSE, constrained
//! LMMSE, box-relaxation and brute-force ML baselines.

use std::fmt;
use std::str::FromStr;

use nalgebra::Cholesky;
use serde::{Deserialize, Serialize};

use crate::cost::{ApsmConfig, QuadraticResidualCost, Variant};
use crate::engine::{apsm_run, IterateTrace};
use crate::geometry::{project_box, project_box_mut, BoxSet, Constellation};
use crate::mimo::ChannelInstance;
use crate::{Error, RealMatrix, RealVector, Result};

/// Largest candidate set the brute-force ML detector will enumerate.
pub const ML_BUDGET: u128 = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DetectorKind {
    #[serde(rename = "apsm")]
    ApsmPlain,
    #[serde(rename = "apsm-l2")]
    ApsmL2,
    #[serde(rename = "apsm-l1")]
    ApsmL1,
    #[serde(rename = "lmmse")]
    Lmmse,
    #[serde(rename = "clmmse")]
    ConstrainedLmmse,
    #[serde(rename = "box")]
    BoxOracle,
    #[serde(rename = "ml")]
    MlBruteforce,
}

impl DetectorKind {
    pub const ALL: [DetectorKind; 7] = [
        DetectorKind::ApsmPlain,
        DetectorKind::ApsmL2,
        DetectorKind::ApsmL1,
        DetectorKind::Lmmse,
        DetectorKind::ConstrainedLmmse,
        DetectorKind::BoxOracle,
        DetectorKind::MlBruteforce,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DetectorKind::ApsmPlain => "apsm",
            DetectorKind::ApsmL2 => "apsm-l2",
            DetectorKind::ApsmL1 => "apsm-l1",
            DetectorKind::Lmmse => "lmmse",
            DetectorKind::ConstrainedLmmse => "clmmse",
            DetectorKind::BoxOracle => "box",
            DetectorKind::MlBruteforce => "ml",
        }
    }

    /// APSM variant run by this detector, if it is iterative.
    pub fn variant(self) -> Option<Variant> {
        match self {
            DetectorKind::ApsmPlain => Some(Variant::Plain),
            DetectorKind::ApsmL2 => Some(Variant::L2),
            DetectorKind::ApsmL1 => Some(Variant::L1),
            _ => None,
        }
    }

    pub fn is_iterative(self) -> bool {
        self.variant().is_some()
    }
}

impl fmt::Display for DetectorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DetectorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        let alias = match s.as_str() {
            "apsm-plain" | "apsm_plain" => "apsm",
            "apsm_l2" => "apsm-l2",
            "apsm_l1" => "apsm-l1",
            "constrained-lmmse" | "constrained_lmmse" => "clmmse",
            "box-oracle" | "box_oracle" => "box",
            "ml-bruteforce" | "ml_bruteforce" => "ml",
            other => other,
        };
        DetectorKind::ALL
            .into_iter()
            .find(|k| k.name() == alias)
            .ok_or_else(|| Error::config(format!("unknown detector `{s}`")))
    }
}

/// Stopping rule of the box-relaxation solver.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxSolverSettings {
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for BoxSolverSettings {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_iters: 200_000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Detection {
    pub x_hat: RealVector,
    pub trace: Option<IterateTrace>,
    /// Set for the box oracle: whether the step-size rule was met.
    pub converged: Option<bool>,
}

/// Runs detector `kind` on `inst`. APSM kinds use `cfg` with the variant
/// replaced by the detector's own.
pub fn detect(
    kind: DetectorKind,
    inst: &ChannelInstance,
    c: &Constellation,
    cfg: &ApsmConfig,
    box_settings: &BoxSolverSettings,
) -> Result<Detection> {
    inst.validate()?;
    let plain = |x_hat| Detection {
        x_hat,
        trace: None,
        converged: None,
    };
    match kind {
        DetectorKind::ApsmPlain | DetectorKind::ApsmL2 | DetectorKind::ApsmL1 => {
            let mut cfg = cfg.clone();
            cfg.variant = kind.variant().expect("APSM kind");
            let cost = QuadraticResidualCost::new(inst.h.clone(), inst.y.clone())?;
            let out = apsm_run(&cost, &cfg, c, &RealVector::zeros(cost.dim()))?;
            Ok(Detection {
                x_hat: out.x,
                trace: Some(out.trace),
                converged: None,
            })
        }
        DetectorKind::Lmmse => detect_lmmse(inst).map(plain),
        DetectorKind::ConstrainedLmmse => detect_constrained_lmmse(inst).map(plain),
        DetectorKind::BoxOracle => {
            let sol = detect_box_oracle(inst, &c.box_set(), box_settings)?;
            Ok(Detection {
                x_hat: sol.x,
                trace: None,
                converged: Some(sol.converged),
            })
        }
        DetectorKind::MlBruteforce => detect_ml_bruteforce(inst, c).map(plain),
    }
}

fn checked_cholesky(inst: &ChannelInstance) -> Result<Cholesky<f64, nalgebra::Dyn>> {
    let mut a = inst.h.tr_mul(&inst.h);
    for i in 0..a.nrows() {
        a[(i, i)] += inst.sigma2;
    }
    Cholesky::new(a).ok_or(Error::Singular("HᵀH + σ²I is not positive definite"))
}

/// `(HᵀH + σ²I)⁻¹Hᵀy` via a Cholesky solve.
pub fn detect_lmmse(inst: &ChannelInstance) -> Result<RealVector> {
    inst.validate()?;
    let chol = checked_cholesky(inst)?;
    Ok(chol.solve(&inst.h.tr_mul(&inst.y)))
}

/// Per-column scaling `α_k = (h_kᵀ(HHᵀ + σ²I)⁻¹h_k)⁻¹` of the constrained LMMSE.
///
/// Uses `Hᵀ(HHᵀ + σ²I)⁻¹H = I − σ²(HᵀH + σ²I)⁻¹`, so only the `2K×2K` system
/// is factored.
pub fn constrained_lmmse_alpha(inst: &ChannelInstance) -> Result<RealVector> {
    inst.validate()?;
    let chol = checked_cholesky(inst)?;
    let dim = inst.h.ncols();
    let l_inv = chol
        .l()
        .solve_lower_triangular(&RealMatrix::identity(dim, dim))
        .ok_or(Error::Singular("triangular factor is singular"))?;
    let alpha = RealVector::from_fn(dim, |k, _| {
        let inv_diag = l_inv.column(k).norm_squared();
        1.0 / (1.0 - inst.sigma2 * inv_diag)
    });
    if alpha.iter().all(|a| a.is_finite()) {
        Ok(alpha)
    } else {
        Err(Error::Singular("constrained LMMSE scaling is unbounded"))
    }
}

/// `diag(α)(HᵀH + σ²I)⁻¹Hᵀy`.
pub fn detect_constrained_lmmse(inst: &ChannelInstance) -> Result<RealVector> {
    let alpha = constrained_lmmse_alpha(inst)?;
    Ok(detect_lmmse(inst)?.component_mul(&alpha))
}

#[derive(Debug, Clone)]
pub struct BoxSolution {
    pub x: RealVector,
    pub iterations: usize,
    pub converged: bool,
    /// Lipschitz constant `2·λ_max(HᵀH)` used for the step `1/L`.
    pub lipschitz: f64,
}

/// Largest eigenvalue of a symmetric PSD matrix by power iteration.
pub fn power_iteration(a: &RealMatrix, max_iters: usize, rel_tol: f64) -> f64 {
    let n = a.nrows();
    if n == 0 {
        return 0.0;
    }
    let mut v = RealVector::from_element(n, (n as f64).sqrt().recip());
    let mut lambda = 0.0;
    for _ in 0..max_iters {
        let w = a * &v;
        let next = w.norm();
        if next == 0.0 {
            return 0.0;
        }
        v = w / next;
        let done = (next - lambda).abs() <= rel_tol * next;
        lambda = next;
        if done {
            break;
        }
    }
    lambda
}

/// `‖x − P_B(x − ∇f(x)/L)‖` for `f(x) = ‖Hx − y‖²`.
pub fn box_first_order_residual(
    cost: &QuadraticResidualCost,
    x: &RealVector,
    lipschitz: f64,
    b: &BoxSet,
) -> Result<f64> {
    let grad = cost.subgradient(x)?;
    let step = if lipschitz > 0.0 { 1.0 / lipschitz } else { 0.0 };
    Ok((x - project_box(&(x - grad * step), b)).norm())
}

/// Box-relaxed least squares `argmin_{x ∈ B} ‖Hx − y‖²` by projected gradient
/// with step `1/L`, stopping once `‖x_{k+1} − x_k‖ ≤ tol`.
pub fn detect_box_oracle(
    inst: &ChannelInstance,
    b: &BoxSet,
    settings: &BoxSolverSettings,
) -> Result<BoxSolution> {
    inst.validate()?;
    if !(settings.tol > 0.0) {
        return Err(Error::config("box solver tolerance must be positive"));
    }
    let cost = QuadraticResidualCost::new(inst.h.clone(), inst.y.clone())?;
    let lipschitz = 2.0 * power_iteration(cost.gram(), 10_000, 1e-13);
    let mut x = RealVector::zeros(cost.dim());
    if lipschitz == 0.0 {
        return Ok(BoxSolution {
            x,
            iterations: 0,
            converged: true,
            lipschitz,
        });
    }
    let step = 1.0 / lipschitz;
    for it in 1..=settings.max_iters {
        let grad = cost.subgradient(&x)?;
        let mut next = &x - grad * step;
        project_box_mut(&mut next, b);
        let moved = (&next - &x).norm();
        x = next;
        if moved <= settings.tol {
            return Ok(BoxSolution {
                x,
                iterations: it,
                converged: true,
                lipschitz,
            });
        }
    }
    Ok(BoxSolution {
        x,
        iterations: settings.max_iters,
        converged: false,
        lipschitz,
    })
}

/// Number of lattice points `|A|^{2K}`, saturating.
pub fn ml_candidate_count(c: &Constellation, dim: usize) -> u128 {
    u32::try_from(dim)
        .ok()
        .and_then(|d| (c.levels().len() as u128).checked_pow(d))
        .unwrap_or(u128::MAX)
}

/// Exhaustive `argmin_{x ∈ S} ‖Hx − y‖²`. Candidates are enumerated with
/// coordinate 0 as the most significant digit; the first minimizer wins ties.
pub fn detect_ml_bruteforce(inst: &ChannelInstance, c: &Constellation) -> Result<RealVector> {
    inst.validate()?;
    let dim = inst.h.ncols();
    let candidates = ml_candidate_count(c, dim);
    if candidates > ML_BUDGET {
        return Err(Error::MlBudget {
            candidates,
            budget: ML_BUDGET,
        });
    }
    let cost = QuadraticResidualCost::new(inst.h.clone(), inst.y.clone())?;
    let levels = c.levels();
    let base = levels.len();
    let mut digits = vec![0usize; dim];
    let mut x = RealVector::from_element(dim, levels[0]);
    let mut best = x.clone();
    let mut best_obj = cost.residual_sq_direct(&x)?;
    for _ in 1..candidates {
        // Odometer increment from the least significant (last) coordinate.
        for i in (0..dim).rev() {
            digits[i] += 1;
            if digits[i] < base {
                x[i] = levels[digits[i]];
                break;
            }
            digits[i] = 0;
            x[i] = levels[0];
        }
        let obj = cost.residual_sq_direct(&x)?;
        if obj < best_obj {
            best_obj = obj;
            best.copy_from(&x);
        }
    }
    Ok(best)
}
