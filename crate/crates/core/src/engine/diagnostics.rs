//! Runtime audits of the inequalities behind the convergence theory.
//!
//! With a reference point `z ∈ B` whose residual `‖Hz − y‖²` is below `ρ_n`,
//! `z` is a fixed point of `T_n`, and the recorded trace must satisfy
//!
//! - quasi-Fejér (Type-I): `‖x_{n+1} − z‖ ≤ ‖x_n − z‖ + β_n‖v_n‖`;
//! - attracting: `‖x_{n+1} − z‖² ≤ ‖x_n − z‖² − κ‖x_{n+1} − x_n‖² + γ_n`
//!   with `κ = 1 − μ/2` and `γ_n = β_n·r²·(2 + Σβ)`.
//!
//! Iterations before `ρ_n` reaches the reference residual are skipped.

use serde::{Deserialize, Serialize};

use super::trace::IterateTrace;
use crate::cost::{ApsmConfig, QuadraticResidualCost};
use crate::error::check_dim;
use crate::{Error, RealVector, Result};

/// Absolute slack allowed on every audited inequality.
pub const AUDIT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuasiFejerAudit {
    pub activation_index: Option<usize>,
    pub checked: usize,
    pub violations: usize,
    /// Largest `lhs − rhs` seen (before the tolerance); negative when all hold strictly.
    pub max_excess: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Telescoping {
    /// `Σ κ‖x_{n+1} − x_n‖²` over the audit window.
    pub step_energy: f64,
    /// `‖x_a − z‖² + Σ γ_n`.
    pub bound: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttractingAudit {
    pub activation_index: Option<usize>,
    pub kappa: f64,
    /// Bound `r` on `‖x_n − z‖ + κ‖x_n − x_{n+1}‖` and `‖v_n‖` over the window.
    pub r: f64,
    /// `Σ β_n` over the run.
    pub beta_sum: f64,
    pub checked: usize,
    pub violations: usize,
    pub max_excess: f64,
    pub telescoping: Telescoping,
}

/// First-decile versus last-decile mean step size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepDecay {
    pub first_decile_mean: f64,
    pub last_decile_mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticReport {
    pub reference_residual: f64,
    pub activation_index: Option<usize>,
    pub summable_beta: bool,
    pub quasi_fejer: QuasiFejerAudit,
    pub attracting: AttractingAudit,
    /// `Θ_0(z_0)`.
    pub theta_initial: f64,
    /// Mean of `Θ_n(z_n)` over the final 10% of iterations.
    pub theta_tail: f64,
    pub step_decay: StepDecay,
}

struct Window<'a> {
    iterates: &'a [RealVector],
    start: Option<usize>,
}

fn window<'a>(
    trace: &'a IterateTrace,
    z: &RealVector,
    cost: &QuadraticResidualCost,
) -> Result<Window<'a>> {
    let iterates = trace.iterates.as_deref().ok_or_else(|| {
        Error::config("trace carries no iterates; run with record_iterates enabled")
    })?;
    check_dim("diagnostics: reference dimension", cost.dim(), z.len())?;
    if iterates.len() != trace.records.len() + 1 {
        return Err(Error::config("trace iterates and records are out of step"));
    }
    let residual = cost.residual_sq_direct(z)?;
    let start = trace.records.iter().position(|r| r.rho >= residual);
    Ok(Window { iterates, start })
}

/// Audits `‖x_{n+1} − z‖ ≤ ‖x_n − z‖ + β_n‖v_n‖ + tol` from the activation index on.
pub fn check_quasi_fejer(
    trace: &IterateTrace,
    z_ref: &RealVector,
    cost: &QuadraticResidualCost,
) -> Result<QuasiFejerAudit> {
    let w = window(trace, z_ref, cost)?;
    let mut audit = QuasiFejerAudit {
        activation_index: w.start,
        checked: 0,
        violations: 0,
        max_excess: f64::NEG_INFINITY,
    };
    let Some(start) = w.start else {
        return Ok(audit);
    };
    for r in &trace.records[start..] {
        let lhs = (&w.iterates[r.n + 1] - z_ref).norm();
        let rhs = (&w.iterates[r.n] - z_ref).norm() + r.pert_norm;
        let excess = lhs - rhs;
        audit.checked += 1;
        audit.max_excess = audit.max_excess.max(excess);
        if excess > AUDIT_TOL {
            audit.violations += 1;
        }
    }
    Ok(audit)
}

/// Audits the `κ`-attracting inequality with the summable slack `γ_n`, plus
/// the telescoped bound on the accumulated step energy.
pub fn check_attracting(
    trace: &IterateTrace,
    z_ref: &RealVector,
    cost: &QuadraticResidualCost,
    cfg: &ApsmConfig,
) -> Result<AttractingAudit> {
    let w = window(trace, z_ref, cost)?;
    let kappa = cfg.kappa();
    let beta_sum: f64 = trace.records.iter().map(|r| r.beta).sum();
    let mut audit = AttractingAudit {
        activation_index: w.start,
        kappa,
        r: 0.0,
        beta_sum,
        checked: 0,
        violations: 0,
        max_excess: f64::NEG_INFINITY,
        telescoping: Telescoping {
            step_energy: 0.0,
            bound: 0.0,
            holds: true,
        },
    };
    let Some(start) = w.start else {
        return Ok(audit);
    };
    let records = &trace.records[start..];

    let r = records
        .iter()
        .map(|rec| {
            let dist = (&w.iterates[rec.n] - z_ref).norm();
            (dist + kappa * rec.step_norm).max(rec.v_norm)
        })
        .fold(0.0_f64, f64::max);
    let gamma_scale = r * r * (2.0 + beta_sum);
    audit.r = r;

    let mut step_energy = 0.0;
    let mut gamma_sum = 0.0;
    for rec in records {
        let before = (&w.iterates[rec.n] - z_ref).norm_squared();
        let after = (&w.iterates[rec.n + 1] - z_ref).norm_squared();
        let gamma = rec.beta * gamma_scale;
        let step_sq = rec.step_norm * rec.step_norm;
        let excess = after - (before - kappa * step_sq + gamma);
        audit.checked += 1;
        audit.max_excess = audit.max_excess.max(excess);
        if excess > AUDIT_TOL {
            audit.violations += 1;
        }
        step_energy += kappa * step_sq;
        gamma_sum += gamma;
    }
    let bound = (&w.iterates[start] - z_ref).norm_squared() + gamma_sum;
    audit.telescoping = Telescoping {
        step_energy,
        bound,
        holds: step_energy <= bound + AUDIT_TOL * audit.checked as f64,
    };
    Ok(audit)
}

fn decile_mean(values: impl ExactSizeIterator<Item = f64> + DoubleEndedIterator, last: bool) -> f64 {
    let len = values.len();
    let take = (len / 10).max(1).min(len);
    if take == 0 {
        return 0.0;
    }
    let sum: f64 = if last {
        values.rev().take(take).sum()
    } else {
        values.take(take).sum()
    };
    sum / take as f64
}

/// Full diagnostic report against the reference point `z_ref`.
pub fn diagnose(
    trace: &IterateTrace,
    z_ref: &RealVector,
    cost: &QuadraticResidualCost,
    cfg: &ApsmConfig,
) -> Result<DiagnosticReport> {
    let quasi_fejer = check_quasi_fejer(trace, z_ref, cost)?;
    let attracting = check_attracting(trace, z_ref, cost, cfg)?;
    let reference_residual = cost.residual_sq_direct(z_ref)?;
    let thetas = || trace.records.iter().map(|r| r.theta);
    let steps = || trace.records.iter().map(|r| r.step_norm);
    Ok(DiagnosticReport {
        reference_residual,
        activation_index: quasi_fejer.activation_index,
        summable_beta: trace.meta.summable_beta,
        quasi_fejer,
        attracting,
        theta_initial: trace.records.first().map_or(0.0, |r| r.theta),
        theta_tail: decile_mean(thetas(), true),
        step_decay: StepDecay {
            first_decile_mean: decile_mean(steps(), false),
            last_decile_mean: decile_mean(steps(), true),
        },
    })
}
