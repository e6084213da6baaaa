//! The perturbed APSM iteration `x_{n+1} = T_n(x_n + β_n v_n)`.
//!
//! Each iteration computes the superiorization perturbation `v_n` from the
//! current iterate, moves to `z_n = x_n + β_n v_n`, takes a relaxed
//! subgradient-projection step on `Θ_n` at `z_n`, and projects onto the box.
//! Every iterate after the first step therefore lies in `B` regardless of the
//! perturbations.

mod diagnostics;
mod trace;

pub use diagnostics::{
    check_attracting, check_quasi_fejer, diagnose, AttractingAudit, DiagnosticReport,
    QuasiFejerAudit, StepDecay, Telescoping, AUDIT_TOL,
};
pub use trace::{IterateTrace, IterationRecord, TraceMeta};

use crate::cost::{subgradient_step, ApsmConfig, QuadraticResidualCost, Variant};
use crate::error::check_dim;
use crate::geometry::{perturbation_l1, perturbation_l2, project_box_mut, Constellation};
use crate::{Error, RealVector, Result};

/// Final estimate plus the run's trace.
#[derive(Debug, Clone)]
pub struct ApsmOutcome {
    pub x: RealVector,
    pub trace: IterateTrace,
}

/// Runs the iteration from `x0` for `cfg.max_iters` steps (or until the step
/// size drops below `cfg.stop_eps`).
pub fn apsm_run(
    cost: &QuadraticResidualCost,
    cfg: &ApsmConfig,
    c: &Constellation,
    x0: &RealVector,
) -> Result<ApsmOutcome> {
    apsm_run_observed(cost, cfg, c, x0, |_, _| {})
}

/// Like [`apsm_run`], calling `observer(n, &x_n)` for every new iterate
/// `n = 1, 2, …`.
pub fn apsm_run_observed<F>(
    cost: &QuadraticResidualCost,
    cfg: &ApsmConfig,
    c: &Constellation,
    x0: &RealVector,
    mut observer: F,
) -> Result<ApsmOutcome>
where
    F: FnMut(usize, &RealVector),
{
    cfg.validate()?;
    check_dim("apsm_run: length of x0", cost.dim(), x0.len())?;
    let b = c.box_set();

    let mut trace = IterateTrace::new(TraceMeta::from_config(cfg));
    let mut x = x0.clone();
    if cfg.record_iterates {
        trace.push_iterate(x.clone());
    }

    for n in 0..cfg.max_iters {
        let rho = cfg.rho.rho_at(n);
        let beta = cfg.beta_at(n);

        let (z, v_norm) = if beta == 0.0 {
            (x.clone(), 0.0)
        } else {
            let v = match cfg.variant {
                Variant::Plain => unreachable!("plain variant has zero beta"),
                Variant::L2 => perturbation_l2(&x, c),
                Variant::L1 => perturbation_l1(&x, cfg.tau, c),
            };
            let v_norm = v.norm();
            let mut z = x.clone();
            z.axpy(beta, &v, 1.0);
            (z, v_norm)
        };

        let objective = if beta == 0.0 { None } else { Some(cost.residual_sq(&x)?) };
        let eval = cost.evaluate(&z)?;
        if !eval.residual_sq.is_finite() || eval.subgradient.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite { iteration: n });
        }
        let objective = objective.unwrap_or(eval.residual_sq);

        let mut next = z;
        let theta = subgradient_step(&mut next, &eval, rho, cfg.mu);
        project_box_mut(&mut next, &b);

        if !theta.is_finite() || next.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { iteration: n });
        }

        let step_norm = (&next - &x).norm();
        trace.push(IterationRecord {
            n,
            rho,
            beta,
            theta,
            objective,
            step_norm,
            pert_norm: beta * v_norm,
            v_norm,
        });
        x = next;
        observer(n + 1, &x);
        if cfg.record_iterates {
            trace.push_iterate(x.clone());
        }
        if cfg.stop_eps > 0.0 && step_norm <= cfg.stop_eps {
            trace.meta.stopped_early = true;
            break;
        }
    }

    trace.final_objective = cost.residual_sq(&x)?;
    Ok(ApsmOutcome { x, trace })
}
