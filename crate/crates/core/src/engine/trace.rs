use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::cost::{ApsmConfig, Variant};
use crate::numfmt::g17;
use crate::RealVector;

/// Scalars recorded for iteration `n` (the step from `x_n` to `x_{n+1}`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub n: usize,
    pub rho: f64,
    pub beta: f64,
    /// `Θ_n(z_n)` at the perturbed point.
    pub theta: f64,
    /// `‖Hx_n − y‖²` at the unperturbed iterate.
    pub objective: f64,
    /// `‖x_{n+1} − x_n‖`.
    pub step_norm: f64,
    /// `β_n‖v_n‖`.
    pub pert_norm: f64,
    /// `‖v_n‖` (zero when `β_n = 0`, where `v_n` is not evaluated).
    pub v_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceMeta {
    pub variant: Variant,
    pub config_hash: u64,
    /// False when `(β_n)` is not summable, e.g. the constant `β` of the `ℓ1`
    /// variant; the convergence guarantees are then void.
    pub summable_beta: bool,
    pub stopped_early: bool,
}

impl TraceMeta {
    pub(crate) fn from_config(cfg: &ApsmConfig) -> Self {
        Self {
            variant: cfg.variant,
            config_hash: cfg.fingerprint(),
            summable_beta: cfg.summable_beta(),
            stopped_early: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterateTrace {
    pub meta: TraceMeta,
    pub records: Vec<IterationRecord>,
    /// `x_0, x_1, …` when `record_iterates` is set.
    pub iterates: Option<Vec<RealVector>>,
    /// `‖Hx − y‖²` at the returned estimate.
    pub final_objective: f64,
}

impl IterateTrace {
    pub(crate) fn new(meta: TraceMeta) -> Self {
        Self {
            meta,
            records: Vec::new(),
            iterates: None,
            final_objective: f64::NAN,
        }
    }

    pub(crate) fn push(&mut self, r: IterationRecord) {
        self.records.push(r);
    }

    pub(crate) fn push_iterate(&mut self, x: RealVector) {
        self.iterates.get_or_insert_with(Vec::new).push(x);
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// `Θ` at the last perturbed point, or `None` for an empty run.
    pub fn final_theta(&self) -> Option<f64> {
        self.records.last().map(|r| r.theta)
    }

    pub const CSV_HEADER: &'static str = "n,theta,objective,rho,step_norm,pert_norm";

    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "{}", Self::CSV_HEADER)?;
        for r in &self.records {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                r.n,
                g17(r.theta),
                g17(r.objective),
                g17(r.rho),
                g17(r.step_norm),
                g17(r.pert_norm)
            )?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("CSV is ASCII")
    }
}
