//! Invariant suites run by the `validate` command and the acceptance tests.
//!
//! - [`convergence_runs`] + [`quasi_fejer_suite`]: full APSM runs audited
//!   against the transmitted vector.
//! - [`attracting_suite`]: random single steps of the relaxed map against a
//!   feasible point.
//! - [`prox_oracle_suite`]: the `ℓ1` prox against a dense scalar grid search.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::cost::{ApsmConfig, QuadraticResidualCost, Variant};
use crate::engine::{apsm_run, check_quasi_fejer, QuasiFejerAudit, AUDIT_TOL};
use crate::geometry::{prox_l1_superiorization, Constellation, Modulation};
use crate::mimo::{snr_to_sigma2, trial_seed, ChannelModel, TrialDraw};
use crate::sim::{map_trials, Execution};
use crate::{RealMatrix, RealVector, Result};

/// Pass/fail tally of one suite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub name: String,
    pub checked: usize,
    pub failed: usize,
    /// Largest observed violation of the checked inequality (negative = slack).
    pub max_excess: f64,
}

impl SuiteReport {
    fn new(name: &str) -> Self {
        Self {
            name: name.to_owned(),
            checked: 0,
            failed: 0,
            max_excess: f64::NEG_INFINITY,
        }
    }

    fn record(&mut self, excess: f64, tol: f64) {
        self.checked += 1;
        self.max_excess = self.max_excess.max(excess);
        if !(excess <= tol) {
            self.failed += 1;
        }
    }

    pub fn passed(&self) -> usize {
        self.checked - self.failed
    }

    pub fn all_passed(&self) -> bool {
        self.failed == 0 && self.checked > 0
    }
}

/// Setup of the full-run suites.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSetup {
    pub k: usize,
    pub n: usize,
    pub modulation: Modulation,
    pub channel: ChannelModel,
    pub snr_db: f64,
    pub trials: usize,
    pub max_iters: usize,
    pub master_seed: u64,
    pub variants: Vec<Variant>,
}

impl Default for RunSetup {
    fn default() -> Self {
        Self {
            k: 16,
            n: 64,
            modulation: Modulation::Qam16,
            channel: ChannelModel::Iid,
            snr_db: 9.0,
            trials: 500,
            max_iters: ApsmConfig::DEFAULT_MAX_ITERS,
            master_seed: 0,
            variants: vec![Variant::Plain, Variant::L2, Variant::L1],
        }
    }
}

/// One audited APSM run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub trial: usize,
    pub variant: Variant,
    /// `Θ` at the last perturbed point.
    pub final_theta: f64,
    pub quasi_fejer: QuasiFejerAudit,
}

/// Runs every variant on every trial with the published parameters and
/// audits each trace with the transmitted vector as reference point.
pub fn convergence_runs(setup: &RunSetup, exec: Execution) -> Result<Vec<RunSummary>> {
    let c = setup.modulation.constellation();
    let sigma2 = snr_to_sigma2(setup.snr_db, setup.n, setup.k);
    let per_trial = map_trials(setup.trials, exec, |t| {
        let draw = TrialDraw::generate(
            &setup.channel,
            setup.n,
            setup.k,
            &c,
            trial_seed(setup.master_seed, t as u64),
        )?;
        let inst = draw.instance(sigma2);
        let cost = QuadraticResidualCost::new(inst.h.clone(), inst.y.clone())?;
        setup
            .variants
            .iter()
            .map(|&variant| {
                let mut cfg = ApsmConfig::for_variant(variant);
                cfg.max_iters = setup.max_iters;
                cfg.record_iterates = true;
                let out = apsm_run(&cost, &cfg, &c, &RealVector::zeros(cost.dim()))?;
                Ok(RunSummary {
                    trial: t,
                    variant,
                    final_theta: out.trace.final_theta().unwrap_or(f64::NAN),
                    quasi_fejer: check_quasi_fejer(&out.trace, &inst.s, &cost)?,
                })
            })
            .collect::<Result<Vec<_>>>()
    })?;
    Ok(per_trial.into_iter().flatten().collect())
}

/// Fraction of runs of `variant` ending with `Θ = 0`.
pub fn feasible_fraction(runs: &[RunSummary], variant: Variant) -> (usize, usize) {
    let of_variant = runs.iter().filter(|r| r.variant == variant);
    let total = of_variant.clone().count();
    let hits = of_variant.filter(|r| r.final_theta == 0.0).count();
    (hits, total)
}

/// Folds the per-run audits into one report (one check per audited step).
pub fn quasi_fejer_suite(runs: &[RunSummary]) -> SuiteReport {
    let mut rep = SuiteReport::new("quasi-fejer");
    for r in runs {
        rep.checked += r.quasi_fejer.checked;
        rep.failed += r.quasi_fejer.violations;
        if r.quasi_fejer.checked > 0 {
            rep.max_excess = rep.max_excess.max(r.quasi_fejer.max_excess);
        }
    }
    rep
}

fn gaussian_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> RealMatrix {
    RealMatrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal))
}

fn uniform_in_box(dim: usize, a: f64, rng: &mut ChaCha8Rng) -> RealVector {
    RealVector::from_fn(dim, |_, _| rng.random_range(-a..=a))
}

/// Single steps `T(x)` of the relaxed map with random `H`, `y`, `x ∈ B` and a
/// point `z ∈ B` inside the sublevel set, checking
/// `‖T(x) − z‖² ≤ ‖x − z‖² − κ‖T(x) − x‖²` with `κ = 1 − μ/2`.
pub fn attracting_suite(checks: usize, mu: f64, seed: u64) -> Result<SuiteReport> {
    let mut rep = SuiteReport::new("attracting");
    let kappa = 1.0 - mu / 2.0;
    let levels = [Modulation::Qpsk, Modulation::Qam16, Modulation::Qam64];
    for i in 0..checks {
        let mut rng = ChaCha8Rng::seed_from_u64(trial_seed(seed, i as u64));
        let c = levels[i % levels.len()].constellation();
        let b = c.box_set();
        let dim = 2 * rng.random_range(1..=8usize);
        let rows = dim + 2 * rng.random_range(0..=8usize);
        let h = gaussian_matrix(rows, dim, &mut rng) / (rows as f64).sqrt();
        let z = uniform_in_box(dim, b.a_max(), &mut rng);
        let noise_scale = 10f64.powf(rng.random_range(-3.0..0.0));
        let y = &h * &z + gaussian_matrix(rows, 1, &mut rng).column(0) * noise_scale;
        let cost = QuadraticResidualCost::new(h, y)?;
        let rz = cost.residual_sq_direct(&z)?;
        // rho at or above the reference residual, sometimes exactly at it
        let rho = if i % 5 == 0 {
            rz.max(f64::MIN_POSITIVE)
        } else {
            rz * (1.0 + rng.random_range(0.0..1.0)) + f64::MIN_POSITIVE
        };
        let x = uniform_in_box(dim, b.a_max(), &mut rng);
        let tx = cost.apsm_map(&x, rho, mu, &b)?;
        let lhs = (&tx - &z).norm_squared();
        let rhs = (&x - &z).norm_squared() - kappa * (&tx - &x).norm_squared();
        rep.record(lhs - rhs, AUDIT_TOL);
    }
    Ok(rep)
}

/// `τ·|u − P_S(u)| + ½(x − u)²` for one coordinate.
pub fn prox_objective(u: f64, x: f64, tau: f64, c: &Constellation) -> f64 {
    tau * (u - c.slice(u)).abs() + 0.5 * (x - u) * (x - u)
}

/// Minimum of [`prox_objective`] over `u ∈ [lo, hi]` on a uniform grid.
pub fn grid_min(x: f64, tau: f64, c: &Constellation, lo: f64, hi: f64, step: f64) -> f64 {
    let steps = ((hi - lo) / step).round() as usize;
    (0..=steps)
        .map(|i| prox_objective(lo + i as f64 * step, x, tau, c))
        .fold(f64::INFINITY, f64::min)
}

/// Scalar `prox_{τ f_ℓ1}` against a grid search over `[−3, 3]` with step
/// `1e−4`; a check fails if the prox objective exceeds the grid minimum by
/// more than `1e−6`. Draws alternate between QPSK and 16-QAM levels.
pub fn prox_oracle_suite(draws: usize, seed: u64, exec: Execution) -> Result<SuiteReport> {
    let alphabets = [Modulation::Qpsk.constellation(), Modulation::Qam16.constellation()];
    let gaps = map_trials(draws, exec, |i| {
        let mut rng = ChaCha8Rng::seed_from_u64(trial_seed(seed, i as u64));
        let c = &alphabets[i % alphabets.len()];
        let x = rng.random_range(-2.0..=2.0);
        let tau = rng.random_range(0.0..=0.5);
        let u = prox_l1_superiorization(&RealVector::from_element(1, x), tau, c)[0];
        Ok(prox_objective(u, x, tau, c) - grid_min(x, tau, c, -3.0, 3.0, 1e-4))
    })?;
    let mut rep = SuiteReport::new("prox-oracle");
    for g in gaps {
        rep.record(g, 1e-6);
    }
    Ok(rep)
}
