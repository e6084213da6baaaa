//! Monte-Carlo SER sweeps.
//!
//! Trial `t` draws its channel, symbols and unit-variance noise from
//! `trial_seed(master_seed, t)`; every detector and every SNR point of that
//! trial reuses the same draw. Results are therefore paired across detectors
//! and SNRs and independent of the worker count.

mod parallel;
mod table;

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use parallel::{map_trials, Execution};
pub use table::{Format, SerRow, SerTable, XKind};

use crate::cost::{ApsmConfig, BetaSchedule, QuadraticResidualCost, RhoSchedule};
use crate::detectors::{detect, ml_candidate_count, BoxSolverSettings, DetectorKind, ML_BUDGET};
use crate::engine::apsm_run_observed;
use crate::geometry::{Constellation, Modulation};
use crate::mimo::{snr_to_sigma2, symbol_errors, trial_seed, ChannelInstance, ChannelModel, TrialDraw};
use crate::{Error, RealVector, Result};

/// Optional replacements for the published APSM parameters.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ApsmOverrides {
    pub rho0: Option<f64>,
    pub growth: Option<f64>,
    pub mu: Option<f64>,
    pub beta: Option<BetaSchedule>,
    pub tau: Option<f64>,
}

impl ApsmOverrides {
    /// Fields set in `other` win.
    pub fn merged(&self, other: &ApsmOverrides) -> ApsmOverrides {
        ApsmOverrides {
            rho0: other.rho0.or(self.rho0),
            growth: other.growth.or(self.growth),
            mu: other.mu.or(self.mu),
            beta: other.beta.or(self.beta),
            tau: other.tau.or(self.tau),
        }
    }

    pub fn apply(&self, cfg: &mut ApsmConfig) {
        let rho0 = self.rho0.unwrap_or(cfg.rho.rho0);
        let growth = self.growth.unwrap_or(cfg.rho.growth);
        cfg.rho = RhoSchedule { rho0, growth };
        if let Some(mu) = self.mu {
            cfg.mu = mu;
        }
        if let Some(beta) = self.beta {
            cfg.beta = beta;
        }
        if let Some(tau) = self.tau {
            cfg.tau = tau;
        }
    }
}

/// Everything a sweep needs. Missing JSON fields take the defaults below.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub k: usize,
    pub n: usize,
    pub modulation: Modulation,
    pub channel: ChannelModel,
    pub detectors: Vec<DetectorKind>,
    pub snr_db: Vec<f64>,
    pub trials: usize,
    pub max_iters: usize,
    pub master_seed: u64,
    /// Applied to every APSM detector.
    pub apsm: ApsmOverrides,
    /// Per-detector overrides, applied after `apsm`.
    pub overrides: BTreeMap<DetectorKind, ApsmOverrides>,
    pub box_solver: BoxSolverSettings,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            k: 16,
            n: 64,
            modulation: Modulation::Qam16,
            channel: ChannelModel::Iid,
            detectors: vec![
                DetectorKind::ApsmPlain,
                DetectorKind::ApsmL2,
                DetectorKind::ApsmL1,
                DetectorKind::ConstrainedLmmse,
            ],
            snr_db: vec![9.0],
            trials: 100,
            max_iters: ApsmConfig::DEFAULT_MAX_ITERS,
            master_seed: 0,
            apsm: ApsmOverrides::default(),
            overrides: BTreeMap::new(),
            box_solver: BoxSolverSettings::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::config(format!("bad config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| Error::config(format!("{}: {e}", path.display())))
    }

    pub fn constellation(&self) -> Constellation {
        self.modulation.constellation()
    }

    /// Effective APSM parameters for `kind`.
    pub fn apsm_config(&self, kind: DetectorKind) -> Option<ApsmConfig> {
        let variant = kind.variant()?;
        let mut cfg = ApsmConfig::for_variant(variant);
        cfg.max_iters = self.max_iters;
        let ov = match self.overrides.get(&kind) {
            Some(per) => self.apsm.merged(per),
            None => self.apsm.clone(),
        };
        ov.apply(&mut cfg);
        Some(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::config("K must be at least 1"));
        }
        if self.n < self.k {
            return Err(Error::config(format!(
                "need N >= K, got N={} K={}",
                self.n, self.k
            )));
        }
        if self.trials == 0 {
            return Err(Error::config("trials must be at least 1"));
        }
        if self.max_iters == 0 {
            return Err(Error::config("max_iters must be at least 1"));
        }
        if self.detectors.is_empty() {
            return Err(Error::config("no detectors selected"));
        }
        for (i, d) in self.detectors.iter().enumerate() {
            if self.detectors[..i].contains(d) {
                return Err(Error::config(format!("detector `{d}` listed twice")));
            }
        }
        if self.snr_db.is_empty() {
            return Err(Error::config("SNR grid is empty"));
        }
        for (i, s) in self.snr_db.iter().enumerate() {
            if !s.is_finite() {
                return Err(Error::config(format!("SNR {s} dB is not finite")));
            }
            if self.snr_db[..i].contains(s) {
                return Err(Error::config(format!("SNR {s} dB listed twice")));
            }
        }
        self.channel.validate()?;
        self.box_solver_valid()?;
        if self.detectors.contains(&DetectorKind::MlBruteforce) {
            let count = ml_candidate_count(&self.constellation(), 2 * self.k);
            if count > ML_BUDGET {
                return Err(Error::MlBudget {
                    candidates: count,
                    budget: ML_BUDGET,
                });
            }
        }
        for &d in &self.detectors {
            if let Some(cfg) = self.apsm_config(d) {
                cfg.validate().map_err(|e| match e {
                    Error::InvalidConfig(msg) => Error::config(format!("detector `{d}`: {msg}")),
                    other => other,
                })?;
            }
        }
        Ok(())
    }

    fn box_solver_valid(&self) -> Result<()> {
        let b = &self.box_solver;
        if !(b.tol > 0.0 && b.tol.is_finite()) || b.max_iters == 0 {
            return Err(Error::config("box solver needs tol > 0 and max_iters >= 1"));
        }
        Ok(())
    }

    /// Resolved per-detector APSM configs, in detector order.
    fn resolved(&self) -> Vec<(DetectorKind, ApsmConfig)> {
        self.detectors
            .iter()
            .map(|&d| {
                let cfg = self
                    .apsm_config(d)
                    .unwrap_or_else(|| ApsmConfig::for_variant(crate::cost::Variant::Plain));
                (d, cfg)
            })
            .collect()
    }

    /// The channel instance trial `trial` sees at the first SNR of the grid.
    pub fn instance(&self, trial: usize) -> Result<ChannelInstance> {
        self.validate()?;
        let sigma2 = snr_to_sigma2(self.snr_db[0], self.n, self.k);
        Ok(self.draw(&self.constellation(), trial)?.instance(sigma2))
    }

    fn draw(&self, c: &Constellation, trial: usize) -> Result<TrialDraw> {
        TrialDraw::generate(
            &self.channel,
            self.n,
            self.k,
            c,
            trial_seed(self.master_seed, trial as u64),
        )
    }
}

/// Per-trial symbol-error counts, indexed `[trial][detector][x]`.
pub type TrialErrors = Vec<Vec<Vec<u32>>>;

/// Per-trial error counts behind [`run_ser_vs_iter`] (x = iteration
/// `1..=max_iters`) or [`run_ser_vs_snr`] (x = SNR in config order).
/// Trial `t` depends only on `master_seed` and `t`.
pub fn trial_errors(cfg: &ExperimentConfig, x_kind: XKind, exec: Execution) -> Result<TrialErrors> {
    cfg.validate()?;
    let c = cfg.constellation();
    let dets = cfg.resolved();
    match x_kind {
        XKind::Iter => {
            if cfg.snr_db.len() != 1 {
                return Err(Error::config(format!(
                    "SER-vs-iteration needs exactly one SNR, got {}",
                    cfg.snr_db.len()
                )));
            }
            let sigma2 = snr_to_sigma2(cfg.snr_db[0], cfg.n, cfg.k);
            map_trials(cfg.trials, exec, |t| {
                let inst = cfg.draw(&c, t)?.instance(sigma2);
                dets.iter()
                    .map(|(kind, acfg)| errors_per_iteration(*kind, &inst, &c, acfg, cfg))
                    .collect()
            })
        }
        XKind::SnrDb => {
            let sigma2: Vec<f64> = cfg
                .snr_db
                .iter()
                .map(|&s| snr_to_sigma2(s, cfg.n, cfg.k))
                .collect();
            map_trials(cfg.trials, exec, |t| {
                let draw = cfg.draw(&c, t)?;
                let insts: Vec<ChannelInstance> =
                    sigma2.iter().map(|&s2| draw.instance(s2)).collect();
                dets.iter()
                    .map(|(kind, acfg)| {
                        insts
                            .iter()
                            .map(|inst| {
                                let det = detect(*kind, inst, &c, acfg, &cfg.box_solver)?;
                                Ok(symbol_errors(&det.x_hat, &inst.s, &c)? as u32)
                            })
                            .collect()
                    })
                    .collect()
            })
        }
    }
}

/// SER after every iteration `1..=max_iters` at the single SNR in the config.
/// Closed-form detectors contribute the same value at every iteration.
pub fn run_ser_vs_iter(cfg: &ExperimentConfig, exec: Execution) -> Result<SerTable> {
    let per_trial = trial_errors(cfg, XKind::Iter, exec)?;
    let xs: Vec<f64> = (1..=cfg.max_iters).map(|i| i as f64).collect();
    Ok(aggregate(cfg, XKind::Iter, &xs, &per_trial))
}

/// Final SER against SNR, rows ordered by detector then ascending SNR.
pub fn run_ser_vs_snr(cfg: &ExperimentConfig, exec: Execution) -> Result<SerTable> {
    let per_trial = trial_errors(cfg, XKind::SnrDb, exec)?;
    Ok(aggregate(cfg, XKind::SnrDb, &cfg.snr_db, &per_trial))
}

fn aggregate(cfg: &ExperimentConfig, x_kind: XKind, xs: &[f64], per_trial: &TrialErrors) -> SerTable {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut rows = Vec::with_capacity(cfg.detectors.len() * xs.len());
    let mut column = vec![0u32; per_trial.len()];
    for (d, kind) in cfg.detectors.iter().enumerate() {
        for &j in &order {
            for (slot, trial) in column.iter_mut().zip(per_trial) {
                *slot = trial[d][j];
            }
            rows.push(SerRow::new(*kind, xs[j], &column, cfg.k));
        }
    }
    SerTable { x_kind, rows }
}

fn errors_per_iteration(
    kind: DetectorKind,
    inst: &ChannelInstance,
    c: &Constellation,
    acfg: &ApsmConfig,
    cfg: &ExperimentConfig,
) -> Result<Vec<u32>> {
    let iters = cfg.max_iters;
    if !kind.is_iterative() {
        let det = detect(kind, inst, c, acfg, &cfg.box_solver)?;
        let e = symbol_errors(&det.x_hat, &inst.s, c)? as u32;
        return Ok(vec![e; iters]);
    }
    let cost = QuadraticResidualCost::new(inst.h.clone(), inst.y.clone())?;
    let x0 = RealVector::zeros(cost.dim());
    let mut errs = Vec::with_capacity(iters);
    let mut failure = None;
    apsm_run_observed(&cost, acfg, c, &x0, |_, x| match symbol_errors(x, &inst.s, c) {
        Ok(e) => errs.push(e as u32),
        Err(e) => {
            failure.get_or_insert(e);
        }
    })?;
    if let Some(e) = failure {
        return Err(e);
    }
    // an early stop freezes the estimate
    let last = match errs.last() {
        Some(&e) => e,
        None => symbol_errors(&x0, &inst.s, c)? as u32,
    };
    errs.resize(iters, last);
    Ok(errs)
}
