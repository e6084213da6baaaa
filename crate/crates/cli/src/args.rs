//! Flag definitions and their merge onto an [`ExperimentConfig`].
//!
//! Precedence is flag > `--config` file > built-in default.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use apsm::cost::BetaSchedule;
use apsm::detectors::DetectorKind;
use apsm::geometry::Modulation;
use apsm::mimo::ChannelModel;
use apsm::sim::{ApsmOverrides, Execution, ExperimentConfig, Format};
use apsm::{Error, Result};

#[derive(Debug, Parser)]
#[command(name = "apsm", version, about = "Superiorized APSM MIMO detection experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// SER after every iteration at one SNR.
    SerIter(SweepArgs),
    /// Final SER over an SNR grid.
    SerSnr(SweepArgs),
    /// Run the detectors on one seeded instance.
    Detect(DetectArgs),
    /// Audit the APSM runs on one seeded instance against the transmitted vector.
    Diagnose(DiagnoseArgs),
    /// Run the quasi-Fejér, attracting and prox-oracle suites.
    Validate(ValidateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ChannelKind {
    Iid,
    Kronecker,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Csv,
    Json,
}

impl From<FormatArg> for Format {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Csv => Format::Csv,
            FormatArg::Json => Format::Json,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct ExperimentArgs {
    /// JSON experiment config; flags override its fields.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Number of single-antenna transmitters.
    #[arg(long)]
    pub k: Option<usize>,
    /// Number of receive antennas.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long = "mod", value_name = "qpsk|16qam|64qam")]
    pub modulation: Option<Modulation>,
    #[arg(long, value_enum)]
    pub channel: Option<ChannelKind>,
    /// Transmit-side correlation of the Kronecker channel.
    #[arg(long)]
    pub rho_tx: Option<f64>,
    /// Receive-side correlation of the Kronecker channel.
    #[arg(long)]
    pub rho_rx: Option<f64>,
    /// SNR in dB; repeat for a grid.
    #[arg(long = "snr", value_name = "DB", allow_negative_numbers = true)]
    pub snr: Vec<f64>,
    #[arg(long)]
    pub trials: Option<usize>,
    /// APSM iterations.
    #[arg(long)]
    pub iters: Option<usize>,
    /// Comma-separated detector list (apsm, apsm-l2, apsm-l1, lmmse, clmmse, box, ml).
    #[arg(long, value_delimiter = ',')]
    pub detectors: Vec<DetectorKind>,
    /// Initial sublevel `ρ_0`.
    #[arg(long)]
    pub rho0: Option<f64>,
    /// Geometric growth of `ρ_n`.
    #[arg(long)]
    pub growth: Option<f64>,
    /// Relaxation parameter.
    #[arg(long)]
    pub mu: Option<f64>,
    /// Constant perturbation scale for every perturbed APSM detector.
    #[arg(long, conflicts_with = "beta_geom")]
    pub beta: Option<f64>,
    /// Geometric perturbation scale `β_n = bⁿ` for every perturbed APSM detector.
    #[arg(long, value_name = "B")]
    pub beta_geom: Option<f64>,
    /// Soft-threshold level of the `ℓ1` perturbation.
    #[arg(long)]
    pub tau: Option<f64>,
    /// Master seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

impl ExperimentArgs {
    pub fn resolve(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        if let Some(k) = self.k {
            cfg.k = k;
        }
        if let Some(n) = self.n {
            cfg.n = n;
        }
        if let Some(m) = self.modulation {
            cfg.modulation = m;
        }
        cfg.channel = self.channel_model(cfg.channel)?;
        if !self.snr.is_empty() {
            cfg.snr_db = self.snr.clone();
        }
        if let Some(t) = self.trials {
            cfg.trials = t;
        }
        if let Some(i) = self.iters {
            cfg.max_iters = i;
        }
        if !self.detectors.is_empty() {
            cfg.detectors = self.detectors.clone();
        }
        if let Some(s) = self.seed {
            cfg.master_seed = s;
        }
        let beta = match (self.beta, self.beta_geom) {
            (Some(value), _) => Some(BetaSchedule::Constant { value }),
            (None, Some(base)) => Some(BetaSchedule::Geometric { base }),
            (None, None) => None,
        };
        let flags = ApsmOverrides {
            rho0: self.rho0,
            growth: self.growth,
            mu: self.mu,
            beta,
            tau: self.tau,
        };
        // flags are global, and still beat per-detector entries from the file
        cfg.apsm = cfg.apsm.merged(&flags);
        for per in cfg.overrides.values_mut() {
            *per = per.merged(&flags);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn channel_model(&self, from_file: ChannelModel) -> Result<ChannelModel> {
        let (file_tx, file_rx) = match from_file {
            ChannelModel::Kronecker { rho_tx, rho_rx } => (Some(rho_tx), Some(rho_rx)),
            ChannelModel::Iid => (None, None),
        };
        let kind = match self.channel {
            Some(k) => k,
            None if file_tx.is_some() => ChannelKind::Kronecker,
            None => ChannelKind::Iid,
        };
        match kind {
            ChannelKind::Iid => {
                if self.rho_tx.is_some() || self.rho_rx.is_some() {
                    return Err(Error::config("--rho-tx/--rho-rx need --channel kronecker"));
                }
                Ok(ChannelModel::Iid)
            }
            ChannelKind::Kronecker => Ok(ChannelModel::Kronecker {
                rho_tx: self.rho_tx.or(file_tx).unwrap_or(0.0),
                rho_rx: self.rho_rx.or(file_rx).unwrap_or(0.0),
            }),
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub exp: ExperimentArgs,
    /// Worker threads (default: all cores). Output does not depend on it.
    #[arg(long)]
    pub workers: Option<usize>,
    /// Output file (default: stdout).
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: FormatArg,
    /// Append a trial-clustered standard-error column to CSV output.
    #[arg(long)]
    pub std_error: bool,
}

impl SweepArgs {
    pub fn execution(&self) -> Result<Execution> {
        if self.workers == Some(0) {
            return Err(Error::config("--workers must be at least 1"));
        }
        Ok(Execution::from_workers(self.workers))
    }
}

#[derive(Debug, Clone, Args)]
pub struct DetectArgs {
    #[command(flatten)]
    pub exp: ExperimentArgs,
    /// Trial index whose seeded draw is detected; the first SNR is used.
    #[arg(long, default_value_t = 0)]
    pub trial: usize,
    /// Write the per-iteration trace CSV of the first APSM detector instead of the summary.
    #[arg(long)]
    pub dump_trace: bool,
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: FormatArg,
}

#[derive(Debug, Clone, Args)]
pub struct DiagnoseArgs {
    #[command(flatten)]
    pub exp: ExperimentArgs,
    /// Trial index whose seeded draw is diagnosed; the first SNR is used.
    #[arg(long, default_value_t = 0)]
    pub trial: usize,
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct ValidateArgs {
    /// Full runs per variant for the quasi-Fejér suite.
    #[arg(long, default_value_t = 100)]
    pub trials: usize,
    #[arg(long, default_value_t = apsm::cost::ApsmConfig::DEFAULT_MAX_ITERS)]
    pub iters: usize,
    /// Single-step checks of the attracting inequality.
    #[arg(long, default_value_t = 10_000)]
    pub checks: usize,
    /// Random (x, τ) draws for the prox oracle.
    #[arg(long, default_value_t = 10_000)]
    pub prox_draws: usize,
    #[arg(long, default_value_t = 0.7)]
    pub mu: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub workers: Option<usize>,
}
