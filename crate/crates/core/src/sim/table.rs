use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::detectors::DetectorKind;
use crate::numfmt::g17;
use crate::{Error, Result};

/// What the x-axis of a [`SerTable`] measures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum XKind {
    Iter,
    SnrDb,
}

impl XKind {
    pub fn as_str(self) -> &'static str {
        match self {
            XKind::Iter => "iter",
            XKind::SnrDb => "snr_db",
        }
    }
}

/// Aggregated symbol errors for one detector at one x-value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SerRow {
    pub detector: DetectorKind,
    pub x_value: f64,
    pub errors: u64,
    pub symbols: u64,
    pub ser: f64,
    pub trials: u64,
    /// `Σ_t e_t²` over per-trial error counts, for the standard error.
    pub sq_errors: u64,
}

impl SerRow {
    pub(crate) fn new(detector: DetectorKind, x_value: f64, per_trial: &[u32], k: usize) -> Self {
        let errors: u64 = per_trial.iter().map(|&e| u64::from(e)).sum();
        let sq_errors: u64 = per_trial.iter().map(|&e| u64::from(e) * u64::from(e)).sum();
        let trials = per_trial.len() as u64;
        let symbols = trials * k as u64;
        Self {
            detector,
            x_value,
            errors,
            symbols,
            ser: if symbols == 0 { 0.0 } else { errors as f64 / symbols as f64 },
            trials,
            sq_errors,
        }
    }

    /// Standard error of the SER estimate, treating each trial's error
    /// fraction as one sample (symbols within a trial share a channel).
    pub fn std_error(&self) -> f64 {
        if self.trials < 2 || self.symbols == 0 {
            return 0.0;
        }
        let t = self.trials as f64;
        let k = self.symbols as f64 / t;
        let mean = self.ser;
        let mean_sq = self.sq_errors as f64 / (k * k) / t;
        let var = ((mean_sq - mean * mean) * t / (t - 1.0)).max(0.0);
        (var / t).sqrt()
    }
}

/// Output format of [`SerTable::emit`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(Error::config(format!("unknown output format `{other}`"))),
        }
    }
}

/// SER results keyed by detector and x-value, in detector order then ascending x.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SerTable {
    pub x_kind: XKind,
    pub rows: Vec<SerRow>,
}

impl SerTable {
    pub const CSV_HEADER: &'static str = "detector,x_kind,x_value,errors,symbols,ser";

    pub fn get(&self, detector: DetectorKind, x_value: f64) -> Option<&SerRow> {
        self.rows
            .iter()
            .find(|r| r.detector == detector && r.x_value == x_value)
    }

    pub fn rows_for(&self, detector: DetectorKind) -> impl Iterator<Item = &SerRow> {
        self.rows.iter().filter(move |r| r.detector == detector)
    }

    /// The row with the largest x-value for `detector` (final iteration or highest SNR).
    pub fn last_for(&self, detector: DetectorKind) -> Option<&SerRow> {
        self.rows_for(detector).last()
    }

    pub fn to_csv(&self, with_std_error: bool) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        if with_std_error {
            out.push_str(",std_error");
        }
        out.push('\n');
        for r in &self.rows {
            write!(
                out,
                "{},{},{},{},{},{}",
                r.detector,
                self.x_kind.as_str(),
                g17(r.x_value),
                r.errors,
                r.symbols,
                g17(r.ser)
            )
            .expect("writing to a String cannot fail");
            if with_std_error {
                write!(out, ",{}", g17(r.std_error())).expect("writing to a String cannot fail");
            }
            out.push('\n');
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn render(&self, format: Format, with_std_error: bool) -> Result<String> {
        match format {
            Format::Csv => Ok(self.to_csv(with_std_error)),
            Format::Json => self.to_json(),
        }
    }

    /// Writes the table to `path`.
    pub fn emit(&self, path: &Path, format: Format) -> Result<()> {
        self.emit_with(path, format, false)
    }

    pub fn emit_with(&self, path: &Path, format: Format, with_std_error: bool) -> Result<()> {
        let text = self.render(format, with_std_error)?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}
