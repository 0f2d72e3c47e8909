//! Study configuration file. Command-line flags override fields read from
//! the file; the effective configuration is embedded in every output.

use std::fs;
use std::path::{Path, PathBuf};

use battpool_core::study::{DEFAULT_EPSILONS, DEFAULT_SUBSET_CAP};
use battpool_core::trace::{DEFAULT_CADENCE_SECS, DEFAULT_DEMAND_FRACTION};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

/// Length of the net-generation series sampled from each chain input.
pub const DEFAULT_CHAIN_STEPS: u64 = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudyConfig {
    /// Power traces (`timestamp,power_mw` CSV), one per location.
    pub traces: Vec<PathBuf>,
    /// Chain specs; each is sampled into a net-generation series of
    /// `steps` samples. Mutually exclusive with `traces`.
    pub chains: Vec<PathBuf>,
    /// `null` treats the traces as net generation already.
    pub demand_fraction: Option<f64>,
    pub epsilons: Vec<f64>,
    /// Battery grid spacing, in MJ for traces and units for chains.
    pub delta_b: Option<f64>,
    pub subset_cap: u64,
    pub seed: Option<u64>,
    pub steps: u64,
    pub cadence_seconds: u32,
    pub forward_fill: bool,
    pub out_dir: Option<PathBuf>,
    pub formats: Vec<Format>,
}

impl Default for StudyConfig {
    fn default() -> Self {
        StudyConfig {
            traces: Vec::new(),
            chains: Vec::new(),
            demand_fraction: Some(DEFAULT_DEMAND_FRACTION),
            epsilons: DEFAULT_EPSILONS.to_vec(),
            delta_b: None,
            subset_cap: DEFAULT_SUBSET_CAP,
            seed: None,
            steps: DEFAULT_CHAIN_STEPS,
            cadence_seconds: DEFAULT_CADENCE_SECS,
            forward_fill: false,
            out_dir: None,
            formats: vec![Format::Csv, Format::Json],
        }
    }
}

impl StudyConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::Parse {
            path: path.to_path_buf(),
            line: e.line() as u64,
            message: format!("column {}: {e}", e.column()),
        })
    }

    /// Checks everything that can be checked before any work starts.
    pub fn validate(&self) -> Result<()> {
        match (self.traces.is_empty(), self.chains.is_empty()) {
            (true, true) => return Err(CliError::Config("no traces or chains given".into())),
            (false, false) => {
                return Err(CliError::Config(
                    "give either traces or chains, not both".into(),
                ))
            }
            _ => {}
        }
        for p in self.traces.iter().chain(&self.chains) {
            if !p.is_file() {
                return Err(CliError::Config(format!("{} does not exist", p.display())));
            }
        }
        if self.epsilons.is_empty() {
            return Err(CliError::Config("the LOLP target list is empty".into()));
        }
        if let Some(e) = self.epsilons.iter().find(|&&e| !(e > 0.0 && e < 1.0)) {
            return Err(CliError::Config(format!("target {e} is not in (0, 1)")));
        }
        if let Some(f) = self.demand_fraction {
            if !(f > 0.0 && f < 1.0) {
                return Err(CliError::Config(format!(
                    "demand fraction {f} is not in (0, 1)"
                )));
            }
        }
        if let Some(d) = self.delta_b {
            if !(d > 0.0 && d.is_finite()) {
                return Err(CliError::Config(format!("delta_b {d} must be positive")));
            }
        }
        if self.formats.is_empty() {
            return Err(CliError::Config("no output formats selected".into()));
        }
        if !self.chains.is_empty() && self.steps < 2 {
            return Err(CliError::Config("steps must be at least 2".into()));
        }
        Ok(())
    }

    /// Compact JSON of the effective configuration, as embedded in outputs.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("configs serialise")
    }

    pub fn sha256(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_json().as_bytes()))
    }
}
