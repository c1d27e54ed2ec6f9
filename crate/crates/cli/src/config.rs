use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use hjp_core::calibration::CalibrationConfig;
use hjp_core::estimation::{MleConfig, PotConfig};
use hjp_core::fourier::QuadratureConfig;
use hjp_core::DAYS_PER_YEAR;

use crate::error::{CliError, CliResult};

/// Solver and optimizer settings shared by all subcommands. Every field has a
/// default, so `{}` is a complete config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub days_per_year: f64,
    pub event_cap: usize,
    /// Reporting step of simulated paths and premia series, in years.
    pub grid_step: f64,
    pub pot: PotConfig,
    pub mle: MleConfig,
    pub calibration: CalibrationConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            days_per_year: DAYS_PER_YEAR,
            event_cap: hjp_core::sim::DEFAULT_EVENT_CAP,
            grid_step: 1.0 / DAYS_PER_YEAR,
            pot: PotConfig::default(),
            mle: MleConfig::default(),
            calibration: CalibrationConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> CliResult<Self> {
        let cfg: RunConfig = match path {
            None => RunConfig::default(),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::config(format!("cannot read config {}: {e}", p.display())))?;
                serde_json::from_str(&text).map_err(|e| CliError::config(format!("invalid config {}: {e}", p.display())))?
            }
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> CliResult<()> {
        if self.days_per_year != DAYS_PER_YEAR {
            return Err(CliError::config(format!("days_per_year is fixed at {DAYS_PER_YEAR}")));
        }
        if !(self.grid_step > 0.0) {
            return Err(CliError::config("grid_step must be positive"));
        }
        let q: &QuadratureConfig = &self.calibration.quadrature;
        if !(q.rel_tol > 0.0) || q.order == 0 {
            return Err(CliError::config("quadrature tolerance and order must be positive"));
        }
        Ok(())
    }

    pub fn quadrature(&self) -> QuadratureConfig {
        self.calibration.quadrature
    }
}

/// Header data written into every output file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Meta {
    pub version: String,
    pub config_hash: String,
}

impl Meta {
    /// Hash of the subcommand, the resolved config, the scalar arguments and
    /// the contents (not the paths) of the input files.
    pub fn new(subcommand: &str, cfg: &RunConfig, args: &serde_json::Value, inputs: &[&Path]) -> CliResult<Self> {
        let mut h = Sha256::new();
        h.update(subcommand.as_bytes());
        h.update([0]);
        h.update(serde_json::to_vec(cfg)?);
        h.update([0]);
        h.update(serde_json::to_vec(args)?);
        for p in inputs {
            h.update([0]);
            h.update(std::fs::read(p)?);
        }
        let digest = h.finalize();
        Ok(Self {
            version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash: digest.iter().map(|b| format!("{b:02x}")).collect(),
        })
    }

    pub fn csv_comment(&self) -> String {
        format!("# hjp-version={} config-hash={}\n", self.version, self.config_hash)
    }
}
