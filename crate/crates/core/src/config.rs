//! Scenario and experiment configuration.
//!
//! Configurations are read from TOML. The `[network]` table is mandatory; the
//! remaining tables fall back to defaults. See `configs/` at the repository
//! root for the two shipped presets.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learned::TrainConfig;
use crate::wmmse::SolverConfig;

/// Spatial correlation model used to build `R_kl`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "kebab-case")]
pub enum CorrelationModel {
    /// `R_kl = beta_kl * I`.
    Uncorrelated,
    /// Gaussian angular spread around the AP-to-UE direction, half-wavelength ULA.
    LocalScattering { angular_spread_deg: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ApPlacement {
    /// Cell-centred `sqrt(L) x sqrt(L)` grid.
    Grid,
    /// I.i.d. uniform positions drawn once from the network seed.
    UniformRandom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    pub num_aps: usize,
    pub num_ues: usize,
    pub antennas: usize,
    pub area_m: f64,
    pub tau_c: usize,
    pub tau_p: usize,
    /// Uplink pilot power per UE (W).
    pub pilot_power_w: f64,
    /// Downlink power budget per AP (W).
    pub max_dl_power_w: f64,
    pub noise_power_dbm: f64,
    pub pathloss_offset_db: f64,
    /// dB of attenuation per decade of distance.
    pub pathloss_slope_db: f64,
    /// Exponent applied to the LSF gains by the fractional heuristic.
    pub v_exponent: f64,
    pub correlation: CorrelationModel,
    pub ap_placement: ApPlacement,
    pub seed: u64,
}

impl NetworkConfig {
    /// Simulation setup of the reference evaluation: 16 APs, 20 UEs, 4 antennas, 1 km^2.
    pub fn full_scale() -> Self {
        NetworkConfig {
            num_aps: 16,
            num_ues: 20,
            antennas: 4,
            area_m: 1000.0,
            tau_c: 200,
            tau_p: 10,
            pilot_power_w: 0.1,
            max_dl_power_w: 1.0,
            noise_power_dbm: -94.0,
            pathloss_offset_db: -30.5,
            pathloss_slope_db: 36.7,
            v_exponent: 0.6,
            correlation: CorrelationModel::Uncorrelated,
            ap_placement: ApPlacement::Grid,
            seed: 1,
        }
    }

    /// Small network that trains and evaluates in minutes on a laptop.
    pub fn desk() -> Self {
        NetworkConfig {
            num_aps: 4,
            num_ues: 6,
            antennas: 2,
            area_m: 500.0,
            tau_p: 4,
            ..Self::full_scale()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.to_string()));
        if self.num_aps == 0 || self.num_ues == 0 || self.antennas == 0 {
            return bad("num_aps, num_ues and antennas must be at least 1");
        }
        if self.tau_p == 0 || self.tau_p > self.tau_c {
            return bad("need 1 <= tau_p <= tau_c");
        }
        if !(self.max_dl_power_w > 0.0) {
            return bad("max_dl_power_w must be positive");
        }
        if !self.noise_power_dbm.is_finite() {
            return bad("noise_power_dbm must be finite");
        }
        if !(self.pilot_power_w > 0.0) {
            return bad("pilot_power_w must be positive");
        }
        if !(self.area_m > 0.0) {
            return bad("area_m must be positive");
        }
        if let CorrelationModel::LocalScattering { angular_spread_deg } = self.correlation {
            if !(angular_spread_deg >= 0.0) {
                return bad("angular_spread_deg must be nonnegative");
            }
        }
        Ok(())
    }

    /// Noise power in watts.
    pub fn noise_power(&self) -> f64 {
        10f64.powf((self.noise_power_dbm - 30.0) / 10.0)
    }

    /// Downlink data symbols per coherence block (no uplink data phase).
    pub fn tau_d(&self) -> usize {
        self.tau_c - self.tau_p
    }

    pub fn prelog(&self) -> f64 {
        self.tau_d() as f64 / self.tau_c as f64
    }
}

fn default_realizations() -> usize {
    1000
}

fn default_cluster_size() -> usize {
    4
}

fn default_degenerate_fraction() -> f64 {
    0.05
}

/// Everything a pipeline run needs besides CLI flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub network: NetworkConfig,
    /// Channel realizations per drop used to estimate the SE statistics.
    #[serde(default = "default_realizations")]
    pub realizations: usize,
    /// APs per cluster for the clustered network.
    #[serde(default = "default_cluster_size")]
    pub cluster_size: usize,
    /// Fraction of degenerate samples above which a run fails with exit code 3.
    #[serde(default = "default_degenerate_fraction")]
    pub max_degenerate_fraction: f64,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub train: TrainConfig,
}

impl ExperimentConfig {
    pub fn new(network: NetworkConfig) -> Self {
        let cluster_size = if network.num_aps.is_multiple_of(default_cluster_size()) {
            default_cluster_size()
        } else {
            1
        };
        ExperimentConfig {
            network,
            realizations: default_realizations(),
            cluster_size,
            max_degenerate_fraction: default_degenerate_fraction(),
            solver: SolverConfig::default(),
            train: TrainConfig::default(),
        }
    }

    pub fn desk() -> Self {
        ExperimentConfig {
            cluster_size: 2,
            ..Self::new(NetworkConfig::desk())
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config is always representable as TOML")
    }

    pub fn validate(&self) -> Result<()> {
        self.network.validate()?;
        if self.realizations < 100 {
            return Err(Error::InvalidConfig("realizations must be at least 100".into()));
        }
        if self.cluster_size == 0 {
            return Err(Error::InvalidConfig("cluster_size must be at least 1".into()));
        }
        self.solver.validate()?;
        self.train.validate()?;
        Ok(())
    }
}
