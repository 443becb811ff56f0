use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::linalg::{db_to_linear, dbm_to_watts};
use crate::{Error, Result};

use super::pathloss::PathLossModel;

/// Full-duplex trains UL and DL UEs in two phases; half-duplex trains everyone at once.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Duplex {
    Fd,
    Hd,
}

/// Scenario, power, noise, pilot and optimizer parameters.
///
/// Powers are in watts, gains are linear. Defaults reproduce the reference
/// simulation setup: 64 two-antenna APs in a 1 km disc, -104 dBm noise,
/// -110 dB residual self-interference, 43 dBm total AP power, 23 dBm UL UEs,
/// 0.5 bits/s/Hz rate floors and a 200-symbol coherence block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemConfig {
    pub num_aps: usize,
    pub antennas_per_ap: usize,
    pub num_dl: usize,
    pub num_ul: usize,
    pub pilot_len: usize,
    /// Disc radius in meters.
    pub radius: f64,
    /// Hz. Carried for completeness; spectral efficiencies are per Hz.
    pub bandwidth: f64,
    /// Receiver noise power (APs and DL UEs), watts.
    pub noise_power: f64,
    /// Residual self-interference suppression level, linear in [0, 1).
    pub rsi: f64,
    pub rician_factor_db: f64,
    pub shadow_std_db: f64,
    /// Power budget summed over all APs, watts.
    pub total_ap_power: f64,
    pub ul_power_max: f64,
    /// Per-UE pilot power, watts.
    pub train_power: f64,
    /// DL rate floor, bits/s/Hz.
    pub rate_floor_dl: f64,
    /// UL rate floor, bits/s/Hz.
    pub rate_floor_ul: f64,
    /// Coherence block length in symbols.
    pub coherence: usize,
    /// Association threshold on the signal-power ratio; `None` means `1e-3 / M`.
    pub assoc_threshold: Option<f64>,
    pub rng_seed: u64,
    pub sca_tol: f64,
    pub sca_max_iter: usize,
    pub solver_tol: f64,
    /// Pairwise distances are clamped to at least this many meters.
    pub min_distance: f64,
    pub path_loss: PathLossModel,
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self {
            num_aps: 64,
            antennas_per_ap: 2,
            num_dl: 10,
            num_ul: 10,
            pilot_len: 8,
            radius: 1000.0,
            bandwidth: 10e6,
            noise_power: dbm_to_watts(-104.0),
            rsi: db_to_linear(-110.0),
            rician_factor_db: 5.0,
            shadow_std_db: 8.0,
            total_ap_power: dbm_to_watts(43.0),
            ul_power_max: dbm_to_watts(23.0),
            train_power: dbm_to_watts(23.0),
            rate_floor_dl: 0.5,
            rate_floor_ul: 0.5,
            coherence: 200,
            assoc_threshold: None,
            rng_seed: 1,
            sca_tol: 1e-3,
            sca_max_iter: 200,
            solver_tol: 1e-8,
            min_distance: 1.0,
            path_loss: PathLossModel::default(),
        }
    }
}

impl SystemConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config is always serializable")
    }

    /// Checks the hard invariants. `pilot_len < min(K, L)` is the interesting
    /// regime but is not enforced, so sweeps may cross it.
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.num_aps == 0 || self.antennas_per_ap == 0 {
            return fail("need at least one AP antenna".into());
        }
        if self.pilot_len == 0 {
            return fail("pilot length must be positive".into());
        }
        if !(self.radius >= 0.0) {
            return fail(format!("radius {} must be non-negative", self.radius));
        }
        if !(0.0..1.0).contains(&self.rsi) {
            return fail(format!("rsi {} outside [0, 1)", self.rsi));
        }
        for (name, v) in [
            ("noise_power", self.noise_power),
            ("total_ap_power", self.total_ap_power),
            ("ul_power_max", self.ul_power_max),
            ("train_power", self.train_power),
            ("min_distance", self.min_distance),
            ("solver_tol", self.solver_tol),
            ("sca_tol", self.sca_tol),
        ] {
            if !(v > 0.0) {
                return fail(format!("{name} must be positive, got {v}"));
            }
        }
        if self.shadow_std_db < 0.0 {
            return fail("shadow_std_db must be non-negative".into());
        }
        if self.rate_floor_dl < 0.0 || self.rate_floor_ul < 0.0 {
            return fail("rate floors must be non-negative".into());
        }
        if self.training_len(Duplex::Fd) >= self.coherence {
            return fail(format!(
                "training length {} must be shorter than coherence {}",
                self.training_len(Duplex::Fd),
                self.coherence
            ));
        }
        if let Some(t) = self.assoc_threshold {
            if !(0.0..1.0).contains(&t) {
                return fail(format!("assoc_threshold {t} outside [0, 1)"));
            }
        }
        self.path_loss.validate()
    }

    pub fn total_antennas(&self) -> usize {
        self.num_aps * self.antennas_per_ap
    }

    /// Antenna indices owned by AP `m` in the stacked N-dimensional layout.
    pub fn antennas(&self, m: usize) -> Range<usize> {
        m * self.antennas_per_ap..(m + 1) * self.antennas_per_ap
    }

    pub fn ap_of_antenna(&self, n: usize) -> usize {
        n / self.antennas_per_ap
    }

    pub fn ap_power_max(&self) -> f64 {
        self.total_ap_power / self.num_aps as f64
    }

    pub fn assoc_threshold(&self) -> f64 {
        self.assoc_threshold
            .unwrap_or(1e-3 / self.num_aps as f64)
    }

    pub fn training_len(&self, duplex: Duplex) -> usize {
        match duplex {
            Duplex::Fd => 2 * self.pilot_len,
            Duplex::Hd => self.pilot_len,
        }
    }

    /// Minimum SINR implied by a rate floor in bits/s/Hz.
    pub fn sinr_floor(rate_bits: f64) -> f64 {
        (rate_bits * std::f64::consts::LN_2).exp() - 1.0
    }
}
