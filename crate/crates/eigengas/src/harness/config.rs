//! Run configuration: JSON schema, defaults, validation and hashing.
//!
//! Every knob of a run lives here so that a config file plus a master seed
//! reproduces an experiment byte for byte.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gas::IntegratorOptions;
use crate::hamiltonian::{BiasPreset, GateOp};
use crate::noise::{AmplitudeSchedule, NoiseMode};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepAxis {
    /// Computation speed `1/T`; one ensemble evaluated at every speed.
    Speed,
    /// Noise amplitude; one ensemble per amplitude at a fixed speed.
    Amplitude,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseSettings {
    pub mode: NoiseMode,
    pub schedule: AmplitudeSchedule,
}

impl Default for NoiseSettings {
    fn default() -> Self {
        Self {
            mode: NoiseMode::Ou,
            schedule: AmplitudeSchedule::Constant { epsilon: 0.1 },
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IntegratorSettings {
    pub base_step: f64,
    pub tol: f64,
    pub gap_threshold: f64,
    pub max_depth: u32,
    pub denominator_floor: f64,
    pub coupling_floor: f64,
}

impl Default for IntegratorSettings {
    fn default() -> Self {
        let o = IntegratorOptions::default();
        Self {
            base_step: o.base_step,
            tol: o.corrector_tol,
            gap_threshold: o.gap_threshold,
            max_depth: o.max_depth,
            denominator_floor: o.denominator_floor,
            coupling_floor: o.coupling_floor,
        }
    }
}

impl IntegratorSettings {
    pub fn to_options(self) -> IntegratorOptions {
        IntegratorOptions {
            base_step: self.base_step,
            corrector_tol: self.tol,
            gap_threshold: self.gap_threshold,
            max_depth: self.max_depth,
            denominator_floor: self.denominator_floor,
            coupling_floor: self.coupling_floor,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnsembleSettings {
    pub n: usize,
    pub seed: u64,
}

impl Default for EnsembleSettings {
    fn default() -> Self {
        Self { n: 100, seed: 1 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepSettings {
    pub axis: SweepAxis,
    /// Speeds for a speed sweep, amplitudes for an amplitude sweep.
    pub values: Vec<f64>,
    /// Fixed speed used by amplitude sweeps.
    pub at_speed: Option<f64>,
}

impl Default for SweepSettings {
    fn default() -> Self {
        Self {
            axis: SweepAxis::Speed,
            values: default_speed_grid(),
            at_speed: None,
        }
    }
}

/// 24 log-spaced speeds per decade across four decades, `1e-5` to `1e-1`.
pub fn default_speed_grid() -> Vec<f64> {
    (0..=96).map(|k| 10f64.powf(-5.0 + k as f64 / 24.0)).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitSettings {
    /// Success band the power-law fit is restricted to.
    pub p_min: f64,
    pub p_max: f64,
}

impl Default for FitSettings {
    fn default() -> Self {
        Self {
            p_min: 0.02,
            p_max: 0.5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub operation: GateOp,
    pub bias_preset: BiasPreset,
    /// Inverse of the bias scale; the sweep starts from a bias this much
    /// larger than the problem Hamiltonian.
    pub z_inv: f64,
    /// Input-penalty strength.
    pub mu: f64,
    /// Mean-reversion rate of the noise process.
    pub tau: f64,
    pub noise: NoiseSettings,
    pub integrator: IntegratorSettings,
    pub grid_points: usize,
    pub ensemble: EnsembleSettings,
    pub sweep: SweepSettings,
    pub fit: FitSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            operation: GateOp::OneOne,
            bias_preset: BiasPreset::Commuting,
            z_inv: 0.1,
            mu: -0.1,
            tau: 0.1,
            noise: NoiseSettings::default(),
            integrator: IntegratorSettings::default(),
            grid_points: 1001,
            ensemble: EnsembleSettings::default(),
            sweep: SweepSettings::default(),
            fit: FitSettings::default(),
        }
    }
}

impl RunConfig {
    pub fn z(&self) -> f64 {
        1.0 / self.z_inv
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.z_inv > 0.0 && self.z_inv.is_finite()) {
            return Err(Error::InvalidConfig(format!("z_inv must be positive, got {}", self.z_inv)));
        }
        if !self.mu.is_finite() {
            return Err(Error::InvalidConfig("mu must be finite".into()));
        }
        if !(self.tau > 0.0) {
            return Err(Error::InvalidConfig(format!("tau must be positive, got {}", self.tau)));
        }
        self.noise.schedule.validate()?;
        if self.grid_points < 3 {
            return Err(Error::InvalidConfig(format!(
                "grid_points must be at least 3, got {}",
                self.grid_points
            )));
        }
        let i = &self.integrator;
        if !(i.base_step > 0.0 && i.tol > 0.0 && i.gap_threshold >= 0.0)
            || !(i.denominator_floor > 0.0 && i.coupling_floor > 0.0)
        {
            return Err(Error::InvalidConfig("integrator settings must be positive".into()));
        }
        if self.ensemble.n == 0 {
            return Err(Error::InvalidConfig("ensemble.n must be at least 1".into()));
        }
        if self.sweep.values.is_empty() {
            return Err(Error::InvalidConfig("sweep.values must be nonempty".into()));
        }
        if self.sweep.values.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::InvalidConfig("sweep.values must be positive".into()));
        }
        if let Some(s) = self.sweep.at_speed {
            if !(s > 0.0) {
                return Err(Error::InvalidConfig("sweep.at_speed must be positive".into()));
            }
        }
        if !(self.fit.p_min > 0.0 && self.fit.p_min < self.fit.p_max && self.fit.p_max <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "fit band must satisfy 0 < p_min < p_max <= 1, got [{}, {}]",
                self.fit.p_min, self.fit.p_max
            )));
        }
        Ok(())
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(json)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }

    /// FNV-1a hash of the canonical JSON form, hex encoded. Stable across
    /// runs and platforms for identical configurations.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        let mut h: u64 = 0xcbf29ce484222325;
        for b in json.as_bytes() {
            h ^= *b as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
        format!("{h:016x}")
    }
}
