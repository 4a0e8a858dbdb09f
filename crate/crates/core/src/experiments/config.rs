//! Flat TOML experiment configuration with versioned schema and profiles.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::basis::{BasisConfig, BasisKind};
use crate::error::{Error, Result};
use crate::frontend::{LinkBudget, RappParams};
use crate::pilot::PilotDistribution;

use super::sim::{Scenario, TruthModel};

pub const SCHEMA_VERSION: u32 = 1;

/// Which sweep to run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    OrderSweep,
    PilotLengthSweep,
    PilotCompare,
    MimoSweep,
    IqSweep,
    BoundCheck,
    SelectPilot,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::OrderSweep => "order_sweep",
            Self::PilotLengthSweep => "pilot_length_sweep",
            Self::PilotCompare => "pilot_compare",
            Self::MimoSweep => "mimo_sweep",
            Self::IqSweep => "iq_sweep",
            Self::BoundCheck => "bound_check",
            Self::SelectPilot => "select_pilot",
        }
    }
}

/// Scale presets.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    Desk,
    Paper,
}

impl std::str::FromStr for Profile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Self::Desk),
            "paper" => Ok(Self::Paper),
            other => Err(Error::Config(format!("unknown profile {other:?}, expected desk or paper"))),
        }
    }
}

/// Every experiment parameter, one flat key per field.
///
/// Pilot and data lengths are given in symbols of `symbol_length` samples.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub experiment: ExperimentKind,
    pub master_seed: u64,
    pub trials: usize,

    /// Canceller orders swept by order and MIMO sweeps.
    pub orders: Vec<usize>,
    /// Canceller order for fixed-order experiments.
    pub order: usize,
    /// Canceller order for the I/Q sweep.
    pub iq_order: usize,
    /// Channel and canceller memory `L_h`.
    pub memory: usize,
    pub symbol_length: usize,
    pub pilot_symbols: usize,
    pub pilot_symbol_list: Vec<usize>,
    pub data_symbols: usize,
    pub pilot_distribution: PilotDistribution,
    pub ensemble_size: usize,

    pub tx_power_dbm: f64,
    pub tx_snr_db: f64,
    pub rx_noise_dbm: f64,
    pub adc_bits: u32,

    pub pa_gain_db: f64,
    pub pa_sat_power_dbm: f64,
    pub pa_smoothness: f64,
    pub pa_phase_gain: f64,
    pub pa_phase_sat: f64,
    pub pa_phase_smoothness: f64,
    /// 0 for the RAPP truth, otherwise the order of a fitted polynomial truth.
    pub truth_order: usize,

    pub delay_spread_taps: f64,
    pub asic_db: f64,
    pub isolation_db: f64,

    pub antennas: Vec<usize>,
    pub irr_db: Vec<f64>,

    pub bound_instances: usize,
    pub noise_realizations: usize,
    pub bias_seeds: usize,
    pub bias_realizations: usize,
    pub bias_lengths: Vec<usize>,
}

impl ExperimentConfig {
    /// Desk-scale defaults (runs in minutes on one core).
    pub fn desk(experiment: ExperimentKind) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            experiment,
            master_seed: 1,
            trials: 200,
            orders: vec![1, 3, 5, 7, 9, 11],
            order: 9,
            iq_order: 5,
            memory: 8,
            symbol_length: 256,
            pilot_symbols: 2,
            pilot_symbol_list: vec![1, 2, 4, 8],
            data_symbols: 4,
            pilot_distribution: PilotDistribution::Gaussian,
            ensemble_size: 1000,
            tx_power_dbm: 23.0,
            tx_snr_db: 50.0,
            rx_noise_dbm: -90.0,
            adc_bits: 12,
            pa_gain_db: 30.0,
            pa_sat_power_dbm: 30.0,
            pa_smoothness: 2.0,
            pa_phase_gain: -0.15,
            pa_phase_sat: 0.88,
            pa_phase_smoothness: 2.0,
            truth_order: 0,
            delay_spread_taps: 2.0,
            asic_db: 60.0,
            isolation_db: -15.0,
            antennas: vec![1, 2, 4],
            irr_db: vec![20.0, 25.0, 30.0, 35.0, 40.0, 45.0, 50.0, 55.0, 60.0, 65.0, 70.0],
            bound_instances: 1000,
            noise_realizations: 200,
            bias_seeds: 50,
            bias_realizations: 50,
            bias_lengths: vec![1024, 4096, 16384],
        }
    }

    /// Full-scale settings: `L_h = 100`, 1280-sample symbols, 1000 trials.
    pub fn paper(experiment: ExperimentKind) -> Self {
        Self {
            trials: 1000,
            memory: 100,
            symbol_length: 1280,
            ..Self::desk(experiment)
        }
    }

    pub fn profile(profile: Profile, experiment: ExperimentKind) -> Self {
        match profile {
            Profile::Desk => Self::desk(experiment),
            Profile::Paper => Self::paper(experiment),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.schema_version != SCHEMA_VERSION {
            return bad(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            ));
        }
        if self.trials == 0 {
            return bad("trials must be >= 1".into());
        }
        if self.orders.is_empty() {
            return bad("orders must not be empty".into());
        }
        if self.orders.windows(2).any(|w| w[1] <= w[0]) {
            return bad("orders must be strictly increasing".into());
        }
        for &p in self.orders.iter().chain([&self.order, &self.iq_order]) {
            BasisConfig::new(p, self.memory, BasisKind::Glp).map_err(|e| Error::Config(e.to_string()))?;
        }
        if self.truth_order != 0 {
            BasisConfig::new(self.truth_order, 0, BasisKind::Glp).map_err(|e| Error::Config(e.to_string()))?;
        }
        if self.symbol_length == 0 || self.pilot_symbols == 0 || self.data_symbols == 0 {
            return bad("symbol_length, pilot_symbols and data_symbols must be >= 1".into());
        }
        if self.pilot_symbol_list.is_empty()
            || self.pilot_symbol_list.contains(&0)
            || self.pilot_symbol_list.windows(2).any(|w| w[1] <= w[0])
        {
            return bad("pilot_symbol_list must be non-empty, positive and strictly increasing".into());
        }
        if self.ensemble_size == 0 {
            return bad("ensemble_size must be >= 1".into());
        }
        if self.antennas.is_empty() || self.antennas.contains(&0) || self.antennas.windows(2).any(|w| w[1] <= w[0]) {
            return bad("antennas must be non-empty, positive and strictly increasing".into());
        }
        if self.irr_db.is_empty() || self.irr_db.iter().any(|&v| !(v > 0.0)) || self.irr_db.windows(2).any(|w| w[1] <= w[0]) {
            return bad("irr_db must be non-empty, positive and strictly increasing".into());
        }
        if self.bias_lengths.is_empty() || self.bias_lengths.windows(2).any(|w| w[1] <= w[0]) {
            return bad("bias_lengths must be non-empty and strictly increasing".into());
        }
        if self.bound_instances == 0 || self.noise_realizations == 0 || self.bias_seeds == 0 || self.bias_realizations == 0 {
            return bad("bound-check counts must be >= 1".into());
        }
        self.rapp().validate().map_err(|e| Error::Config(e.to_string()))?;
        self.link().validate().map_err(|e| Error::Config(e.to_string()))?;
        if !(self.delay_spread_taps > 0.0) || !(self.asic_db >= 0.0) || !self.isolation_db.is_finite() {
            return bad("channel settings need delay_spread_taps > 0, asic_db >= 0 and a finite isolation_db".into());
        }
        // Every pilot must leave at least as many rows as unknowns.
        let max_order = self.orders.iter().copied().chain([self.order]).max().unwrap_or(1);
        let max_antennas = if self.experiment == ExperimentKind::MimoSweep {
            self.antennas.iter().copied().max().unwrap_or(1)
        } else {
            1
        };
        let columns = BasisConfig::with_antennas(max_order, self.memory, BasisKind::Glp, max_antennas)
            .map_err(|e| Error::Config(e.to_string()))?
            .columns();
        let shortest = match self.experiment {
            ExperimentKind::PilotLengthSweep => self.pilot_symbol_list[0],
            _ => self.pilot_symbols,
        } * self.symbol_length;
        if shortest < columns + self.memory {
            return bad(format!(
                "pilot of {shortest} samples is too short for {columns} canceller weights with memory {}",
                self.memory
            ));
        }
        Ok(())
    }

    pub fn rapp(&self) -> RappParams {
        RappParams {
            linear_gain_db: self.pa_gain_db,
            sat_power_dbm: self.pa_sat_power_dbm,
            smoothness: self.pa_smoothness,
            phase_gain: self.pa_phase_gain,
            phase_sat: self.pa_phase_sat,
            phase_smoothness: self.pa_phase_smoothness,
        }
    }

    pub fn link(&self) -> LinkBudget {
        LinkBudget {
            tx_power_dbm: self.tx_power_dbm,
            tx_snr_db: self.tx_snr_db,
            rx_noise_dbm: self.rx_noise_dbm,
            adc_bits: self.adc_bits,
        }
    }

    pub fn truth(&self) -> TruthModel {
        match self.truth_order {
            0 => TruthModel::Rapp,
            order => TruthModel::Polynomial { order },
        }
    }

    /// Single-antenna scenario without I/Q imbalance.
    pub fn scenario(&self) -> Scenario {
        Scenario {
            rapp: self.rapp(),
            truth: self.truth(),
            link: self.link(),
            memory: self.memory,
            delay_spread_taps: self.delay_spread_taps,
            asic_db: self.asic_db,
            isolation_db: self.isolation_db,
            antennas: 1,
            irr_db: None,
        }
    }

    pub fn pilot_length(&self) -> usize {
        self.pilot_symbols * self.symbol_length
    }

    pub fn data_length(&self) -> usize {
        self.data_symbols * self.symbol_length
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Apply the keys of a (possibly partial) TOML document on top of `self`.
    pub fn merged_with(&self, text: &str) -> Result<Self> {
        let overrides: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        let mut base = toml::Table::try_from(self).map_err(|e| Error::Config(e.to_string()))?;
        for (k, v) in overrides {
            if !base.contains_key(&k) {
                return Err(Error::Config(format!("unknown configuration key {k:?}")));
            }
            base.insert(k, v);
        }
        base.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))
    }

    pub fn load_over(&self, path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        self.merged_with(&text)
    }

    /// SHA-256 of the canonical TOML serialization.
    pub fn hash(&self) -> Result<String> {
        Ok(hex::encode(Sha256::digest(self.to_toml()?.as_bytes())))
    }
}
