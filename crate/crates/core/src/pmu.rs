//! Charge-ready / update / brownout state machine of the harvester PMU,
//! the boost converter feeding the MCU and display, and the update load.
//!
//! The PMU's low-voltage LDO enables the boost converter once the buffer
//! reaches `v_chrdy`. During an update the MCU holds the boost enabled through
//! the ORing path, so the buffer may discharge past `v_ovdis` down to the
//! boost converter's minimum input `v_boost_min`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::storage::VoltageWindow;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PmuConfig {
    /// Overvoltage protection: charging stops at or above this voltage.
    #[serde(rename = "v_ovch_v")]
    pub v_ovch: f64,
    #[serde(rename = "v_chrdy_v")]
    pub v_chrdy: f64,
    #[serde(rename = "v_ovdis_v")]
    pub v_ovdis: f64,
    #[serde(rename = "v_boost_min_v")]
    pub v_boost_min: f64,
    pub boost_efficiency: f64,
    #[serde(rename = "output_voltage_v")]
    pub output_voltage: f64,
    /// MCU-driven override that keeps the boost enabled below `v_ovdis`.
    pub oring: bool,
    /// Delay between charge-ready and the start of an update.
    pub holdoff_s: f64,
}

impl Default for PmuConfig {
    fn default() -> Self {
        PmuConfig {
            v_ovch: 4.5,
            v_chrdy: 3.1,
            v_ovdis: 2.8,
            v_boost_min: 0.9,
            boost_efficiency: 0.90,
            output_voltage: 3.3,
            oring: true,
            holdoff_s: 0.0,
        }
    }
}

impl PmuConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.v_boost_min < self.v_ovdis && self.v_ovdis < self.v_chrdy && self.v_chrdy <= self.v_ovch) {
            return Err(Error::config(format!(
                "PMU thresholds must satisfy v_boost_min < v_ovdis < v_chrdy <= v_ovch, got {} / {} / {} / {} V",
                self.v_boost_min, self.v_ovdis, self.v_chrdy, self.v_ovch
            )));
        }
        if !(self.v_boost_min >= 0.0) {
            return Err(Error::config("v_boost_min must be non-negative"));
        }
        if !(self.boost_efficiency > 0.0 && self.boost_efficiency <= 1.0) {
            return Err(Error::config(format!(
                "boost efficiency must lie in (0, 1], got {}",
                self.boost_efficiency
            )));
        }
        if !(self.holdoff_s >= 0.0) {
            return Err(Error::config("holdoff must be non-negative"));
        }
        Ok(())
    }
}

/// Energy drawn by one display update, spread at constant power over its duration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoadProfile {
    #[serde(rename = "update_energy_j")]
    pub update_energy: f64,
    #[serde(rename = "update_duration_s")]
    pub update_duration: f64,
    #[serde(rename = "quiescent_power_w", default)]
    pub quiescent_power: f64,
}

impl Default for LoadProfile {
    fn default() -> Self {
        LoadProfile {
            update_energy: 0.075,
            update_duration: 5.2,
            quiescent_power: 0.0,
        }
    }
}

impl LoadProfile {
    pub fn validate(&self) -> Result<()> {
        if !(self.update_energy > 0.0) || !(self.update_duration > 0.0) {
            return Err(Error::config("update energy and duration must be positive"));
        }
        if !(self.quiescent_power >= 0.0) {
            return Err(Error::config("quiescent power must be non-negative"));
        }
        Ok(())
    }

    /// Power at the boost output while an update runs.
    pub fn update_power(&self) -> f64 {
        self.update_energy / self.update_duration
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum PmuState {
    ColdCharging,
    /// Waiting out the configured hold-off after charge-ready.
    Ready { waited_s: f64 },
    Updating { elapsed_s: f64 },
    PostUpdate,
    /// Update aborted. `rearmed` turns true once the sensed voltage has
    /// dropped below `v_ovdis`; only then does charge-ready trigger again.
    Brownout { rearmed: bool },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct PmuOutputs {
    pub boost_enabled: bool,
    pub load_active: bool,
    pub oring_override: bool,
}

impl PmuState {
    pub fn outputs(&self, config: &PmuConfig) -> PmuOutputs {
        match self {
            PmuState::Updating { .. } => PmuOutputs {
                boost_enabled: true,
                load_active: true,
                oring_override: config.oring,
            },
            _ => PmuOutputs {
                boost_enabled: false,
                load_active: false,
                oring_override: false,
            },
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            PmuState::ColdCharging => "cold_charging",
            PmuState::Ready { .. } => "ready",
            PmuState::Updating { .. } => "updating",
            PmuState::PostUpdate => "post_update",
            PmuState::Brownout { .. } => "brownout",
        }
    }
}

/// Boost converter input power for an output demand of `p_out_w`.
pub fn boost_input_power(config: &PmuConfig, p_out_w: f64) -> f64 {
    p_out_w / config.boost_efficiency
}

/// Discharge window the update may use.
pub fn usable_window(config: &PmuConfig) -> Result<VoltageWindow> {
    let floor = if config.oring { config.v_boost_min } else { config.v_ovdis };
    VoltageWindow::new(config.v_chrdy, floor)
}

/// Advances the state machine by one tick.
///
/// `v_cap` is the buffer voltage the PMU senses at the start of the tick.
/// Returns the next state and the boost input power drawn during the tick.
pub fn step(
    state: PmuState,
    config: &PmuConfig,
    load: &LoadProfile,
    v_cap: f64,
    dt: f64,
) -> Result<(PmuState, f64)> {
    if !(dt > 0.0) {
        return Err(Error::domain(format!("time step must be positive, got {dt} s")));
    }
    if !(v_cap >= 0.0) {
        return Err(Error::domain(format!("capacitor voltage must be non-negative, got {v_cap} V")));
    }
    config.validate()?;

    let ready = v_cap >= config.v_chrdy;
    let next = match state {
        PmuState::ColdCharging if ready => return begin_ready(config, load, dt),
        PmuState::ColdCharging => PmuState::ColdCharging,
        PmuState::Ready { waited_s } => {
            let waited = waited_s + dt;
            if waited >= config.holdoff_s {
                return start_update(config, load, dt);
            }
            PmuState::Ready { waited_s: waited }
        }
        PmuState::Updating { elapsed_s } => {
            let floor = if config.oring { config.v_boost_min } else { config.v_ovdis };
            if v_cap < floor {
                PmuState::Brownout { rearmed: false }
            } else if elapsed_s >= load.update_duration {
                PmuState::PostUpdate
            } else {
                return Ok(update_tick(config, load, elapsed_s, dt));
            }
        }
        PmuState::PostUpdate => PmuState::ColdCharging,
        PmuState::Brownout { rearmed } => {
            if rearmed && ready {
                return begin_ready(config, load, dt);
            }
            PmuState::Brownout {
                rearmed: rearmed || v_cap < config.v_ovdis,
            }
        }
    };
    Ok((next, 0.0))
}

fn begin_ready(config: &PmuConfig, load: &LoadProfile, dt: f64) -> Result<(PmuState, f64)> {
    if config.holdoff_s > 0.0 {
        Ok((PmuState::Ready { waited_s: 0.0 }, 0.0))
    } else {
        start_update(config, load, dt)
    }
}

fn start_update(config: &PmuConfig, load: &LoadProfile, dt: f64) -> Result<(PmuState, f64)> {
    Ok(update_tick(config, load, 0.0, dt))
}

/// One tick of constant-power update; the final tick is prorated so the
/// delivered energy matches `update_energy` exactly.
fn update_tick(config: &PmuConfig, load: &LoadProfile, elapsed_s: f64, dt: f64) -> (PmuState, f64) {
    let active = dt.min(load.update_duration - elapsed_s).max(0.0);
    let p_out = load.update_power() * active / dt + load.quiescent_power;
    let elapsed = if active < dt { load.update_duration } else { elapsed_s + dt };
    (PmuState::Updating { elapsed_s: elapsed }, boost_input_power(config, p_out))
}

/// A named PMU configuration from the presets file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Preset {
    #[serde(default)]
    pub description: String,
    #[serde(flatten)]
    pub config: PmuConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PresetFile {
    pub preset: BTreeMap<String, Preset>,
}

pub const DEFAULT_PRESET: &str = "aem40940-esl";

impl PresetFile {
    pub fn from_toml_str(text: &str, origin: &str) -> Result<Self> {
        let file: PresetFile = toml::from_str(text).map_err(|e| Error::parse(origin, e))?;
        for (name, p) in &file.preset {
            p.config
                .validate()
                .map_err(|e| Error::parse(origin, format!("preset '{name}': {e}")))?;
        }
        Ok(file)
    }

    pub fn builtin() -> Result<Self> {
        Self::from_toml_str(crate::data::DEFAULT_PMU_PRESETS_TOML, "<builtin presets>")
    }

    pub fn get(&self, name: &str) -> Result<&PmuConfig> {
        self.preset.get(name).map(|p| &p.config).ok_or_else(|| {
            Error::config(format!(
                "unknown PMU preset '{name}' (available: {})",
                self.preset.keys().cloned().collect::<Vec<_>>().join(", ")
            ))
        })
    }
}
