//! Energy model of an RF-powered, batteryless electronic shelf label.
//!
//! The crate covers the whole chain from transmitter to e-paper update:
//!
//! * [`linkbudget`]: free-space loss, array gain, regulatory caps and
//!   harvester-sensitivity verdicts.
//! * [`storage`]: capacitor energy, buffer sizing, E12 rounding, ESR limits
//!   and the parts catalog.
//! * [`harvester`]: calibrated RF-to-DC efficiency surface.
//! * [`pmu`]: charge-ready / update / brownout state machine and load profile.
//! * [`sim`]: deterministic fixed-step simulation of the full stack.
//! * [`optimizer`]: capacitor ranking, buffer recommendation and power sweeps.
//!
//! [`config`] reads the TOML scenario files shared by the CLI, and [`data`]
//! locates the shipped catalog, calibration and PMU presets.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod data;
pub mod error;
pub mod export;
pub mod harvester;
pub mod linkbudget;
pub mod optimizer;
pub mod pmu;
pub mod sim;
pub mod storage;
pub mod units;

pub use error::{Error, Result};
pub use harvester::{CalibrationTable, HarvesterModel, TrendWarning};
pub use linkbudget::{Band, BandTable, Combining, FeasibilityVerdict, LinkSpec, RegulatoryVerdict};
pub use optimizer::{Objective, RankedOption, Recommendation, Requirements, Stack};
pub use pmu::{LoadProfile, PmuConfig, PmuState};
pub use sim::{Scenario, SimResult, Stimulus};
pub use storage::{Catalog, CapacitorSpec, SizingResult, Technology, VoltageWindow};
