//! Free-space link budget for far-field wireless power transfer.
//!
//! Only line-of-sight free-space loss is modelled. Multi-antenna transmitters
//! are reduced to an array gain: coherent combining adds amplitudes (power
//! grows with N²), incoherent combining adds powers (power grows with N).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::units::{dbm_to_watts, watts_to_dbm, SPEED_OF_LIGHT};

/// A regulated frequency band with its transmit power cap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub name: String,
    pub f_low_hz: f64,
    pub f_high_hz: f64,
    pub max_tx_power_w: f64,
}

impl Band {
    pub fn new(name: impl Into<String>, f_low_hz: f64, f_high_hz: f64, max_tx_power_w: f64) -> Result<Self> {
        let band = Band {
            name: name.into(),
            f_low_hz,
            f_high_hz,
            max_tx_power_w,
        };
        band.validate()?;
        Ok(band)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.f_low_hz < self.f_high_hz) {
            return Err(Error::config(format!(
                "band '{}': f_low ({} Hz) must be below f_high ({} Hz)",
                self.name, self.f_low_hz, self.f_high_hz
            )));
        }
        if !(self.max_tx_power_w > 0.0) {
            return Err(Error::config(format!(
                "band '{}': max transmit power must be positive",
                self.name
            )));
        }
        Ok(())
    }

    /// Band edges are inclusive.
    pub fn contains(&self, frequency_hz: f64) -> bool {
        frequency_hz >= self.f_low_hz && frequency_hz <= self.f_high_hz
    }
}

/// Ordered set of regulated bands.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct BandTable {
    bands: Vec<Band>,
}

impl BandTable {
    pub fn new(bands: Vec<Band>) -> Result<Self> {
        for band in &bands {
            band.validate()?;
        }
        Ok(BandTable { bands })
    }

    /// The two European SRD/RFID bands: 915–921 MHz at 4 W and 865–868 MHz at 2 W.
    pub fn eu_default() -> Self {
        BandTable {
            bands: vec![
                Band {
                    name: "EU 915-921 MHz".into(),
                    f_low_hz: 915e6,
                    f_high_hz: 921e6,
                    max_tx_power_w: 4.0,
                },
                Band {
                    name: "EU 865-868 MHz".into(),
                    f_low_hz: 865e6,
                    f_high_hz: 868e6,
                    max_tx_power_w: 2.0,
                },
            ],
        }
    }

    pub fn bands(&self) -> &[Band] {
        &self.bands
    }

    pub fn push(&mut self, band: Band) -> Result<()> {
        band.validate()?;
        self.bands.push(band);
        Ok(())
    }

    pub fn is_empty(&self) -> bool {
        self.bands.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Combining {
    Coherent,
    Incoherent,
    Single,
}

/// Transmitter array, geometry and antenna gains of one link.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkSpec {
    /// Conducted power per antenna element, dBm.
    pub tx_power_per_antenna_dbm: f64,
    pub n_antennas: u32,
    pub combining: Combining,
    pub frequency_hz: f64,
    pub distance_m: f64,
    pub tx_gain_dbi: f64,
    pub rx_gain_dbi: f64,
}

impl LinkSpec {
    /// Single isotropic transmitter.
    pub fn single(tx_power_dbm: f64, frequency_hz: f64, distance_m: f64) -> Self {
        LinkSpec {
            tx_power_per_antenna_dbm: tx_power_dbm,
            n_antennas: 1,
            combining: Combining::Single,
            frequency_hz,
            distance_m,
            tx_gain_dbi: 0.0,
            rx_gain_dbi: 0.0,
        }
    }

    /// Array whose total conducted power `total_w` is split evenly across `n` elements.
    pub fn from_total_power(
        total_w: f64,
        n_antennas: u32,
        combining: Combining,
        frequency_hz: f64,
        distance_m: f64,
    ) -> Result<Self> {
        if n_antennas == 0 {
            return Err(Error::config("n_antennas must be at least 1"));
        }
        if !(total_w > 0.0) {
            return Err(Error::domain("total transmit power must be positive"));
        }
        let spec = LinkSpec {
            tx_power_per_antenna_dbm: per_antenna_dbm(total_w, n_antennas),
            n_antennas,
            combining,
            frequency_hz,
            distance_m,
            tx_gain_dbi: 0.0,
            rx_gain_dbi: 0.0,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.distance_m > 0.0) {
            return Err(Error::domain(format!("distance must be positive, got {} m", self.distance_m)));
        }
        if !(self.frequency_hz > 0.0) {
            return Err(Error::domain(format!(
                "frequency must be positive, got {} Hz",
                self.frequency_hz
            )));
        }
        if self.n_antennas == 0 {
            return Err(Error::config("n_antennas must be at least 1"));
        }
        if self.combining == Combining::Single && self.n_antennas != 1 {
            return Err(Error::config(format!(
                "single-antenna combining with {} antennas",
                self.n_antennas
            )));
        }
        Ok(())
    }

    pub fn total_tx_power_w(&self) -> f64 {
        dbm_to_watts(self.tx_power_per_antenna_dbm) * self.n_antennas as f64
    }
}

/// Per-element power in dBm when `total_w` is split over `n` elements.
pub fn per_antenna_dbm(total_w: f64, n: u32) -> f64 {
    watts_to_dbm(total_w / n.max(1) as f64)
}

/// Free-space path loss `20·log10(4π·d·f/c)` in dB.
pub fn fspl_db(distance_m: f64, frequency_hz: f64) -> Result<f64> {
    if !(distance_m > 0.0) || !distance_m.is_finite() {
        return Err(Error::domain(format!("distance must be positive, got {distance_m} m")));
    }
    if !(frequency_hz > 0.0) || !frequency_hz.is_finite() {
        return Err(Error::domain(format!("frequency must be positive, got {frequency_hz} Hz")));
    }
    let ratio = 4.0 * std::f64::consts::PI * distance_m * frequency_hz / SPEED_OF_LIGHT;
    Ok(20.0 * ratio.log10())
}

pub fn received_power_dbm(tx_dbm: f64, path_loss_db: f64, tx_gain_dbi: f64, rx_gain_dbi: f64) -> f64 {
    tx_dbm - path_loss_db + tx_gain_dbi + rx_gain_dbi
}

/// Array gain in dB over a single element with the same per-element power.
pub fn array_gain_db(n_antennas: u32, combining: Combining) -> f64 {
    let n = n_antennas.max(1) as f64;
    match combining {
        Combining::Coherent => 20.0 * n.log10(),
        Combining::Incoherent => 10.0 * n.log10(),
        Combining::Single => 0.0,
    }
}

/// Received power at the harvester port for the whole array.
pub fn array_received_power(spec: &LinkSpec) -> Result<f64> {
    spec.validate()?;
    let loss = fspl_db(spec.distance_m, spec.frequency_hz)?;
    let single = received_power_dbm(spec.tx_power_per_antenna_dbm, loss, spec.tx_gain_dbi, spec.rx_gain_dbi);
    Ok(single + array_gain_db(spec.n_antennas, spec.combining))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum RegulatoryVerdict {
    Ok,
    Violation { limit_w: f64 },
    OutOfBand,
}

/// Checks total conducted power against the band table.
///
/// When overlapping bands contain `frequency_hz`, the most permissive cap applies.
pub fn check_regulatory(tx_total_w: f64, frequency_hz: f64, bands: &BandTable) -> Result<RegulatoryVerdict> {
    if bands.is_empty() {
        return Err(Error::config("band table is empty"));
    }
    if !(tx_total_w >= 0.0) {
        return Err(Error::domain(format!("transmit power must be non-negative, got {tx_total_w} W")));
    }
    let cap = bands
        .bands()
        .iter()
        .filter(|b| b.contains(frequency_hz))
        .map(|b| b.max_tx_power_w)
        .fold(None, |acc: Option<f64>, c| Some(acc.map_or(c, |a| a.max(c))));
    Ok(match cap {
        None => RegulatoryVerdict::OutOfBand,
        Some(limit) if tx_total_w <= limit => RegulatoryVerdict::Ok,
        Some(limit) => RegulatoryVerdict::Violation { limit_w: limit },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FeasibilityVerdict {
    pub received_power_dbm: f64,
    pub sensitivity_dbm: f64,
    pub feasible: bool,
    pub margin_db: f64,
}

pub fn feasibility(received_dbm: f64, sensitivity_dbm: f64) -> FeasibilityVerdict {
    FeasibilityVerdict {
        received_power_dbm: received_dbm,
        sensitivity_dbm,
        feasible: received_dbm >= sensitivity_dbm,
        margin_db: received_dbm - sensitivity_dbm,
    }
}
