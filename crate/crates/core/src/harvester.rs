//! RF-to-DC conversion model of the harvester/PMU front end.
//!
//! Efficiency is a calibrated surface over input power, carrier frequency and
//! storage voltage, interpolated trilinearly and clamped to the measured hull.

use std::fmt;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::units::dbm_to_watts;

/// Upper bound accepted for any calibrated efficiency.
pub const MAX_GRID_EFFICIENCY: f64 = 0.95;

pub const CALIBRATION_HEADER: &str = "p_in_dbm,freq_hz,v_cap_v,efficiency";

/// Dense efficiency grid indexed by (input power, frequency, storage voltage).
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationTable {
    p_axis_dbm: Vec<f64>,
    f_axis_hz: Vec<f64>,
    v_axis_v: Vec<f64>,
    // Row-major: power, then frequency, then voltage.
    values: Vec<f64>,
    provenance: String,
}

impl CalibrationTable {
    pub fn new(
        p_axis_dbm: Vec<f64>,
        f_axis_hz: Vec<f64>,
        v_axis_v: Vec<f64>,
        values: Vec<f64>,
        provenance: impl Into<String>,
    ) -> Result<Self> {
        Self::bounded(p_axis_dbm, f_axis_hz, v_axis_v, values, provenance, MAX_GRID_EFFICIENCY)
    }

    fn bounded(
        p_axis_dbm: Vec<f64>,
        f_axis_hz: Vec<f64>,
        v_axis_v: Vec<f64>,
        values: Vec<f64>,
        provenance: impl Into<String>,
        max_efficiency: f64,
    ) -> Result<Self> {
        for (name, axis) in [("p_in_dbm", &p_axis_dbm), ("freq_hz", &f_axis_hz), ("v_cap_v", &v_axis_v)] {
            if axis.is_empty() {
                return Err(Error::Calibration(format!("axis {name} is empty")));
            }
            if axis.iter().any(|x| !x.is_finite()) {
                return Err(Error::Calibration(format!("axis {name} has non-finite entries")));
            }
            if axis.windows(2).any(|w| w[1] <= w[0]) {
                return Err(Error::Calibration(format!("axis {name} is not strictly increasing")));
            }
        }
        let expected = p_axis_dbm.len() * f_axis_hz.len() * v_axis_v.len();
        if values.len() != expected {
            return Err(Error::Calibration(format!(
                "grid has {} cells, expected {expected}",
                values.len()
            )));
        }
        if let Some(bad) = values
            .iter()
            .find(|&&v| !v.is_finite() || !(0.0..=max_efficiency).contains(&v))
        {
            return Err(Error::Calibration(format!("efficiency {bad} outside [0, {max_efficiency}]")));
        }
        Ok(CalibrationTable {
            p_axis_dbm,
            f_axis_hz,
            v_axis_v,
            values,
            provenance: provenance.into(),
        })
    }

    /// One-cell table: the same efficiency everywhere. Unlike measured grids
    /// this accepts 1.0, for lossless reference runs.
    pub fn constant(efficiency: f64) -> Result<Self> {
        Self::bounded(vec![0.0], vec![868e6], vec![0.0], vec![efficiency], "constant", 1.0)
    }

    /// Parses the calibration CSV. The optional `# ...` first line is kept as provenance.
    pub fn from_csv_str(text: &str, origin: &str) -> Result<Self> {
        let provenance = text
            .lines()
            .next()
            .and_then(|l| l.trim().strip_prefix('#'))
            .map(|s| s.trim().to_string())
            .unwrap_or_default();

        let mut rdr = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let header = rdr
            .headers()
            .map_err(|e| Error::parse(origin, e))?
            .iter()
            .collect::<Vec<_>>()
            .join(",");
        if header != CALIBRATION_HEADER {
            return Err(Error::parse(
                origin,
                format!("unexpected header '{header}', expected '{CALIBRATION_HEADER}'"),
            ));
        }

        let mut rows: Vec<([f64; 3], f64, u64)> = Vec::new();
        for record in rdr.records() {
            let record = record.map_err(|e| Error::parse(origin, e))?;
            let line = record.position().map(|p| p.line()).unwrap_or(0);
            if record.len() != 4 {
                return Err(Error::parse(format!("{origin}:{line}"), "expected 4 columns"));
            }
            let mut nums = [0.0; 4];
            for (slot, field) in nums.iter_mut().zip(record.iter()) {
                *slot = field
                    .parse()
                    .map_err(|_| Error::parse(format!("{origin}:{line}"), format!("'{field}' is not a number")))?;
            }
            rows.push(([nums[0], nums[1], nums[2]], nums[3], line));
        }
        if rows.is_empty() {
            return Err(Error::parse(origin, "calibration has no rows"));
        }

        let axis = |k: usize| {
            let mut a: Vec<f64> = rows.iter().map(|r| r.0[k]).collect();
            a.sort_by(f64::total_cmp);
            a.dedup();
            a
        };
        let (pa, fa, va) = (axis(0), axis(1), axis(2));
        let (nf, nv) = (fa.len(), va.len());
        let mut values = vec![f64::NAN; pa.len() * nf * nv];
        for (key, eff, line) in &rows {
            let ip = pa.binary_search_by(|x| x.total_cmp(&key[0])).expect("axis value");
            let jf = fa.binary_search_by(|x| x.total_cmp(&key[1])).expect("axis value");
            let kv = va.binary_search_by(|x| x.total_cmp(&key[2])).expect("axis value");
            let cell = &mut values[(ip * nf + jf) * nv + kv];
            if !cell.is_nan() {
                return Err(Error::parse(
                    format!("{origin}:{line}"),
                    format!("duplicate grid cell ({}, {}, {})", key[0], key[1], key[2]),
                ));
            }
            if !eff.is_finite() || !(0.0..=MAX_GRID_EFFICIENCY).contains(eff) {
                return Err(Error::parse(
                    format!("{origin}:{line}"),
                    format!("efficiency {eff} outside [0, {MAX_GRID_EFFICIENCY}]"),
                ));
            }
            *cell = *eff;
        }
        if let Some(missing) = values.iter().position(|v| v.is_nan()) {
            let (ip, rest) = (missing / (nf * nv), missing % (nf * nv));
            return Err(Error::parse(
                origin,
                format!(
                    "missing grid cell ({}, {}, {})",
                    pa[ip],
                    fa[rest / nv],
                    va[rest % nv]
                ),
            ));
        }
        Self::new(pa, fa, va, values, provenance)
    }

    pub fn p_axis_dbm(&self) -> &[f64] {
        &self.p_axis_dbm
    }

    pub fn f_axis_hz(&self) -> &[f64] {
        &self.f_axis_hz
    }

    pub fn v_axis_v(&self) -> &[f64] {
        &self.v_axis_v
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    pub fn node(&self, ip: usize, jf: usize, kv: usize) -> f64 {
        self.values[(ip * self.f_axis_hz.len() + jf) * self.v_axis_v.len() + kv]
    }

    pub fn max_efficiency(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    /// Trilinear interpolation, clamped to the grid hull.
    pub fn interpolate(&self, p_dbm: f64, f_hz: f64, v: f64) -> f64 {
        let (p0, p1, tp) = bracket(&self.p_axis_dbm, p_dbm);
        let (f0, f1, tf) = bracket(&self.f_axis_hz, f_hz);
        let (v0, v1, tv) = bracket(&self.v_axis_v, v);
        let lerp = |a: f64, b: f64, t: f64| a + (b - a) * t;
        let along_v = |ip, jf| lerp(self.node(ip, jf, v0), self.node(ip, jf, v1), tv);
        let along_f = |ip| lerp(along_v(ip, f0), along_v(ip, f1), tf);
        lerp(along_f(p0), along_f(p1), tp)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        if !self.provenance.is_empty() {
            out.push_str(&format!("# {}\n", self.provenance));
        }
        out.push_str(CALIBRATION_HEADER);
        out.push('\n');
        for (ip, p) in self.p_axis_dbm.iter().enumerate() {
            for (jf, f) in self.f_axis_hz.iter().enumerate() {
                for (kv, v) in self.v_axis_v.iter().enumerate() {
                    out.push_str(&format!("{p},{f},{v},{}\n", self.node(ip, jf, kv)));
                }
            }
        }
        out
    }
}

/// Lower/upper indices and weight for `x` on a sorted axis; clamps outside.
fn bracket(axis: &[f64], x: f64) -> (usize, usize, f64) {
    let n = axis.len();
    if n == 1 || x <= axis[0] {
        return (0, 0, 0.0);
    }
    if x >= axis[n - 1] {
        return (n - 1, n - 1, 0.0);
    }
    let hi = axis.partition_point(|&a| a <= x);
    let lo = hi - 1;
    (lo, hi, (x - axis[lo]) / (axis[hi] - axis[lo]))
}

/// Calibrated harvester with its input-power limits and cold-start behaviour.
#[derive(Debug, Clone, PartialEq)]
pub struct HarvesterModel {
    pub name: String,
    pub sensitivity_dbm: f64,
    pub max_input_dbm: f64,
    pub tuned_frequency_hz: f64,
    pub table: CalibrationTable,
    /// Below this storage voltage the harvester charges with a constant current.
    pub cold_start_voltage: f64,
    pub cold_start_current: f64,
}

pub const DEFAULT_SENSITIVITY_DBM: f64 = -18.0;
pub const DEFAULT_MAX_INPUT_DBM: f64 = 15.0;
pub const DEFAULT_COLD_START_VOLTAGE: f64 = 0.05;
pub const DEFAULT_COLD_START_CURRENT: f64 = 100e-6;

impl HarvesterModel {
    pub fn from_table(name: impl Into<String>, table: CalibrationTable) -> Result<Self> {
        let model = HarvesterModel {
            name: name.into(),
            sensitivity_dbm: DEFAULT_SENSITIVITY_DBM,
            max_input_dbm: DEFAULT_MAX_INPUT_DBM,
            tuned_frequency_hz: 868e6,
            table,
            cold_start_voltage: DEFAULT_COLD_START_VOLTAGE,
            cold_start_current: DEFAULT_COLD_START_CURRENT,
        };
        model.validate()?;
        Ok(model)
    }

    /// The shipped AEM40940-class calibration.
    pub fn default_aem() -> Self {
        let table = CalibrationTable::from_csv_str(crate::data::DEFAULT_CALIBRATION_CSV, "<builtin calibration>")
            .expect("builtin calibration parses");
        Self::from_table("AEM40940", table).expect("builtin model valid")
    }

    /// Same efficiency at every operating point and no cold-start regime.
    pub fn constant(efficiency: f64) -> Result<Self> {
        let mut model = Self::from_table("constant", CalibrationTable::constant(efficiency)?)?;
        model.sensitivity_dbm = -60.0;
        model.max_input_dbm = 40.0;
        model.cold_start_voltage = 0.0;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sensitivity_dbm < self.max_input_dbm) {
            return Err(Error::config(format!(
                "harvester '{}': sensitivity {} dBm must be below max input {} dBm",
                self.name, self.sensitivity_dbm, self.max_input_dbm
            )));
        }
        if !(self.cold_start_voltage >= 0.0) || !(self.cold_start_current >= 0.0) {
            return Err(Error::config(format!(
                "harvester '{}': cold-start voltage and current must be non-negative",
                self.name
            )));
        }
        Ok(())
    }

    pub fn efficiency(&self, p_in_dbm: f64, f_hz: f64, v_cap: f64) -> Result<f64> {
        if p_in_dbm > self.max_input_dbm {
            return Err(Error::Overload {
                p_in_dbm,
                max_input_dbm: self.max_input_dbm,
            });
        }
        if !(p_in_dbm >= self.sensitivity_dbm) {
            return Ok(0.0);
        }
        Ok(self.table.interpolate(p_in_dbm, f_hz, v_cap))
    }

    /// DC output power in watts.
    pub fn dc_power(&self, p_in_dbm: f64, f_hz: f64, v_cap: f64) -> Result<f64> {
        let eta = self.efficiency(p_in_dbm, f_hz, v_cap)?;
        Ok(if eta == 0.0 { 0.0 } else { eta * dbm_to_watts(p_in_dbm) })
    }

    pub fn is_active(&self, p_in_dbm: f64) -> bool {
        p_in_dbm >= self.sensitivity_dbm
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Trend {
    /// Efficiency should not rise with input power.
    FallsWithPower,
    /// The tuned frequency should be at least as efficient as any other.
    PeaksAtTunedFrequency,
    /// Efficiency should not fall as the storage voltage rises.
    RisesWithVoltage,
}

/// A calibration cell pair that breaks one of the expected trends.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrendWarning {
    pub trend: Trend,
    pub message: String,
}

impl fmt::Display for TrendWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

pub fn trend_warnings(table: &CalibrationTable, tuned_frequency_hz: f64) -> Vec<TrendWarning> {
    const SLACK: f64 = 1e-12;
    let (pa, fa, va) = (table.p_axis_dbm(), table.f_axis_hz(), table.v_axis_v());
    let mut out = Vec::new();
    for (jf, f) in fa.iter().enumerate() {
        for (kv, v) in va.iter().enumerate() {
            for ip in 1..pa.len() {
                let (lo, hi) = (table.node(ip - 1, jf, kv), table.node(ip, jf, kv));
                if hi > lo + SLACK {
                    out.push(TrendWarning {
                        trend: Trend::FallsWithPower,
                        message: format!(
                            "efficiency rises with power at {f} Hz, {v} V: {lo} @ {} dBm -> {hi} @ {} dBm",
                            pa[ip - 1],
                            pa[ip]
                        ),
                    });
                }
            }
        }
    }
    let tuned = fa
        .iter()
        .enumerate()
        .min_by(|a, b| (a.1 - tuned_frequency_hz).abs().total_cmp(&(b.1 - tuned_frequency_hz).abs()))
        .map(|(i, _)| i)
        .unwrap_or(0);
    for (ip, p) in pa.iter().enumerate() {
        for (kv, v) in va.iter().enumerate() {
            let best = table.node(ip, tuned, kv);
            for (jf, f) in fa.iter().enumerate() {
                let other = table.node(ip, jf, kv);
                if jf != tuned && other > best + SLACK {
                    out.push(TrendWarning {
                        trend: Trend::PeaksAtTunedFrequency,
                        message: format!(
                            "{f} Hz beats tuned {} Hz at {p} dBm, {v} V: {other} > {best}",
                            fa[tuned]
                        ),
                    });
                }
            }
        }
    }
    for (ip, p) in pa.iter().enumerate() {
        for (jf, f) in fa.iter().enumerate() {
            for kv in 1..va.len() {
                let (lo, hi) = (table.node(ip, jf, kv - 1), table.node(ip, jf, kv));
                if hi + SLACK < lo {
                    out.push(TrendWarning {
                        trend: Trend::RisesWithVoltage,
                        message: format!(
                            "efficiency falls with voltage at {p} dBm, {f} Hz: {lo} @ {} V -> {hi} @ {} V",
                            va[kv - 1],
                            va[kv]
                        ),
                    });
                }
            }
        }
    }
    out
}

/// A validated model plus the trend checks it failed.
#[derive(Debug, Clone)]
pub struct Calibrated {
    pub model: HarvesterModel,
    pub warnings: Vec<TrendWarning>,
}

/// Loads a calibration file into a model with default limits.
pub fn load_calibration(path: &Path) -> Result<Calibrated> {
    let text = std::fs::read_to_string(path)?;
    load_calibration_str(&text, &path.display().to_string())
}

pub fn load_calibration_str(text: &str, origin: &str) -> Result<Calibrated> {
    let table = CalibrationTable::from_csv_str(text, origin)?;
    let model = HarvesterModel::from_table(origin, table)?;
    let warnings = trend_warnings(&model.table, model.tuned_frequency_hz);
    Ok(Calibrated { model, warnings })
}
