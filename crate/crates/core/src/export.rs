//! Columnar CSV and JSON writers. Number formatting is fixed so identical
//! results always serialize to identical bytes.

use crate::error::{Error, Result};
use crate::optimizer::{ParetoPoint, RankedOption, Recommendation, SweepPoint};
use crate::sim::SimResult;

pub const TIMESERIES_HEADER: [&str; 5] = ["t_s", "v_cap_v", "state", "p_harv_w", "p_load_w"];
pub const PARETO_HEADER: [&str; 3] = ["p_in_dbm", "charge_time_s", "efficiency"];
pub const CHARGE_TIME_HEADER: [&str; 4] = ["p_in_dbm", "freq_hz", "charge_time_s", "charge_time_min"];
pub const EFFICIENCY_HEADER: [&str; 3] = ["p_in_dbm", "freq_hz", "efficiency"];
pub const EFF_VS_VOLTAGE_HEADER: [&str; 4] = ["p_in_dbm", "freq_hz", "v_initial_v", "efficiency"];

fn write_table<const N: usize>(header: [&str; N], rows: impl IntoIterator<Item = [String; N]>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::parse("csv export", e);
    w.write_record(header).map_err(csv_err)?;
    for row in rows {
        w.write_record(&row).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::parse("csv export", e.error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn fixed(x: f64, digits: usize) -> String {
    format!("{x:.digits$}")
}

fn sci(x: f64) -> String {
    format!("{x:.6e}")
}

fn opt(x: Option<f64>, digits: usize) -> String {
    x.map_or_else(String::new, |v| fixed(v, digits))
}

pub fn timeseries_csv(result: &SimResult) -> Result<String> {
    write_table(
        TIMESERIES_HEADER,
        result.samples.iter().map(|s| {
            [
                fixed(s.t_s, 3),
                fixed(s.v_cap_v, 6),
                s.state.to_string(),
                sci(s.p_harv_w),
                sci(s.p_load_w),
            ]
        }),
    )
}

pub fn summary_json(result: &SimResult) -> Result<String> {
    to_json(result)
}

pub fn ranked_json(options: &[RankedOption]) -> Result<String> {
    to_json(&options)
}

pub fn recommendation_json(rec: &Recommendation) -> Result<String> {
    to_json(rec)
}

pub fn to_json<T: serde::Serialize + ?Sized>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| Error::parse("json export", e))?;
    s.push('\n');
    Ok(s)
}

pub fn pareto_csv(points: &[ParetoPoint]) -> Result<String> {
    write_table(
        PARETO_HEADER,
        points
            .iter()
            .map(|p| [fixed(p.p_in_dbm, 2), fixed(p.charge_time_s, 3), fixed(p.efficiency, 6)]),
    )
}

/// Charge time versus input power, one row per (power, frequency).
pub fn charge_time_csv(points: &[SweepPoint]) -> Result<String> {
    write_table(
        CHARGE_TIME_HEADER,
        points.iter().map(|p| {
            [
                fixed(p.p_in_dbm, 2),
                fixed(p.freq_hz, 0),
                opt(p.charge_time_s, 3),
                opt(p.charge_time_s.map(|t| t / 60.0), 3),
            ]
        }),
    )
}

/// Charge efficiency versus input power.
pub fn efficiency_csv(points: &[SweepPoint]) -> Result<String> {
    write_table(
        EFFICIENCY_HEADER,
        points
            .iter()
            .map(|p| [fixed(p.p_in_dbm, 2), fixed(p.freq_hz, 0), opt(p.efficiency, 6)]),
    )
}

/// Charge efficiency versus initial buffer voltage.
pub fn eff_vs_voltage_csv(points: &[SweepPoint]) -> Result<String> {
    write_table(
        EFF_VS_VOLTAGE_HEADER,
        points.iter().map(|p| {
            [
                fixed(p.p_in_dbm, 2),
                fixed(p.freq_hz, 0),
                fixed(p.v_initial_v, 3),
                opt(p.efficiency, 6),
            ]
        }),
    )
}
