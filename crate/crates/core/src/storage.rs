//! Capacitor energy math, buffer sizing and the storage parts catalog.

use std::fmt;
use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// E12 mantissas per decade.
pub const E12: [f64; 12] = [1.0, 1.2, 1.5, 1.8, 2.2, 2.7, 3.3, 3.9, 4.7, 5.6, 6.8, 8.2];

/// Sizing margin over the bare energy requirement.
pub const DEFAULT_SIZING_MARGIN: f64 = 1.2;

/// Relative slack when comparing against series values and energy budgets.
pub(crate) const REL_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Technology {
    #[serde(rename = "EDLC")]
    Edlc,
    #[serde(rename = "AEC")]
    Aec,
    Other,
}

impl fmt::Display for Technology {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Technology::Edlc => "EDLC",
            Technology::Aec => "AEC",
            Technology::Other => "Other",
        })
    }
}

/// One storage part. Field names follow the catalog CSV header.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapacitorSpec {
    pub part_id: String,
    pub technology: Technology,
    #[serde(rename = "capacitance_F")]
    pub capacitance_f: f64,
    pub esr_ohm: f64,
    #[serde(rename = "rated_voltage_V")]
    pub rated_voltage_v: f64,
    pub volume_cm3: f64,
    pub cost_eur: f64,
    /// Constant self-discharge current.
    #[serde(rename = "leakage_A", default)]
    pub leakage_a: f64,
}

impl CapacitorSpec {
    /// A lossless part, convenient for closed-form comparisons.
    pub fn ideal(part_id: impl Into<String>, capacitance_f: f64) -> Self {
        CapacitorSpec {
            part_id: part_id.into(),
            technology: Technology::Other,
            capacitance_f,
            esr_ohm: 0.0,
            rated_voltage_v: 100.0,
            volume_cm3: 1.0,
            cost_eur: 0.0,
            leakage_a: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |what: &str| Err(Error::config(format!("capacitor '{}': {what}", self.part_id)));
        if !(self.capacitance_f > 0.0 && self.capacitance_f.is_finite()) {
            return fail("capacitance must be positive");
        }
        if !(self.esr_ohm >= 0.0) {
            return fail("ESR must be non-negative");
        }
        if !(self.rated_voltage_v > 0.0) {
            return fail("rated voltage must be positive");
        }
        if !(self.volume_cm3 > 0.0) {
            return fail("volume must be positive");
        }
        if !(self.cost_eur >= 0.0) {
            return fail("cost must be non-negative");
        }
        if !(self.leakage_a >= 0.0) {
            return fail("leakage current must be non-negative");
        }
        Ok(())
    }

    pub fn energy_at(&self, v: f64) -> f64 {
        stored_energy(self.capacitance_f, v)
    }
}

/// Discharge window of the buffer: from `v_max` (charge-ready / cut-off)
/// down to `v_min` (lowest voltage the load path still accepts).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VoltageWindow {
    v_max: f64,
    v_min: f64,
}

impl VoltageWindow {
    /// Requires `0 <= v_min <= v_max` and `v_max > 0`. A zero-width window is
    /// representable (usable fraction 0) but cannot be used for sizing.
    pub fn new(v_max: f64, v_min: f64) -> Result<Self> {
        if !(v_max > 0.0 && v_max.is_finite()) {
            return Err(Error::domain(format!("window maximum must be positive, got {v_max} V")));
        }
        if !(v_min >= 0.0 && v_min <= v_max) {
            return Err(Error::domain(format!(
                "window minimum {v_min} V must lie in [0, {v_max}] V"
            )));
        }
        Ok(VoltageWindow { v_max, v_min })
    }

    pub fn v_max(&self) -> f64 {
        self.v_max
    }

    pub fn v_min(&self) -> f64 {
        self.v_min
    }

    pub fn is_degenerate(&self) -> bool {
        self.v_min >= self.v_max
    }

    /// Energy a capacitor of `c` farads releases across the window.
    pub fn energy(&self, c: f64) -> f64 {
        stored_energy(c, self.v_max) - stored_energy(c, self.v_min)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SizingResult {
    pub minimal_capacitance_f: f64,
    pub with_margin_f: f64,
    pub e12_choice_f: f64,
    pub usable_fraction: f64,
}

/// `½·C·V²`.
pub fn stored_energy(c: f64, v: f64) -> f64 {
    0.5 * c * v * v
}

/// Share of the energy at `v_max` that is released down to `v_min`.
pub fn usable_energy_fraction(window: &VoltageWindow) -> f64 {
    let hi = window.v_max * window.v_max;
    (hi - window.v_min * window.v_min) / hi
}

/// Minimal buffer capacitance `2·E / (V_max² − V_min²)`.
pub fn size_buffer(e_update_j: f64, window: &VoltageWindow) -> Result<f64> {
    if !(e_update_j >= 0.0) || !e_update_j.is_finite() {
        return Err(Error::domain(format!("update energy must be non-negative, got {e_update_j} J")));
    }
    if e_update_j == 0.0 {
        return Ok(0.0);
    }
    if window.is_degenerate() {
        return Err(Error::domain("cannot size a buffer for a zero-width voltage window"));
    }
    Ok(2.0 * e_update_j / (window.v_max * window.v_max - window.v_min * window.v_min))
}

/// Smallest E12 value not below `value`. Values within 1e-9 relative of a
/// series member snap to it; non-positive input returns 0.
pub fn round_up_e12(value: f64) -> f64 {
    if !(value > 0.0) || !value.is_finite() {
        return 0.0;
    }
    let decade = value.log10().floor();
    // Check the decade below as well: log10 rounding can land one step high.
    for exp in [decade - 1.0, decade, decade + 1.0] {
        let scale = 10f64.powf(exp);
        for m in E12 {
            let candidate = m * scale;
            if candidate >= value * (1.0 - REL_EPS) {
                return snap(candidate);
            }
        }
    }
    snap(10f64.powf(decade + 2.0))
}

/// Removes the representation noise that powf leaves on `m·10^k`.
fn snap(x: f64) -> f64 {
    let s: String = format!("{x:.11e}");
    s.parse().unwrap_or(x)
}

pub fn size_with_margin(e_update_j: f64, window: &VoltageWindow, margin: f64) -> Result<SizingResult> {
    if !(margin >= 1.0) || !margin.is_finite() {
        return Err(Error::domain(format!("sizing margin must be >= 1, got {margin}")));
    }
    let minimal = size_buffer(e_update_j, window)?;
    let with_margin = minimal * margin;
    Ok(SizingResult {
        minimal_capacitance_f: minimal,
        with_margin_f: with_margin,
        e12_choice_f: round_up_e12(with_margin),
        usable_fraction: if e_update_j == 0.0 {
            0.0
        } else {
            usable_energy_fraction(window)
        },
    })
}

/// Maximum-power-transfer bound `V²/(4·R)`; unbounded for an ideal part.
pub fn max_deliverable_power(v_oc: f64, esr_ohm: f64) -> f64 {
    if !(v_oc > 0.0) {
        return 0.0;
    }
    if esr_ohm <= 0.0 {
        return f64::INFINITY;
    }
    v_oc * v_oc / (4.0 * esr_ohm)
}

/// Terminal voltage when `p_drawn_w` leaves the part through its ESR.
///
/// Solves `v_t² − v·v_t + R·P = 0` for the high (stable) root. Negative
/// `p_drawn_w` is charging. Returns `None` when the load exceeds
/// [`max_deliverable_power`].
pub fn terminal_voltage(v_internal: f64, esr_ohm: f64, p_drawn_w: f64) -> Option<f64> {
    if esr_ohm <= 0.0 {
        return Some(v_internal);
    }
    let disc = v_internal * v_internal - 4.0 * esr_ohm * p_drawn_w;
    if disc < 0.0 {
        None
    } else {
        Some(0.5 * (v_internal + disc.sqrt()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum EsrVerdict {
    Usable,
    UnusableEsr,
}

/// Whether the part can source `required_input_power_w` down to `v_min_operating`.
///
/// Deliverable power grows with voltage, so the lower edge decides.
pub fn esr_feasible(cap: &CapacitorSpec, required_input_power_w: f64, v_min_operating: f64) -> EsrVerdict {
    match terminal_voltage(v_min_operating, cap.esr_ohm, required_input_power_w) {
        Some(_) => EsrVerdict::Usable,
        None => EsrVerdict::UnusableEsr,
    }
}

/// Immutable list of storage parts.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Catalog {
    parts: Vec<CapacitorSpec>,
}

pub const CATALOG_HEADER: &str =
    "part_id,technology,capacitance_F,esr_ohm,rated_voltage_V,volume_cm3,cost_eur,leakage_A";

impl Catalog {
    pub fn new(parts: Vec<CapacitorSpec>) -> Result<Self> {
        for part in &parts {
            part.validate()?;
        }
        Ok(Catalog { parts })
    }

    /// Parses the catalog CSV. `origin` names the source in error messages.
    pub fn from_csv<R: Read>(reader: R, origin: &str) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let header = rdr
            .headers()
            .map_err(|e| Error::parse(origin, e))?
            .iter()
            .collect::<Vec<_>>()
            .join(",");
        if header != CATALOG_HEADER {
            return Err(Error::parse(
                format!("{origin}:1"),
                format!("unexpected header '{header}', expected '{CATALOG_HEADER}'"),
            ));
        }
        let mut parts = Vec::new();
        for record in rdr.deserialize::<CapacitorSpec>() {
            let part = record.map_err(|e| {
                let line = e.position().map(|p| p.line()).unwrap_or(0);
                Error::parse(format!("{origin}:{line}"), e)
            })?;
            part.validate()?;
            parts.push(part);
        }
        if parts.is_empty() {
            return Err(Error::parse(origin, "catalog has no parts"));
        }
        Ok(Catalog { parts })
    }

    pub fn from_csv_str(text: &str, origin: &str) -> Result<Self> {
        Self::from_csv(text.as_bytes(), origin)
    }

    /// The three parts considered for the reference design.
    pub fn builtin() -> Self {
        Self::from_csv_str(crate::data::DEFAULT_CATALOG_CSV, "<builtin catalog>")
            .expect("builtin catalog parses")
    }

    pub fn parts(&self) -> &[CapacitorSpec] {
        &self.parts
    }

    pub fn get(&self, part_id: &str) -> Option<&CapacitorSpec> {
        self.parts.iter().find(|p| p.part_id == part_id)
    }

    pub fn len(&self) -> usize {
        self.parts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parts.is_empty()
    }

    pub fn to_csv(&self) -> String {
        let mut wtr = csv::Writer::from_writer(Vec::new());
        for p in &self.parts {
            wtr.serialize(p).expect("in-memory csv write");
        }
        String::from_utf8(wtr.into_inner().expect("flush")).expect("utf8")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn w(hi: f64, lo: f64) -> VoltageWindow {
        VoltageWindow::new(hi, lo).unwrap()
    }

    #[test]
    fn stored_energy_examples() {
        assert!((stored_energy(0.022, 3.1) - 0.10571).abs() < 1e-9);
        assert_eq!(stored_energy(0.5, 0.0), 0.0);
        let window = stored_energy(1.0, 3.1) - stored_energy(1.0, 2.8);
        assert!((window - 0.885).abs() < 1e-9);
    }

    #[test]
    fn usable_fraction_examples() {
        assert!((usable_energy_fraction(&w(3.1, 2.8)) - 0.184).abs() < 5e-4);
        assert!((usable_energy_fraction(&w(3.1, 0.9)) - 0.916).abs() < 5e-4);
        assert_eq!(usable_energy_fraction(&w(2.0, 0.0)), 1.0);
        assert_eq!(usable_energy_fraction(&w(2.0, 2.0)), 0.0);
    }

    #[test]
    fn window_validation() {
        assert!(VoltageWindow::new(2.0, 2.5).is_err());
        assert!(VoltageWindow::new(0.0, 0.0).is_err());
        assert!(VoltageWindow::new(3.0, -0.1).is_err());
    }

    #[test]
    fn size_buffer_examples() {
        let c = size_buffer(0.075, &w(3.1, 0.9)).unwrap();
        assert!((c - 0.017_045).abs() < 1e-6, "{c}");
        assert_eq!(size_buffer(0.0, &w(3.1, 0.9)).unwrap(), 0.0);
        let c = size_buffer(0.885, &w(3.1, 2.8)).unwrap();
        assert!((c - 1.0).abs() < 1e-9);
        assert!(size_buffer(-1.0, &w(3.1, 0.9)).is_err());
        assert!(size_buffer(0.075, &w(3.1, 3.1)).is_err());
    }

    #[test]
    fn e12_examples() {
        assert!((round_up_e12(0.017_05) - 0.018).abs() < 1e-15);
        assert_eq!(round_up_e12(0.010), 0.010);
        assert!((round_up_e12(0.0048) - 0.0056).abs() < 1e-15);
        assert_eq!(round_up_e12(8.3), 10.0);
        assert_eq!(round_up_e12(1.0000000000000002), 1.0);
        assert_eq!(round_up_e12(0.0), 0.0);
    }

    #[test]
    fn e12_brute_force_table() {
        // Enumerate members across decades and pick the smallest >= value.
        let members: Vec<f64> = (-6..4)
            .flat_map(|k| E12.iter().map(move |m| m * 10f64.powi(k)))
            .collect();
        for value in [3.3e-6, 4.8e-3, 0.017_05, 0.020_45, 0.0999, 0.1, 2.27, 47.0, 800.0] {
            let oracle = members
                .iter()
                .copied()
                .filter(|&m| m >= value * (1.0 - 1e-9))
                .fold(f64::INFINITY, f64::min);
            assert!((round_up_e12(value) - oracle).abs() <= oracle * 1e-12, "{value}");
        }
    }

    #[test]
    fn size_with_margin_examples() {
        let r = size_with_margin(0.075, &w(3.1, 0.9), DEFAULT_SIZING_MARGIN).unwrap();
        assert!((r.with_margin_f - 0.020_454).abs() < 1e-6);
        assert_eq!(r.e12_choice_f, 0.022);
        assert!((r.usable_fraction - 0.916).abs() < 5e-4);
        let r = size_with_margin(0.075, &w(3.1, 0.9), 1.0).unwrap();
        assert_eq!(r.e12_choice_f, 0.018);
        let r = size_with_margin(0.0, &w(3.1, 0.9), 1.5).unwrap();
        assert_eq!(
            (r.minimal_capacitance_f, r.with_margin_f, r.e12_choice_f, r.usable_fraction),
            (0.0, 0.0, 0.0, 0.0)
        );
        assert!(size_with_margin(0.075, &w(3.1, 0.9), 0.9).is_err());
        let narrow = size_buffer(0.075, &w(3.1, 2.8)).unwrap();
        assert!((narrow - 0.084_746).abs() < 1e-6);
    }

    #[test]
    fn max_power_examples() {
        assert!((max_deliverable_power(3.0, 200.0) - 0.011_25).abs() < 1e-12);
        assert!((max_deliverable_power(3.0, 0.05) - 45.0).abs() < 1e-9);
        assert_eq!(max_deliverable_power(0.0, 10.0), 0.0);
        assert_eq!(max_deliverable_power(3.0, 0.0), f64::INFINITY);
    }

    #[test]
    fn esr_examples_from_catalog() {
        let cat = Catalog::builtin();
        let edlc = cat.get("FYD0H223ZF").unwrap();
        let aec = cat.get("ECA-0JM223").unwrap();
        assert_eq!(esr_feasible(edlc, 0.016, 3.0), EsrVerdict::UnusableEsr);
        assert_eq!(esr_feasible(aec, 0.016, 3.0), EsrVerdict::Usable);
        let vt = terminal_voltage(3.0, 0.05, 0.016).unwrap();
        assert!((3.0 - vt - 0.000_267).abs() < 2e-6, "droop {}", 3.0 - vt);
        assert_eq!(esr_feasible(edlc, 1e-9, 3.0), EsrVerdict::Usable);
    }

    #[test]
    fn catalog_matches_reference_rows() {
        let cat = Catalog::builtin();
        let rows: Vec<_> = cat
            .parts()
            .iter()
            .map(|p| (p.part_id.as_str(), p.technology, p.capacitance_f, p.esr_ohm, p.volume_cm3, p.cost_eur))
            .collect();
        assert_eq!(
            rows,
            vec![
                ("FYD0H223ZF", Technology::Edlc, 0.022, 200.0, 1.2, 3.0),
                ("FYH0H105ZF", Technology::Edlc, 1.0, 20.0, 7.0, 6.0),
                ("ECA-0JM223", Technology::Aec, 0.022, 0.05, 9.0, 1.5),
            ]
        );
        assert!(cat.to_csv().starts_with(CATALOG_HEADER));
        assert_eq!(Catalog::from_csv_str(&cat.to_csv(), "round trip").unwrap(), cat);
    }

    #[test]
    fn catalog_errors_name_the_line() {
        let text = format!("{CATALOG_HEADER}\nA,EDLC,0.1,1,5,1,1,0\nB,EDLC,abc,1,5,1,1,0\n");
        let err = Catalog::from_csv_str(&text, "parts.csv").unwrap_err().to_string();
        assert!(err.contains("parts.csv:3"), "{err}");
        let err = Catalog::from_csv_str("a,b\n1,2\n", "parts.csv").unwrap_err().to_string();
        assert!(err.contains("unexpected header"), "{err}");
        let text = format!("{CATALOG_HEADER}\nA,EDLC,-0.1,1,5,1,1,0\n");
        assert!(Catalog::from_csv_str(&text, "p").is_err());
    }

    proptest! {
        #[test]
        fn sizing_round_trip(e in 1e-4f64..10.0, hi in 0.5f64..6.0, frac in 0.0f64..0.99) {
            let window = w(hi, hi * frac);
            let c = size_buffer(e, &window).unwrap();
            let released = stored_energy(c, hi) - stored_energy(c, hi * frac);
            prop_assert!((released - e).abs() <= 1e-12 * e.max(1e-300) * 10.0);
        }

        #[test]
        fn usable_fraction_decreasing_in_vmin(hi in 0.5f64..6.0, a in 0.0f64..0.98, b in 0.0f64..0.98) {
            prop_assume!((a - b).abs() > 1e-6);
            let (lo, hi_frac) = if a < b { (a, b) } else { (b, a) };
            prop_assert!(usable_energy_fraction(&w(hi, hi * lo)) > usable_energy_fraction(&w(hi, hi * hi_frac)));
        }

        #[test]
        fn e12_bounds_and_idempotence(x in 1e-6f64..1e3) {
            let r = round_up_e12(x);
            prop_assert!(r >= x * (1.0 - 1e-9));
            prop_assert!(r <= 1.5 * x);
            prop_assert_eq!(round_up_e12(r), r);
        }

        #[test]
        fn esr_monotone(esr in 0.0f64..500.0, p in 1e-6f64..0.1, v in 0.1f64..5.0, k in 0.0f64..1.0) {
            let cap = CapacitorSpec { esr_ohm: esr, ..CapacitorSpec::ideal("x", 0.01) };
            if esr_feasible(&cap, p, v) == EsrVerdict::Usable {
                let lower_esr = CapacitorSpec { esr_ohm: esr * k, ..cap.clone() };
                prop_assert_eq!(esr_feasible(&lower_esr, p, v), EsrVerdict::Usable);
                prop_assert_eq!(esr_feasible(&cap, p * k, v), EsrVerdict::Usable);
            }
        }

        #[test]
        fn esr_verdict_matches_power_bound(esr in 0.01f64..500.0, p in 1e-6f64..0.1, v in 0.1f64..5.0) {
            let cap = CapacitorSpec { esr_ohm: esr, ..CapacitorSpec::ideal("x", 0.01) };
            let by_bound = max_deliverable_power(v, esr) >= p;
            prop_assert_eq!(esr_feasible(&cap, p, v) == EsrVerdict::Usable, by_bound);
        }
    }
}
