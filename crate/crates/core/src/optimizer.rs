//! Design-space exploration: ranking storage parts against requirements,
//! recommending a buffer and sweeping input power.

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harvester::HarvesterModel;
use crate::pmu::{boost_input_power, LoadProfile, PmuConfig};
use crate::sim::{self, Scenario, Stimulus, DEFAULT_DT_S};
use crate::storage::{
    max_deliverable_power, size_with_margin, CapacitorSpec, Catalog, EsrVerdict, SizingResult, VoltageWindow,
    DEFAULT_SIZING_MARGIN, REL_EPS,
};

/// Upper bound on the simulated first charge used for ranking.
pub const DEFAULT_MAX_CHARGE_SIM_S: f64 = 72.0 * 3600.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Objective {
    #[default]
    MinChargeTime,
    MinCost,
    MinVolume,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Requirements {
    pub e_update_j: f64,
    pub window: VoltageWindow,
    pub margin: f64,
    pub max_volume_cm3: Option<f64>,
    pub max_cost_eur: Option<f64>,
    pub max_first_charge_time_s: Option<f64>,
    /// Stimulus at which charge times are predicted.
    pub reference_p_in_dbm: f64,
    pub reference_freq_hz: f64,
    pub objective: Objective,
}

impl Requirements {
    pub fn new(e_update_j: f64, window: VoltageWindow) -> Self {
        Requirements {
            e_update_j,
            window,
            margin: DEFAULT_SIZING_MARGIN,
            max_volume_cm3: None,
            max_cost_eur: None,
            max_first_charge_time_s: None,
            reference_p_in_dbm: 0.0,
            reference_freq_hz: 868e6,
            objective: Objective::default(),
        }
    }

    /// 75 mJ per update over the ORing window [3.1, 0.9] V.
    pub fn reference() -> Self {
        Self::new(0.075, VoltageWindow::new(3.1, 0.9).expect("valid window"))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.e_update_j >= 0.0) || !self.e_update_j.is_finite() {
            return Err(Error::config(format!("update energy must be >= 0, got {} J", self.e_update_j)));
        }
        if !(self.margin >= 1.0) {
            return Err(Error::config(format!("margin must be >= 1, got {}", self.margin)));
        }
        for (name, v) in [
            ("max_volume_cm3", self.max_volume_cm3),
            ("max_cost_eur", self.max_cost_eur),
            ("max_first_charge_time_s", self.max_first_charge_time_s),
        ] {
            if let Some(v) = v {
                if !(v >= 0.0) {
                    return Err(Error::config(format!("{name} must be >= 0, got {v}")));
                }
            }
        }
        Ok(())
    }
}

/// Everything but the capacitor: harvester, PMU, load and simulation settings.
#[derive(Debug, Clone)]
pub struct Stack {
    pub harvester: HarvesterModel,
    pub pmu: PmuConfig,
    pub load: LoadProfile,
    pub dt_s: f64,
    pub max_charge_sim_s: f64,
}

impl Default for Stack {
    fn default() -> Self {
        Stack {
            harvester: HarvesterModel::default_aem(),
            pmu: PmuConfig::default(),
            load: LoadProfile::default(),
            dt_s: DEFAULT_DT_S,
            max_charge_sim_s: DEFAULT_MAX_CHARGE_SIM_S,
        }
    }
}

impl Stack {
    pub fn scenario(&self, capacitor: &CapacitorSpec, p_in_dbm: f64, freq_hz: f64) -> Scenario {
        Scenario {
            stimulus: Stimulus::Constant { p_in_dbm },
            frequency_hz: freq_hz,
            harvester: self.harvester.clone(),
            capacitor: capacitor.clone(),
            pmu: self.pmu.clone(),
            load: self.load.clone(),
            v_initial: 0.0,
            duration_s: self.max_charge_sim_s,
            dt_s: self.dt_s,
            load_enabled: false,
            stop_at_voltage: None,
            record_interval_s: self.max_charge_sim_s,
        }
    }

    /// Boost input power during an update.
    pub fn update_input_power(&self) -> f64 {
        boost_input_power(&self.pmu, self.load.update_power() + self.load.quiescent_power)
    }
}

/// Why an option fails a requirement.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum Reason {
    Energy { usable_j: f64, required_j: f64 },
    Esr { v_operating_v: f64, required_w: f64, deliverable_w: f64 },
    RatedVoltage { rated_v: f64, required_v: f64 },
    Volume { volume_cm3: f64, limit_cm3: f64 },
    Cost { cost_eur: f64, limit_eur: f64 },
    ChargeTime { predicted_s: Option<f64>, limit_s: f64 },
}

impl Reason {
    pub fn label(&self) -> &'static str {
        match self {
            Reason::Energy { .. } => "energy",
            Reason::Esr { .. } => "ESR",
            Reason::RatedVoltage { .. } => "rated voltage",
            Reason::Volume { .. } => "volume",
            Reason::Cost { .. } => "cost",
            Reason::ChargeTime { .. } => "charge time",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankedOption {
    pub cap: CapacitorSpec,
    pub feasible: bool,
    pub reasons: Vec<Reason>,
    pub predicted_first_charge_time_s: Option<f64>,
    /// Objective value; lower is better. Infinite when the part never charges.
    pub score: f64,
}

impl RankedOption {
    /// "Yes" or "No (ESR, cost)".
    pub fn usable_label(&self) -> String {
        if self.feasible {
            "Yes".to_string()
        } else {
            let labels: Vec<_> = self.reasons.iter().map(Reason::label).collect();
            format!("No ({})", labels.join(", "))
        }
    }
}

/// Lowest voltage the buffer reaches while delivering `margin × e_update`.
fn operating_floor(cap: &CapacitorSpec, req: &Requirements) -> f64 {
    let v_max = req.window.v_max();
    let drawn = 2.0 * req.e_update_j * req.margin / cap.capacitance_f;
    let reached = (v_max * v_max - drawn).max(0.0).sqrt();
    reached.max(req.window.v_min())
}

fn evaluate(cap: &CapacitorSpec, req: &Requirements, stack: &Stack) -> Result<RankedOption> {
    cap.validate()?;
    let mut reasons = Vec::new();

    let usable = req.window.energy(cap.capacitance_f);
    let required = req.e_update_j * req.margin;
    if usable < required * (1.0 - REL_EPS) {
        reasons.push(Reason::Energy { usable_j: usable, required_j: required });
    }

    let p_in = stack.update_input_power();
    let v_op = operating_floor(cap, req);
    if crate::storage::esr_feasible(cap, p_in, v_op) == EsrVerdict::UnusableEsr {
        reasons.push(Reason::Esr {
            v_operating_v: v_op,
            required_w: p_in,
            deliverable_w: max_deliverable_power(v_op, cap.esr_ohm),
        });
    }

    if cap.rated_voltage_v < stack.pmu.v_ovch {
        reasons.push(Reason::RatedVoltage { rated_v: cap.rated_voltage_v, required_v: stack.pmu.v_ovch });
    }
    if let Some(limit) = req.max_volume_cm3 {
        if cap.volume_cm3 > limit {
            reasons.push(Reason::Volume { volume_cm3: cap.volume_cm3, limit_cm3: limit });
        }
    }
    if let Some(limit) = req.max_cost_eur {
        if cap.cost_eur > limit {
            reasons.push(Reason::Cost { cost_eur: cap.cost_eur, limit_eur: limit });
        }
    }

    let scenario = stack.scenario(cap, req.reference_p_in_dbm, req.reference_freq_hz);
    let predicted = sim::charge_time(&scenario, req.window.v_max())?;
    if let Some(limit) = req.max_first_charge_time_s {
        if predicted.map_or(true, |t| t > limit) {
            reasons.push(Reason::ChargeTime { predicted_s: predicted, limit_s: limit });
        }
    }

    let score = match req.objective {
        Objective::MinChargeTime => predicted.unwrap_or(f64::INFINITY),
        Objective::MinCost => cap.cost_eur,
        Objective::MinVolume => cap.volume_cm3,
    };
    Ok(RankedOption {
        cap: cap.clone(),
        feasible: reasons.is_empty(),
        reasons,
        predicted_first_charge_time_s: predicted,
        score,
    })
}

fn rank_order(a: &RankedOption, b: &RankedOption) -> Ordering {
    b.feasible
        .cmp(&a.feasible)
        .then(a.score.total_cmp(&b.score))
        .then(a.cap.cost_eur.total_cmp(&b.cap.cost_eur))
        .then(a.cap.volume_cm3.total_cmp(&b.cap.volume_cm3))
        .then_with(|| a.cap.part_id.cmp(&b.cap.part_id))
}

fn evaluate_all(parts: &[CapacitorSpec], req: &Requirements, stack: &Stack) -> Result<Vec<RankedOption>> {
    parts.par_iter().map(|cap| evaluate(cap, req, stack)).collect()
}

fn rank(parts: &[CapacitorSpec], req: &Requirements, stack: &Stack) -> Result<Vec<RankedOption>> {
    let mut ranked = evaluate_all(parts, req, stack)?;
    ranked.sort_by(rank_order);
    Ok(ranked)
}

/// Checks every part against the requirements and ranks them, feasible first.
pub fn select_capacitor(catalog: &Catalog, req: &Requirements, stack: &Stack) -> Result<Vec<RankedOption>> {
    if catalog.is_empty() {
        return Err(Error::config("capacitor catalog is empty"));
    }
    req.validate()?;
    rank(catalog.parts(), req, stack)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum Recommendation {
    Chosen { sizing: SizingResult, option: RankedOption },
    NoFeasiblePart { sizing: SizingResult, nearest_misses: Vec<RankedOption> },
}

impl Recommendation {
    pub fn sizing(&self) -> &SizingResult {
        match self {
            Recommendation::Chosen { sizing, .. } | Recommendation::NoFeasiblePart { sizing, .. } => sizing,
        }
    }
}

/// Number of near misses listed when nothing fits.
const NEAREST_MISSES: usize = 3;

/// Sizes the buffer, then picks the best catalog part at or above the E12 choice.
pub fn recommend_buffer(req: &Requirements, stack: &Stack, catalog: &Catalog) -> Result<Recommendation> {
    if catalog.is_empty() {
        return Err(Error::config("capacitor catalog is empty"));
    }
    req.validate()?;
    let sizing = size_with_margin(req.e_update_j, &req.window, req.margin)?;
    let floor = sizing.e12_choice_f * (1.0 - REL_EPS);
    let candidates: Vec<_> = catalog.parts().iter().filter(|c| c.capacitance_f >= floor).cloned().collect();
    let ranked = rank(&candidates, req, stack)?;
    if let Some(best) = ranked.first().filter(|o| o.feasible) {
        return Ok(Recommendation::Chosen { sizing, option: best.clone() });
    }
    let nearest_misses = if ranked.is_empty() {
        // Nothing is large enough: list the biggest parts, largest first.
        let mut parts = catalog.parts().to_vec();
        parts.sort_by(|a, b| {
            b.capacitance_f
                .total_cmp(&a.capacitance_f)
                .then_with(|| a.part_id.cmp(&b.part_id))
        });
        parts.truncate(NEAREST_MISSES);
        evaluate_all(&parts, req, stack)?
    } else {
        ranked.into_iter().take(NEAREST_MISSES).collect()
    };
    Ok(Recommendation::NoFeasiblePart { sizing, nearest_misses })
}

/// One charging run of a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepPoint {
    pub p_in_dbm: f64,
    pub freq_hz: f64,
    pub v_initial_v: f64,
    pub charge_time_s: Option<f64>,
    pub efficiency: Option<f64>,
}

/// Charging runs from each `(p_in_dbm, freq_hz, v_initial_v)` to the
/// template's charge target (its stop voltage, else `v_chrdy`). Results keep
/// the input order.
pub fn charge_sweep(template: &Scenario, points: &[(f64, f64, f64)]) -> Result<Vec<SweepPoint>> {
    let target = template.stop_at_voltage.unwrap_or(template.pmu.v_chrdy);
    points
        .par_iter()
        .map(|&(p, f, v0)| {
            let s = Scenario {
                stimulus: Stimulus::Constant { p_in_dbm: p },
                frequency_hz: f,
                v_initial: v0,
                record_interval_s: template.duration_s,
                ..template.clone()
            };
            let r = sim::charge_run(&s, target)?;
            let reached = r.first_charge_time_s;
            Ok(SweepPoint {
                p_in_dbm: p,
                freq_hz: f,
                v_initial_v: v0,
                charge_time_s: reached,
                efficiency: reached.and_then(|_| sim::charge_efficiency(&r).ok()),
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ParetoPoint {
    pub p_in_dbm: f64,
    pub charge_time_s: f64,
    pub efficiency: f64,
}

fn dominates(a: &ParetoPoint, b: &ParetoPoint) -> bool {
    a.charge_time_s <= b.charge_time_s && a.efficiency >= b.efficiency
}

/// Charge time versus charge efficiency over input power; returns the
/// non-dominated points ordered by power. Powers that never reach the charge
/// target are dropped.
pub fn pareto_power_sweep(template: &Scenario, p_grid_dbm: &[f64]) -> Result<Vec<ParetoPoint>> {
    if p_grid_dbm.is_empty() {
        return Err(Error::config("power grid is empty"));
    }
    let h = &template.harvester;
    if let Some(&p) = p_grid_dbm
        .iter()
        .find(|&&p| !(p >= h.sensitivity_dbm && p <= h.max_input_dbm))
    {
        return Err(Error::config(format!(
            "grid power {p} dBm outside harvester range [{}, {}] dBm",
            h.sensitivity_dbm, h.max_input_dbm
        )));
    }
    let mut grid = p_grid_dbm.to_vec();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    let points: Vec<_> = grid.iter().map(|&p| (p, template.frequency_hz, template.v_initial)).collect();
    let candidates: Vec<ParetoPoint> = charge_sweep(template, &points)?
        .into_iter()
        .filter_map(|s| {
            Some(ParetoPoint {
                p_in_dbm: s.p_in_dbm,
                charge_time_s: s.charge_time_s?,
                efficiency: s.efficiency?,
            })
        })
        .collect();
    // Exact ties keep the lowest power only.
    let front = candidates
        .iter()
        .enumerate()
        .filter(|&(i, p)| {
            !candidates.iter().enumerate().any(|(j, q)| {
                let strictly = q.charge_time_s < p.charge_time_s || q.efficiency > p.efficiency;
                j != i && dominates(q, p) && (strictly || j < i)
            })
        })
        .map(|(_, p)| *p)
        .collect();
    Ok(front)
}
