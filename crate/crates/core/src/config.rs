//! TOML scenario files.
//!
//! Every physical quantity carries its unit in the key name. Unknown keys are
//! rejected. Errors point at `file:line`. Relative paths inside a file resolve
//! against the file's directory; unset data paths fall back to [`DataDir`].

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::data::{self, DataDir};
use crate::error::{Error, Result};
use crate::harvester::{self, HarvesterModel, TrendWarning};
use crate::linkbudget::{Band, BandTable, Combining, LinkSpec};
use crate::optimizer::{Objective, Requirements, Stack, DEFAULT_MAX_CHARGE_SIM_S};
use crate::pmu::{self, LoadProfile, PmuConfig, PresetFile, DEFAULT_PRESET};
use crate::sim::{Scenario, Stimulus, TimelinePoint, DEFAULT_DT_S};
use crate::storage::{CapacitorSpec, Catalog, Technology, VoltageWindow, DEFAULT_SIZING_MARGIN};
use crate::units::dbm_to_watts;

/// Reference for every accepted key, shown by `wptsim --help`.
pub const CONFIG_KEYS_HELP: &str = "\
CONFIGURATION FILE (TOML; every section and key is optional)

[stimulus]            RF power at the harvester port
  p_in_dbm            constant received power, dBm
  freq_hz             carrier frequency, Hz (default 868e6)
  timeline            piecewise-constant power: [{ t_s = 0, p_in_dbm = 0 }, ...]
                      (off before the first point; mutually exclusive with p_in_dbm)
                      With neither key, the received power of [link] is used.

[link]                transmitter array and geometry
  tx_power_dbm        conducted power per antenna element, dBm
  tx_power_total_w    total conducted power split over the elements, W
  n_antennas          number of elements (default 1)
  combining           \"single\", \"coherent\" or \"incoherent\"
                      (default single for one element, coherent otherwise)
  freq_hz             carrier frequency, Hz (default 868e6)
  distance_m          transmitter to tag distance, m
  tx_gain_dbi         per-element antenna gain, dBi (default 0)
  rx_gain_dbi         tag antenna gain, dBi (default 0)
  sensitivity_dbm     harvester sensitivity for the verdict (default: harvester's)

[[band]]              regulatory band, repeatable (default: EU 865-868 MHz @ 2 W
                      and 915-921 MHz @ 4 W)
  name                label
  f_low_hz, f_high_hz inclusive band edges, Hz
  max_tx_power_w      total transmit power cap, W (or max_tx_power_dbm)

[harvester]
  calibration         efficiency grid CSV (default: shipped table)
  constant_efficiency use one efficiency everywhere instead of a grid
  sensitivity_dbm     minimum input power, dBm (default -18)
  max_input_dbm       overload threshold, dBm (default 15)
  tuned_freq_hz       matching-network centre frequency, Hz (default 868e6)
  cold_start_v        voltage below which the cold-start path charges, V (default 0.05)
  cold_start_a        cold-start charging current, A (default 100e-6)

[capacitor]
  part_id             catalog part (default ECA-0JM223, else the first row)
  catalog             catalog CSV (default: shipped catalog)
  capacitance_f       inline part: capacitance, F (ignores the catalog)
  esr_ohm, rated_voltage_v, volume_cm3, cost_eur, leakage_a, technology
                      override or define the part's fields

[pmu]
  preset              named preset (default aem40940-esl)
  presets             preset TOML file (default: shipped presets)
  v_ovch_v            overvoltage threshold: charging stops above it, V
  v_chrdy_v           charge-ready threshold that starts an update, V
  v_ovdis_v           overdischarge threshold, V
  v_boost_min_v       boost converter minimum input voltage, V
  boost_efficiency    boost converter efficiency, fraction
  output_voltage_v    regulated output voltage, V
  oring               keep the boost running below v_ovdis during an update
  holdoff_s           delay between charge-ready and update start, s

[load]
  update_energy_j     energy of one display update, J (default 0.075)
  update_duration_s   duration of one update, s (default 5.2)
  quiescent_power_w   extra power while the load is active, W (default 0)

[sim]
  v_initial_v         initial buffer voltage, V (default 0)
  duration_s          simulated time, s (default 14400)
  dt_s                integration step, s (default 0.01; --dt overrides)
  record_interval_s   time-series sample spacing, s (default 1)
  load_enabled        run the update load (default true)

[size]
  e_update_j          energy per update, J (default: [load])
  v_max_v, v_min_v    discharge window, V (default: PMU usable window)
  margin              sizing margin, >= 1 (default 1.2)

[requirements]        storage ranking; windows and energy default as in [size]
  e_update_j, v_max_v, v_min_v, margin
  max_volume_cm3      volume limit, cm3
  max_cost_eur        cost limit, EUR
  max_first_charge_time_s
                      first-charge limit at the reference stimulus, s
  reference_p_in_dbm  stimulus for charge-time prediction, dBm (default 0)
  reference_freq_hz   its frequency, Hz (default 868e6)
  objective           \"min-charge-time\", \"min-cost\" or \"min-volume\"
  catalog             catalog CSV to rank (default: [capacitor] catalog)
  max_sim_s           cap on simulated charge time, s (default 259200)

[sweep]
  p_grid_dbm          powers for charge time and efficiency, dBm
                      (default -7.5 to 10 in 2.5 dB steps)
  freqs_hz            frequencies, Hz (default [868e6, 920e6])
  v_initial_grid_v    initial voltages for the efficiency-vs-voltage table, V
                      (default 0 to 2.5 in 0.5 V steps)
  v_initial_p_dbm     powers for the efficiency-vs-voltage table, dBm
                      (default [-5, 10])
  target_v            charge target, V (default v_chrdy)
";

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    stimulus: Option<RawStimulus>,
    link: Option<RawLink>,
    #[serde(default)]
    band: Vec<RawBand>,
    harvester: Option<RawHarvester>,
    capacitor: Option<RawCapacitor>,
    pmu: Option<RawPmu>,
    load: Option<RawLoad>,
    sim: Option<RawSim>,
    size: Option<RawSize>,
    requirements: Option<RawRequirements>,
    sweep: Option<RawSweep>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawStimulus {
    p_in_dbm: Option<f64>,
    freq_hz: Option<f64>,
    timeline: Option<Vec<TimelinePoint>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLink {
    tx_power_dbm: Option<f64>,
    tx_power_total_w: Option<f64>,
    n_antennas: Option<u32>,
    combining: Option<Combining>,
    freq_hz: Option<f64>,
    distance_m: f64,
    tx_gain_dbi: Option<f64>,
    rx_gain_dbi: Option<f64>,
    sensitivity_dbm: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBand {
    name: String,
    f_low_hz: f64,
    f_high_hz: f64,
    max_tx_power_w: Option<f64>,
    max_tx_power_dbm: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawHarvester {
    calibration: Option<PathBuf>,
    constant_efficiency: Option<f64>,
    sensitivity_dbm: Option<f64>,
    max_input_dbm: Option<f64>,
    tuned_freq_hz: Option<f64>,
    cold_start_v: Option<f64>,
    cold_start_a: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCapacitor {
    part_id: Option<String>,
    catalog: Option<PathBuf>,
    technology: Option<Technology>,
    capacitance_f: Option<f64>,
    esr_ohm: Option<f64>,
    rated_voltage_v: Option<f64>,
    volume_cm3: Option<f64>,
    cost_eur: Option<f64>,
    leakage_a: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPmu {
    preset: Option<String>,
    presets: Option<PathBuf>,
    v_ovch_v: Option<f64>,
    v_chrdy_v: Option<f64>,
    v_ovdis_v: Option<f64>,
    v_boost_min_v: Option<f64>,
    boost_efficiency: Option<f64>,
    output_voltage_v: Option<f64>,
    oring: Option<bool>,
    holdoff_s: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLoad {
    update_energy_j: Option<f64>,
    update_duration_s: Option<f64>,
    quiescent_power_w: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSim {
    v_initial_v: Option<f64>,
    duration_s: Option<f64>,
    dt_s: Option<f64>,
    record_interval_s: Option<f64>,
    load_enabled: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSize {
    e_update_j: Option<f64>,
    v_max_v: Option<f64>,
    v_min_v: Option<f64>,
    margin: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRequirements {
    e_update_j: Option<f64>,
    v_max_v: Option<f64>,
    v_min_v: Option<f64>,
    margin: Option<f64>,
    max_volume_cm3: Option<f64>,
    max_cost_eur: Option<f64>,
    max_first_charge_time_s: Option<f64>,
    reference_p_in_dbm: Option<f64>,
    reference_freq_hz: Option<f64>,
    objective: Option<Objective>,
    catalog: Option<PathBuf>,
    max_sim_s: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSweep {
    p_grid_dbm: Option<Vec<f64>>,
    freqs_hz: Option<Vec<f64>>,
    v_initial_grid_v: Option<Vec<f64>>,
    v_initial_p_dbm: Option<Vec<f64>>,
    target_v: Option<f64>,
}

/// Link section resolved into a spec plus the sensitivity to judge it by.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkConfig {
    pub spec: LinkSpec,
    pub sensitivity_dbm: f64,
}

/// Sizing inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct SizeConfig {
    pub e_update_j: f64,
    pub window: VoltageWindow,
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub p_grid_dbm: Vec<f64>,
    pub freqs_hz: Vec<f64>,
    pub v_initial_grid_v: Vec<f64>,
    pub v_initial_p_dbm: Vec<f64>,
    pub target_v: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            p_grid_dbm: (0..8).map(|i| -7.5 + 2.5 * i as f64).collect(),
            freqs_hz: vec![868e6, 920e6],
            v_initial_grid_v: (0..6).map(|i| 0.5 * i as f64).collect(),
            v_initial_p_dbm: vec![-5.0, 10.0],
            target_v: PmuConfig::default().v_chrdy,
        }
    }
}

/// A fully resolved configuration.
#[derive(Debug, Clone)]
pub struct Config {
    pub origin: String,
    pub scenario: Scenario,
    pub link: Option<LinkConfig>,
    pub bands: BandTable,
    pub catalog: Catalog,
    pub ranking_catalog: Catalog,
    pub size: SizeConfig,
    pub requirements: Requirements,
    pub stack: Stack,
    pub sweep: SweepConfig,
    pub calibration_warnings: Vec<TrendWarning>,
}

impl Config {
    /// Built-in defaults, as if from an empty file.
    pub fn defaults(data: &DataDir) -> Result<Self> {
        Self::from_toml_str("", "<defaults>", Path::new("."), data)
    }

    pub fn load(path: &Path, data: &DataDir) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::parse(path.display().to_string(), format!("cannot read config: {e}")))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml_str(&text, &path.display().to_string(), base, data)
    }

    pub fn from_toml_str(text: &str, origin: &str, base_dir: &Path, data: &DataDir) -> Result<Self> {
        let loc = Locator { text, origin };
        let raw: RawConfig = toml::from_str(text).map_err(|e| {
            let line = e.span().map(|s| line_of_offset(text, s.start));
            loc.error_at(line, e.message())
        })?;
        resolve(raw, &loc, base_dir, data)
    }

    /// Replaces the integration step everywhere it is used.
    pub fn set_dt(&mut self, dt_s: f64) {
        self.scenario.dt_s = dt_s;
        self.stack.dt_s = dt_s;
    }
}

struct Locator<'a> {
    text: &'a str,
    origin: &'a str,
}

fn line_of_offset(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

impl Locator<'_> {
    /// Line of `key` inside `[section]`, else the section header line.
    fn line(&self, section: &str, key: Option<&str>) -> Option<usize> {
        let mut current = String::new();
        let mut header = None;
        for (i, raw) in self.text.lines().enumerate() {
            let line = raw.trim();
            if line.starts_with('[') {
                current = line.trim_matches(|c| c == '[' || c == ']').trim().to_string();
                if current == section && header.is_none() {
                    header = Some(i + 1);
                }
                continue;
            }
            if current != section {
                continue;
            }
            if let Some(key) = key {
                if let Some(rest) = line.strip_prefix(key) {
                    if rest.trim_start().starts_with('=') {
                        return Some(i + 1);
                    }
                }
            }
        }
        header
    }

    fn error_at(&self, line: Option<usize>, msg: impl std::fmt::Display) -> Error {
        match line {
            Some(l) => Error::parse(format!("{}:{l}", self.origin), msg),
            None => Error::parse(self.origin, msg),
        }
    }

    fn err(&self, section: &str, key: Option<&str>, msg: impl std::fmt::Display) -> Error {
        self.error_at(self.line(section, key), msg)
    }

    fn wrap<T>(&self, section: &str, key: Option<&str>, r: Result<T>) -> Result<T> {
        r.map_err(|e| match e {
            Error::Parse { .. } => e,
            other => self.err(section, key, other),
        })
    }
}

fn resolve_path(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn resolve(raw: RawConfig, loc: &Locator, base: &Path, data: &DataDir) -> Result<Config> {
    // Harvester.
    let rh = raw.harvester.unwrap_or_default();
    let mut calibration_warnings = Vec::new();
    let mut harvester = match (&rh.constant_efficiency, &rh.calibration) {
        (Some(_), Some(_)) => {
            return Err(loc.err("harvester", Some("constant_efficiency"), "use either calibration or constant_efficiency"))
        }
        (Some(eta), None) => {
            let mut m = loc.wrap("harvester", Some("constant_efficiency"), HarvesterModel::constant(*eta))?;
            let defaults = HarvesterModel::default_aem();
            m.sensitivity_dbm = defaults.sensitivity_dbm;
            m.max_input_dbm = defaults.max_input_dbm;
            m
        }
        (None, Some(path)) => {
            let cal = loc.wrap(
                "harvester",
                Some("calibration"),
                harvester::load_calibration(&resolve_path(base, path)),
            )?;
            calibration_warnings = cal.warnings;
            cal.model
        }
        (None, None) => loc.wrap("harvester", None, data.harvester())?,
    };
    if let Some(v) = rh.sensitivity_dbm {
        harvester.sensitivity_dbm = v;
    }
    if let Some(v) = rh.max_input_dbm {
        harvester.max_input_dbm = v;
    }
    if let Some(v) = rh.tuned_freq_hz {
        harvester.tuned_frequency_hz = v;
    }
    if let Some(v) = rh.cold_start_v {
        harvester.cold_start_voltage = v;
    }
    if let Some(v) = rh.cold_start_a {
        harvester.cold_start_current = v;
    }
    loc.wrap("harvester", None, harvester.validate())?;

    // Catalog and capacitor.
    let rc = raw.capacitor.unwrap_or_default();
    let catalog = match &rc.catalog {
        Some(p) => loc.wrap("capacitor", Some("catalog"), data::load_catalog(&resolve_path(base, p)))?,
        None => loc.wrap("capacitor", None, data.catalog())?,
    };
    let mut capacitor = match (rc.capacitance_f, &rc.part_id) {
        (Some(c), id) => CapacitorSpec {
            rated_voltage_v: 6.3,
            ..CapacitorSpec::ideal(id.clone().unwrap_or_else(|| "custom".into()), c)
        },
        (None, Some(id)) => catalog
            .get(id)
            .cloned()
            .ok_or_else(|| loc.err("capacitor", Some("part_id"), format!("part '{id}' not in catalog")))?,
        // Reference part when the catalog has it, else the catalog's first row.
        (None, None) => catalog
            .get("ECA-0JM223")
            .or_else(|| catalog.parts().first())
            .cloned()
            .ok_or_else(|| loc.err("capacitor", Some("catalog"), "catalog is empty"))?,
    };
    if let Some(v) = rc.technology {
        capacitor.technology = v;
    }
    if let Some(v) = rc.esr_ohm {
        capacitor.esr_ohm = v;
    }
    if let Some(v) = rc.rated_voltage_v {
        capacitor.rated_voltage_v = v;
    }
    if let Some(v) = rc.volume_cm3 {
        capacitor.volume_cm3 = v;
    }
    if let Some(v) = rc.cost_eur {
        capacitor.cost_eur = v;
    }
    if let Some(v) = rc.leakage_a {
        capacitor.leakage_a = v;
    }
    loc.wrap("capacitor", None, capacitor.validate())?;

    // PMU.
    let rp = raw.pmu.unwrap_or_default();
    let presets = match &rp.presets {
        Some(p) => {
            let path = resolve_path(base, p);
            let text = std::fs::read_to_string(&path)
                .map_err(|e| loc.err("pmu", Some("presets"), format!("{}: {e}", path.display())))?;
            PresetFile::from_toml_str(&text, &path.display().to_string())?
        }
        None => loc.wrap("pmu", None, data.presets())?,
    };
    let preset = rp.preset.as_deref().unwrap_or(DEFAULT_PRESET);
    let mut pmu = loc.wrap("pmu", Some("preset"), presets.get(preset).cloned())?;
    for (slot, v) in [
        (&mut pmu.v_ovch, rp.v_ovch_v),
        (&mut pmu.v_chrdy, rp.v_chrdy_v),
        (&mut pmu.v_ovdis, rp.v_ovdis_v),
        (&mut pmu.v_boost_min, rp.v_boost_min_v),
        (&mut pmu.boost_efficiency, rp.boost_efficiency),
        (&mut pmu.output_voltage, rp.output_voltage_v),
        (&mut pmu.holdoff_s, rp.holdoff_s),
    ] {
        if let Some(v) = v {
            *slot = v;
        }
    }
    if let Some(v) = rp.oring {
        pmu.oring = v;
    }
    loc.wrap("pmu", None, pmu.validate())?;

    // Load.
    let rl = raw.load.unwrap_or_default();
    let defaults = LoadProfile::default();
    let load = LoadProfile {
        update_energy: rl.update_energy_j.unwrap_or(defaults.update_energy),
        update_duration: rl.update_duration_s.unwrap_or(defaults.update_duration),
        quiescent_power: rl.quiescent_power_w.unwrap_or(defaults.quiescent_power),
    };
    loc.wrap("load", None, load.validate())?;

    // Link and bands.
    let link = match raw.link {
        None => None,
        Some(rl) => {
            let n = rl.n_antennas.unwrap_or(1);
            let combining = rl
                .combining
                .unwrap_or(if n == 1 { Combining::Single } else { Combining::Coherent });
            let per_element = match (rl.tx_power_dbm, rl.tx_power_total_w) {
                (Some(dbm), None) => dbm,
                (None, Some(w)) if w > 0.0 && n > 0 => crate::linkbudget::per_antenna_dbm(w, n),
                (None, Some(_)) => {
                    return Err(loc.err("link", Some("tx_power_total_w"), "total power must be positive"))
                }
                _ => {
                    return Err(loc.err("link", None, "set exactly one of tx_power_dbm and tx_power_total_w"))
                }
            };
            let spec = LinkSpec {
                tx_power_per_antenna_dbm: per_element,
                n_antennas: n,
                combining,
                frequency_hz: rl.freq_hz.unwrap_or(868e6),
                distance_m: rl.distance_m,
                tx_gain_dbi: rl.tx_gain_dbi.unwrap_or(0.0),
                rx_gain_dbi: rl.rx_gain_dbi.unwrap_or(0.0),
            };
            loc.wrap("link", None, spec.validate())?;
            Some(LinkConfig {
                spec,
                sensitivity_dbm: rl.sensitivity_dbm.unwrap_or(harvester.sensitivity_dbm),
            })
        }
    };
    let bands = if raw.band.is_empty() {
        BandTable::eu_default()
    } else {
        let mut table = BandTable::default();
        for b in raw.band {
            let cap_w = match (b.max_tx_power_w, b.max_tx_power_dbm) {
                (Some(w), None) => w,
                (None, Some(dbm)) => dbm_to_watts(dbm),
                _ => {
                    return Err(loc.err(
                        "band",
                        None,
                        format!("band '{}': set exactly one of max_tx_power_w and max_tx_power_dbm", b.name),
                    ))
                }
            };
            let band = loc.wrap("band", None, Band::new(b.name, b.f_low_hz, b.f_high_hz, cap_w))?;
            loc.wrap("band", None, table.push(band))?;
        }
        table
    };

    // Stimulus.
    let rs = raw.stimulus.unwrap_or_default();
    let frequency_hz = rs.freq_hz.unwrap_or(868e6);
    let stimulus = match (rs.p_in_dbm, rs.timeline) {
        (Some(_), Some(_)) => {
            return Err(loc.err("stimulus", Some("timeline"), "use either p_in_dbm or timeline"));
        }
        (Some(p), None) => Stimulus::Constant { p_in_dbm: p },
        (None, Some(points)) => Stimulus::Timeline(points),
        (None, None) => match &link {
            Some(l) => Stimulus::Link(l.spec.clone()),
            None => Stimulus::Constant { p_in_dbm: 0.0 },
        },
    };

    // Simulation.
    let rsim = raw.sim.unwrap_or_default();
    let scenario = Scenario {
        stimulus,
        frequency_hz,
        harvester: harvester.clone(),
        capacitor,
        pmu: pmu.clone(),
        load: load.clone(),
        v_initial: rsim.v_initial_v.unwrap_or(0.0),
        duration_s: rsim.duration_s.unwrap_or(4.0 * 3600.0),
        dt_s: rsim.dt_s.unwrap_or(DEFAULT_DT_S),
        load_enabled: rsim.load_enabled.unwrap_or(true),
        stop_at_voltage: None,
        record_interval_s: rsim.record_interval_s.unwrap_or(1.0),
    };
    loc.wrap("sim", None, scenario.validate())?;

    // Sizing defaults come from the load and the PMU's usable window.
    let usable = loc.wrap("pmu", None, pmu::usable_window(&pmu))?;
    let window = |section: &str, v_max: Option<f64>, v_min: Option<f64>| {
        loc.wrap(
            section,
            Some("v_min_v"),
            VoltageWindow::new(v_max.unwrap_or(usable.v_max()), v_min.unwrap_or(usable.v_min())),
        )
    };
    let rsz = raw.size.unwrap_or_default();
    let size = SizeConfig {
        e_update_j: rsz.e_update_j.unwrap_or(load.update_energy),
        window: window("size", rsz.v_max_v, rsz.v_min_v)?,
        margin: rsz.margin.unwrap_or(DEFAULT_SIZING_MARGIN),
    };
    if !(size.e_update_j >= 0.0) {
        return Err(loc.err("size", Some("e_update_j"), "update energy must be >= 0"));
    }
    if !(size.margin >= 1.0) {
        return Err(loc.err("size", Some("margin"), "margin must be >= 1"));
    }

    let rr = raw.requirements.unwrap_or_default();
    let ranking_catalog = match &rr.catalog {
        Some(p) => loc.wrap("requirements", Some("catalog"), data::load_catalog(&resolve_path(base, p)))?,
        None => catalog.clone(),
    };
    let requirements = Requirements {
        e_update_j: rr.e_update_j.unwrap_or(load.update_energy),
        window: window("requirements", rr.v_max_v, rr.v_min_v)?,
        margin: rr.margin.unwrap_or(DEFAULT_SIZING_MARGIN),
        max_volume_cm3: rr.max_volume_cm3,
        max_cost_eur: rr.max_cost_eur,
        max_first_charge_time_s: rr.max_first_charge_time_s,
        reference_p_in_dbm: rr.reference_p_in_dbm.unwrap_or(0.0),
        reference_freq_hz: rr.reference_freq_hz.unwrap_or(868e6),
        objective: rr.objective.unwrap_or_default(),
    };
    loc.wrap("requirements", None, requirements.validate())?;
    if requirements.window.v_max() > pmu.v_ovch {
        return Err(loc.err("requirements", Some("v_max_v"), "window top lies above v_ovch"));
    }
    let stack = Stack {
        harvester,
        pmu: pmu.clone(),
        load,
        dt_s: scenario.dt_s,
        max_charge_sim_s: rr.max_sim_s.unwrap_or(DEFAULT_MAX_CHARGE_SIM_S),
    };
    if !(stack.max_charge_sim_s > stack.dt_s) {
        return Err(loc.err("requirements", Some("max_sim_s"), "must exceed one step"));
    }

    let rw = raw.sweep.unwrap_or_default();
    let d = SweepConfig::default();
    let sweep = SweepConfig {
        p_grid_dbm: rw.p_grid_dbm.unwrap_or(d.p_grid_dbm),
        freqs_hz: rw.freqs_hz.unwrap_or(d.freqs_hz),
        v_initial_grid_v: rw.v_initial_grid_v.unwrap_or(d.v_initial_grid_v),
        v_initial_p_dbm: rw.v_initial_p_dbm.unwrap_or(d.v_initial_p_dbm),
        target_v: rw.target_v.unwrap_or(pmu.v_chrdy),
    };
    for (key, list) in [
        ("p_grid_dbm", &sweep.p_grid_dbm),
        ("freqs_hz", &sweep.freqs_hz),
        ("v_initial_grid_v", &sweep.v_initial_grid_v),
        ("v_initial_p_dbm", &sweep.v_initial_p_dbm),
    ] {
        if list.is_empty() {
            return Err(loc.err("sweep", Some(key), format!("{key} is empty")));
        }
    }
    if !(sweep.target_v > 0.0 && sweep.target_v <= pmu.v_ovch) {
        return Err(loc.err("sweep", Some("target_v"), "target must lie in (0, v_ovch]"));
    }
    if let Some(v) = sweep.v_initial_grid_v.iter().find(|&&v| !(v >= 0.0 && v < sweep.target_v)) {
        return Err(loc.err("sweep", Some("v_initial_grid_v"), format!("{v} V is not below the charge target")));
    }

    Ok(Config {
        origin: loc.origin.to_string(),
        scenario,
        link,
        bands,
        catalog,
        ranking_catalog,
        size,
        requirements,
        stack,
        sweep,
        calibration_warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<Config> {
        Config::from_toml_str(text, "test.toml", Path::new("."), &DataDir::default())
    }

    #[test]
    fn empty_file_gives_reference_defaults() {
        let c = parse("").unwrap();
        assert_eq!(c.scenario.capacitor.part_id, "ECA-0JM223");
        assert_eq!(c.scenario.pmu, PmuConfig::default());
        assert_eq!(c.scenario.stimulus, Stimulus::Constant { p_in_dbm: 0.0 });
        assert_eq!(c.size.window, VoltageWindow::new(3.1, 0.9).unwrap());
        assert_eq!(c.sweep.p_grid_dbm.len(), 8);
        assert_eq!(c.bands, BandTable::eu_default());
    }

    #[test]
    fn unknown_key_reports_line() {
        let err = parse("[sim]\ndt_s = 0.01\nvoltage = 3\n").unwrap_err().to_string();
        assert!(err.starts_with("test.toml:3"), "{err}");
        assert!(err.contains("voltage"), "{err}");
    }

    #[test]
    fn unitless_keys_are_rejected() {
        assert!(parse("[stimulus]\np_in = 0\n").is_err());
        assert!(parse("[pmu]\nv_chrdy = 3.1\n").is_err());
    }

    #[test]
    fn semantic_error_reports_key_line() {
        let err = parse("[pmu]\n\nv_chrdy_v = 2.0\n").unwrap_err().to_string();
        assert!(err.starts_with("test.toml:1"), "{err}");
        let err = parse("[capacitor]\npart_id = \"NOPE\"\n").unwrap_err().to_string();
        assert!(err.starts_with("test.toml:2"), "{err}");
        let err = parse("[sim]\n# step\ndt_s = -1\n").unwrap_err().to_string();
        assert!(err.starts_with("test.toml:1"), "{err}");
    }

    #[test]
    fn overrides_apply() {
        let c = parse(
            "[capacitor]\npart_id = \"FYH0H105ZF\"\nesr_ohm = 5.0\n\
             [pmu]\noring = false\n[sim]\nv_initial_v = 1.0\n[size]\nmargin = 1.5\n",
        )
        .unwrap();
        assert_eq!(c.scenario.capacitor.capacitance_f, 1.0);
        assert_eq!(c.scenario.capacitor.esr_ohm, 5.0);
        assert!(!c.scenario.pmu.oring);
        assert_eq!(c.size.window, VoltageWindow::new(3.1, 2.8).unwrap());
        assert_eq!(c.size.margin, 1.5);
        assert_eq!(c.scenario.v_initial, 1.0);
    }

    #[test]
    fn inline_capacitor() {
        let c = parse("[capacitor]\ncapacitance_f = 0.047\nesr_ohm = 0.1\n").unwrap();
        assert_eq!(c.scenario.capacitor.part_id, "custom");
        assert_eq!(c.scenario.capacitor.capacitance_f, 0.047);
    }

    #[test]
    fn link_and_bands() {
        let c = parse(
            "[link]\ntx_power_total_w = 4.0\nn_antennas = 4\ndistance_m = 5\nfreq_hz = 918e6\n\
             [[band]]\nname = \"wide\"\nf_low_hz = 900e6\nf_high_hz = 930e6\nmax_tx_power_dbm = 36\n",
        )
        .unwrap();
        let link = c.link.unwrap();
        assert_eq!(link.spec.combining, Combining::Coherent);
        assert!((link.spec.total_tx_power_w() - 4.0).abs() < 1e-9);
        assert_eq!(link.sensitivity_dbm, -18.0);
        assert!(matches!(c.scenario.stimulus, Stimulus::Link(_)));
        assert_eq!(c.bands.bands().len(), 1);
        assert!(parse("[link]\ndistance_m = 5\n").is_err());
    }

    #[test]
    fn timeline_stimulus() {
        let c = parse("[stimulus]\ntimeline = [{ t_s = 0, p_in_dbm = 0 }, { t_s = 60, p_in_dbm = -40 }]\n").unwrap();
        assert!(matches!(c.scenario.stimulus, Stimulus::Timeline(ref p) if p.len() == 2));
        assert!(parse("[stimulus]\np_in_dbm = 0\ntimeline = [{ t_s = 0, p_in_dbm = 0 }]\n").is_err());
    }

    #[test]
    fn objective_names() {
        let c = parse("[requirements]\nobjective = \"min-cost\"\nmax_cost_eur = 2.0\n").unwrap();
        assert_eq!(c.requirements.objective, Objective::MinCost);
        assert!(parse("[requirements]\nobjective = \"cheap\"\n").is_err());
    }

    #[test]
    fn set_dt_reaches_stack() {
        let mut c = parse("").unwrap();
        c.set_dt(0.02);
        assert_eq!((c.scenario.dt_s, c.stack.dt_s), (0.02, 0.02));
    }

    #[test]
    fn missing_file_is_error() {
        assert!(Config::load(Path::new("/nonexistent/x.toml"), &DataDir::default()).is_err());
    }

    #[test]
    fn help_lists_every_key() {
        let keys = [
            "p_in_dbm", "freq_hz", "timeline", "tx_power_dbm", "tx_power_total_w", "n_antennas", "combining",
            "distance_m", "tx_gain_dbi", "rx_gain_dbi", "sensitivity_dbm", "f_low_hz", "f_high_hz",
            "max_tx_power_w", "max_tx_power_dbm", "calibration", "constant_efficiency", "max_input_dbm",
            "tuned_freq_hz", "cold_start_v", "cold_start_a", "part_id", "catalog", "capacitance_f", "esr_ohm",
            "rated_voltage_v", "volume_cm3", "cost_eur", "leakage_a", "technology", "preset", "presets",
            "v_ovch_v", "v_chrdy_v", "v_ovdis_v", "v_boost_min_v", "boost_efficiency", "output_voltage_v",
            "oring", "holdoff_s", "update_energy_j", "update_duration_s", "quiescent_power_w", "v_initial_v",
            "duration_s", "dt_s", "record_interval_s", "load_enabled", "e_update_j", "v_max_v", "v_min_v",
            "margin", "max_volume_cm3", "max_cost_eur", "max_first_charge_time_s", "reference_p_in_dbm",
            "reference_freq_hz", "objective", "max_sim_s", "p_grid_dbm", "freqs_hz", "v_initial_grid_v",
            "v_initial_p_dbm", "target_v",
        ];
        for k in keys {
            assert!(CONFIG_KEYS_HELP.contains(k), "help misses {k}");
        }
    }
}
