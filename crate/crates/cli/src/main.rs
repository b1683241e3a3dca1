//! `wptsim`: energy simulator for RF-powered batteryless shelf labels.
//!
//! Exit codes: 0 success, 1 error, 2 physically infeasible result.

use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use wptsim_core::config::{Config, CONFIG_KEYS_HELP};
use wptsim_core::data::DataDir;
use wptsim_core::export;
use wptsim_core::harvester::{self, Calibrated};
use wptsim_core::linkbudget::{array_gain_db, array_received_power, check_regulatory, feasibility, fspl_db};
use wptsim_core::optimizer::{self, Recommendation};
use wptsim_core::sim::{self, Stimulus};
use wptsim_core::storage::size_with_margin;
use wptsim_core::{Combining, Error, RegulatoryVerdict, VoltageWindow};

#[derive(Parser)]
#[command(
    name = "wptsim",
    version,
    about = "Simulate, size and rank the energy buffer of an RF-powered e-paper shelf label",
    after_help = CONFIG_KEYS_HELP
)]
struct Cli {
    /// Scenario file (TOML); built-in defaults when omitted
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Directory for output files
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Machine-readable report on stdout instead of text
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,

    /// Integration step in seconds, overriding [sim] dt_s
    #[arg(long, global = true, value_name = "SECONDS")]
    dt: Option<f64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full stack and write timeseries.csv and summary.json (default --out: .)
    #[command(after_help = CONFIG_KEYS_HELP)]
    Simulate(SimulateArgs),
    /// Size the buffer capacitor for one update
    #[command(after_help = CONFIG_KEYS_HELP)]
    Size(SizeArgs),
    /// Path loss, received power, regulatory and sensitivity verdicts
    #[command(after_help = CONFIG_KEYS_HELP)]
    Linkbudget(LinkArgs),
    /// Check and rank the storage catalog against [requirements]
    #[command(name = "rank-storage", after_help = CONFIG_KEYS_HELP)]
    RankStorage,
    /// Power and initial-voltage sweeps: pareto.csv and plot tables (default --out: .)
    #[command(after_help = CONFIG_KEYS_HELP)]
    Sweep,
    /// Validate a calibration CSV and report trend warnings
    #[command(after_help = CONFIG_KEYS_HELP)]
    Calibrate(CalibrateArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Constant received power, overriding [stimulus]
    #[arg(long, value_name = "DBM", allow_negative_numbers = true)]
    p_in_dbm: Option<f64>,
}

#[derive(Args)]
struct SizeArgs {
    #[arg(long, value_name = "J")]
    e_update_j: Option<f64>,
    #[arg(long, value_name = "V")]
    v_max_v: Option<f64>,
    #[arg(long, value_name = "V")]
    v_min_v: Option<f64>,
    #[arg(long)]
    margin: Option<f64>,
    /// Also pick a catalog part (runs charge simulations)
    #[arg(long)]
    recommend: bool,
}

#[derive(Args)]
struct LinkArgs {
    /// Conducted power per element
    #[arg(long, value_name = "DBM", allow_negative_numbers = true)]
    tx_power_dbm: Option<f64>,
    #[arg(long, value_name = "M")]
    distance_m: Option<f64>,
    #[arg(long, value_name = "HZ")]
    freq_hz: Option<f64>,
    #[arg(long)]
    n_antennas: Option<u32>,
    #[arg(long, value_enum)]
    combining: Option<CombiningArg>,
    #[arg(long, value_name = "DBM", allow_negative_numbers = true)]
    sensitivity_dbm: Option<f64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum CombiningArg {
    Single,
    Coherent,
    Incoherent,
}

impl From<CombiningArg> for Combining {
    fn from(c: CombiningArg) -> Self {
        match c {
            CombiningArg::Single => Combining::Single,
            CombiningArg::Coherent => Combining::Coherent,
            CombiningArg::Incoherent => Combining::Incoherent,
        }
    }
}

#[derive(Args)]
struct CalibrateArgs {
    /// Calibration CSV; defaults to the configured harvester
    path: Option<PathBuf>,
}

/// Files are only written once every one of them has been computed.
struct Artifacts {
    dir: PathBuf,
    files: Vec<(String, String)>,
}

impl Artifacts {
    fn new(dir: PathBuf) -> Self {
        Artifacts { dir, files: Vec::new() }
    }

    fn add(&mut self, name: &str, contents: String) {
        self.files.push((name.to_string(), contents));
    }

    /// Writes temporaries, then renames them into place.
    fn commit(self) -> Result<Vec<PathBuf>, Error> {
        fs::create_dir_all(&self.dir)?;
        let mut staged = Vec::new();
        for (name, contents) in &self.files {
            let tmp = self.dir.join(format!(".{name}.tmp"));
            if let Err(e) = fs::write(&tmp, contents) {
                for (t, _) in &staged {
                    let _ = fs::remove_file(t);
                }
                let _ = fs::remove_file(&tmp);
                return Err(e.into());
            }
            staged.push((tmp, self.dir.join(name)));
        }
        let mut written = Vec::new();
        for (tmp, dest) in staged {
            fs::rename(&tmp, &dest)?;
            written.push(dest);
        }
        Ok(written)
    }
}

enum Status {
    Ok,
    Infeasible(String),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(Status::Ok) => ExitCode::SUCCESS,
        Ok(Status::Infeasible(msg)) => {
            eprintln!("infeasible: {msg}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> Result<Status, Error> {
    let data = DataDir::from_env();
    let mut config = match &cli.config {
        Some(path) => Config::load(path, &data)?,
        None => Config::defaults(&data)?,
    };
    if let Some(dt) = cli.dt {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::Config(format!("--dt must be positive, got {dt}")));
        }
        config.set_dt(dt);
    }
    let ctx = Ctx { format: cli.format, out: cli.out };
    match cli.command {
        Command::Simulate(args) => simulate(&ctx, config, args),
        Command::Size(args) => size(&ctx, &config, args),
        Command::Linkbudget(args) => linkbudget(&ctx, &config, args),
        Command::RankStorage => rank_storage(&ctx, &config),
        Command::Sweep => sweep(&ctx, &config),
        Command::Calibrate(args) => calibrate(&ctx, &config, args),
    }
}

struct Ctx {
    format: Option<Format>,
    out: Option<PathBuf>,
}

impl Ctx {
    fn out_or_cwd(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from("."))
    }
}

fn minutes(t: Option<f64>) -> String {
    t.map_or_else(|| "n/a".to_string(), |t| format!("{:.2} min", t / 60.0))
}

fn print_written(paths: &[PathBuf]) {
    for p in paths {
        eprintln!("wrote {}", p.display());
    }
}

fn simulate(ctx: &Ctx, mut config: Config, args: SimulateArgs) -> Result<Status, Error> {
    if let Some(p) = args.p_in_dbm {
        config.scenario.stimulus = Stimulus::Constant { p_in_dbm: p };
    }
    let scenario = &config.scenario;
    let result = sim::run(scenario)?;

    let mut files = Artifacts::new(ctx.out_or_cwd());
    files.add("timeseries.csv", export::timeseries_csv(&result)?);
    let summary = export::summary_json(&result)?;
    files.add("summary.json", summary.clone());
    let written = files.commit()?;

    match ctx.format {
        Some(Format::Json) => print!("{summary}"),
        Some(Format::Csv) => {
            println!("first_charge_time_s,update_interval_s,updates_completed,brownouts,charge_efficiency");
            let opt = |x: Option<f64>| x.map_or_else(String::new, |v| format!("{v:.6}"));
            println!(
                "{},{},{},{},{}",
                opt(result.first_charge_time_s),
                opt(result.update_interval_s),
                result.updates_completed,
                result.brownouts,
                opt(result.charge_efficiency)
            );
        }
        None => {
            println!("first charge:      {}", minutes(result.first_charge_time_s));
            println!("update interval:   {}", minutes(result.update_interval_s));
            println!("updates completed: {} ({} brownouts)", result.updates_completed, result.brownouts);
            let pct = |x: Option<f64>| x.map_or_else(|| "n/a".to_string(), |e| format!("{:.2} %", 100.0 * e));
            println!("charge efficiency: {} (first charge), {} (whole run)", pct(result.first_charge_efficiency), pct(result.charge_efficiency));
            if let Some(t) = result.rated_voltage_exceeded_at_s {
                println!("warning: rated voltage exceeded at {t:.2} s");
            }
        }
    }
    print_written(&written);

    if result.never_charged() {
        let peak = scenario.stimulus.peak_dbm()?;
        let msg = if peak < scenario.harvester.sensitivity_dbm {
            format!(
                "stimulus {peak:.2} dBm is below harvester sensitivity ({} dBm)",
                scenario.harvester.sensitivity_dbm
            )
        } else {
            format!("buffer never reached {} V within {} s", scenario.pmu.v_chrdy, scenario.duration_s)
        };
        return Ok(Status::Infeasible(msg));
    }
    Ok(Status::Ok)
}

fn size(ctx: &Ctx, config: &Config, args: SizeArgs) -> Result<Status, Error> {
    let e = args.e_update_j.unwrap_or(config.size.e_update_j);
    let window = VoltageWindow::new(
        args.v_max_v.unwrap_or(config.size.window.v_max()),
        args.v_min_v.unwrap_or(config.size.window.v_min()),
    )?;
    let margin = args.margin.unwrap_or(config.size.margin);
    let sizing = size_with_margin(e, &window, margin)?;
    let recommendation = if args.recommend {
        let req = optimizer::Requirements {
            e_update_j: e,
            window,
            margin,
            ..config.requirements.clone()
        };
        Some(optimizer::recommend_buffer(&req, &config.stack, &config.ranking_catalog)?)
    } else {
        None
    };

    let json = match &recommendation {
        Some(r) => export::recommendation_json(r)?,
        None => export::to_json(&sizing)?,
    };
    if let Some(dir) = &ctx.out {
        let mut files = Artifacts::new(dir.clone());
        files.add("sizing.json", json.clone());
        print_written(&files.commit()?);
    }
    match ctx.format {
        Some(Format::Json) => print!("{json}"),
        Some(Format::Csv) => {
            println!("minimal_capacitance_f,with_margin_f,e12_choice_f,usable_fraction");
            println!(
                "{:.6e},{:.6e},{:.6e},{:.6}",
                sizing.minimal_capacitance_f, sizing.with_margin_f, sizing.e12_choice_f, sizing.usable_fraction
            );
        }
        None => {
            println!(
                "update energy {:.2} mJ over [{}, {}] V, margin {margin}",
                e * 1e3,
                window.v_max(),
                window.v_min()
            );
            println!("minimal capacitance: {:.2} mF", sizing.minimal_capacitance_f * 1e3);
            println!("with margin:         {:.2} mF", sizing.with_margin_f * 1e3);
            println!("E12 choice:          {} mF", fmt_mf(sizing.e12_choice_f));
            println!("usable fraction:     {:.1} %", 100.0 * sizing.usable_fraction);
            match &recommendation {
                Some(Recommendation::Chosen { option, .. }) => println!(
                    "recommended part:    {} ({}, {} mF, first charge {})",
                    option.cap.part_id,
                    option.cap.technology,
                    fmt_mf(option.cap.capacitance_f),
                    minutes(option.predicted_first_charge_time_s)
                ),
                Some(Recommendation::NoFeasiblePart { nearest_misses, .. }) => {
                    println!("no feasible catalog part; nearest misses:");
                    for o in nearest_misses {
                        println!("  {} {} mF: {}", o.cap.part_id, fmt_mf(o.cap.capacitance_f), o.usable_label());
                    }
                }
                None => {}
            }
        }
    }
    if let Some(Recommendation::NoFeasiblePart { .. }) = recommendation {
        return Ok(Status::Infeasible("no catalog part satisfies the sizing".into()));
    }
    Ok(Status::Ok)
}

fn fmt_mf(c: f64) -> String {
    let mf = c * 1e3;
    if (mf - mf.round()).abs() < 1e-9 {
        format!("{mf:.0}")
    } else {
        format!("{mf:.3}")
    }
}

fn linkbudget(ctx: &Ctx, config: &Config, args: LinkArgs) -> Result<Status, Error> {
    let (mut spec, mut sensitivity) = match &config.link {
        Some(l) => (l.spec.clone(), l.sensitivity_dbm),
        None => {
            let (Some(p), Some(d)) = (args.tx_power_dbm, args.distance_m) else {
                return Err(Error::Config(
                    "no [link] section: pass --tx-power-dbm and --distance-m".into(),
                ));
            };
            (
                wptsim_core::LinkSpec::single(p, args.freq_hz.unwrap_or(868e6), d),
                config.scenario.harvester.sensitivity_dbm,
            )
        }
    };
    if let Some(p) = args.tx_power_dbm {
        spec.tx_power_per_antenna_dbm = p;
    }
    if let Some(d) = args.distance_m {
        spec.distance_m = d;
    }
    if let Some(f) = args.freq_hz {
        spec.frequency_hz = f;
    }
    if let Some(n) = args.n_antennas {
        spec.n_antennas = n;
        if args.combining.is_none() && n > 1 && spec.combining == Combining::Single {
            spec.combining = Combining::Coherent;
        }
    }
    if let Some(c) = args.combining {
        spec.combining = c.into();
    }
    if let Some(s) = args.sensitivity_dbm {
        sensitivity = s;
    }

    let fspl = fspl_db(spec.distance_m, spec.frequency_hz)?;
    let received = array_received_power(&spec)?;
    let regulatory = check_regulatory(spec.total_tx_power_w(), spec.frequency_hz, &config.bands)?;
    let verdict = feasibility(received, sensitivity);
    let report = serde_json::json!({
        "link": spec,
        "fspl_db": fspl,
        "array_gain_db": array_gain_db(spec.n_antennas, spec.combining),
        "total_tx_power_w": spec.total_tx_power_w(),
        "received_power_dbm": received,
        "regulatory": regulatory,
        "feasibility": verdict,
    });
    let json = export::to_json(&report)?;
    if let Some(dir) = &ctx.out {
        let mut files = Artifacts::new(dir.clone());
        files.add("linkbudget.json", json.clone());
        print_written(&files.commit()?);
    }
    let reg_text = match &regulatory {
        RegulatoryVerdict::Ok => "within limits".to_string(),
        RegulatoryVerdict::Violation { limit_w } => format!("violation (limit {limit_w} W)"),
        RegulatoryVerdict::OutOfBand => "out of band".to_string(),
    };
    match ctx.format {
        Some(Format::Json) => print!("{json}"),
        Some(Format::Csv) => {
            println!("fspl_db,received_power_dbm,sensitivity_dbm,margin_db,feasible,regulatory");
            println!(
                "{fspl:.3},{received:.3},{sensitivity:.3},{:.3},{},{}",
                verdict.margin_db,
                verdict.feasible,
                reg_text.replace(',', ";")
            );
        }
        None => {
            println!("free-space path loss: {fspl:.2} dB");
            println!(
                "array gain:           {:.2} dB ({} x {:?})",
                array_gain_db(spec.n_antennas, spec.combining),
                spec.n_antennas,
                spec.combining
            );
            println!("received power:       {received:.2} dBm");
            println!("regulatory:           {reg_text} at {:.3} W total", spec.total_tx_power_w());
            println!(
                "sensitivity:          {sensitivity:.2} dBm -> {} (margin {:.2} dB)",
                if verdict.feasible { "feasible" } else { "infeasible" },
                verdict.margin_db
            );
        }
    }
    if !verdict.feasible {
        return Ok(Status::Infeasible(format!(
            "received {received:.2} dBm is below sensitivity {sensitivity:.2} dBm"
        )));
    }
    if matches!(regulatory, RegulatoryVerdict::Violation { .. }) {
        return Ok(Status::Infeasible(format!("transmit power violates the band limit ({reg_text})")));
    }
    Ok(Status::Ok)
}

fn rank_storage(ctx: &Ctx, config: &Config) -> Result<Status, Error> {
    let ranked = optimizer::select_capacitor(&config.ranking_catalog, &config.requirements, &config.stack)?;
    let json = export::ranked_json(&ranked)?;
    if let Some(dir) = &ctx.out {
        let mut files = Artifacts::new(dir.clone());
        files.add("ranking.json", json.clone());
        print_written(&files.commit()?);
    }
    match ctx.format {
        Some(Format::Json) => print!("{json}"),
        Some(Format::Csv) => {
            println!("rank,part_id,technology,capacitance_F,esr_ohm,rated_voltage_V,volume_cm3,cost_eur,first_charge_time_s,usable");
            for (i, o) in ranked.iter().enumerate() {
                let c = &o.cap;
                println!(
                    "{},{},{},{},{},{},{},{},{},{}",
                    i + 1,
                    c.part_id,
                    c.technology,
                    c.capacitance_f,
                    c.esr_ohm,
                    c.rated_voltage_v,
                    c.volume_cm3,
                    c.cost_eur,
                    o.predicted_first_charge_time_s.map_or_else(String::new, |t| format!("{t:.3}")),
                    o.usable_label().replace(',', ";")
                );
            }
        }
        None => {
            let mut s = String::new();
            let _ = writeln!(
                s,
                "{:<4} {:<12} {:<5} {:>9} {:>8} {:>7} {:>8} {:>6} {:>13}  usable",
                "rank", "part", "tech", "C [mF]", "ESR [Ω]", "V_R [V]", "vol [cm³]", "€", "first charge"
            );
            for (i, o) in ranked.iter().enumerate() {
                let c = &o.cap;
                let _ = writeln!(
                    s,
                    "{:<4} {:<12} {:<5} {:>9} {:>8} {:>7} {:>9} {:>6} {:>13}  {}",
                    i + 1,
                    c.part_id,
                    c.technology.to_string(),
                    fmt_mf(c.capacitance_f),
                    c.esr_ohm,
                    c.rated_voltage_v,
                    c.volume_cm3,
                    c.cost_eur,
                    minutes(o.predicted_first_charge_time_s),
                    o.usable_label()
                );
            }
            print!("{s}");
        }
    }
    if !ranked.iter().any(|o| o.feasible) {
        return Ok(Status::Infeasible("no catalog part meets the requirements".into()));
    }
    Ok(Status::Ok)
}

fn sweep(ctx: &Ctx, config: &Config) -> Result<Status, Error> {
    let sw = &config.sweep;
    let template = sim::Scenario {
        stop_at_voltage: Some(sw.target_v),
        ..config.scenario.clone()
    };
    let by_power: Vec<_> = sw
        .freqs_hz
        .iter()
        .flat_map(|&f| sw.p_grid_dbm.iter().map(move |&p| (p, f, 0.0)))
        .collect();
    let by_voltage: Vec<_> = sw
        .v_initial_p_dbm
        .iter()
        .flat_map(|&p| sw.v_initial_grid_v.iter().map(move |&v| (p, template.frequency_hz, v)))
        .collect();
    let power_points = optimizer::charge_sweep(&template, &by_power)?;
    let voltage_points = optimizer::charge_sweep(&template, &by_voltage)?;
    let pareto_template = sim::Scenario { v_initial: 0.0, ..template.clone() };
    let front = optimizer::pareto_power_sweep(&pareto_template, &sw.p_grid_dbm)?;

    let pareto = export::pareto_csv(&front)?;
    let mut files = Artifacts::new(ctx.out_or_cwd());
    files.add("pareto.csv", pareto.clone());
    files.add("fig2_charge_time.csv", export::charge_time_csv(&power_points)?);
    files.add("fig3_efficiency.csv", export::efficiency_csv(&power_points)?);
    files.add("fig4_eff_vs_voltage.csv", export::eff_vs_voltage_csv(&voltage_points)?);
    let written = files.commit()?;

    match ctx.format {
        Some(Format::Json) => print!("{}", export::to_json(&front)?),
        Some(Format::Csv) => print!("{pareto}"),
        None => {
            println!("{:>9} {:>10} {:>9} {:>10}", "P [dBm]", "f [MHz]", "t [min]", "eff [%]");
            for p in &power_points {
                println!(
                    "{:>9.2} {:>10.1} {:>9} {:>10}",
                    p.p_in_dbm,
                    p.freq_hz / 1e6,
                    p.charge_time_s.map_or_else(|| "n/a".into(), |t| format!("{:.2}", t / 60.0)),
                    p.efficiency.map_or_else(|| "n/a".into(), |e| format!("{:.2}", 100.0 * e))
                );
            }
            println!("pareto front: {} of {} powers", front.len(), sw.p_grid_dbm.len());
        }
    }
    print_written(&written);
    Ok(Status::Ok)
}

fn calibrate(ctx: &Ctx, config: &Config, args: CalibrateArgs) -> Result<Status, Error> {
    let (origin, cal): (String, Calibrated) = match &args.path {
        Some(p) => (p.display().to_string(), harvester::load_calibration(p)?),
        None => {
            let model = config.scenario.harvester.clone();
            let warnings = harvester::trend_warnings(&model.table, model.tuned_frequency_hz);
            (model.table.provenance().to_string(), Calibrated { model, warnings })
        }
    };
    let t = &cal.model.table;
    match ctx.format {
        Some(Format::Json) => print!(
            "{}",
            export::to_json(&serde_json::json!({
                "origin": origin,
                "provenance": t.provenance(),
                "grid": [t.p_axis_dbm().len(), t.f_axis_hz().len(), t.v_axis_v().len()],
                "max_efficiency": t.max_efficiency(),
                "warnings": cal.warnings,
            }))?
        ),
        Some(Format::Csv) => {
            println!("trend,message");
            for w in &cal.warnings {
                println!("{:?},\"{}\"", w.trend, w.message.replace('"', "'"));
            }
        }
        None => {
            println!("{origin}");
            println!(
                "grid {} powers x {} frequencies x {} voltages, max efficiency {:.2} %",
                t.p_axis_dbm().len(),
                t.f_axis_hz().len(),
                t.v_axis_v().len(),
                100.0 * t.max_efficiency()
            );
            println!("{} trend warning(s)", cal.warnings.len());
            for w in &cal.warnings {
                println!("warning: {}", w.message);
            }
        }
    }
    Ok(Status::Ok)
}
