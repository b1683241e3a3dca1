use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn wptsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wptsim"))
        .args(args)
        .env_remove("WPTSIM_DATA")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.display().to_string()
}

const SHORT_SIM: &str = "[sim]\nduration_s = 3600\nrecord_interval_s = 10\n";

#[test]
fn size_reports_reference_values() {
    let o = wptsim(&["size"]);
    assert_eq!(o.status.code(), Some(0));
    let s = stdout(&o);
    for want in ["17.05 mF", "20.45 mF", "22 mF", "91.6 %"] {
        assert!(s.contains(want), "missing {want} in\n{s}");
    }
    assert!(stdout(&wptsim(&["size", "--v-min-v", "2.8"])).contains("84.75 mF"));
    assert!(stdout(&wptsim(&["size", "--e-update-j", "0"])).contains("E12 choice:          0 mF"));
}

#[test]
fn size_json_and_recommendation() {
    let o = wptsim(&["size", "--format", "json", "--recommend"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["outcome"], "chosen");
    assert_eq!(v["option"]["cap"]["part_id"], "ECA-0JM223");
    let o = wptsim(&["size", "--recommend", "--e-update-j", "10"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn linkbudget_infeasible_exits_two() {
    let o = wptsim(&[
        "linkbudget",
        "--tx-power-dbm",
        "30",
        "--distance-m",
        "24",
        "--freq-hz",
        "918e6",
        "--sensitivity-dbm",
        "-17",
    ]);
    assert_eq!(o.status.code(), Some(2));
    let s = stdout(&o);
    assert!(s.contains("-29.31 dBm") && s.contains("margin -12.31 dB"), "{s}");
}

#[test]
fn linkbudget_array_and_out_of_band() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "link.toml",
        "[link]\ntx_power_total_w = 4.0\nn_antennas = 84\ncombining = \"coherent\"\nfreq_hz = 918e6\ndistance_m = 24\n",
    );
    let o = wptsim(&["--config", &cfg, "linkbudget", "--format", "json"]);
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["regulatory"]["verdict"], "ok");
    let gain = v["array_gain_db"].as_f64().unwrap();
    assert!((gain - 20.0 * 84f64.log10()).abs() < 1e-9);
    let o = wptsim(&["linkbudget", "--tx-power-dbm", "30", "--distance-m", "1", "--freq-hz", "2.45e9"]);
    assert!(stdout(&o).contains("out of band"));
}

#[test]
fn simulate_below_sensitivity() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "s.toml", SHORT_SIM);
    let out = dir.path().join("out");
    let o = wptsim(&["--config", &cfg, "--out", out.to_str().unwrap(), "simulate", "--p-in-dbm", "-40"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("below harvester sensitivity"), "{}", stderr(&o));
}

#[test]
fn simulate_writes_series_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "s.toml", SHORT_SIM);
    let out = dir.path().join("out");
    let o = wptsim(&["--config", &cfg, "--out", out.to_str().unwrap(), "simulate"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let series = fs::read_to_string(out.join("timeseries.csv")).unwrap();
    assert!(series.starts_with("t_s,v_cap_v,state,p_harv_w,p_load_w\n"));
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    let interval = summary["update_interval_s"].as_f64().unwrap() / 60.0;
    assert!((20.0..=30.0).contains(&interval), "{interval}");
}

#[test]
fn malformed_config_leaves_no_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    for (name, text) in [
        ("syntax.toml", "[sim\nduration_s = 10\n"),
        ("unknown.toml", "[sim]\nduration_s = 10\nvoltage = 3\n"),
        ("semantic.toml", "[pmu]\nv_chrdy_v = 1.0\n"),
    ] {
        let cfg = write(dir.path(), name, text);
        for cmd in ["simulate", "sweep"] {
            let o = wptsim(&["--config", &cfg, "--out", out.to_str().unwrap(), cmd]);
            assert_eq!(o.status.code(), Some(1), "{name} {cmd}");
            assert!(stderr(&o).contains(&format!("{name}:")), "{}", stderr(&o));
            assert!(!out.exists());
        }
    }
    let o = wptsim(&["--config", "/nonexistent/cfg.toml", "--out", out.to_str().unwrap(), "simulate"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(!out.exists());
}

#[test]
fn unknown_key_error_names_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "bad.toml", "[stimulus]\np_in_dbm = 0\n\n[load]\nupdate_energy = 0.075\n");
    let o = wptsim(&["--config", &cfg, "size"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("bad.toml:5"), "{}", stderr(&o));
}

#[test]
fn outputs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "d.toml",
        &format!("{SHORT_SIM}[sweep]\np_grid_dbm = [0, 10]\nfreqs_hz = [868e6]\nv_initial_grid_v = [0, 2]\nv_initial_p_dbm = [10]\n"),
    );
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        for cmd in ["simulate", "sweep"] {
            let o = wptsim(&["--config", &cfg, "--out", out.to_str().unwrap(), cmd]);
            assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        }
    }
    let mut names: Vec<_> = fs::read_dir(&a).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert_eq!(names.len(), 6);
    for n in names {
        assert_eq!(fs::read(a.join(&n)).unwrap(), fs::read(b.join(&n)).unwrap(), "{n:?}");
    }
}

#[test]
fn sweep_writes_plot_tables() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = wptsim(&["--out", out.to_str().unwrap(), "sweep", "--format", "csv"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).starts_with("p_in_dbm,charge_time_s,efficiency\n"));
    let charge = fs::read_to_string(out.join("fig2_charge_time.csv")).unwrap();
    let times: Vec<f64> = charge
        .lines()
        .skip(1)
        .filter(|l| l.contains(",868000000,"))
        .map(|l| l.split(',').nth(2).unwrap().parse().unwrap())
        .collect();
    assert_eq!(times.len(), 8);
    assert!(times.windows(2).all(|w| w[1] < w[0]));
    assert!(fs::read_to_string(out.join("fig3_efficiency.csv")).unwrap().starts_with("p_in_dbm,freq_hz,efficiency\n"));
    assert!(fs::read_to_string(out.join("fig4_eff_vs_voltage.csv"))
        .unwrap()
        .starts_with("p_in_dbm,freq_hz,v_initial_v,efficiency\n"));
    let pareto = fs::read_to_string(out.join("pareto.csv")).unwrap();
    assert_eq!(pareto.lines().count(), 9, "{pareto}");
}

#[test]
fn rank_storage_reproduces_table() {
    let o = wptsim(&["rank-storage"]);
    assert_eq!(o.status.code(), Some(0));
    let s = stdout(&o);
    let rows: Vec<_> = s.lines().skip(1).collect();
    assert!(rows[0].contains("ECA-0JM223") && rows[0].ends_with("Yes"));
    assert!(s.lines().any(|l| l.contains("FYD0H223ZF") && l.ends_with("No (ESR)")));
    assert!(s.lines().any(|l| l.contains("FYH0H105ZF") && l.ends_with("Yes")));
}

#[test]
fn rank_storage_cost_cap_is_infeasible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", "[requirements]\nmax_cost_eur = 1.0\n");
    let o = wptsim(&["--config", &cfg, "rank-storage", "--format", "json"]);
    assert_eq!(o.status.code(), Some(2));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!(v.as_array().unwrap().iter().all(|o| o["feasible"] == false));
}

#[test]
fn data_dir_override() {
    let dir = tempfile::tempdir().unwrap();
    write(
        dir.path(),
        "catalog.csv",
        "part_id,technology,capacitance_F,esr_ohm,rated_voltage_V,volume_cm3,cost_eur,leakage_A\nONLY,AEC,0.047,0.1,6.3,2,1,0\n",
    );
    let o = Command::new(env!("CARGO_BIN_EXE_wptsim"))
        .args(["rank-storage", "--format", "csv"])
        .env("WPTSIM_DATA", dir.path())
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let s = stdout(&o);
    assert_eq!(s.lines().count(), 2);
    assert!(s.contains(",ONLY,"));
}

#[test]
fn calibrate_shipped_and_custom_tables() {
    let o = wptsim(&["calibrate"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("0 trend warning(s)"));

    let dir = tempfile::tempdir().unwrap();
    // Efficiency rising with power is a trend violation, not an error.
    let rising = write(
        dir.path(),
        "rising.csv",
        "p_in_dbm,freq_hz,v_cap_v,efficiency\n0,868e6,0,0.1\n0,868e6,3,0.2\n10,868e6,0,0.2\n10,868e6,3,0.3\n",
    );
    let o = wptsim(&["calibrate", &rising]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("warning:"), "{}", stdout(&o));

    let broken = write(dir.path(), "broken.csv", "p_in_dbm,freq_hz,v_cap_v,efficiency\n0,868e6,0,1.5\n");
    let o = wptsim(&["calibrate", &broken]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("broken.csv"), "{}", stderr(&o));
}

#[test]
fn dt_flag_is_validated() {
    assert_eq!(wptsim(&["--dt", "0", "size"]).status.code(), Some(1));
}

#[test]
fn help_documents_every_config_section() {
    for sub in ["simulate", "size", "linkbudget", "rank-storage", "sweep", "calibrate"] {
        let o = wptsim(&[sub, "--help"]);
        assert_eq!(o.status.code(), Some(0));
        let s = stdout(&o);
        for key in [
            "[stimulus]", "[link]", "[[band]]", "[harvester]", "[capacitor]", "[pmu]", "[load]", "[sim]", "[size]",
            "[requirements]", "[sweep]", "v_chrdy_v", "tx_power_total_w", "record_interval_s", "v_initial_p_dbm",
        ] {
            assert!(s.contains(key), "{sub} --help misses {key}");
        }
    }
    assert!(stdout(&wptsim(&["--help"])).contains("[capacitor]"));
}

#[test]
fn shipped_scenario_is_usable() {
    let cfg = concat!(env!("CARGO_MANIFEST_DIR"), "/scenarios/default.toml");
    let o = wptsim(&["--config", cfg, "linkbudget"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("within limits"));
    let o = wptsim(&["--config", cfg, "rank-storage"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
}
