use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;
use ucpqkd::harness::{parse_scenario, scenario_from_value};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_ucpqkd"));
    c.env_remove("UCPQKD_OUT_DIR");
    c
}

fn write_scenario(dir: &Path, json: &str) -> PathBuf {
    let p = dir.join("scenario.json");
    fs::write(&p, json).unwrap();
    p
}

fn simulate(scenario: &Path, out: &Path, extra: &[&str]) -> Output {
    bin()
        .arg("simulate")
        .arg(scenario)
        .arg("--out")
        .arg(out)
        .args(extra)
        .output()
        .unwrap()
}

fn read_json(p: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

fn csv_rows(p: &Path) -> Vec<String> {
    fs::read_to_string(p).unwrap().lines().skip(1).map(str::to_owned).collect()
}

const HONEST: &str = r#"{"seed": 3, "n_cycles": 20000}"#;

#[test]
fn honest_run_exits_clean_and_writes_report() {
    let tmp = TempDir::new().unwrap();
    let sc = write_scenario(tmp.path(), HONEST);
    let out = tmp.path().join("out");
    let o = simulate(&sc, &out, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r = read_json(&out.join("report.json"));
    assert_eq!(r["n_cycles_run"], 20000);
    assert_eq!(r["partial"], false);
    assert_eq!(r["seed"], 3);
    let alarms = fs::read_to_string(out.join("alarms.csv")).unwrap();
    assert_eq!(alarms.lines().next(), Some("cycle_index,kind,value"));
    assert_eq!(alarms.lines().count(), 1);
    assert!(!out.join("sweep.csv").exists());
    assert!(!out.join("cycles.csv").exists());
}

#[test]
fn unknown_key_is_config_error() {
    let tmp = TempDir::new().unwrap();
    let sc = write_scenario(tmp.path(), r#"{"pump": {"p_peek_w": 0.1}}"#);
    let o = simulate(&sc, &tmp.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(3));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("p_peek_w"), "{err}");
}

#[test]
fn out_of_range_value_is_config_error() {
    let tmp = TempDir::new().unwrap();
    let sc = write_scenario(tmp.path(), r#"{"source": {"mu": -1}}"#);
    let o = simulate(&sc, &tmp.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("source.mu"));
}

#[test]
fn malformed_sweep_is_config_error() {
    let tmp = TempDir::new().unwrap();
    let sc = write_scenario(tmp.path(), HONEST);
    let o = simulate(&sc, &tmp.path().join("out"), &["--sweep", "source.mu=0.1:0.2"]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn bright_attack_exits_with_alarms() {
    let tmp = TempDir::new().unwrap();
    let sc = write_scenario(
        tmp.path(),
        r#"{"seed": 1, "n_cycles": 2000, "attack": {"kind": "faked_state", "peak_power_w": 1e-3}}"#,
    );
    let out = tmp.path().join("out");
    let o = simulate(&sc, &out, &[]);
    assert_eq!(o.status.code(), Some(2));
    let rows = csv_rows(&out.join("alarms.csv"));
    assert!(!rows.is_empty());
    assert!(rows.iter().any(|r| r.contains("pump-depletion")), "{rows:?}");
    let r = read_json(&out.join("report.json"));
    assert_eq!(r["attack_kind"], "faked_state");
    assert!(r["alarm_probability"].as_f64().unwrap() > 0.9);
}

#[test]
fn sweep_writes_one_row_per_point() {
    let tmp = TempDir::new().unwrap();
    let sc = write_scenario(
        tmp.path(),
        r#"{"seed": 2, "n_cycles": 1000, "attack": {"kind": "faked_state", "peak_power_w": 1e-6}}"#,
    );
    let out = tmp.path().join("out");
    let o = simulate(&sc, &out, &["--sweep", "attack.peak_power_w=1e-5:1e-3:5"]);
    assert_eq!(o.status.code(), Some(2));
    let rows = csv_rows(&out.join("sweep.csv"));
    assert_eq!(rows.len(), 5);
    assert_eq!(
        fs::read_to_string(out.join("sweep.csv")).unwrap().lines().next(),
        Some("parameter,alarm_prob,qber,sifted_rate")
    );
    let params: Vec<f64> = rows.iter().map(|r| r.split(',').next().unwrap().parse().unwrap()).collect();
    assert!((params[0] - 1e-5).abs() < 1e-18);
    assert!((params[4] - 1e-3).abs() < 1e-15);
    let last_alarm: f64 = rows[4].split(',').nth(1).unwrap().parse().unwrap();
    assert!(last_alarm > 0.9);
    let r = read_json(&out.join("report.json"));
    assert_eq!(r["sweep"]["rows"].as_array().unwrap().len(), 5);
}

#[test]
fn lwi_chart_and_cycle_dump() {
    let tmp = TempDir::new().unwrap();
    let sc = write_scenario(tmp.path(), r#"{"seed": 4, "n_cycles": 500}"#);
    let out = tmp.path().join("out");
    let o = simulate(&sc, &out, &["--emit-lwi-chart", "--emit-cycles"]);
    assert_eq!(o.status.code(), Some(0));
    let chart = fs::read_to_string(out.join("lwi_chart.csv")).unwrap();
    assert_eq!(chart.lines().next(), Some("wavelength_nm,attenuation_db"));
    let r = read_json(&out.join("report.json"));
    let grid = r["parameters"]["filters"]["lwi_grid"].clone();
    let n = ((grid["stop_nm"].as_f64().unwrap() - grid["start_nm"].as_f64().unwrap()) / grid["step_nm"].as_f64().unwrap())
        .round() as usize
        + 1;
    assert_eq!(chart.lines().count() - 1, n);
    for line in chart.lines().skip(1) {
        let (_, db) = line.split_once(',').unwrap();
        assert!(db == "inf" || db.parse::<f64>().unwrap() >= 0.0, "{line}");
    }
    assert_eq!(csv_rows(&out.join("cycles.csv")).len(), 500);
}

#[test]
fn env_var_sets_default_output_dir() {
    let tmp = TempDir::new().unwrap();
    let sc = write_scenario(tmp.path(), r#"{"seed": 5, "n_cycles": 200}"#);
    let env_dir = tmp.path().join("from-env");
    let o = bin().arg("simulate").arg(&sc).env("UCPQKD_OUT_DIR", &env_dir).output().unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert!(env_dir.join("report.json").exists());

    let flag_dir = tmp.path().join("from-flag");
    let o = bin()
        .arg("simulate")
        .arg(&sc)
        .arg("--out")
        .arg(&flag_dir)
        .env("UCPQKD_OUT_DIR", tmp.path().join("unused"))
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert!(flag_dir.join("report.json").exists());
    assert!(!tmp.path().join("unused").exists());
}

#[test]
fn fuse_truncates_run_with_partial_report() {
    let tmp = TempDir::new().unwrap();
    let sc = write_scenario(
        tmp.path(),
        r#"{"seed": 6, "n_cycles": 5000, "attack": {"kind": "laser_damage", "wavelength_nm": 1530, "cw_power_w": 12}}"#,
    );
    let out = tmp.path().join("out");
    let o = simulate(&sc, &out, &[]);
    assert_eq!(o.status.code(), Some(2));
    let r = read_json(&out.join("report.json"));
    assert_eq!(r["partial"], true);
    assert_eq!(r["termination"]["kind"], "fuse");
    assert!(r["n_cycles_run"].as_u64().unwrap() < 5000);
    assert!(csv_rows(&out.join("alarms.csv")).iter().any(|l| l.contains(",fuse,")));
}

#[test]
fn cli_overrides_and_parameter_echo() {
    let tmp = TempDir::new().unwrap();
    let sc = write_scenario(tmp.path(), r#"{"seed": 1, "n_cycles": 100, "source": {"mu": 0.3}}"#);
    let out = tmp.path().join("out");
    let o = simulate(&sc, &out, &["--seed", "77", "--cycles", "300"]);
    assert_eq!(o.status.code(), Some(0));
    let r = read_json(&out.join("report.json"));
    assert_eq!(r["seed"], 77);
    assert_eq!(r["n_cycles_run"], 300);
    let echoed = scenario_from_value(r["parameters"].clone()).unwrap();
    assert_eq!(echoed.seed, 77);
    assert_eq!(echoed.n_cycles, 300);
    assert_eq!(echoed.source.mu, 0.3);
    let mut original = parse_scenario(r#"{"seed": 77, "n_cycles": 300, "source": {"mu": 0.3}}"#).unwrap();
    original.output = echoed.output.clone();
    assert_eq!(echoed, original);
}

#[test]
fn report_bytes_do_not_depend_on_workers() {
    let tmp = TempDir::new().unwrap();
    let sc = write_scenario(
        tmp.path(),
        r#"{"seed": 9, "n_cycles": 30000, "channel": {"length_km": 0}, "attack": {"kind": "faked_state", "peak_power_w": 1e-6, "fraction": 0.5}}"#,
    );
    let mut reports = Vec::new();
    for w in ["1", "3"] {
        let out = tmp.path().join(format!("w{w}"));
        let o = simulate(&sc, &out, &["--workers", w]);
        assert!(o.status.success() || o.status.code() == Some(2));
        reports.push((fs::read(out.join("report.json")).unwrap(), fs::read(out.join("alarms.csv")).unwrap()));
    }
    assert!(reports[0] == reports[1]);
}
