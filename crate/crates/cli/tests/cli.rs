use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn bbmsf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bbmsf")).args(args).output().unwrap()
}

fn preset(name: &str) -> String {
    fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("presets").join(name)).unwrap()
}

fn write(dir: &tempfile::TempDir, name: &str, text: &str) -> String {
    let path = dir.path().join(name);
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn analyze_reports_output_voltage_and_split() {
    let out = bbmsf(&["analyze", "--config", "table4.json"]);
    assert!(out.status.success());
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    let vo = v["report"]["vo"].as_f64().unwrap();
    assert!((vo - 40.40).abs() < 0.03);
    assert_eq!(v["report"]["p_notmag_fraction"].as_f64(), Some(0.5));
    assert_eq!(v["report"]["p_mag_fraction"].as_f64(), Some(0.5));
    assert!(v["losses"]["d1"].as_f64().unwrap() > 0.0);
}

#[test]
fn reports_are_byte_identical() {
    for args in [
        &["analyze", "--config", "table4.json"][..],
        &["design"][..],
        &["string", "--format", "json"][..],
        &["bode", "--points", "7"][..],
    ] {
        let a = bbmsf(args);
        let b = bbmsf(args);
        assert!(a.status.success(), "{args:?}");
        assert_eq!(a.stdout, b.stdout, "{args:?}");
    }
}

#[test]
fn all_violations_are_listed_with_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad = preset("table4.json").replace("\"d\": 0.689", "\"d\": 1.2").replace("\"l\": 68e-6", "\"l\": 0").replace("\"rl\": 7.255", "\"rl\": -1");
    let path = write(&dir, "bad.json", &bad);
    let out = bbmsf(&["analyze", "--config", &path]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    for field in ["d must", "l must", "rl must"] {
        assert!(err.contains(field), "{err}");
    }
}

#[test]
fn unknown_field_names_its_location() {
    let dir = tempfile::tempdir().unwrap();
    let path = write(&dir, "typo.json", &preset("table4.json").replace("\"fsw\"", "\"f_sw\""));
    let out = bbmsf(&["simulate", "--config", &path]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("converter") && err.contains("f_sw"), "{err}");
}

#[test]
fn numerical_failures_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let no_reset = write(&dir, "reset.json", &preset("table4.json").replace("\"d\": 0.689", "\"d\": 0.8"));
    let out = bbmsf(&["simulate", "--config", &no_reset]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("reset"));
    let dcm = write(&dir, "dcm.json", &preset("table4.json").replace("\"rl\": 7.255", "\"rl\": 500.0"));
    let out = bbmsf(&["simulate", "--config", &dcm]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn simulate_writes_waveform_csv() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("w.csv");
    let out = bbmsf(&["simulate", "--config", "table4.json", "--out", csv.to_str().unwrap()]);
    assert!(out.status.success());
    let text = fs::read_to_string(csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("t,interval,il,ilm,vo,i_s,i_d1,i_d2,i_dd,v_s,v_d1,v_d2,v_dd"));
    let intervals: Vec<&str> = lines.map(|l| l.split(',').nth(1).unwrap()).collect();
    assert!(intervals.len() > 2000);
    for name in ["TON", "TOFF1", "TOFF2"] {
        assert!(intervals.contains(&name));
    }
}

#[test]
fn bode_both_methods() {
    let out = bbmsf(&["bode", "--kind", "gvd", "--kind", "zo", "--fmin", "100", "--fmax", "5000", "--points", "3", "--method", "both", "--steps-per-period", "200"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let rows: Vec<Vec<&str>> = text.lines().skip(1).map(|l| l.split(',').collect()).collect();
    assert_eq!(text.lines().next(), Some("f_hz,mag_db,phase_deg,kind,method"));
    assert_eq!(rows.len(), 12);
    let first: f64 = rows[0][1].parse().unwrap();
    assert!((first - 35.4).abs() < 0.2);
    assert!(rows.iter().any(|r| r[3] == "zo" && r[4] == "numeric"));
}

#[test]
fn bode_rejects_bad_arguments() {
    let out = bbmsf(&["bode", "--kind", "gvx", "--fmin", "0"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("gvx") && err.contains("fmin"), "{err}");
    let out = Command::new(env!("CARGO_BIN_EXE_bbmsf")).args(["bode"]).env("BBMSF_THREADS", "zero").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn design_report_sections() {
    let out = bbmsf(&["design", "--seed", "3"]);
    assert!(out.status.success());
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    for section in ["operating_points", "stress_envelope", "losses", "feasibility"] {
        assert!(!v[section].is_null(), "{section}");
    }
    let d2 = &v["stress_envelope"]["values"]["i_d2_avg"];
    assert_eq!(d2["unit"], "A");
    assert_eq!(d2["at"], "E1 shaded");
    assert_eq!(v["stress_envelope"]["capacitor_ratings"]["v_ci"]["value"].as_f64(), Some(35.16));
    assert_eq!(v["losses"][0]["ranking"][0], "d1");
}

#[test]
fn design_flags_infeasible_points() {
    let dir = tempfile::tempdir().unwrap();
    let text = preset("design_table6.json").replace(
        "{ \"label\": \"E0\"",
        "{ \"label\": \"too high\", \"vi\": 29.3, \"vo\": 44.31, \"po\": 225.0 },\n    { \"label\": \"E0\"",
    );
    let path = write(&dir, "d.json", &text);
    let out = bbmsf(&["design", "--spec", &path]);
    assert!(out.status.success());
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    let f = &v["feasibility"][0];
    assert_eq!(f["feasible"], false);
    assert!(f["reason"].as_str().unwrap().contains("duty"));
    assert_eq!(v["operating_points"].as_array().unwrap().len(), 3);
}

#[test]
fn string_table_rows() {
    let out = bbmsf(&["string", "--scenario", "scenario_e1.json"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("non-shaded,13.5,225,29.3,40.4040404,5.56875"));
    assert!(text.contains("shaded,4.5,67.5,15,12.1212121,5.56875"));
    assert!(text.contains("step_down"));
}

#[test]
fn missing_file_is_a_config_error() {
    let out = bbmsf(&["analyze", "--config", "/nonexistent/table4.json"]);
    assert_eq!(out.status.code(), Some(2));
}
