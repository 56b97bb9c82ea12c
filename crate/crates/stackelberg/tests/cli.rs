use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use stackelberg::reproduce::FIXTURE;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_stackelberg"))
}

fn write_config(dir: &Path, name: &str, value: &Value) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, serde_json::to_string_pretty(value).unwrap()).unwrap();
    path
}

fn fixture_value() -> Value {
    serde_json::from_str(FIXTURE).unwrap()
}

fn run(args: &[&str], config: &Path, out: &Path) -> Output {
    bin()
        .args(args)
        .arg("--quiet")
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .output()
        .unwrap()
}

#[test]
fn zero_steps_gives_header_and_initial_row() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.json", &fixture_value());
    let out = tmp.path().join("out");
    let res = run(&["simulate", "--steps", "0"], &cfg, &out);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let csv = fs::read_to_string(out.join("trajectory.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[0].starts_with("k,x_1,x_2,"));
    assert!(lines[1].starts_with("0,"));
    assert!(!csv.contains('\r'));
}

#[test]
fn missing_weight_is_a_config_error_and_writes_nothing() {
    let tmp = tempfile::tempdir().unwrap();
    let mut v = fixture_value();
    v.as_object_mut().unwrap().remove("R22");
    let cfg = write_config(tmp.path(), "c.json", &v);
    let out = tmp.path().join("out");
    let res = run(&["analyze"], &cfg, &out);
    assert_eq!(res.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&res.stderr).contains("R22"));
    assert!(!out.exists());
}

#[test]
fn unknown_key_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let mut v = fixture_value();
    v.as_object_mut().unwrap().insert("R13".into(), Value::from(0));
    let cfg = write_config(tmp.path(), "c.json", &v);
    let res = run(&["solve"], &cfg, &tmp.path().join("out"));
    assert_eq!(res.status.code(), Some(2));
}

#[test]
fn solver_failure_exits_3() {
    let tmp = tempfile::tempdir().unwrap();
    let mut v = fixture_value();
    v["solver"]["max_iter"] = Value::from(2);
    let cfg = write_config(tmp.path(), "c.json", &v);
    let out = tmp.path().join("out");
    let res = run(&["solve"], &cfg, &out);
    assert_eq!(res.status.code(), Some(3));
    assert!(!out.join("solution.json").exists());
}

#[test]
fn uncertified_user_observer_exits_4() {
    let tmp = tempfile::tempdir().unwrap();
    let mut v = fixture_value();
    v["observer"]["L1"] = serde_json::json!([[10], [10]]);
    v["observer"]["L2"] = serde_json::json!([[10], [10]]);
    let cfg = write_config(tmp.path(), "c.json", &v);
    let res = run(&["design"], &cfg, &tmp.path().join("out"));
    assert_eq!(res.status.code(), Some(4), "{}", String::from_utf8_lossy(&res.stderr));
}

#[test]
fn designed_gains_reloaded_as_user_gains_reproduce_the_trajectory() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.json", &fixture_value());
    let first = tmp.path().join("first");
    assert!(run(&["design"], &cfg, &first).status.success());
    assert!(run(&["simulate"], &cfg, &first).status.success());

    let observer: Value = serde_json::from_str(&fs::read_to_string(first.join("observer.json")).unwrap()).unwrap();
    let mut v = fixture_value();
    v["observer"]["L1"] = observer["L1"].clone();
    v["observer"]["L2"] = observer["L2"].clone();
    let user_cfg = write_config(tmp.path(), "user.json", &v);
    let second = tmp.path().join("second");
    assert!(run(&["simulate"], &user_cfg, &second).status.success());
    assert_eq!(
        fs::read(first.join("trajectory.csv")).unwrap(),
        fs::read(second.join("trajectory.csv")).unwrap()
    );

    let redesigned = tmp.path().join("redesigned");
    assert!(run(&["design"], &user_cfg, &redesigned).status.success());
    let again: Value = serde_json::from_str(&fs::read_to_string(redesigned.join("observer.json")).unwrap()).unwrap();
    assert_eq!(again["method"], "user-supplied");
    assert_eq!(again["L1"], observer["L1"]);
}

#[test]
fn solution_report_values_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.json", &fixture_value());
    let out = tmp.path().join("out");
    assert!(run(&["solve"], &cfg, &out).status.success());
    let text = fs::read_to_string(out.join("solution.json")).unwrap();
    let v: Value = serde_json::from_str(&text).unwrap();
    let k1 = v["K1"][0][0].as_f64().unwrap();
    assert!((k1 - 0.2028).abs() < 1e-3);
    // 17 significant digits in scientific form.
    assert!(text.contains(&format!("{k1:.16e}")));
}

#[test]
fn analyze_from_reports_tail_gap() {
    let tmp = tempfile::tempdir().unwrap();
    let mut v = fixture_value();
    v["analysis"] = serde_json::json!({ "N_list": [0, 10, 20, 30, 200] });
    let cfg = write_config(tmp.path(), "c.json", &v);
    let out = tmp.path().join("out");
    let res = run(&["analyze", "--from", "15"], &cfg, &out);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let csv = fs::read_to_string(out.join("decay.csv")).unwrap();
    let ns: Vec<&str> = csv.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(ns, ["15", "20", "30", "200"]);
    let report: Value = serde_json::from_str(&fs::read_to_string(out.join("cost_report.json")).unwrap()).unwrap();
    assert_eq!(report["analysis_from"], 15);
    let tail = report["delta_J_at_from"][0].as_f64().unwrap();
    let first_row: f64 = csv.lines().nth(1).unwrap().split(',').nth(1).unwrap().parse().unwrap();
    assert_eq!(tail, first_row);
    let last: f64 = csv.lines().last().unwrap().split(',').nth(1).unwrap().parse().unwrap();
    let d0 = report["delta_J1"].as_f64().unwrap();
    assert!(last.abs() < 1e-8 * d0.abs());
}

#[test]
fn method_flag_overrides_config() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.json", &fixture_value());
    let out = tmp.path().join("out");
    assert!(run(&["design", "--method", "dual-riccati"], &cfg, &out)
        .status
        .success());
    let v: Value = serde_json::from_str(&fs::read_to_string(out.join("observer.json")).unwrap()).unwrap();
    assert_eq!(v["method"], "dual-riccati");
    let res = run(&["design", "--method", "newton"], &cfg, &out);
    assert_eq!(res.status.code(), Some(2));
}

#[test]
fn bundled_fixture_loads_exactly() {
    use stackelberg_core::Matrix;
    let cfg = stackelberg::reproduce::fixture_config();
    assert_eq!(cfg.model.a(), &Matrix::from_rows(&[[1.0, -0.7], [1.0, -0.3]]));
    assert_eq!(cfg.model.b1(), &Matrix::column(&[-5.0, -1.0]));
    assert_eq!(cfg.model.b2(), &Matrix::column(&[0.0, 1.0]));
    assert_eq!(cfg.model.h1(), &Matrix::from_rows(&[[1.0, 0.0]]));
    assert_eq!(cfg.model.h2(), &Matrix::from_rows(&[[0.0, 1.0]]));
    assert_eq!(cfg.weights.q1, Matrix::identity(2));
    assert_eq!(cfg.weights.q2, Matrix::from_diag(&[2.0, 1.0]));
    assert_eq!(cfg.weights.r12, Matrix::from_rows(&[[0.0]]));
    assert_eq!(cfg.x0, Matrix::column(&[1.0, -1.0]));
}
