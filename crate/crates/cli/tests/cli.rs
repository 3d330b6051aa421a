use std::path::PathBuf;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_delaypred"))
}

fn config(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("configs")
        .join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn reference_run_writes_csv_and_svg() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("out.csv");
    let svg = dir.path().join("out.svg");
    let o = run(&[
        "section5",
        "--csv",
        csv.to_str().unwrap(),
        "--svg",
        svg.to_str().unwrap(),
        "--columns",
        "x1,z1,u",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(
        text.lines().next().unwrap(),
        "t,x1,x2,z1,z2,w,u,d1,d2,xi,event"
    );
    assert_eq!(text.lines().count(), 40002);
    assert_eq!(
        std::fs::read_to_string(&svg)
            .unwrap()
            .matches("<polyline")
            .count(),
        3
    );
    assert!(stdout(&o).contains("observer energy bound: holds"));
}

#[test]
fn print_config_round_trips_through_run() {
    let o = run(&["section5", "--print-config"]);
    assert!(o.status.success());
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.json");
    std::fs::write(&path, &o.stdout).unwrap();
    let a = run(&["run", path.to_str().unwrap()]);
    let b = run(&["section5"]);
    assert!(a.status.success());
    assert_eq!(stdout(&a), stdout(&b));
}

#[test]
fn shipped_configs_run() {
    for name in [
        "reference.json",
        "reference_disturbed.json",
        "picard_m2.json",
        "lti_double_integrator.json",
        "feedforward_two_output.json",
        "deadbeat.json",
    ] {
        let o = run(&["run", config(name).to_str().unwrap()]);
        assert!(
            o.status.success(),
            "{name}: {}",
            String::from_utf8_lossy(&o.stderr)
        );
        assert!(stdout(&o).contains("final t ="), "{name}");
    }
}

#[test]
fn predict_prints_state() {
    let o = run(&[
        "predict",
        config("lti_double_integrator.json").to_str().unwrap(),
        "--state",
        "1,2",
        "--history",
        "1",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: Vec<f64> = serde_json::from_str(stdout(&o).trim()).unwrap();
    assert_eq!(v.len(), 2);
    assert!((v[0] - 2.125).abs() < 1e-12 && (v[1] - 2.5).abs() < 1e-12);
}

#[test]
fn deadbeat_exit_codes() {
    let o = run(&["deadbeat-demo"]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("finite-time convergence: yes"));
    let o = run(&["deadbeat-demo", "--gain-scale", "1.05"]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("finite-time convergence: no"));
}

#[test]
fn gains_check_reports_json_and_strict_exit() {
    let path = config("picard_m2.json");
    let o = run(&["gains-check", path.to_str().unwrap(), "--probes", "200"]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["report"]["conditions"].as_array().unwrap().len(), 3);
    let o = run(&[
        "gains-check",
        path.to_str().unwrap(),
        "--probes",
        "200",
        "--strict",
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn bad_input_is_an_error() {
    assert_eq!(run(&["run", "/nonexistent.json"]).status.code(), Some(1));
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(&path, "{\"plant\": 3}").unwrap();
    assert_eq!(run(&["run", path.to_str().unwrap()]).status.code(), Some(1));
    assert!(!run(&["frobnicate"]).status.success());
}
