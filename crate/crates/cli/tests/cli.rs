use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn retarda(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_retarda"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn summary(out: &Output) -> Value {
    let text = String::from_utf8_lossy(&out.stdout);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 1, "stdout must be one line: {text}");
    serde_json::from_str(lines[0]).expect("stdout is JSON")
}

fn last_row(csv: &Path) -> Vec<f64> {
    let text = std::fs::read_to_string(csv).unwrap();
    let line = text.lines().last().unwrap();
    line.split(',').map(|f| f.parse().unwrap()).collect()
}

#[test]
fn simulate_linear_delay_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("d");
    let out = retarda(&[
        "simulate",
        "--catalog",
        "linear-delay",
        "--t-final",
        "2",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let s = summary(&out);
    assert_eq!(s["status"], "ok");
    assert!(s["solver"]["rel_tol"].is_number());
    let row = last_row(&out_dir.join("trajectory.csv"));
    assert!((row[0] - 2.0).abs() < 1e-12);
    assert!((row[1] + 0.5).abs() < 1e-8);
    assert!(out_dir.join("meta.json").exists());
}

#[test]
fn missing_system_file_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = retarda(&[
        "simulate",
        "--system",
        "missing.json",
        "--t-final",
        "1",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(summary(&out)["status"], "error");
}

#[test]
fn bad_flags_exit_two_with_json() {
    let out = retarda(&["simulate", "--catalog", "linear-delay"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(summary(&out)["exit_code"], 2);
}

#[test]
fn seed_is_required_for_reach() {
    let dir = tempfile::tempdir().unwrap();
    let out = retarda(&[
        "reach",
        "--catalog",
        "integrator-input",
        "--radius",
        "1",
        "--t-final",
        "1",
        "--samples",
        "10",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn reach_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let d = dir.path().join(name);
        let out = retarda(&[
            "reach",
            "--catalog",
            "integrator-input",
            "--radius",
            "1",
            "--t-final",
            "1",
            "--samples",
            "500",
            "--seed",
            "7",
            "--out",
            d.to_str().unwrap(),
        ]);
        assert_eq!(out.status.code(), Some(0));
        (
            out.stdout.clone(),
            std::fs::read(d.join("reach.csv")).unwrap(),
        )
    };
    let (s1, a) = run("a");
    let (_, b) = run("b");
    assert_eq!(a, b);
    let v: Value = serde_json::from_slice(&s1).unwrap();
    let est = v["final_estimates"][0].as_f64().unwrap();
    assert!((1.9..=2.0).contains(&est), "{est}");
}

#[test]
fn thread_cap_does_not_change_results() {
    let dir = tempfile::tempdir().unwrap();
    let mut tables = Vec::new();
    for threads in ["1", "3"] {
        let d = dir.path().join(threads);
        let out = Command::new(env!("CARGO_BIN_EXE_retarda"))
            .env("RETARDA_THREADS", threads)
            .args([
                "reach",
                "--catalog",
                "decay",
                "--radius",
                "0.5,1",
                "--t-final",
                "2",
                "--samples",
                "40",
                "--seed",
                "11",
                "--out",
                d.to_str().unwrap(),
            ])
            .output()
            .unwrap();
        assert_eq!(out.status.code(), Some(0));
        tables.push(std::fs::read(d.join("reach.csv")).unwrap());
    }
    assert_eq!(tables[0], tables[1]);
}

#[test]
fn invalid_thread_count_is_rejected() {
    let out = Command::new(env!("CARGO_BIN_EXE_retarda"))
        .env("RETARDA_THREADS", "many")
        .arg("catalog")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn growth_is_refused_as_non_decaying() {
    let dir = tempfile::tempdir().unwrap();
    let out = retarda(&[
        "stability",
        "--catalog",
        "growth",
        "--seed",
        "1",
        "--reach-samples",
        "10",
        "--fit-samples",
        "8",
        "--check-samples",
        "10",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(3));
    let s = summary(&out);
    assert!(s["error"].as_str().unwrap().contains("non-decaying"));
}

#[test]
fn zero_system_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let out = retarda(&[
        "stability",
        "--catalog",
        "zero",
        "--seed",
        "1",
        "--reach-samples",
        "10",
        "--fit-samples",
        "8",
        "--check-samples",
        "10",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(3));
    assert!(summary(&out)["error"]
        .as_str()
        .unwrap()
        .contains("non-decaying"));
}

#[test]
fn stability_then_verify_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let s_dir = dir.path().join("s");
    let out = retarda(&[
        "stability",
        "--catalog",
        "stable-linear-delay",
        "--seed",
        "5",
        "--horizon",
        "20",
        "--reach-samples",
        "20",
        "--fit-samples",
        "16",
        "--check-samples",
        "40",
        "--out",
        s_dir.to_str().unwrap(),
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let s = summary(&out);
    assert_eq!(s["violations"], 0);
    assert_eq!(s["config"]["seed"], 5);
    let env = s_dir.join("envelope.json");
    let doc: Value = serde_json::from_str(&std::fs::read_to_string(&env).unwrap()).unwrap();
    assert_eq!(doc["schema_version"], 1);

    let v_dir = dir.path().join("v");
    let out = retarda(&[
        "verify",
        "--catalog",
        "stable-linear-delay",
        "--envelope",
        env.to_str().unwrap(),
        "--radius",
        "0.5,2",
        "--horizon",
        "20",
        "--samples",
        "20",
        "--seed",
        "99",
        "--out",
        v_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(summary(&out)["violations"], 0);
}

#[test]
fn reduce_and_lift_agree() {
    let dir = tempfile::tempdir().unwrap();
    let out = retarda(&[
        "reduce",
        "--catalog",
        "two-delay",
        "--t-final",
        "3",
        "--out",
        dir.path().join("r").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert!(summary(&out)["max_deviation"].as_f64().unwrap() < 1e-8);

    let out = retarda(&[
        "lift",
        "--catalog",
        "linear-delay",
        "--z0",
        "1",
        "--v-constant",
        "0.5",
        "--delta",
        "0.8",
        "--out",
        dir.path().join("l").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert!(summary(&out)["round_trip_deviation"].as_f64().unwrap() < 1e-8);

    let out = retarda(&[
        "lift",
        "--catalog",
        "linear-delay",
        "--z0",
        "1",
        "--v-constant",
        "0.5",
        "--delta",
        "1.5",
        "--out",
        dir.path().join("bad").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn fc_probe_finds_blowup() {
    let dir = tempfile::tempdir().unwrap();
    let out = retarda(&[
        "fc-probe",
        "--catalog",
        "blowup",
        "--r-max",
        "2",
        "--t-final",
        "3",
        "--samples",
        "20",
        "--seed",
        "1",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert!(summary(&out)["witnesses"].as_u64().unwrap() > 0);
}

#[test]
fn catalog_lists_and_prints() {
    let out = retarda(&["catalog"]);
    assert_eq!(out.status.code(), Some(0));
    let names = summary(&out)["entries"].as_array().unwrap().len();
    assert!(names >= 10);
    let out = retarda(&["catalog", "linear-delay"]);
    assert_eq!(out.status.code(), Some(0));
    let out = retarda(&["catalog", "nope"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn forbid_escape_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let out = retarda(&[
        "simulate",
        "--catalog",
        "blowup",
        "--constant",
        "2",
        "--t-final",
        "3",
        "--forbid-escape",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(3));
}
