//! The `rd` binary: outputs and exit codes.

use std::path::Path;
use std::process::{Command, Output};

fn rd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rd"))
        .args(args)
        .output()
        .expect("rd binary runs")
}

fn fixture(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
        .display()
        .to_string()
}

#[test]
fn turing_prints_the_band() {
    let out = rd(&[
        "turing", "--a", "0.1", "--b", "0.9", "--d", "10", "--gamma", "29",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let json: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!((json["k2_minus"].as_f64().unwrap() - 5.8).abs() < 1e-9);
    assert!((json["k2_plus"].as_f64().unwrap() - 14.5).abs() < 1e-9);
    assert_eq!(json["diffusion_driven_unstable"], true);
}

#[test]
fn missing_config_exits_one_and_names_the_file() {
    let out = rd(&["simulate", "--config", "missing.cfg"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.cfg"));
}

#[test]
fn invalid_input_exits_one() {
    assert_eq!(
        rd(&["simulate", "--mesh", "square:0"]).status.code(),
        Some(1)
    );
    assert_eq!(rd(&["simulate", "--tau", "-1"]).status.code(), Some(1));
    assert_eq!(
        rd(&["simulate", "--set", "no_such_key=1"]).status.code(),
        Some(1)
    );
    assert_eq!(rd(&["eoc", "--scheme", "rk4"]).status.code(), Some(1));
    assert_eq!(rd(&["frobnicate"]).status.code(), Some(1));
}

#[test]
fn failed_run_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = rd(&[
        "simulate",
        "--mesh",
        "square:8",
        "--t-end",
        "0.1",
        "--set",
        "linear_max_iters=1",
        "--set",
        "linear_rel_tol=1e-14",
        "-o",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    let summary: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(summary["stopped_by"], "failure");
}

#[test]
fn simulate_writes_its_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = rd(&[
        "simulate",
        "--mesh",
        "square:6",
        "--t-end",
        "0.05",
        "--set",
        "timing=off",
        "-o",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let trace = std::fs::read_to_string(dir.path().join("trace.csv")).unwrap();
    assert_eq!(
        trace.lines().next(),
        Some("step,t,du_rate,dv_rate,nonlin_iters,inner_iters,wall_ms")
    );
    assert_eq!(trace.lines().count(), 6);
    assert!(dir.path().join("summary.json").exists());
    assert!(dir.path().join("final.vtk").exists());
}

#[test]
fn eoc_writes_a_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = rd(&[
        "eoc",
        "--scheme",
        "cn",
        "--levels",
        "1..3",
        "-o",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let csv = std::fs::read_to_string(dir.path().join("eoc.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("level,tau,n,E_u,E_v,alpha_u,alpha_v"));
    assert_eq!(lines.count(), 3);
}

#[test]
fn mesh_gen_and_check_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cube.mesh");
    let out = rd(&[
        "mesh",
        "gen",
        "--kind",
        "cube",
        "--n",
        "2",
        "-o",
        path.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let out = rd(&["mesh", "check", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let json: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(json["n_vertices"], 27);
    assert_eq!(json["n_cells"], 48);
    assert!((json["volume"].as_f64().unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn mesh_check_reads_the_ball_fixture() {
    let out = rd(&["mesh", "check", &fixture("ball.mesh")]);
    assert_eq!(out.status.code(), Some(0));
    let json: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(json["dim"], 3);
    assert_eq!(json["n_cells"], 3072);
}

#[test]
fn mesh_check_reports_parse_errors() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.mesh");
    std::fs::write(&path, "2 3 1\n0 0\n1 0\n0 1\n0 1\n").unwrap();
    let out = rd(&["mesh", "check", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 5"));
}
