use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn jsq(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_jsq"))
        .args(args)
        .output()
        .expect("spawn jsq")
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn mm1(dir: &Path, lambda: f64, mu: f64) -> PathBuf {
    write(
        dir,
        "mm1.toml",
        &format!("servers = 1\nstreams = 1\nlambda = [{lambda:?}]\nmu = [{mu:?}]\nadmissible = [[1]]\n"),
    )
}

fn pair(dir: &Path) -> PathBuf {
    write(
        dir,
        "pair.toml",
        "servers = 2\nstreams = 1\nlambda = [3.0]\nmu = [1.0, 1.0]\nadmissible = [[1, 2]]\n",
    )
}

fn stdout_json(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

#[test]
fn nominal_velocity_costs_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let topo = mm1(dir.path(), 1.0, 1.0);
    let out = jsq(&["rate", "--topology", topo.to_str().unwrap(), "--x", "1", "--y", "0"]);
    let v = stdout_json(&out);
    assert!(v["L"].as_f64().unwrap().abs() < 1e-7);
    assert_eq!(v["status"], "optimal");
}

#[test]
fn unit_climb_by_every_method() {
    let dir = tempfile::tempdir().unwrap();
    let topo = mm1(dir.path(), 1.0, 1.0);
    let t = topo.to_str().unwrap();
    for method in ["solver", "reduced", "bruteforce"] {
        let v = stdout_json(&jsq(&["rate", "--topology", t, "--x", "1", "--y", "1", "--method", method]));
        let l = v["L"].as_f64().unwrap();
        assert!((l - 0.245122).abs() < 1e-3, "{method}: {l}");
    }
}

#[test]
fn missing_topology_exits_with_input_status() {
    let out = jsq(&["rate", "--topology", "/nonexistent/net.toml", "--x", "1", "--y", "0"]);
    assert_eq!(out.status.code(), Some(2));
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"]["kind"], "topology-not-found");
}

#[test]
fn malformed_topology_exits_with_input_status() {
    let dir = tempfile::tempdir().unwrap();
    let topo = write(dir.path(), "bad.toml", "servers = 1\nstreams = 1\nlambda = [1.0]\nmu = [1.0]\nadmissible = [[2]]\n");
    let out = jsq(&["rate", "--topology", topo.to_str().unwrap(), "--x", "1", "--y", "0"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn verify_refuses_too_few_replications() {
    let dir = tempfile::tempdir().unwrap();
    let topo = mm1(dir.path(), 1.0, 2.0);
    let out = jsq(&[
        "verify",
        "--topology",
        topo.to_str().unwrap(),
        "--event",
        "terminal:k=1,c=1,T=1",
        "--scales",
        "10,20",
        "--reps",
        "100",
    ]);
    assert_eq!(out.status.code(), Some(3));
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"]["kind"], "precondition");
}

#[test]
fn verify_writes_table_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let topo = mm1(dir.path(), 1.0, 2.0);
    let out_path = dir.path().join("v.json");
    let out = jsq(&[
        "verify",
        "--topology",
        topo.to_str().unwrap(),
        "--event",
        "terminal:k=1,c=1,T=1",
        "--scales",
        "4,6",
        "--reps",
        "20000",
        "--out",
        out_path.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: Value = serde_json::from_str(&fs::read_to_string(&out_path).unwrap()).unwrap();
    assert!((report["variational_value"].as_f64().unwrap() - 2f64.ln()).abs() < 1e-3);
    assert_eq!(report["table"].as_array().unwrap().len(), 2);
    let plot = fs::read_to_string(dir.path().join("v.plot.csv")).unwrap();
    assert!(plot.starts_with("inv_n,rate,rate_low,rate_high\n"));
    let manifest: Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("v.json.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["subcommand"], "verify");
    assert_eq!(manifest["outputs"].as_array().unwrap().len(), 3);
}

#[test]
fn simulate_is_deterministic_and_manifested() {
    let dir = tempfile::tempdir().unwrap();
    let topo = pair(dir.path());
    let run = |name: &str| {
        let p = dir.path().join(name);
        let out = jsq(&[
            "simulate",
            "--topology",
            topo.to_str().unwrap(),
            "--n",
            "200",
            "--seed",
            "5",
            "--q0",
            "1,0",
            "--out",
            p.to_str().unwrap(),
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        fs::read(&p).unwrap()
    };
    let (a, b) = (run("a.csv"), run("b.csv"));
    assert_eq!(a, b);
    let text = String::from_utf8(a).unwrap();
    assert!(text.starts_with("t,Q1,Q2,A1,B1,B2,D1,D2,E1_1,E2_1\n"));
    assert!(text.lines().nth(1).unwrap().starts_with("0.0,1.0,0.0,"));
    let manifest: Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("a.csv.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seeds"][0], 5);
    assert_eq!(manifest["outputs"][0]["sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn config_file_supplies_flags() {
    let dir = tempfile::tempdir().unwrap();
    let topo = pair(dir.path());
    let cfg = write(
        dir.path(),
        "run.toml",
        &format!("[simulate]\ntopology = {:?}\nn = 50\nseed = 9\ngrid = 0.25\n", topo.to_str().unwrap()),
    );
    let out = jsq(&["--config", cfg.to_str().unwrap(), "simulate"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(String::from_utf8(out.stdout).unwrap().lines().count(), 1 + 5);
}

#[test]
fn fluid_and_action_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let topo = pair(dir.path());
    let t = topo.to_str().unwrap();
    let fluid_csv = dir.path().join("fluid.csv");
    let out = jsq(&[
        "fluid",
        "--topology",
        t,
        "--q0",
        "1,0",
        "--h",
        "0.0003333333333333333",
        "--out",
        fluid_csv.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(&fluid_csv).unwrap();
    let last: Vec<f64> = text.lines().last().unwrap().split(',').map(|c| c.parse().unwrap()).collect();
    assert!((last[0] - 1.0).abs() < 1e-12);
    assert!((last[1] - 1.0).abs() < 1e-9 && (last[2] - 1.0).abs() < 1e-9);

    let path_csv = write(
        dir.path(),
        "path.csv",
        "t,q1,q2\n0,1,0\n0.3333333333333333,0.6666666666666667,0.6666666666666666\n1,1,1\n",
    );
    let v = stdout_json(&jsq(&["action", "--topology", t, "--path", path_csv.to_str().unwrap()]));
    assert!(v["total"].as_f64().unwrap() < 1e-6);
    assert_eq!(v["pieces"].as_array().unwrap().len(), 2);
}

#[test]
fn optimize_finds_log_two() {
    let dir = tempfile::tempdir().unwrap();
    let topo = mm1(dir.path(), 1.0, 2.0);
    let v = stdout_json(&jsq(&[
        "optimize",
        "--topology",
        topo.to_str().unwrap(),
        "--event",
        "terminal:k=1,c=1,T=1",
        "--segments",
        "2",
    ]));
    assert!((v["value"].as_f64().unwrap() - 2f64.ln()).abs() < 1e-4);
}

#[test]
fn acceptance_filter_and_listing() {
    let out = jsq(&["acceptance", "--list"]);
    assert!(out.status.success());
    assert_eq!(String::from_utf8(out.stdout).unwrap().lines().count(), 10);

    let out = jsq(&["acceptance", "--only", "cost,2"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 2);
    assert!(text.lines().all(|l| l.starts_with("[PASS]")));

    assert_eq!(jsq(&["acceptance", "--only", "nothing"]).status.code(), Some(1));
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let out = jsq(&["rate", "--bogus"]);
    assert_eq!(out.status.code(), Some(2));
}
