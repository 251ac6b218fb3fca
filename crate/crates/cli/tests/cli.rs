use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn cmm_sim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cmm-sim"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = cmm_sim(args);
    assert!(
        out.status.success(),
        "cmm-sim {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn run_args<'a>(out: &'a str, extra: &[&'a str]) -> Vec<&'a str> {
    let mut v = vec![
        "run",
        "--scenario",
        "four_vehicle",
        "--steps",
        "30",
        "--trials",
        "2",
        "--seed",
        "5",
        "--particles",
        "200",
        "--out",
        out,
    ];
    v.extend_from_slice(extra);
    v
}

#[test]
fn run_is_byte_identical_when_repeated() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for d in [&a, &b] {
        ok(&run_args(d.to_str().unwrap(), &["--policy", "random:3", "--fusion-log"]));
    }
    for name in [
        "series_trial0.csv",
        "series_trial1.csv",
        "fusion_log_trial0.txt",
        "summary.txt",
    ] {
        let x = fs::read(a.join(name)).unwrap();
        let y = fs::read(b.join(name)).unwrap();
        assert!(!x.is_empty());
        assert_eq!(x, y, "{name} differs");
    }
    let series = fs::read_to_string(a.join("series_trial0.csv")).unwrap();
    assert!(series.starts_with("t,rmse,variance,mean_bias_sq,node0,node1,node2,node3\n"));
    assert_eq!(series.lines().count(), 31);
    let log = fs::read_to_string(a.join("fusion_log_trial0.txt")).unwrap();
    assert!(log.starts_with("t node source count\n"));
}

#[test]
fn seed_changes_the_output() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    ok(&run_args(a.to_str().unwrap(), &[]));
    let b = dir.path().join("b");
    let mut args = run_args(b.to_str().unwrap(), &[]);
    args[8] = "6";
    ok(&args);
    assert_ne!(
        fs::read(a.join("series_trial0.csv")).unwrap(),
        fs::read(b.join("series_trial0.csv")).unwrap()
    );
}

#[test]
fn centralized_and_distributed_qp_modes_run() {
    let dir = tempfile::tempdir().unwrap();
    let c = dir.path().join("c");
    ok(&run_args(c.to_str().unwrap(), &["--mode", "centralized", "--policy", "identity"]));
    let summary = fs::read_to_string(c.join("summary.txt")).unwrap();
    assert!(summary.contains("mode = centralized"));
    let d = dir.path().join("d");
    ok(&run_args(d.to_str().unwrap(), &["--qp-distributed", "4", "--qp-floor", "0.1"]));
    let e = dir.path().join("e");
    ok(&run_args(e.to_str().unwrap(), &["--qp-distributed"]));
}

#[test]
fn scenario_and_map_files() {
    let dir = tempfile::tempdir().unwrap();
    let map = dir.path().join("cross.map");
    fs::write(&map, "-500 0 500 0 2\n0 -500 0 500 2\n").unwrap();
    let scn = dir.path().join("pair.scn");
    fs::write(
        &scn,
        format!(
            "name: pair\nmap: {}\nradius: 3000\nposes:\n-50 0 0\n0 80 90\n",
            map.display()
        ),
    )
    .unwrap();
    let out = dir.path().join("out");
    let stdout = ok(&[
        "run",
        "--scenario",
        scn.to_str().unwrap(),
        "--steps",
        "10",
        "--trials",
        "1",
        "--particles",
        "100",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(stdout.starts_with("pair decentralized variance_min"));
    let series = fs::read_to_string(out.join("series_trial0.csv")).unwrap();
    assert!(series.starts_with("t,rmse,variance,mean_bias_sq,node0,node1\n"));

    // Swapping in a different map keeps the vehicles.
    let out2 = dir.path().join("out2");
    ok(&[
        "run",
        "--scenario",
        "four_vehicle",
        "--map",
        map.to_str().unwrap(),
        "--steps",
        "5",
        "--trials",
        "1",
        "--particles",
        "100",
        "--out",
        out2.to_str().unwrap(),
    ]);
    assert!(Path::new(&out2.join("series_trial0.csv")).exists());
}

#[test]
fn analyze_prints_rate_diameter_and_degrees() {
    let stdout = ok(&["analyze", "--net", "four_vehicle", "--weights", "constant:0.5"]);
    assert!(stdout.contains("convergence_rate 0.7071"));
    assert!(stdout.contains("diameter 2"));
    assert!(stdout.contains("degree_histogram 2:4"));
    let stdout = ok(&["analyze", "--net", "grid_city_50"]);
    assert!(stdout.contains("convergence_rate 1 (disconnected)"));
    assert!(stdout.contains("nodes 24"));
}

#[test]
fn table1_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    ok(&[
        "table1",
        "--out",
        dir.path().to_str().unwrap(),
        "--steps",
        "10",
        "--trials",
        "1",
        "--particles",
        "100",
    ]);
    let csv = fs::read_to_string(dir.path().join("table1.csv")).unwrap();
    assert!(csv.starts_with("policy,rmse,sqrt_variance\nvariance_min,"));
    assert_eq!(csv.lines().count(), 11);
}

#[test]
fn bad_input_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    for args in [
        vec!["run", "--scenario", "nowhere", "--out", out],
        vec!["run", "--scenario", "four_vehicle", "--policy", "greedy", "--out", out],
        vec!["run", "--scenario", "four_vehicle", "--policy", "constant:1.5", "--out", out],
        vec!["run", "--scenario", "four_vehicle", "--steps", "0", "--out", out],
        vec!["analyze", "--net", "four_vehicle", "--weights", "variance_min"],
    ] {
        let o = cmm_sim(&args);
        assert!(!o.status.success(), "{args:?} should fail");
        assert!(!o.stderr.is_empty());
    }
}
