use std::path::Path;
use std::process::{Command, Output};

use fbstab::report::parse_dump;
use fbstab::scenario::{default_config, Config, Scenario, CONFIG_SCHEMA};

fn fbstab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fbstab")).args(args).env_remove("FBSTAB_REPORT_DIR").output().unwrap()
}

fn small_config(dir: &Path, scenarios: Vec<Scenario>) -> String {
    let config = Config { scenarios, random_graphs: None, ..default_config(0) };
    let path = dir.join("config.json");
    std::fs::write(&path, config.to_json().unwrap()).unwrap();
    path.to_str().unwrap().to_string()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn verify_passes_on_one_scenario_and_writes_text() {
    let o = fbstab(&["verify", "--scenario", "spherical-cap-b4-disk", "--format", "text"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    assert!(text.lines().any(|l| l.starts_with("PASS spherical-cap-b4-disk certificate/traced-total")));
    assert!(!text.contains("FAIL"));
}

#[test]
fn verify_fails_with_exit_one_under_an_impossible_tolerance() {
    let dir = tempfile::tempdir().unwrap();
    let mut s = Scenario::from_shorthand("random-graph n=4 k=2 seed=3 degree=3").unwrap();
    s.name = "graph".into();
    let config = small_config(dir.path(), vec![s]);
    let o = fbstab(&["verify", "--config", &config, "--suite", "traces", "--tol", "1e-300", "--format", "csv"]);
    assert_eq!(o.status.code(), Some(1));
    let mut reader = csv::Reader::from_reader(o.stdout.as_slice());
    let headers = reader.headers().unwrap().clone();
    let pass = headers.iter().position(|h| h == "pass").unwrap();
    let point = headers.iter().position(|h| h == "point").unwrap();
    let failing: Vec<csv::StringRecord> =
        reader.records().map(Result::unwrap).filter(|r| &r[pass] == "false").collect();
    assert!(!failing.is_empty());
    // every failure names the offending sample
    assert!(failing.iter().all(|r| !r[point].is_empty()));
}

#[test]
fn configuration_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(fbstab(&["verify", "--suite", "nonsense"]).status.code(), Some(2));
    assert_eq!(fbstab(&["verify", "--format", "yaml"]).status.code(), Some(2));
    assert_eq!(fbstab(&["verify", "--config", "/nonexistent/config.json"]).status.code(), Some(2));

    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"schema": "something-else/1"}"#).unwrap();
    assert_eq!(fbstab(&["verify", "--config", bad.to_str().unwrap()]).status.code(), Some(2));

    std::fs::write(&bad, format!(r#"{{"schema": "{CONFIG_SCHEMA}", "unknown_key": 1}}"#)).unwrap();
    assert_eq!(fbstab(&["verify", "--config", bad.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn certificate_mode_rejects_hypersurfaces_and_curves() {
    for shorthand in ["ball-disk n=3 k=2", "ball-disk n=4 k=1"] {
        let o = fbstab(&["stability", "--scenario", shorthand]);
        assert_eq!(o.status.code(), Some(2));
        let err = String::from_utf8(o.stderr).unwrap();
        assert!(err.contains("2 <= k <= min(n-2, n-p)"), "{err}");
    }
}

#[test]
fn stability_reports_the_certified_verdict() {
    let o = fbstab(&["stability", "--scenario", "ball-disk n=4 k=2 u=radial-spherical"]);
    assert_eq!(o.status.code(), Some(0));
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(report["verdict"], "unstable-certified");
    let total = report["traced_total"].as_f64().unwrap();
    assert!((total + 8.0 * std::f64::consts::PI).abs() < 1e-4);
}

#[test]
fn convexity_of_the_unit_sphere() {
    let o = fbstab(&["convexity", "--domain", "ball(1)", "--n", "4", "--p", "3", "--samples", "64"]);
    assert_eq!(o.status.code(), Some(0));
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!((report["margin_g"].as_f64().unwrap() - 3.0).abs() < 1e-9);
    assert_eq!(fbstab(&["convexity", "--domain", "torus(1)", "--n", "3"]).status.code(), Some(2));
}

#[test]
fn dump_round_trips_and_honours_the_report_directory_variable() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_fbstab"))
        .args(["dump", "--scenario", "spherical-cap-b4-disk", "--format", "csv"])
        .env("FBSTAB_REPORT_DIR", dir.path())
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    let bytes = std::fs::read(dir.path().join("spherical-cap-b4-disk.csv")).unwrap();
    let (n, rows) = parse_dump(&bytes).unwrap();
    assert_eq!(n, 4);
    assert!(rows.iter().any(|r| r.values[1].is_some_and(|v| (v + 4.0).abs() < 1e-8)));
}

#[test]
fn flow_verb_reports_convergence_of_the_odd_start() {
    let o = fbstab(&["flow", "--scenario", "flow-odd-disk-b3"]);
    assert_eq!(o.status.code(), Some(0));
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(report["outcome"]["status"], "converged");
}
