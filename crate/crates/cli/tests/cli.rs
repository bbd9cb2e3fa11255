use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_hrsi-causal"))
}

fn run(args: &[&str], dir: &Path) -> Output {
    bin().args(args).current_dir(dir).output().unwrap()
}

fn simulate(dir: &Path, name: &str, secs: &str, seed: &str) {
    let o = run(&["simulate", "--duration", secs, "--seed", seed, "--out", name], dir);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn simulate_writes_header_and_rows() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path(), "s.csv", "30", "2");
    let text = fs::read_to_string(dir.path().join("s.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("timestamp,v,d_g,r"));
    assert_eq!(lines.count(), 300);
}

#[test]
fn discover_then_shd_against_itself() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path(), "s.csv", "150", "1");
    let o = run(
        &["discover", "--input", "s.csv", "--method", "pcmci", "--citest", "parcorr", "--out", "g.json", "--dot", "g.dot"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let dot = fs::read_to_string(dir.path().join("g.dot")).unwrap();
    assert!(dot.starts_with("digraph"));
    let o = run(&["shd", "--a", "g.json", "--b", "g.json"], dir.path());
    assert!(o.status.success());
    assert_eq!(String::from_utf8_lossy(&o.stdout).trim(), "0");
}

#[test]
fn bad_arguments_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path(), "s.csv", "30", "0");
    let o = run(
        &["discover", "--input", "s.csv", "--method", "pcmci", "--citest", "parcorr", "--alpha", "0", "--out", "g.json"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(1));
    let o = run(&["discover", "--input", "s.csv", "--method", "nope", "--citest", "parcorr", "--out", "g.json"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    let o = run(&["simulate", "--duration", "10", "--rate", "3", "--out", "x.csv"], dir.path());
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn missing_input_is_not_an_argument_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(
        &["discover", "--input", "absent.csv", "--method", "pcmci", "--citest", "parcorr", "--out", "g.json"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(!dir.path().join("g.json").exists());
}

#[test]
fn help_exits_zero() {
    let o = bin().arg("--help").output().unwrap();
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stdout).contains("discover"));
}

#[test]
fn sweep_writes_rows_and_aggregate() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path(), "s.csv", "150", "4");
    let o = run(
        &["sweep", "horizon", "--input", "s.csv", "--method", "pcmci", "--citest", "parcorr", "--seeds", "0-1", "--out", "h.csv"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = fs::read_to_string(dir.path().join("h.csv")).unwrap();
    assert_eq!(rows.lines().next(), Some("param,seed,shd,runtime_s"));
    assert!(rows.lines().count() > 2);
    let agg = fs::read_to_string(dir.path().join("h_agg.csv")).unwrap();
    assert_eq!(agg.lines().next(), Some("param,mean_shd,std_shd,mean_runtime_s,std_runtime_s"));
}

#[test]
fn pipeline_prints_summary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"
rate_hz = 10.0
batch_len = 1500
pool_dir = "pool"

[source]
kind = "simulate"
duration_s = 150.0

[discovery]
method = "pcmci"
citest = { kind = "parcorr" }
"#;
    fs::write(dir.path().join("p.toml"), cfg).unwrap();
    let o = run(&["pipeline", "--config", "p.toml"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["batches_processed"], 1);
    assert!(dir.path().join("pool/batch_00000.graph").exists());
}
