use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use aqmlab::metrics::TIMESERIES_HEADER;
use aqmlab::som::load_map;

fn aqmlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_aqmlab"))
        .args(args)
        .env_remove("AQMLAB_CONFIG")
        .output()
        .unwrap()
}

fn short_map(dir: &Path) -> String {
    let map = dir.join("map.ksom");
    let out = aqmlab(&["train", "--duration", "20", "--out", map.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    map.to_str().unwrap().to_string()
}

#[test]
fn train_writes_map_and_log() {
    let dir = tempfile::tempdir().unwrap();
    let map = short_map(dir.path());
    let loaded = load_map(Path::new(&map)).unwrap();
    assert_eq!(loaded.neurons().len(), 625);
    let log = fs::read_to_string(dir.path().join("map.train.csv")).unwrap();
    assert!(log.starts_with("time_s,avg_queue_pkts,applied_max_p,teacher_max_p\n"));
    assert!(log.lines().count() > 100);
}

#[test]
fn compare_writes_five_series_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let map = short_map(dir.path());
    let out = dir.path().join("cmp");
    let o = aqmlab(&[
        "compare", "--scenario", "scenario2", "--duration", "5", "--map-file", &map, "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for aqm in ["red", "fred", "ared", "pi", "kred"] {
        let csv = fs::read_to_string(out.join(format!("scenario2_{aqm}.csv"))).unwrap();
        assert_eq!(csv.lines().next(), Some(TIMESERIES_HEADER));
        assert_eq!(csv.lines().count(), 52);
    }
    let summary = fs::read_to_string(out.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 6);
}

#[test]
fn run_kred_without_map_fails() {
    let dir = tempfile::tempdir().unwrap();
    let o = aqmlab(&["run", "--aqm", "kred", "--duration", "1", "--out", dir.path().to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("--map-file"));
}

#[test]
fn unknown_flag_and_unknown_aqm_fail() {
    assert_eq!(aqmlab(&["run", "--bogus"]).status.code(), Some(2));
    assert_eq!(aqmlab(&["run", "--aqm", "codel", "--out", "x"]).status.code(), Some(2));
}

#[test]
fn unwritable_output_fails() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    fs::write(&blocker, "").unwrap();
    let out = blocker.join("sub");
    let o = aqmlab(&["run", "--aqm", "red", "--duration", "1", "--out", out.to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error:"));
}

#[test]
fn config_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.toml");
    fs::write(&cfg, "[scenario]\nduration = 5.0\n").unwrap();
    let out = dir.path().join("out");
    let o = Command::new(env!("CARGO_BIN_EXE_aqmlab"))
        .args(["run", "--aqm", "droptail", "--out", out.to_str().unwrap()])
        .env("AQMLAB_CONFIG", &cfg)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(out.join("scenario1_droptail.csv")).unwrap();
    assert_eq!(csv.lines().count(), 52);

    // the flag wins over the file
    let o = Command::new(env!("CARGO_BIN_EXE_aqmlab"))
        .args(["run", "--aqm", "droptail", "--duration", "2", "--out", out.to_str().unwrap()])
        .env("AQMLAB_CONFIG", &cfg)
        .output()
        .unwrap();
    assert!(o.status.success());
    let csv = fs::read_to_string(out.join("scenario1_droptail.csv")).unwrap();
    assert_eq!(csv.lines().count(), 22);
}

#[test]
fn bad_config_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.toml");
    fs::write(&cfg, "[scenario]\nduration = -1.0\n").unwrap();
    let o = aqmlab(&["run", "--aqm", "red", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert!(!o.status.success());
}
