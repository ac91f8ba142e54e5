// Copyright 2026 The permafrost-trust Authors.
// SPDX-License-Identifier: Apache-2.0

use std::fs;
use std::process::{Command, Output};

const SIM: &str = env!("CARGO_BIN_EXE_sim");

fn sim(args: &[&str]) -> Output {
    Command::new(SIM).args(args).output().expect("spawn sim")
}

#[test]
fn run_prints_str() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("a.conf");
    fs::write(&cfg, "# short run\nsim.duration_days = 2\nmode.social = classical\n").unwrap();
    let out = sim(&["run", "--config", cfg.to_str().unwrap(), "--seed", "4"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let str_line = text.lines().find(|l| l.starts_with("str")).expect("str line");
    let v: f64 = str_line.split_whitespace().nth(1).unwrap().parse().unwrap();
    assert!((0.0..=1.0).contains(&v));
    assert!(text.contains("transactions    1536"));
}

#[test]
fn invalid_config_names_every_bad_key() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.conf");
    fs::write(&cfg, "fault.pb0 = 1.5\nlora.buffer_slots = 0\n").unwrap();
    let out = sim(&["run", "--config", cfg.to_str().unwrap()]);
    assert!(!out.status.success());
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("fault.pb0"), "{err}");
    assert!(err.contains("lora.buffer_slots"), "{err}");
}

#[test]
fn sweep_writes_both_csvs_and_report_reads_them() {
    let dir = tempfile::tempdir().unwrap();
    let base = dir.path().join("base.conf");
    fs::write(&base, "fault.degraded_fraction = 0\n").unwrap();
    let raw = dir.path().join("raw.csv");
    let mesh = dir.path().join("mesh.csv");
    let out = sim(&[
        "sweep",
        "--grid",
        "usecase",
        "--modes",
        "standard",
        "--reps",
        "2",
        "--config",
        base.to_str().unwrap(),
        "--out-raw",
        raw.to_str().unwrap(),
        "--out-mesh",
        mesh.to_str().unwrap(),
        "--jobs",
        "2",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let raw_text = fs::read_to_string(&raw).unwrap();
    let mut lines = raw_text.lines();
    assert_eq!(lines.next(), Some("mode,pb0,spots,redundancy,rep,seed,str"));
    assert_eq!(lines.count(), 60);
    let first = raw_text.lines().nth(1).unwrap();
    assert!(first.starts_with("standard,0.1,32,1,0,1,"), "{first}");

    let mesh_text = fs::read_to_string(&mesh).unwrap();
    let mut lines = mesh_text.lines();
    assert_eq!(lines.next(), Some("mode,pb0,spots,redundancy,n_reps,str_mean,str_ci99_half"));
    assert_eq!(lines.count(), 30);

    let out = sim(&["report", "--mesh", mesh.to_str().unwrap(), "--table"]);
    assert!(out.status.success());
    let table = String::from_utf8(out.stdout).unwrap();
    assert!(table.contains("Standard"), "{table}");
}

#[test]
fn unknown_mode_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out = sim(&[
        "sweep",
        "--grid",
        "usecase",
        "--modes",
        "telepathy",
        "--out-raw",
        dir.path().join("r.csv").to_str().unwrap(),
        "--out-mesh",
        dir.path().join("m.csv").to_str().unwrap(),
    ]);
    assert!(!out.status.success());
    assert!(String::from_utf8(out.stderr).unwrap().contains("telepathy"));
}

#[test]
fn report_on_missing_file_fails() {
    let out = sim(&["report", "--mesh", "/nonexistent/mesh.csv"]);
    assert!(!out.status.success());
    assert!(String::from_utf8(out.stderr).unwrap().contains("/nonexistent/mesh.csv"));
}
