// Copyright 2026 The permafrost-trust Authors.
// SPDX-License-Identifier: Apache-2.0

//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! fails if any criterion fails.
//!
//! The simulation criteria drive the `sim` binary with the desk profile
//! (40-day runs, 10 repetitions); the rest exercise the library directly.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::process::Command;

use pftrust::consensus::{
    byzantine_tolerance, fqc_instance, fqc_message_count, pbft_instance, pbft_message_count, ConsensusParams,
    ConsensusResult,
};
use pftrust::engine::{RandomStream, SimTime, StreamId, StreamPurpose};
use pftrust::metrics::{self, StrReport};
use pftrust::netmodel::{LinkParams, SharedMedium};
use pftrust::quantum::{superadditive_success, superposed_success, QuantumLink, QuantumParams};
use pftrust::telemetry::Mode;

const SIM: &str = env!("CARGO_BIN_EXE_sim");

/// Use-case maxima the calibration is held against, in mode order.
const REFERENCE_MAX: [f64; 9] = [0.610, 0.659, 0.603, 0.673, 0.611, 0.675, 0.833, 0.853, 0.852];
const REFERENCE_BAND: f64 = 0.10;
const MONOTONE_SLACK: f64 = 0.02;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn say(line: &str) {
    // Written straight to the process stdout so it survives test capture.
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{line}");
    let _ = out.flush();
}

fn jobs() -> String {
    std::thread::available_parallelism().map_or(1, |n| n.get()).to_string()
}

fn sim(args: &[&str]) -> String {
    let out = Command::new(SIM).args(args).output().expect("spawn sim");
    assert!(
        out.status.success(),
        "sim {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).expect("utf-8 output")
}

fn sweep(dir: &Path, tag: &str, grid: &str, modes: &str, extra: &[&str]) -> (Vec<u8>, Vec<u8>, Vec<StrReport>) {
    let raw = dir.join(format!("{tag}-raw.csv"));
    let mesh = dir.join(format!("{tag}-mesh.csv"));
    let mut args = vec![
        "sweep",
        "--grid",
        grid,
        "--modes",
        modes,
        "--profile",
        "desk",
        "--out-raw",
        raw.to_str().unwrap(),
        "--out-mesh",
        mesh.to_str().unwrap(),
    ];
    args.extend_from_slice(extra);
    sim(&args);
    let reports = metrics::read_mesh(&mesh).expect("readable mesh");
    (fs::read(&raw).unwrap(), fs::read(&mesh).unwrap(), reports)
}

fn maxima(reports: &[StrReport]) -> HashMap<Mode, f64> {
    metrics::summarize(reports).into_iter().map(|s| (s.mode, s.max)).collect()
}

fn criterion_1() -> Verdict {
    let pbft: Vec<usize> = [4, 5, 10].iter().map(|&n| pbft_message_count(n)).collect();
    let fqc_linear = (1..=20).all(|n| fqc_message_count(n, 4) == 4 * n);
    let f: Vec<usize> = [4, 5, 10].iter().map(|&n| byzantine_tolerance(n)).collect();
    let ok = pbft == [24, 40, 180] && fqc_linear && f == [1, 1, 3];
    verdict(ok, format!("pbft(4,5,10)={pbft:?} fqc=4n:{fqc_linear} f(4,5,10)={f:?}"))
}

fn criterion_2() -> Verdict {
    const TRUTH: f64 = 20.0;
    let mut rng = RandomStream::new(2024, StreamId::new(StreamPurpose::Scratch, 2));
    let mut violations = 0;
    let mut decided = 0;
    let trials = 1000;
    for trial in 0..trials {
        let n = 1 + (rng.uniform() * 10.0) as usize;
        let f = byzantine_tolerance(n);
        let byz = (rng.uniform() * (f + 1) as f64) as usize;
        let mut members: Vec<usize> = (0..n).collect();
        // Partial Fisher-Yates to pick the byzantine members.
        for i in 0..byz {
            let j = i + (rng.uniform() * (n - i) as f64) as usize;
            members.swap(i, j.min(n - 1));
        }
        let mut values = vec![TRUTH; n];
        for (k, &m) in members[..byz].iter().enumerate() {
            values[m] = TRUTH + 6.0 + k as f64 + rng.uniform();
        }
        let params = ConsensusParams::new(n, 600.0, 2, 512);
        let mut medium = SharedMedium::new(LinkParams::new(5000.0, 100_000, 0.0).unwrap());
        let mut s = RandomStream::new(trial, StreamId::new(StreamPurpose::Scratch, 3));
        let out = if trial % 2 == 0 {
            pbft_instance(&values, params, &mut medium, SimTime::ZERO, &mut s)
        } else {
            let qp = QuantumParams {
                p_channel: 1.0,
                ..Default::default()
            };
            let mut q = QuantumLink::new(qp);
            fqc_instance(&values, params, 4, &mut q, &mut medium, SimTime::ZERO, &mut s)
        };
        match out.result {
            ConsensusResult::Decided(v) if v == TRUTH => decided += 1,
            ConsensusResult::Decided(_) => violations += 1,
            _ => {}
        }
    }
    verdict(
        violations == 0 && decided == trials,
        format!("{trials} trials, {decided} decided on the honest value, {violations} violations"),
    )
}

fn criterion_3() -> Verdict {
    let mut rng = RandomStream::new(7, StreamId::new(StreamPurpose::Scratch, 4));
    let mut bad = 0;
    for _ in 0..10_000 {
        let (p1, p2) = (rng.uniform(), rng.uniform());
        let alpha = 1.0 + 3.0 * rng.uniform();
        let beta = rng.uniform();
        let d = 0.2 * rng.uniform();
        let sa = superadditive_success(&[p1, p2], alpha).unwrap();
        let indep = 1.0 - (1.0 - p1) * (1.0 - p2);
        let sp = superposed_success(p1, p2, beta);
        let p1_up = (p1 + d).min(1.0);
        let checks = [
            sa >= indep - 1e-12,
            sp >= p1.max(p2) - 1e-12 && sp <= indep + 1e-12,
            superadditive_success(&[p1_up, p2], alpha).unwrap() >= sa - 1e-12,
            superadditive_success(&[p1, p2], alpha + d).unwrap() >= sa - 1e-12,
            superposed_success(p1_up, p2, beta) >= sp - 1e-12,
            superposed_success(p1, p2, (beta + d).min(1.0)) >= sp - 1e-12,
        ];
        bad += checks.iter().filter(|&&c| !c).count();
    }

    // Monte Carlo of the boosted Bernoulli models against the closed forms.
    let n = 200_000;
    let (ps, alpha) = ([0.3, 0.45], 2.0);
    let mut hits = 0;
    for _ in 0..n {
        let mut any = false;
        for _ in 0..alpha as usize {
            for p in ps {
                any |= rng.bernoulli(p);
            }
        }
        hits += any as u32;
    }
    let closed_sa = superadditive_success(&ps, alpha).unwrap();
    let z_sa = z_score(hits, n, closed_sa);

    let (p1, p2, beta) = (0.5, 0.65, 0.3);
    let mut hits = 0;
    for _ in 0..n {
        let best = rng.bernoulli(p2);
        let rescue = rng.bernoulli(beta) && rng.bernoulli(p1);
        hits += (best || rescue) as u32;
    }
    let z_sp = z_score(hits, n, superposed_success(p1, p2, beta));

    verdict(
        bad == 0 && z_sa.abs() < 3.0 && z_sp.abs() < 3.0,
        format!("10000 draws, {bad} bound violations; MC z-scores {z_sa:.2}, {z_sp:.2}"),
    )
}

fn z_score(hits: u32, n: u32, p: f64) -> f64 {
    (hits as f64 / n as f64 - p) / (p * (1.0 - p) / n as f64).sqrt()
}

fn criterion_4(dir: &Path) -> Verdict {
    let mut failures = Vec::new();
    for m in Mode::ALL {
        let cfg = dir.join(format!("ideal-{}.conf", m.label()));
        let (social, consensus) = (m.social.as_str(), m.consensus.as_str());
        fs::write(
            &cfg,
            format!(
                "sim.duration_days = 40\ntopology.spots = 32\ntopology.redundancy = 3\n\
                 mode.social = {social}\nmode.consensus = {consensus}\n\
                 fault.pb0 = 0\nfault.degraded_fraction = 0\n\
                 lora.base_loss = 0\nnvis.base_loss = 0\n\
                 nvis.availability_min = 1\nnvis.availability_max = 1\nnvis.fade_fraction = 0\n\
                 quantum.p_channel = 1\n"
            ),
        )
        .unwrap();
        let out = sim(&["run", "--config", cfg.to_str().unwrap()]);
        let str_line = out.lines().find(|l| l.starts_with("str")).unwrap_or("");
        let value: f64 = str_line.split_whitespace().nth(1).and_then(|v| v.parse().ok()).unwrap_or(f64::NAN);
        if value != 1.0 {
            failures.push(format!("{}={value}", m.label()));
        }
    }
    verdict(
        failures.is_empty(),
        if failures.is_empty() {
            "STR = 1 in all nine modes".to_string()
        } else {
            failures.join(", ")
        },
    )
}

fn criterion_5(usecase: &[StrReport]) -> Verdict {
    let mut by_point: HashMap<(Mode, u32, u32), Vec<(f64, f64)>> = HashMap::new();
    for r in usecase {
        by_point.entry((r.mode, r.spots, r.redundancy)).or_default().push((r.pb0, r.str_mean));
    }
    let mut worst = 0.0f64;
    let mut where_ = String::new();
    for ((m, s, n), mut pts) in by_point {
        // Highest fault probability first: STR should not decrease along the list.
        pts.sort_by(|a, b| b.0.total_cmp(&a.0));
        for w in pts.windows(2) {
            let inversion = w[0].1 - w[1].1;
            if inversion > worst {
                worst = inversion;
                where_ = format!(" at {} {s}x{n} pb0 {}->{}", m.label(), w[0].0, w[1].0);
            }
        }
    }
    verdict(
        worst <= MONOTONE_SLACK,
        format!("largest inversion {worst:.4} (allowed {MONOTONE_SLACK}){where_}"),
    )
}

fn criterion_6(extended: &[StrReport]) -> Verdict {
    let consensus = Mode::ALL[2];
    let mut worst_mid = 0.0f64;
    let mut worst_collapse = 0.0f64;
    for r in extended.iter().filter(|r| r.mode == consensus && r.redundancy >= 5) {
        worst_mid = worst_mid.max(r.str_mean);
        let collapsed = (r.spots == 32 && r.redundancy > 7) || (r.spots == 64 && r.redundancy > 5);
        if collapsed {
            worst_collapse = worst_collapse.max(r.str_mean);
        }
    }
    verdict(
        worst_mid < 0.6 && worst_collapse < 0.05,
        format!("max STR for N>=5: {worst_mid:.4} (<0.6); in collapse region: {worst_collapse:.4} (<0.05)"),
    )
}

fn criterion_7(extended: &[StrReport]) -> Verdict {
    let qc = Mode::ALL[4];
    let floor = extended
        .iter()
        .filter(|r| r.mode == qc && r.pb0 <= 0.01 + 1e-12)
        .map(|r| r.str_mean)
        .fold(f64::INFINITY, f64::min);
    verdict(floor >= 0.6, format!("min Quantum Consensus STR at pb0<=0.01: {floor:.4} (>=0.6)"))
}

fn criterion_8(max: &HashMap<Mode, f64>) -> Verdict {
    let g = |i: usize| max[&Mode::ALL[i]];
    let qs_gain = g(6) / g(1);
    let qc_gain = g(4) / g(2);
    let full_gain = g(8) / g(3);
    let ordered = g(0) <= g(1) && g(1) <= g(6);
    let ok = qs_gain >= 1.2 && (1.0..=1.05).contains(&qc_gain) && full_gain >= 1.2 && ordered;
    verdict(
        ok,
        format!(
            "QS/Social {qs_gain:.3} (>=1.2), QC/C {qc_gain:.3} ([1,1.05]), QS+QC/S+C {full_gain:.3} (>=1.2), \
             Standard {:.3} <= Social {:.3} <= QS {:.3}: {ordered}",
            g(0),
            g(1),
            g(6)
        ),
    )
}

fn criterion_9(max: &HashMap<Mode, f64>) -> Verdict {
    let qs = max[&Mode::ALL[6]];
    let social = max[&Mode::ALL[1]];
    let mut off_band = Vec::new();
    let mut worst = 0.0f64;
    for (i, m) in Mode::ALL.iter().enumerate() {
        let d = (max[m] - REFERENCE_MAX[i]).abs();
        worst = worst.max(d);
        if d > REFERENCE_BAND {
            off_band.push(format!("{}={:.3}", m.label(), max[m]));
        }
    }
    let ok = qs >= 0.80 && (0.60..=0.70).contains(&social) && off_band.is_empty();
    verdict(
        ok,
        format!(
            "QS max {qs:.3} (>=0.80), Social max {social:.3} ([0.60,0.70]), largest distance to reference {worst:.3} (<=0.10){}",
            if off_band.is_empty() { String::new() } else { format!("; outside: {}", off_band.join(", ")) }
        ),
    )
}

fn criterion_10(dir: &Path) -> Verdict {
    let modes = "standard,social+consensus,quantum-consensus,quantum-social+quantum-consensus";
    let one = sweep(dir, "jobs1", "usecase", modes, &["--reps", "2", "--jobs", "1"]);
    let eight = sweep(dir, "jobs8", "usecase", modes, &["--reps", "2", "--jobs", "8"]);
    let same_raw = one.0 == eight.0;
    let same_mesh = one.1 == eight.1;
    verdict(
        same_raw && same_mesh,
        format!("usecase grid, 4 modes x 2 reps: raw identical {same_raw}, mesh identical {same_mesh}"),
    )
}

fn criterion_11() -> Verdict {
    let (mean, half) = metrics::mean_ci99(&[0.5, 0.7]).unwrap();
    let t29 = metrics::t_quantile_99(29);
    let ok = (mean - 0.6).abs() < 1e-12 && (half - 6.37).abs() < 1e-2 && (t29 - 2.756).abs() < 1e-3;
    verdict(ok, format!("{{0.5,0.7}} -> mean {mean:.3}, half-width {half:.4}; t(0.995,29) = {t29:.4}"))
}

#[test]
fn acceptance_criteria() {
    let dir = tempfile::tempdir().unwrap();
    let jobs = jobs();
    let mut results: Vec<(u32, Verdict)> = Vec::new();
    let mut record = |n: u32, v: Verdict| {
        say(&format!("criterion {n:>2}: {} - {}", if v.pass { "PASS" } else { "FAIL" }, v.detail));
        results.push((n, v));
    };

    record(1, criterion_1());
    record(2, criterion_2());
    record(3, criterion_3());
    record(4, criterion_4(dir.path()));

    let (_, _, usecase) = sweep(dir.path(), "usecase", "usecase", "all", &["--jobs", &jobs]);
    record(5, criterion_5(&usecase));

    let (_, _, extended) = sweep(
        dir.path(),
        "extended",
        "extended",
        "consensus,quantum-consensus",
        &["--jobs", &jobs],
    );
    record(6, criterion_6(&extended));
    record(7, criterion_7(&extended));

    let max = maxima(&usecase);
    say(&metrics::format_table(&metrics::summarize(&usecase)));
    record(8, criterion_8(&max));
    record(9, criterion_9(&max));
    record(10, criterion_10(dir.path()));
    record(11, criterion_11());

    let failed: Vec<u32> = results.iter().filter(|(_, v)| !v.pass).map(|(n, _)| *n).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
