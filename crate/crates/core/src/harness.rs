// Copyright 2026 The permafrost-trust Authors.
// SPDX-License-Identifier: Apache-2.0

//! Configuration, experiment grids and parallel sweeps.
//!
//! Configuration files are flat `key = value` text; `#` starts a comment.
//! Every key has a default, so an empty file is a valid configuration.
//! See [`SimConfig::to_text`] for the complete key list.

use std::fmt;
use std::panic::{self, AssertUnwindSafe};
use std::str::FromStr;

use rayon::prelude::*;
use thiserror::Error;

use crate::consensus::ConsensusConfig;
use crate::engine;
use crate::metrics::{self, GridSpec, RawRow};
use crate::netmodel::{LinkParams, MessageSizes, NvisParams};
use crate::quantum::QuantumParams;
use crate::social::SocialParams;
use crate::telemetry::{FaultParams, Layer, Mode, Topology};

/// One violated rule, tied to the key that caused it.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{key}: {message}")]
pub struct ConfigError {
    pub key: String,
    pub message: String,
}

impl ConfigError {
    fn new(key: &str, message: impl Into<String>) -> Self {
        ConfigError {
            key: key.to_string(),
            message: message.into(),
        }
    }
}

/// Every error found in a configuration, not only the first.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid configuration:\n  {}", .0.iter().map(|e| e.to_string()).collect::<Vec<_>>().join("\n  "))]
pub struct ConfigErrors(pub Vec<ConfigError>);

impl ConfigErrors {
    pub fn keys(&self) -> Vec<&str> {
        self.0.iter().map(|e| e.key.as_str()).collect()
    }
}

/// Full parameterization of one simulated configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub duration_days: f64,
    /// Seconds between rounds of one spot.
    pub period_s: f64,
    /// Seconds after a round at which its transaction is resolved.
    pub deadline_s: f64,
    /// Offset between consecutive spots of one concentrator, seconds.
    pub stagger_s: f64,
    pub base_seed: u64,
    pub reps: u32,
    pub topology: Topology,
    pub mode: Mode,
    pub fault: FaultParams,
    pub lora: LinkParams,
    pub nvis: LinkParams,
    pub nvis_dynamics: NvisParams,
    pub sizes: MessageSizes,
    pub quantum: QuantumParams,
    pub social: SocialParams,
    pub consensus: ConsensusConfig,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            duration_days: 40.0,
            period_s: 3600.0,
            deadline_s: 86_400.0,
            stagger_s: 150.0,
            base_seed: 1,
            reps: 10,
            topology: Topology::default(),
            mode: Mode::STANDARD,
            fault: FaultParams::default(),
            lora: LinkParams {
                capacity: 70.0,
                buffer_slots: 50,
                base_loss: 0.01,
            },
            nvis: LinkParams {
                capacity: 4800.0,
                buffer_slots: 50,
                base_loss: 0.01,
            },
            nvis_dynamics: NvisParams::default(),
            sizes: MessageSizes::default(),
            quantum: QuantumParams::default(),
            social: SocialParams::default(),
            consensus: ConsensusConfig::default(),
        }
    }
}

/// Dotted keys in documentation order.
pub const KEYS: &[&str] = &[
    "sim.duration_days",
    "sim.period_s",
    "sim.deadline_s",
    "sim.stagger_s",
    "sim.base_seed",
    "sim.reps",
    "topology.concentrators",
    "topology.spots",
    "topology.redundancy",
    "mode.social",
    "mode.consensus",
    "fault.pb0",
    "fault.offset_min",
    "fault.offset_max",
    "fault.tolerance",
    "fault.degraded_fraction",
    "fault.degraded_pb",
    "lora.capacity_bps",
    "lora.buffer_slots",
    "lora.base_loss",
    "nvis.capacity_bps",
    "nvis.buffer_slots",
    "nvis.base_loss",
    "nvis.availability_min",
    "nvis.availability_max",
    "nvis.mean_down_s",
    "nvis.fade_fraction",
    "nvis.mean_fade_s",
    "nvis.fade_frame_max_bits",
    "nvis.dtn_ttl_s",
    "msg.data_bits",
    "msg.consensus_bits",
    "msg.feedback_bits",
    "quantum.p_channel",
    "quantum.alpha",
    "quantum.beta",
    "quantum.pairs_per_msg",
    "quantum.gen_rate",
    "quantum.buffer_cap",
    "quantum.rho",
    "social.window",
    "social.w_short",
    "social.w_long",
    "social.theta",
    "consensus.timeout_s",
    "consensus.max_retries",
    "consensus.fqc_c",
];

fn parse_value<T: FromStr>(key: &str, raw: &str) -> Result<T, ConfigError> {
    raw.parse()
        .map_err(|_| ConfigError::new(key, format!("cannot parse `{raw}`")))
}

impl SimConfig {
    /// Parses and validates configuration text. Keys not given keep their
    /// defaults.
    pub fn parse(text: &str) -> Result<SimConfig, ConfigErrors> {
        let mut cfg = SimConfig::default();
        let mut errors = Vec::new();
        let mut seen: Vec<String> = Vec::new();
        for (no, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                errors.push(ConfigError::new(
                    &format!("line {}", no + 1),
                    "expected `key = value`",
                ));
                continue;
            };
            let (key, value) = (key.trim(), value.trim());
            if seen.iter().any(|k| k == key) {
                errors.push(ConfigError::new(key, "given more than once"));
                continue;
            }
            seen.push(key.to_string());
            if let Err(e) = cfg.set(key, value) {
                errors.push(e);
            }
        }
        if let Err(ConfigErrors(mut more)) = cfg.validate() {
            errors.append(&mut more);
        }
        if errors.is_empty() {
            Ok(cfg)
        } else {
            Err(ConfigErrors(errors))
        }
    }

    /// Sets one key from its text form.
    pub fn set(&mut self, key: &str, raw: &str) -> Result<(), ConfigError> {
        let v = raw;
        match key {
            "sim.duration_days" => self.duration_days = parse_value(key, v)?,
            "sim.period_s" => self.period_s = parse_value(key, v)?,
            "sim.deadline_s" => self.deadline_s = parse_value(key, v)?,
            "sim.stagger_s" => self.stagger_s = parse_value(key, v)?,
            "sim.base_seed" => self.base_seed = parse_value(key, v)?,
            "sim.reps" => self.reps = parse_value(key, v)?,
            "topology.concentrators" => self.topology.concentrators = parse_value(key, v)?,
            "topology.spots" => self.topology.spots = parse_value(key, v)?,
            "topology.redundancy" => self.topology.redundancy = parse_value(key, v)?,
            "mode.social" => self.mode.social = v.parse::<Layer>().map_err(|m| ConfigError::new(key, m))?,
            "mode.consensus" => {
                self.mode.consensus = v.parse::<Layer>().map_err(|m| ConfigError::new(key, m))?
            }
            "fault.pb0" => self.fault.pb0 = parse_value(key, v)?,
            "fault.offset_min" => self.fault.offset_min = parse_value(key, v)?,
            "fault.offset_max" => self.fault.offset_max = parse_value(key, v)?,
            "fault.tolerance" => self.fault.tolerance = parse_value(key, v)?,
            "fault.degraded_fraction" => self.fault.degraded_fraction = parse_value(key, v)?,
            "fault.degraded_pb" => self.fault.degraded_pb = parse_value(key, v)?,
            "lora.capacity_bps" => self.lora.capacity = parse_value(key, v)?,
            "lora.buffer_slots" => self.lora.buffer_slots = parse_value(key, v)?,
            "lora.base_loss" => self.lora.base_loss = parse_value(key, v)?,
            "nvis.capacity_bps" => self.nvis.capacity = parse_value(key, v)?,
            "nvis.buffer_slots" => self.nvis.buffer_slots = parse_value(key, v)?,
            "nvis.base_loss" => self.nvis.base_loss = parse_value(key, v)?,
            "nvis.availability_min" => self.nvis_dynamics.availability_min = parse_value(key, v)?,
            "nvis.availability_max" => self.nvis_dynamics.availability_max = parse_value(key, v)?,
            "nvis.mean_down_s" => self.nvis_dynamics.mean_down_s = parse_value(key, v)?,
            "nvis.fade_fraction" => self.nvis_dynamics.fade_fraction = parse_value(key, v)?,
            "nvis.mean_fade_s" => self.nvis_dynamics.mean_fade_s = parse_value(key, v)?,
            "nvis.fade_frame_max_bits" => self.nvis_dynamics.fade_frame_max_bits = parse_value(key, v)?,
            "nvis.dtn_ttl_s" => self.nvis_dynamics.dtn_ttl_s = parse_value(key, v)?,
            "msg.data_bits" => self.sizes.data_bits = parse_value(key, v)?,
            "msg.consensus_bits" => self.sizes.consensus_bits = parse_value(key, v)?,
            "msg.feedback_bits" => self.sizes.feedback_bits = parse_value(key, v)?,
            "quantum.p_channel" => self.quantum.p_channel = parse_value(key, v)?,
            "quantum.alpha" => self.quantum.alpha = parse_value(key, v)?,
            "quantum.beta" => self.quantum.beta = parse_value(key, v)?,
            "quantum.pairs_per_msg" => self.quantum.pairs_per_msg = parse_value(key, v)?,
            "quantum.gen_rate" => self.quantum.gen_rate = parse_value(key, v)?,
            "quantum.buffer_cap" => self.quantum.buffer_cap = parse_value(key, v)?,
            "quantum.rho" => self.quantum.rho = parse_value(key, v)?,
            "social.window" => self.social.window = parse_value(key, v)?,
            "social.w_short" => self.social.w_short = parse_value(key, v)?,
            "social.w_long" => self.social.w_long = parse_value(key, v)?,
            "social.theta" => self.social.theta = parse_value(key, v)?,
            "consensus.timeout_s" => self.consensus.timeout_s = parse_value(key, v)?,
            "consensus.max_retries" => self.consensus.max_retries = parse_value(key, v)?,
            "consensus.fqc_c" => self.consensus.fqc_c = parse_value(key, v)?,
            _ => return Err(ConfigError::new(key, "unknown key")),
        }
        Ok(())
    }

    /// Text form of one key.
    pub fn get(&self, key: &str) -> Option<String> {
        let s = match key {
            "sim.duration_days" => self.duration_days.to_string(),
            "sim.period_s" => self.period_s.to_string(),
            "sim.deadline_s" => self.deadline_s.to_string(),
            "sim.stagger_s" => self.stagger_s.to_string(),
            "sim.base_seed" => self.base_seed.to_string(),
            "sim.reps" => self.reps.to_string(),
            "topology.concentrators" => self.topology.concentrators.to_string(),
            "topology.spots" => self.topology.spots.to_string(),
            "topology.redundancy" => self.topology.redundancy.to_string(),
            "mode.social" => self.mode.social.as_str().to_string(),
            "mode.consensus" => self.mode.consensus.as_str().to_string(),
            "fault.pb0" => self.fault.pb0.to_string(),
            "fault.offset_min" => self.fault.offset_min.to_string(),
            "fault.offset_max" => self.fault.offset_max.to_string(),
            "fault.tolerance" => self.fault.tolerance.to_string(),
            "fault.degraded_fraction" => self.fault.degraded_fraction.to_string(),
            "fault.degraded_pb" => self.fault.degraded_pb.to_string(),
            "lora.capacity_bps" => self.lora.capacity.to_string(),
            "lora.buffer_slots" => self.lora.buffer_slots.to_string(),
            "lora.base_loss" => self.lora.base_loss.to_string(),
            "nvis.capacity_bps" => self.nvis.capacity.to_string(),
            "nvis.buffer_slots" => self.nvis.buffer_slots.to_string(),
            "nvis.base_loss" => self.nvis.base_loss.to_string(),
            "nvis.availability_min" => self.nvis_dynamics.availability_min.to_string(),
            "nvis.availability_max" => self.nvis_dynamics.availability_max.to_string(),
            "nvis.mean_down_s" => self.nvis_dynamics.mean_down_s.to_string(),
            "nvis.fade_fraction" => self.nvis_dynamics.fade_fraction.to_string(),
            "nvis.mean_fade_s" => self.nvis_dynamics.mean_fade_s.to_string(),
            "nvis.fade_frame_max_bits" => self.nvis_dynamics.fade_frame_max_bits.to_string(),
            "nvis.dtn_ttl_s" => self.nvis_dynamics.dtn_ttl_s.to_string(),
            "msg.data_bits" => self.sizes.data_bits.to_string(),
            "msg.consensus_bits" => self.sizes.consensus_bits.to_string(),
            "msg.feedback_bits" => self.sizes.feedback_bits.to_string(),
            "quantum.p_channel" => self.quantum.p_channel.to_string(),
            "quantum.alpha" => self.quantum.alpha.to_string(),
            "quantum.beta" => self.quantum.beta.to_string(),
            "quantum.pairs_per_msg" => self.quantum.pairs_per_msg.to_string(),
            "quantum.gen_rate" => self.quantum.gen_rate.to_string(),
            "quantum.buffer_cap" => self.quantum.buffer_cap.to_string(),
            "quantum.rho" => self.quantum.rho.to_string(),
            "social.window" => self.social.window.to_string(),
            "social.w_short" => self.social.w_short.to_string(),
            "social.w_long" => self.social.w_long.to_string(),
            "social.theta" => self.social.theta.to_string(),
            "consensus.timeout_s" => self.consensus.timeout_s.to_string(),
            "consensus.max_retries" => self.consensus.max_retries.to_string(),
            "consensus.fqc_c" => self.consensus.fqc_c.to_string(),
            _ => return None,
        };
        Some(s)
    }

    /// Every key with its current value, one per line; parses back to `self`.
    pub fn to_text(&self) -> String {
        KEYS.iter()
            .map(|k| format!("{k} = {}\n", self.get(k).expect("listed key")))
            .collect()
    }

    /// Checks every invariant and reports all violations.
    pub fn validate(&self) -> Result<(), ConfigErrors> {
        let mut errs = Vec::new();
        let mut need = |ok: bool, key: &str, msg: &str| {
            if !ok {
                errs.push(ConfigError::new(key, msg));
            }
        };
        let prob = |p: f64| (0.0..=1.0).contains(&p);
        let pos = |x: f64| x > 0.0 && x.is_finite();

        need(pos(self.duration_days), "sim.duration_days", "must be positive");
        need(pos(self.period_s), "sim.period_s", "must be positive");
        need(pos(self.deadline_s), "sim.deadline_s", "must be positive");
        need(
            self.period_s <= 0.0 || self.deadline_s / self.period_s <= 1e6,
            "sim.deadline_s",
            "deadline spans too many rounds",
        );
        need(self.stagger_s >= 0.0 && self.stagger_s.is_finite(), "sim.stagger_s", "must be non-negative");
        need(self.topology.concentrators >= 1, "topology.concentrators", "must be at least 1");
        need(self.topology.spots >= 1, "topology.spots", "must be at least 1");
        need(
            (1..=64).contains(&self.topology.redundancy),
            "topology.redundancy",
            "must be between 1 and 64",
        );

        let f = &self.fault;
        need(prob(f.pb0), "fault.pb0", "must be in [0, 1]");
        need(f.tolerance >= 0.0, "fault.tolerance", "must be non-negative");
        need(f.offset_min > f.tolerance, "fault.offset_min", "must exceed fault.tolerance");
        need(f.offset_max >= f.offset_min, "fault.offset_max", "must be at least fault.offset_min");
        need(prob(f.degraded_fraction), "fault.degraded_fraction", "must be in [0, 1]");
        need(prob(f.degraded_pb), "fault.degraded_pb", "must be in [0, 1]");

        for (prefix, link) in [("lora", &self.lora), ("nvis", &self.nvis)] {
            need(pos(link.capacity), &format!("{prefix}.capacity_bps"), "must be positive");
            need(link.buffer_slots >= 1, &format!("{prefix}.buffer_slots"), "must be at least 1");
            need(prob(link.base_loss), &format!("{prefix}.base_loss"), "must be in [0, 1]");
        }

        let n = &self.nvis_dynamics;
        need(prob(n.availability_min), "nvis.availability_min", "must be in [0, 1]");
        need(prob(n.availability_max), "nvis.availability_max", "must be in [0, 1]");
        need(
            n.availability_max >= n.availability_min,
            "nvis.availability_max",
            "must be at least nvis.availability_min",
        );
        need(pos(n.mean_down_s), "nvis.mean_down_s", "must be positive");
        need(
            (0.0..1.0).contains(&n.fade_fraction),
            "nvis.fade_fraction",
            "must be in [0, 1)",
        );
        need(pos(n.mean_fade_s), "nvis.mean_fade_s", "must be positive");
        need(n.fade_frame_max_bits >= 0.0, "nvis.fade_frame_max_bits", "must be non-negative");
        need(pos(n.dtn_ttl_s), "nvis.dtn_ttl_s", "must be positive");

        need(self.sizes.data_bits > 0, "msg.data_bits", "must be positive");
        need(self.sizes.consensus_bits > 0, "msg.consensus_bits", "must be positive");
        need(self.sizes.feedback_bits > 0, "msg.feedback_bits", "must be positive");

        // Quantum parameters only matter when a quantum layer is active, but
        // an out-of-range value is still a mistake worth reporting.
        for e in self.quantum.validate() {
            if let crate::quantum::QuantumError::OutOfRange { name, .. } = e {
                need(false, &format!("quantum.{name}"), "out of range");
            }
        }
        need(self.quantum.pairs_per_msg >= 1, "quantum.pairs_per_msg", "must be at least 1");

        let s = &self.social;
        need(s.window >= 1, "social.window", "must be at least 1");
        need(prob(s.w_short), "social.w_short", "must be in [0, 1]");
        need(prob(s.w_long), "social.w_long", "must be in [0, 1]");
        need(
            (s.w_short + s.w_long - 1.0).abs() < 1e-9,
            "social.w_long",
            "social.w_short + social.w_long must equal 1",
        );
        need(prob(s.theta), "social.theta", "must be in [0, 1]");

        need(pos(self.consensus.timeout_s), "consensus.timeout_s", "must be positive");
        need(self.consensus.fqc_c >= 1, "consensus.fqc_c", "must be at least 1");

        if errs.is_empty() {
            Ok(())
        } else {
            Err(ConfigErrors(errs))
        }
    }
}

/// Run length and repetition count presets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Profile {
    /// 40 days, 10 repetitions.
    Desk,
    /// 400 days, 30 repetitions.
    Paper,
}

impl Profile {
    pub fn duration_days(self) -> f64 {
        match self {
            Profile::Desk => 40.0,
            Profile::Paper => 400.0,
        }
    }

    pub fn reps(self) -> u32 {
        match self {
            Profile::Desk => 10,
            Profile::Paper => 30,
        }
    }
}

impl FromStr for Profile {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "desk" => Ok(Profile::Desk),
            "paper" => Ok(Profile::Paper),
            _ => Err(format!("unknown profile `{s}` (desk|paper)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridKind {
    /// Redundancy 1..=5.
    UseCase,
    /// Redundancy 4..=10.
    Extended,
}

impl FromStr for GridKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "usecase" => Ok(GridKind::UseCase),
            "extended" => Ok(GridKind::Extended),
            _ => Err(format!("unknown grid `{s}` (usecase|extended)")),
        }
    }
}

impl fmt::Display for GridKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GridKind::UseCase => "usecase",
            GridKind::Extended => "extended",
        })
    }
}

pub const PB0_VALUES: [f64; 3] = [0.1, 0.01, 0.001];
pub const SPOT_COUNTS: [u32; 2] = [32, 64];

/// Axes of a grid: pb0 values and (spots, redundancy) points, the latter
/// ordered 32 x N... then 64 x N....
pub fn grid_spec(kind: GridKind, modes: &[Mode], reps: u32) -> GridSpec {
    let redundancy = match kind {
        GridKind::UseCase => 1..=5,
        GridKind::Extended => 4..=10,
    };
    let points = SPOT_COUNTS
        .iter()
        .flat_map(|&s| redundancy.clone().map(move |n| (s, n)))
        .collect();
    GridSpec {
        pb0_values: PB0_VALUES.to_vec(),
        points,
        modes: modes.to_vec(),
        reps,
    }
}

/// One configuration per grid point, in mode, pb0, Y order, derived from `base`.
pub fn grid(kind: GridKind, modes: &[Mode], reps: u32, base: &SimConfig) -> Vec<SimConfig> {
    grid_spec(kind, modes, reps)
        .grid_points()
        .into_iter()
        .map(|p| {
            let mut c = base.clone();
            c.mode = p.mode;
            c.fault.pb0 = p.pb0;
            c.topology.spots = p.spots;
            c.topology.redundancy = p.redundancy;
            c.reps = reps;
            c
        })
        .collect()
}

/// Parses `all` or a comma-separated list of mode labels.
pub fn parse_modes(list: &str) -> Result<Vec<Mode>, String> {
    if list.trim() == "all" {
        return Ok(Mode::ALL.to_vec());
    }
    let mut modes = Vec::new();
    for part in list.split(',') {
        let m: Mode = part.parse()?;
        if !modes.contains(&m) {
            modes.push(m);
        }
    }
    if modes.is_empty() {
        return Err("no modes given".into());
    }
    Ok(modes)
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SweepError {
    #[error("invalid configuration for {mode} pb0={pb0} spots={spots} redundancy={redundancy}: {source}")]
    Config {
        mode: Mode,
        pb0: f64,
        spots: u32,
        redundancy: u32,
        source: ConfigErrors,
    },
    #[error("run failed for {mode} pb0={pb0} spots={spots} redundancy={redundancy} rep={rep} seed={seed}: {message}")]
    RunFailed {
        mode: Mode,
        pb0: f64,
        spots: u32,
        redundancy: u32,
        rep: u32,
        seed: u64,
        message: String,
    },
    #[error("cannot start worker pool: {0}")]
    Pool(String),
}

/// Runs one repetition of `cfg` and returns its STR.
pub fn run_rep(cfg: &SimConfig, rep: u32) -> Result<RawRow, SweepError> {
    let seed = cfg.base_seed.wrapping_add(rep as u64);
    let fail = |message: String| SweepError::RunFailed {
        mode: cfg.mode,
        pb0: cfg.fault.pb0,
        spots: cfg.topology.spots,
        redundancy: cfg.topology.redundancy,
        rep,
        seed,
        message,
    };
    let stats = panic::catch_unwind(AssertUnwindSafe(|| engine::run(cfg, seed))).map_err(|e| {
        let message = e
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panic".into());
        fail(message)
    })?;
    let str = metrics::str(&stats.resolutions).map_err(|e| fail(e.to_string()))?;
    Ok(RawRow {
        mode: cfg.mode,
        pb0: cfg.fault.pb0,
        spots: cfg.topology.spots,
        redundancy: cfg.topology.redundancy,
        rep,
        seed,
        str,
    })
}

/// Runs every (config, rep) pair on `jobs` worker threads. Rows come back
/// in config order, then rep order, whatever the interleaving.
pub fn sweep(configs: &[SimConfig], jobs: usize) -> Result<Vec<RawRow>, SweepError> {
    for c in configs {
        c.validate().map_err(|source| SweepError::Config {
            mode: c.mode,
            pb0: c.fault.pb0,
            spots: c.topology.spots,
            redundancy: c.topology.redundancy,
            source,
        })?;
    }
    let tasks: Vec<(usize, u32)> = configs
        .iter()
        .enumerate()
        .flat_map(|(i, c)| (0..c.reps).map(move |r| (i, r)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| SweepError::Pool(e.to_string()))?;
    let results: Vec<Result<RawRow, SweepError>> = pool.install(|| {
        tasks
            .par_iter()
            .map(|&(i, r)| run_rep(&configs[i], r))
            .collect()
    });
    results.into_iter().collect()
}
