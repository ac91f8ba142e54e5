// Copyright 2026 The permafrost-trust Authors.
// SPDX-License-Identifier: Apache-2.0

//! `sim`: single runs, parameter sweeps and summary tables.

use std::fs;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use pftrust::harness::{self, GridKind, Profile, SimConfig};
use pftrust::metrics;

#[derive(Parser)]
#[command(name = "sim", version, about = "Permafrost telemetry trustworthiness simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one configuration once and print its STR and traffic counters.
    Run {
        /// Configuration file (`key = value` lines).
        #[arg(long)]
        config: PathBuf,
        /// Master seed; defaults to `sim.base_seed`.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run a grid of configurations and write raw and aggregated CSVs.
    Sweep {
        /// usecase (N = 1..5) or extended (N = 4..10).
        #[arg(long)]
        grid: GridKind,
        /// `all` or a comma-separated list of mode labels.
        #[arg(long, default_value = "all")]
        modes: String,
        /// Repetitions per grid point; overrides the profile.
        #[arg(long)]
        reps: Option<u32>,
        /// desk (40 days, 10 reps) or paper (400 days, 30 reps).
        #[arg(long, default_value = "desk")]
        profile: Profile,
        /// Base configuration applied before the grid overrides.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out_raw: PathBuf,
        #[arg(long)]
        out_mesh: PathBuf,
        /// Worker threads; defaults to the number of CPUs.
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Summarize a mesh CSV per mode.
    Report {
        #[arg(long)]
        mesh: PathBuf,
        /// Print the per-mode table.
        #[arg(long)]
        table: bool,
    },
}

fn load_config(path: &PathBuf) -> Result<SimConfig> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    SimConfig::parse(&text).with_context(|| format!("in {}", path.display()))
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Run { config, seed } => {
            let cfg = load_config(&config)?;
            let seed = seed.unwrap_or(cfg.base_seed);
            let stats = pftrust::engine::run(&cfg, seed);
            let str = metrics::str(&stats.resolutions)?;
            let t = &stats.traffic;
            println!("mode            {}", cfg.mode.label());
            println!("seed            {seed}");
            println!("transactions    {}", stats.resolutions.len());
            println!("str             {str:.6}");
            println!("availability    {:.4}", stats.nvis_availability);
            println!("offered         {}", t.offered);
            println!("delivered       {}", t.delivered);
            println!("drop_congestion {}", t.dropped_congestion);
            println!("drop_loss       {}", t.dropped_loss);
            println!("dtn_expired     {}", t.dtn_expired);
            println!("consensus_msgs  {}", t.consensus_messages);
            println!("events          {}", stats.events_processed);
        }
        Command::Sweep {
            grid,
            modes,
            reps,
            profile,
            config,
            out_raw,
            out_mesh,
            jobs,
        } => {
            let modes = harness::parse_modes(&modes).map_err(anyhow::Error::msg)?;
            let mut base = match &config {
                Some(p) => load_config(p)?,
                None => SimConfig::default(),
            };
            base.duration_days = profile.duration_days();
            let reps = reps.unwrap_or(profile.reps());
            if reps == 0 {
                bail!("--reps must be at least 1");
            }
            let jobs = jobs.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
            let configs = harness::grid(grid, &modes, reps, &base);
            let rows = harness::sweep(&configs, jobs)?;
            metrics::export_raw(&rows, &out_raw)?;
            let spec = harness::grid_spec(grid, &modes, reps);
            metrics::export_mesh(&metrics::aggregate(&rows), &spec, &out_mesh)?;
            eprintln!(
                "{} configurations, {} runs -> {}, {}",
                configs.len(),
                rows.len(),
                out_raw.display(),
                out_mesh.display()
            );
        }
        Command::Report { mesh, table } => {
            let reports = metrics::read_mesh(&mesh)?;
            let summary = metrics::summarize(&reports);
            if table {
                print!("{}", metrics::format_table(&summary));
            } else {
                for s in &summary {
                    println!("{}\t{:.4}", s.mode.label(), s.max);
                }
            }
        }
    }
    Ok(())
}
