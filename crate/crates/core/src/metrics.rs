// Copyright 2026 The permafrost-trust Authors.
// SPDX-License-Identifier: Apache-2.0

//! STR, confidence intervals and the CSV exports.
//!
//! Two CSV schemas are produced. The raw file has one row per run:
//!
//! ```text
//! mode,pb0,spots,redundancy,rep,seed,str
//! ```
//!
//! and the mesh file one row per grid point and mode:
//!
//! ```text
//! mode,pb0,spots,redundancy,n_reps,str_mean,str_ci99_half
//! ```
//!
//! Floats are written in shortest round-trip form so that reading a file
//! back yields the exact values that were written.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

use crate::telemetry::{Mode, TransactionResolution};

pub const RAW_HEADER: [&str; 7] = ["mode", "pb0", "spots", "redundancy", "rep", "seed", "str"];
pub const MESH_HEADER: [&str; 7] = [
    "mode",
    "pb0",
    "spots",
    "redundancy",
    "n_reps",
    "str_mean",
    "str_ci99_half",
];

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("STR is undefined for an empty set of transactions")]
    NoTransactions,
    #[error("a confidence interval needs at least 2 samples, got {0}")]
    TooFewSamples(usize),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("{path}: line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },
    #[error("incomplete grid, missing {}", format_missing(.0))]
    IncompleteGrid(Vec<GridPoint>),
}

fn format_missing(points: &[GridPoint]) -> String {
    points
        .iter()
        .map(|p| {
            format!(
                "{} (pb0={}, spots={}, redundancy={})",
                p.mode, p.pb0, p.spots, p.redundancy
            )
        })
        .collect::<Vec<_>>()
        .join(", ")
}

/// Successes over total.
pub fn str(resolutions: &[TransactionResolution]) -> Result<f64, MetricsError> {
    if resolutions.is_empty() {
        return Err(MetricsError::NoTransactions);
    }
    let ok = resolutions.iter().filter(|r| r.is_success()).count();
    Ok(ok as f64 / resolutions.len() as f64)
}

/// Two-sided 99% Student-t quantile for `df` degrees of freedom.
pub fn t_quantile_99(df: usize) -> f64 {
    StudentsT::new(0.0, 1.0, df as f64)
        .expect("positive degrees of freedom")
        .inverse_cdf(0.995)
}

/// Mean and 99% half-width `t(0.995, k-1) * s / sqrt(k)`. Samples are summed
/// in sorted order so the mean does not depend on the order they arrive in.
pub fn mean_ci99(samples: &[f64]) -> Result<(f64, f64), MetricsError> {
    let k = samples.len();
    if k < 2 {
        return Err(MetricsError::TooFewSamples(k));
    }
    let mut v = samples.to_vec();
    v.sort_by(f64::total_cmp);
    if v[0] == v[k - 1] {
        return Ok((v[0], 0.0));
    }
    let mean = v.iter().sum::<f64>() / k as f64;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (k - 1) as f64;
    let s = var.sqrt();
    if s == 0.0 {
        return Ok((mean, 0.0));
    }
    Ok((mean, t_quantile_99(k - 1) * s / (k as f64).sqrt()))
}

/// Mean over the samples taken in ascending order.
pub fn sorted_mean(samples: &[f64]) -> f64 {
    let mut v = samples.to_vec();
    v.sort_by(f64::total_cmp);
    v.iter().sum::<f64>() / v.len() as f64
}

/// One run of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct RawRow {
    pub mode: Mode,
    pub pb0: f64,
    pub spots: u32,
    pub redundancy: u32,
    pub rep: u32,
    pub seed: u64,
    pub str: f64,
}

/// Aggregate of one grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct StrReport {
    pub mode: Mode,
    pub pb0: f64,
    pub spots: u32,
    pub redundancy: u32,
    pub n_reps: u32,
    pub str_mean: f64,
    /// NaN when fewer than two repetitions were run.
    pub ci99_half: f64,
}

impl StrReport {
    pub fn point(&self) -> GridPoint {
        GridPoint {
            mode: self.mode,
            pb0: self.pb0,
            spots: self.spots,
            redundancy: self.redundancy,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridPoint {
    pub mode: Mode,
    pub pb0: f64,
    pub spots: u32,
    pub redundancy: u32,
}

/// X axis (fault probabilities) times Y axis (spots x redundancy points),
/// for a set of modes.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub pb0_values: Vec<f64>,
    pub points: Vec<(u32, u32)>,
    pub modes: Vec<Mode>,
    pub reps: u32,
}

impl GridSpec {
    /// Every point in export order: mode, then pb0, then Y.
    pub fn grid_points(&self) -> Vec<GridPoint> {
        let mut out = Vec::with_capacity(self.modes.len() * self.pb0_values.len() * self.points.len());
        for &mode in &self.modes {
            for &pb0 in &self.pb0_values {
                for &(spots, redundancy) in &self.points {
                    out.push(GridPoint { mode, pb0, spots, redundancy });
                }
            }
        }
        out
    }
}

/// Groups raw rows by grid point and aggregates them, in first-seen order.
pub fn aggregate(rows: &[RawRow]) -> Vec<StrReport> {
    let mut keys: Vec<GridPoint> = Vec::new();
    let mut groups: Vec<Vec<f64>> = Vec::new();
    for r in rows {
        let p = GridPoint {
            mode: r.mode,
            pb0: r.pb0,
            spots: r.spots,
            redundancy: r.redundancy,
        };
        match keys.iter().position(|k| *k == p) {
            Some(i) => groups[i].push(r.str),
            None => {
                keys.push(p);
                groups.push(vec![r.str]);
            }
        }
    }
    keys.into_iter()
        .zip(groups)
        .map(|(p, samples)| {
            let (str_mean, ci99_half) = match mean_ci99(&samples) {
                Ok(v) => v,
                Err(_) => (sorted_mean(&samples), f64::NAN),
            };
            StrReport {
                mode: p.mode,
                pb0: p.pb0,
                spots: p.spots,
                redundancy: p.redundancy,
                n_reps: samples.len() as u32,
                str_mean,
                ci99_half,
            }
        })
        .collect()
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> MetricsError + '_ {
    move |source| MetricsError::Csv {
        path: path.to_path_buf(),
        source,
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> MetricsError + '_ {
    move |source| MetricsError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes the raw rows to `out` in the order given.
pub fn write_raw<W: Write>(rows: &[RawRow], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(RAW_HEADER)?;
    for r in rows {
        w.write_record([
            r.mode.label().to_string(),
            r.pb0.to_string(),
            r.spots.to_string(),
            r.redundancy.to_string(),
            r.rep.to_string(),
            r.seed.to_string(),
            r.str.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn export_raw(rows: &[RawRow], path: &Path) -> Result<(), MetricsError> {
    let file = File::create(path).map_err(io_err(path))?;
    write_raw(rows, file).map_err(csv_err(path))
}

/// Checks that `reports` covers every point of `grid`; returns them in grid order.
pub fn complete_mesh(reports: &[StrReport], grid: &GridSpec) -> Result<Vec<StrReport>, MetricsError> {
    let mut ordered = Vec::new();
    let mut missing = Vec::new();
    for p in grid.grid_points() {
        match reports.iter().find(|r| r.point() == p) {
            Some(r) => ordered.push(r.clone()),
            None => missing.push(p),
        }
    }
    if missing.is_empty() {
        Ok(ordered)
    } else {
        Err(MetricsError::IncompleteGrid(missing))
    }
}

pub fn write_mesh<W: Write>(reports: &[StrReport], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(MESH_HEADER)?;
    for r in reports {
        w.write_record([
            r.mode.label().to_string(),
            r.pb0.to_string(),
            r.spots.to_string(),
            r.redundancy.to_string(),
            r.n_reps.to_string(),
            r.str_mean.to_string(),
            r.ci99_half.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes the mesh of `grid`, refusing to write a partial one.
pub fn export_mesh(reports: &[StrReport], grid: &GridSpec, path: &Path) -> Result<(), MetricsError> {
    let ordered = complete_mesh(reports, grid)?;
    let file = File::create(path).map_err(io_err(path))?;
    write_mesh(&ordered, file).map_err(csv_err(path))
}

fn parse_field<T: std::str::FromStr>(
    rec: &csv::StringRecord,
    i: usize,
    path: &Path,
) -> Result<T, MetricsError> {
    let line = rec.position().map_or(0, |p| p.line());
    let raw = rec.get(i).ok_or_else(|| MetricsError::Parse {
        path: path.to_path_buf(),
        line,
        message: format!("missing column {}", i + 1),
    })?;
    raw.parse().map_err(|_| MetricsError::Parse {
        path: path.to_path_buf(),
        line,
        message: format!("cannot parse `{raw}`"),
    })
}

fn check_header(rdr: &mut csv::Reader<File>, expected: &[&str], path: &Path) -> Result<(), MetricsError> {
    let header = rdr.headers().map_err(csv_err(path))?;
    if header.iter().ne(expected.iter().copied()) {
        return Err(MetricsError::Parse {
            path: path.to_path_buf(),
            line: 1,
            message: format!("expected header `{}`", expected.join(",")),
        });
    }
    Ok(())
}

fn parse_mode(rec: &csv::StringRecord, path: &Path) -> Result<Mode, MetricsError> {
    let raw: String = parse_field(rec, 0, path)?;
    raw.parse().map_err(|message| MetricsError::Parse {
        path: path.to_path_buf(),
        line: rec.position().map_or(0, |p| p.line()),
        message,
    })
}

pub fn read_raw(path: &Path) -> Result<Vec<RawRow>, MetricsError> {
    let mut rdr = csv::Reader::from_path(path).map_err(csv_err(path))?;
    check_header(&mut rdr, &RAW_HEADER, path)?;
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err(path))?;
        rows.push(RawRow {
            mode: parse_mode(&rec, path)?,
            pb0: parse_field(&rec, 1, path)?,
            spots: parse_field(&rec, 2, path)?,
            redundancy: parse_field(&rec, 3, path)?,
            rep: parse_field(&rec, 4, path)?,
            seed: parse_field(&rec, 5, path)?,
            str: parse_field(&rec, 6, path)?,
        });
    }
    Ok(rows)
}

pub fn read_mesh(path: &Path) -> Result<Vec<StrReport>, MetricsError> {
    let mut rdr = csv::Reader::from_path(path).map_err(csv_err(path))?;
    check_header(&mut rdr, &MESH_HEADER, path)?;
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err(path))?;
        rows.push(StrReport {
            mode: parse_mode(&rec, path)?,
            pb0: parse_field(&rec, 1, path)?,
            spots: parse_field(&rec, 2, path)?,
            redundancy: parse_field(&rec, 3, path)?,
            n_reps: parse_field(&rec, 4, path)?,
            str_mean: parse_field(&rec, 5, path)?,
            ci99_half: parse_field(&rec, 6, path)?,
        });
    }
    Ok(rows)
}

/// Per-mode maximum and unweighted mean of `str_mean` over grid points.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeSummary {
    pub mode: Mode,
    pub points: usize,
    pub max: f64,
    pub mean: f64,
}

/// Summaries for every mode present, in canonical mode order.
pub fn summarize(reports: &[StrReport]) -> Vec<ModeSummary> {
    let present: BTreeSet<usize> = reports.iter().map(|r| r.mode.index()).collect();
    present
        .into_iter()
        .map(|i| {
            let mode = Mode::ALL[i];
            let vals: Vec<f64> = reports.iter().filter(|r| r.mode == mode).map(|r| r.str_mean).collect();
            ModeSummary {
                mode,
                points: vals.len(),
                max: vals.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                mean: sorted_mean(&vals),
            }
        })
        .collect()
}

/// Plain-text table of [`summarize`].
pub fn format_table(summary: &[ModeSummary]) -> String {
    let width = summary.iter().map(|s| s.mode.name().len()).max().unwrap_or(4).max(4);
    let mut out = format!("{:<width$}  {:>7}  {:>7}\n", "Mode", "Maximum", "Average");
    for s in summary {
        out.push_str(&format!("{:<width$}  {:>7.3}  {:>7.3}\n", s.mode.name(), s.max, s.mean));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::SimTime;
    use crate::telemetry::Outcome;
    use proptest::prelude::*;

    fn res(ok: bool) -> TransactionResolution {
        TransactionResolution {
            spot: 0,
            round: 0,
            outcome: if ok { Outcome::Success } else { Outcome::FailNoDelivery },
            decided_at: SimTime::ZERO,
        }
    }

    #[test]
    fn str_examples() {
        assert_eq!(str(&[res(true); 4]).unwrap(), 1.0);
        let mixed = [res(true), res(false), res(true), res(false), res(true)];
        assert_eq!(str(&mixed).unwrap(), 0.6);
        assert!(matches!(str(&[]), Err(MetricsError::NoTransactions)));
    }

    #[test]
    fn ci_of_constant_samples_is_zero() {
        assert_eq!(mean_ci99(&[0.7; 10]).unwrap(), (0.7, 0.0));
    }

    #[test]
    fn ci_two_sample_example() {
        let (m, h) = mean_ci99(&[0.5, 0.7]).unwrap();
        assert!((m - 0.6).abs() < 1e-12);
        // t(0.995, 1) = tan(pi * 0.495) for the Cauchy distribution.
        let t1 = (std::f64::consts::PI * 0.495).tan();
        let s = 0.02f64.sqrt();
        assert!((h - t1 * s / 2f64.sqrt()).abs() < 1e-6);
        assert!((h - 6.37).abs() < 1e-2);
    }

    #[test]
    fn t_quantile_table_values() {
        assert!((t_quantile_99(29) - 2.756).abs() < 1e-3);
        assert!((t_quantile_99(9) - 3.250).abs() < 1e-3);
        assert!((t_quantile_99(1) - 63.657).abs() < 1e-3);
    }

    #[test]
    fn ci_needs_two_samples() {
        assert!(matches!(mean_ci99(&[0.3]), Err(MetricsError::TooFewSamples(1))));
        assert!(matches!(mean_ci99(&[]), Err(MetricsError::TooFewSamples(0))));
    }

    fn raw(mode: Mode, spots: u32, rep: u32, s: f64) -> RawRow {
        RawRow { mode, pb0: 0.01, spots, redundancy: 2, rep, seed: 100 + rep as u64, str: s }
    }

    #[test]
    fn raw_header_only_when_empty() {
        let mut buf = Vec::new();
        write_raw(&[], &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "mode,pb0,spots,redundancy,rep,seed,str\n");
    }

    #[test]
    fn raw_round_trips_at_full_precision() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("raw.csv");
        let rows = vec![
            raw(Mode::STANDARD, 32, 0, 1.0 / 3.0),
            raw(Mode::STANDARD, 32, 1, 0.1 + 0.2),
            raw(Mode::ALL[8], 64, 0, 0.6),
            raw(Mode::ALL[8], 64, 1, 0.0),
        ];
        export_raw(&rows, &path).unwrap();
        assert_eq!(read_raw(&path).unwrap(), rows);
    }

    #[test]
    fn aggregation_matches_raw_means() {
        let rows = vec![
            raw(Mode::STANDARD, 32, 0, 0.61),
            raw(Mode::STANDARD, 32, 1, 0.65),
            raw(Mode::STANDARD, 64, 0, 0.5),
            raw(Mode::STANDARD, 64, 1, 0.5),
        ];
        let agg = aggregate(&rows);
        assert_eq!(agg.len(), 2);
        assert_eq!(agg[0].str_mean, sorted_mean(&[0.61, 0.65]));
        assert_eq!(agg[1].ci99_half, 0.0);
        assert_eq!(agg[0].n_reps, 2);
    }

    fn usecase_like(modes: Vec<Mode>) -> GridSpec {
        GridSpec {
            pb0_values: vec![0.1, 0.01, 0.001],
            points: [32, 64].iter().flat_map(|&s| (1..=5).map(move |n| (s, n))).collect(),
            modes,
            reps: 2,
        }
    }

    fn fill(grid: &GridSpec) -> Vec<StrReport> {
        grid.grid_points()
            .into_iter()
            .map(|p| StrReport {
                mode: p.mode,
                pb0: p.pb0,
                spots: p.spots,
                redundancy: p.redundancy,
                n_reps: 2,
                str_mean: 0.6,
                ci99_half: 0.0,
            })
            .collect()
    }

    #[test]
    fn full_mesh_has_270_rows() {
        let grid = usecase_like(Mode::ALL.to_vec());
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("mesh.csv");
        export_mesh(&fill(&grid), &grid, &path).unwrap();
        let back = read_mesh(&path).unwrap();
        assert_eq!(back.len(), 270);
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("mode,pb0,spots,redundancy,n_reps,str_mean,str_ci99_half\n"));
    }

    #[test]
    fn missing_point_is_named() {
        let grid = usecase_like(vec![Mode::STANDARD]);
        let mut reports = fill(&grid);
        reports.retain(|r| !(r.pb0 == 0.01 && r.spots == 64 && r.redundancy == 3));
        let dir = tempfile::tempdir().unwrap();
        let err = export_mesh(&reports, &grid, &dir.path().join("m.csv")).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("pb0=0.01, spots=64, redundancy=3"), "{msg}");
        assert!(!dir.path().join("m.csv").exists());
    }

    #[test]
    fn summary_of_constant_mesh() {
        let grid = usecase_like(Mode::ALL.to_vec());
        let summary = summarize(&fill(&grid));
        assert_eq!(summary.len(), 9);
        for s in &summary {
            assert_eq!((s.max, s.mean, s.points), (0.6, 0.6, 30));
        }
        let table = format_table(&summary[..1]);
        assert!(table.contains("Standard") && table.contains("0.600"));
    }

    #[test]
    fn io_errors_carry_the_path() {
        let err = export_raw(&[], Path::new("/nonexistent-dir/raw.csv")).unwrap_err();
        assert!(err.to_string().contains("/nonexistent-dir/raw.csv"));
    }

    proptest! {
        #[test]
        fn str_is_permutation_invariant(mut bits in prop::collection::vec(any::<bool>(), 1..200), seed in any::<u64>()) {
            let a = str(&bits.iter().map(|&b| res(b)).collect::<Vec<_>>()).unwrap();
            let k = (seed as usize) % bits.len();
            bits.rotate_left(k);
            bits.reverse();
            let b = str(&bits.iter().map(|&b| res(b)).collect::<Vec<_>>()).unwrap();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn mean_is_order_independent(mut xs in prop::collection::vec(0.0f64..=1.0, 2..40)) {
            let (m1, h1) = mean_ci99(&xs).unwrap();
            xs.reverse();
            let (m2, h2) = mean_ci99(&xs).unwrap();
            prop_assert_eq!(m1, m2);
            prop_assert_eq!(h1, h2);
            prop_assert!(h1 >= 0.0);
        }
    }
}
