// Copyright 2026 The permafrost-trust Authors.
// SPDX-License-Identifier: Apache-2.0

//! Reputation-based filtering of sensors.
//!
//! Each concentrator keeps, per sensor, the ordered history of feedback bits.
//! The reputation blends a short-term opinion (mean of the last `window`
//! bits) with a long-term one (mean of the whole history); sensors below
//! `theta` are left out of the service.

use thiserror::Error;

use crate::engine::SimTime;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SocialError {
    #[error("sensor {0} is not registered")]
    UnknownSensor(u32),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SocialParams {
    pub window: usize,
    pub w_short: f64,
    pub w_long: f64,
    pub theta: f64,
}

impl Default for SocialParams {
    fn default() -> Self {
        SocialParams {
            window: 10,
            w_short: 0.5,
            w_long: 0.5,
            theta: 0.4,
        }
    }
}

/// Opinion assigned to a sensor with no history.
pub const NEUTRAL: f64 = 0.5;

#[derive(Debug, Clone, Default)]
struct History {
    bits: Vec<bool>,
    positives: u64,
    last_at: Option<SimTime>,
}

#[derive(Debug, Clone)]
pub struct ReputationTable {
    pub params: SocialParams,
    histories: Vec<History>,
}

impl ReputationTable {
    /// Registers sensors `0..sensors`.
    pub fn new(sensors: usize, params: SocialParams) -> Self {
        ReputationTable {
            params,
            histories: vec![History::default(); sensors],
        }
    }

    pub fn sensors(&self) -> usize {
        self.histories.len()
    }

    pub fn history(&self, sensor: u32) -> Result<&[bool], SocialError> {
        self.histories
            .get(sensor as usize)
            .map(|h| h.bits.as_slice())
            .ok_or(SocialError::UnknownSensor(sensor))
    }

    /// Long-term opinion: mean of every recorded bit.
    pub fn long_term(&self, sensor: u32) -> f64 {
        let h = &self.histories[sensor as usize];
        if h.bits.is_empty() {
            NEUTRAL
        } else {
            h.positives as f64 / h.bits.len() as f64
        }
    }

    /// Short-term opinion: mean of the last `window` bits.
    pub fn short_term(&self, sensor: u32) -> f64 {
        let bits = &self.histories[sensor as usize].bits;
        let tail = &bits[bits.len().saturating_sub(self.params.window)..];
        if tail.is_empty() {
            NEUTRAL
        } else {
            tail.iter().filter(|&&b| b).count() as f64 / tail.len() as f64
        }
    }
}

pub fn record_feedback(
    table: &mut ReputationTable,
    sensor: u32,
    outcome: bool,
    now: SimTime,
) -> Result<(), SocialError> {
    let h = table
        .histories
        .get_mut(sensor as usize)
        .ok_or(SocialError::UnknownSensor(sensor))?;
    h.bits.push(outcome);
    h.positives += outcome as u64;
    h.last_at = Some(now);
    Ok(())
}

/// Blended opinion in `[0, 1]`.
pub fn reputation(table: &ReputationTable, sensor: u32) -> f64 {
    let p = &table.params;
    (p.w_short * table.short_term(sensor) + p.w_long * table.long_term(sensor)).clamp(0.0, 1.0)
}

/// Sensors of `cluster` whose reputation reaches `theta`. Never empty for a
/// non-empty cluster: if nobody qualifies, the best-reputed sensor (lowest id
/// on ties) is kept alone.
pub fn trusted_set(table: &ReputationTable, cluster: &[u32], theta: f64) -> Vec<u32> {
    debug_assert!(!cluster.is_empty());
    let trusted: Vec<u32> = cluster
        .iter()
        .copied()
        .filter(|&s| reputation(table, s) >= theta)
        .collect();
    if !trusted.is_empty() {
        return trusted;
    }
    let mut best: Option<(u32, f64)> = None;
    for &s in cluster {
        let r = reputation(table, s);
        match best {
            Some((b, br)) if br > r || (br == r && b < s) => {}
            _ => best = Some((s, r)),
        }
    }
    best.map(|(s, _)| vec![s]).unwrap_or_default()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{RandomStream, StreamId, StreamPurpose};
    use proptest::prelude::*;

    fn table(n: usize) -> ReputationTable {
        ReputationTable::new(n, SocialParams::default())
    }

    fn feed(t: &mut ReputationTable, s: u32, bits: &[bool]) {
        for &b in bits {
            record_feedback(t, s, b, SimTime::ZERO).unwrap();
        }
    }

    #[test]
    fn append_grows_history() {
        let mut t = table(2);
        feed(&mut t, 0, &[true]);
        assert_eq!(t.history(0).unwrap(), &[true]);
        feed(&mut t, 1, &[false; 20]);
        assert_eq!(t.history(1).unwrap().len(), 20);
    }

    #[test]
    fn unknown_sensor_is_an_error() {
        let mut t = table(1);
        assert_eq!(
            record_feedback(&mut t, 3, true, SimTime::ZERO),
            Err(SocialError::UnknownSensor(3))
        );
    }

    #[test]
    fn reputation_examples() {
        let mut t = table(3);
        assert_eq!(reputation(&t, 0), 0.5);
        feed(&mut t, 1, &[true; 20]);
        assert_eq!(reputation(&t, 1), 1.0);
        feed(&mut t, 2, &[true; 10]);
        feed(&mut t, 2, &[false; 10]);
        assert_eq!(reputation(&t, 2), 0.25);
    }

    #[test]
    fn trusted_set_examples() {
        let mut t = table(4);
        assert_eq!(trusted_set(&t, &[0, 1, 2, 3], 0.4), vec![0, 1, 2, 3]);
        feed(&mut t, 2, &[true; 10]);
        feed(&mut t, 2, &[false; 10]);
        assert_eq!(trusted_set(&t, &[0, 1, 2, 3], 0.4), vec![0, 1, 3]);
        // Everyone below theta: keep the best one.
        feed(&mut t, 0, &[false; 4]);
        feed(&mut t, 1, &[false; 3]);
        feed(&mut t, 3, &[false, false, true]);
        assert_eq!(trusted_set(&t, &[0, 1, 2, 3], 0.4), vec![3]);
    }

    #[test]
    fn starvation_guard_breaks_ties_by_lowest_id() {
        let mut t = table(3);
        for s in 0..3 {
            feed(&mut t, s, &[false]);
        }
        assert_eq!(trusted_set(&t, &[2, 1, 0], 0.4), vec![0]);
    }

    #[test]
    fn long_term_converges_to_feedback_rate() {
        let mut t = table(1);
        let mut s = RandomStream::new(3, StreamId::new(StreamPurpose::Scratch, 0));
        let q = 0.73;
        for _ in 0..10_000 {
            let b = s.bernoulli(q);
            record_feedback(&mut t, 0, b, SimTime::ZERO).unwrap();
        }
        assert!((t.long_term(0) - q).abs() < 0.02);
    }

    proptest! {
        #[test]
        fn reputation_is_bounded(bits in prop::collection::vec(any::<bool>(), 0..200),
                                 window in 1usize..30, ws in 0.0f64..=1.0) {
            let params = SocialParams { window, w_short: ws, w_long: 1.0 - ws, theta: 0.4 };
            let mut t = ReputationTable::new(1, params);
            feed(&mut t, 0, &bits);
            let r = reputation(&t, 0);
            prop_assert!((0.0..=1.0).contains(&r));
        }

        #[test]
        fn raising_theta_never_enlarges_the_set(
            hist in prop::collection::vec(prop::collection::vec(any::<bool>(), 0..30), 1..8),
            lo in 0.0f64..=1.0, dt in 0.0f64..=0.5,
        ) {
            let mut t = table(hist.len());
            for (s, bits) in hist.iter().enumerate() {
                feed(&mut t, s as u32, bits);
            }
            let cluster: Vec<u32> = (0..hist.len() as u32).collect();
            let hi = lo + dt;
            let strict = |th: f64| -> Vec<u32> {
                cluster.iter().copied().filter(|&s| reputation(&t, s) >= th).collect()
            };
            let (a, b) = (strict(lo), strict(hi));
            prop_assert!(b.iter().all(|s| a.contains(s)));
            // The public filter agrees with the strict one whenever no guard applies.
            if !b.is_empty() {
                prop_assert_eq!(trusted_set(&t, &cluster, hi), b);
            }
        }
    }
}
