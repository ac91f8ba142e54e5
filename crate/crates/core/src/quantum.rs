// Copyright 2026 The permafrost-trust Authors.
// SPDX-License-Identifier: Apache-2.0

//! Abstract quantum link layer.
//!
//! Entangled pairs are generated at a Poisson rate into a bounded buffer and
//! consumed by quantum-assisted transmissions. Two closed-form combiners model
//! the channel gains: super-additivity across joint channel uses and
//! superposition of two trajectories.

use thiserror::Error;

use crate::engine::{RandomStream, SimTime};
use crate::netmodel::{DropReason, Message, TransmitOutcome};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QuantumError {
    #[error("at least one channel probability is required")]
    NoChannels,
    #[error("{name} = {value} is out of range")]
    OutOfRange { name: &'static str, value: f64 },
}

/// `1 - prod(1 - p_i)^alpha`, clamped to `[0, 1]`.
pub fn superadditive_success(ps: &[f64], alpha: f64) -> Result<f64, QuantumError> {
    if ps.is_empty() {
        return Err(QuantumError::NoChannels);
    }
    let miss: f64 = ps.iter().map(|p| 1.0 - p.clamp(0.0, 1.0)).product();
    Ok((1.0 - miss.powf(alpha)).clamp(0.0, 1.0))
}

/// Best path plus a `beta`-weighted share of the weaker path's help.
pub fn superposed_success(p1: f64, p2: f64, beta: f64) -> f64 {
    let (hi, lo) = if p1 >= p2 { (p1, p2) } else { (p2, p1) };
    (hi + beta * lo * (1.0 - hi)).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantumParams {
    pub p_channel: f64,
    pub alpha: f64,
    pub beta: f64,
    pub pairs_per_msg: u32,
    /// Pairs per second.
    pub gen_rate: f64,
    pub buffer_cap: u64,
    /// Share of the classical payload still carried classically.
    pub rho: f64,
}

impl Default for QuantumParams {
    fn default() -> Self {
        QuantumParams {
            p_channel: 0.8,
            alpha: 1.2,
            beta: 0.5,
            pairs_per_msg: 2,
            gen_rate: 10.0,
            buffer_cap: 1000,
            rho: 0.25,
        }
    }
}

impl QuantumParams {
    pub fn validate(&self) -> Vec<QuantumError> {
        let mut errs = Vec::new();
        let mut check = |name, value: f64, ok: bool| {
            if !ok {
                errs.push(QuantumError::OutOfRange { name, value });
            }
        };
        check("p_channel", self.p_channel, (0.0..=1.0).contains(&self.p_channel));
        check("alpha", self.alpha, self.alpha >= 1.0 && self.alpha.is_finite());
        check("beta", self.beta, (0.0..=1.0).contains(&self.beta));
        check("gen_rate", self.gen_rate, self.gen_rate >= 0.0 && self.gen_rate.is_finite());
        check("rho", self.rho, self.rho > 0.0 && self.rho <= 1.0);
        errs
    }

    /// Per-use success of one assisted transmission.
    pub fn effective_success(&self) -> f64 {
        let n = self.pairs_per_msg.max(1) as usize;
        let q = superadditive_success(&vec![self.p_channel; n], self.alpha)
            .expect("pairs_per_msg is at least one");
        superposed_success(q, q, self.beta)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct QuantumStats {
    pub generated: u64,
    pub consumed: u64,
    pub attempts: u64,
    pub failures: u64,
    pub fallbacks: u64,
}

#[derive(Debug, Clone)]
pub struct QuantumLink {
    pub params: QuantumParams,
    pair_buffer: u64,
    /// Instant up to which generation has been accounted for.
    generated_until: SimTime,
    p_eff: f64,
    stats: QuantumStats,
}

impl QuantumLink {
    /// A link whose buffer starts full.
    pub fn new(params: QuantumParams) -> Self {
        QuantumLink {
            pair_buffer: params.buffer_cap,
            generated_until: SimTime::ZERO,
            p_eff: params.effective_success(),
            params,
            stats: QuantumStats {
                generated: params.buffer_cap,
                ..Default::default()
            },
        }
    }

    pub fn with_pairs(params: QuantumParams, pairs: u64) -> Self {
        let mut link = QuantumLink::new(params);
        link.pair_buffer = pairs.min(params.buffer_cap);
        link.stats.generated = link.pair_buffer;
        link
    }

    pub fn pairs(&self) -> u64 {
        self.pair_buffer
    }

    pub fn stats(&self) -> &QuantumStats {
        &self.stats
    }

    pub fn effective_success(&self) -> f64 {
        self.p_eff
    }

    /// Brings generation up to `now`.
    pub fn refill(&mut self, now: SimTime, stream: &mut RandomStream) {
        if now > self.generated_until {
            let dt = now.saturating_sub(self.generated_until).as_secs_f64();
            self.generated_until = now;
            entanglement_step(self, dt, stream);
        }
    }
}

/// Adds `Poisson(gen_rate * dt)` pairs, truncated at the buffer cap. Returns
/// the number of pairs actually stored.
pub fn entanglement_step(link: &mut QuantumLink, dt: f64, stream: &mut RandomStream) -> u64 {
    debug_assert!(dt > 0.0);
    let lambda = link.params.gen_rate * dt;
    if lambda <= 0.0 || link.pair_buffer >= link.params.buffer_cap {
        return 0;
    }
    let drawn = stream.poisson(lambda);
    let added = drawn.min(link.params.buffer_cap - link.pair_buffer);
    link.pair_buffer += added;
    link.stats.generated += added;
    added
}

/// Sends `msg` with quantum assistance. `classical` carries a payload of the
/// given size over the underlying classical medium: the rho-scaled residual on
/// success, or the full message when pairs are short.
pub fn quantum_transmit<F>(
    link: &mut QuantumLink,
    msg: &Message,
    now: SimTime,
    stream: &mut RandomStream,
    classical: F,
) -> TransmitOutcome
where
    F: FnOnce(u32) -> TransmitOutcome,
{
    link.refill(now, stream);
    let need = link.params.pairs_per_msg as u64;
    // Always draw so the quantum stream does not depend on buffer state.
    let u = stream.uniform();
    if link.pair_buffer < need {
        link.stats.fallbacks += 1;
        return classical(msg.size_bits());
    }
    link.pair_buffer -= need;
    link.stats.consumed += need;
    link.stats.attempts += 1;
    if u >= link.p_eff {
        link.stats.failures += 1;
        return TransmitOutcome::Dropped(DropReason::Loss);
    }
    classical(residual_bits(msg.size_bits(), link.params.rho))
}

/// Classical residual of an assisted message, never below one bit.
pub fn residual_bits(size_bits: u32, rho: f64) -> u32 {
    ((size_bits as f64 * rho).round() as u32).max(1)
}
