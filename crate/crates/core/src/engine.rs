// Copyright 2026 The permafrost-trust Authors.
// SPDX-License-Identifier: Apache-2.0

//! Deterministic discrete-event core.
//!
//! Time is an integer count of microseconds so ordering and tie-breaking are
//! exact on every platform. Events at the same instant fire in the order they
//! were scheduled. Randomness comes from per-consumer ChaCha streams: every
//! `(master_seed, StreamId)` pair owns an independent keystream, so the order
//! in which consumers draw never couples their sequences.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashSet};
use std::fmt;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Poisson};

use crate::harness::SimConfig;
use crate::telemetry::{Scenario, TransactionResolution};

const MICROS_PER_SEC: f64 = 1_000_000.0;

/// Simulation time in integer microseconds since run start.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct SimTime(u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);

    pub const fn from_micros(us: u64) -> Self {
        SimTime(us)
    }

    pub const fn from_secs(s: u64) -> Self {
        SimTime(s * 1_000_000)
    }

    /// Rounds to the nearest microsecond. Negative and non-finite inputs clamp to zero.
    pub fn from_secs_f64(s: f64) -> Self {
        if !(s > 0.0) {
            return SimTime(0);
        }
        SimTime((s * MICROS_PER_SEC).round() as u64)
    }

    pub const fn as_micros(self) -> u64 {
        self.0
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / MICROS_PER_SEC
    }

    pub fn plus(self, span: SimTime) -> SimTime {
        SimTime(self.0 + span.0)
    }

    pub fn plus_secs(self, s: f64) -> SimTime {
        self.plus(SimTime::from_secs_f64(s))
    }

    pub fn saturating_sub(self, other: SimTime) -> SimTime {
        SimTime(self.0.saturating_sub(other.0))
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.6}s", self.as_secs_f64())
    }
}

/// Which consumer a random stream belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u16)]
pub enum StreamPurpose {
    Run = 1,
    Sensing = 2,
    SensorQuality = 3,
    LoraLink = 4,
    NvisLink = 5,
    NvisAvailability = 6,
    NvisFade = 7,
    Quantum = 8,
    Schedule = 9,
    Consensus = 10,
    /// Free for tests and standalone drivers.
    Scratch = 0xFFFF,
}

/// Label identifying the consumer of a random stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamId {
    pub purpose: StreamPurpose,
    pub index: u32,
}

impl StreamId {
    pub const fn new(purpose: StreamPurpose, index: u32) -> Self {
        StreamId { purpose, index }
    }

    fn word(self) -> u64 {
        ((self.purpose as u64) << 32) | self.index as u64
    }
}

/// Seeded random stream owned by one consumer.
#[derive(Debug, Clone)]
pub struct RandomStream {
    rng: ChaCha8Rng,
}

impl RandomStream {
    pub fn new(master_seed: u64, id: StreamId) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
        rng.set_stream(id.word());
        RandomStream { rng }
    }

    /// Uniform draw in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// True with probability `p`. Always consumes exactly one draw.
    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    /// Exponential draw with the given mean (seconds, usually).
    pub fn exponential(&mut self, mean: f64) -> f64 {
        if mean <= 0.0 {
            return 0.0;
        }
        Exp::new(1.0 / mean)
            .expect("positive rate")
            .sample(&mut self.rng)
    }

    /// Independent child stream seeded from this one.
    pub fn fork(&mut self) -> RandomStream {
        RandomStream {
            rng: ChaCha8Rng::seed_from_u64(self.rng.next_u64()),
        }
    }

    pub fn poisson(&mut self, lambda: f64) -> u64 {
        if lambda <= 0.0 {
            return 0;
        }
        let x: f64 = Poisson::new(lambda)
            .expect("positive lambda")
            .sample(&mut self.rng);
        x as u64
    }
}

impl RngCore for RandomStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}

/// What an event does when it fires. Payloads are plain indices into the
/// scenario's tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    MeasurementRound { spot: u32, round: u32 },
    LinkTransition { concentrator: u16, process: LinkProcess },
    MessageDelivery { message: u32 },
    ConsensusTimeout { instance: u32, attempt: u8 },
    DtnFlush { concentrator: u16 },
    EntanglementTick { concentrator: u16 },
    TransactionDeadline { spot: u32, round: u32 },
}

/// The two stochastic processes driving an NVIS uplink.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LinkProcess {
    Availability,
    Fade,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Event {
    pub at: SimTime,
    pub seq: u64,
    pub kind: EventKind,
}

impl Ord for Event {
    fn cmp(&self, other: &Self) -> Ordering {
        // BinaryHeap is a max-heap; invert so the earliest (at, seq) pops first.
        (other.at, other.seq).cmp(&(self.at, self.seq))
    }
}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Handle returned by [`Scheduler::schedule`], usable for cancellation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct EventId(u64);

/// Clock plus pending-event queue ordered by `(at, seq)`.
#[derive(Debug)]
pub struct Scheduler {
    now: SimTime,
    next_seq: u64,
    queue: BinaryHeap<Event>,
    cancelled: HashSet<u64>,
    horizon: SimTime,
    processed: u64,
    digest: u64,
}

impl Scheduler {
    /// Events strictly after `horizon` are never delivered.
    pub fn new(horizon: SimTime) -> Self {
        Scheduler {
            now: SimTime::ZERO,
            next_seq: 0,
            queue: BinaryHeap::new(),
            cancelled: HashSet::new(),
            horizon,
            processed: 0,
            digest: FNV_OFFSET,
        }
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn horizon(&self) -> SimTime {
        self.horizon
    }

    /// Enqueues an event.
    ///
    /// Scheduling before the current clock is a logic error in the caller and
    /// aborts the run.
    pub fn schedule(&mut self, at: SimTime, kind: EventKind) -> EventId {
        assert!(
            at >= self.now,
            "event {kind:?} scheduled at {at} but the clock is already at {}",
            self.now
        );
        let seq = self.next_seq;
        self.next_seq += 1;
        self.queue.push(Event { at, seq, kind });
        EventId(seq)
    }

    /// Cancels a pending event. Returns false if it already fired or was cancelled.
    pub fn cancel(&mut self, id: EventId) -> bool {
        if id.0 >= self.next_seq {
            return false;
        }
        if !self.queue.iter().any(|e| e.seq == id.0) {
            return false;
        }
        self.cancelled.insert(id.0)
    }

    pub fn pending(&self) -> usize {
        self.queue.len() - self.cancelled.len()
    }

    /// Pops the next live event at or before the horizon and advances the clock.
    pub fn next_event(&mut self) -> Option<Event> {
        loop {
            let head = self.queue.peek()?;
            if head.at > self.horizon {
                return None;
            }
            let ev = self.queue.pop().expect("peeked");
            if !self.cancelled.is_empty() && self.cancelled.remove(&ev.seq) {
                continue;
            }
            debug_assert!(ev.at >= self.now, "clock moved backwards");
            self.now = ev.at;
            self.processed += 1;
            self.digest = fnv_mix(self.digest, ev.at.as_micros());
            self.digest = fnv_mix(self.digest, kind_word(&ev.kind));
            return Some(ev);
        }
    }

    /// Time of the earliest queued event (cancelled ones included).
    pub fn peek_time(&self) -> Option<SimTime> {
        self.queue.peek().map(|e| e.at)
    }

    pub fn processed(&self) -> u64 {
        self.processed
    }

    /// Order-sensitive digest of every event processed so far.
    pub fn trace_digest(&self) -> u64 {
        self.digest
    }
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv_mix(mut h: u64, word: u64) -> u64 {
    for b in word.to_le_bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

fn kind_word(kind: &EventKind) -> u64 {
    match *kind {
        EventKind::MeasurementRound { spot, round } => (1 << 60) | ((spot as u64) << 32) | round as u64,
        EventKind::LinkTransition { concentrator, process } => {
            (2 << 60) | ((concentrator as u64) << 8) | process as u64
        }
        EventKind::MessageDelivery { message } => (3 << 60) | message as u64,
        EventKind::ConsensusTimeout { instance, attempt } => {
            (4 << 60) | ((instance as u64) << 8) | attempt as u64
        }
        EventKind::DtnFlush { concentrator } => (5 << 60) | concentrator as u64,
        EventKind::EntanglementTick { concentrator } => (6 << 60) | concentrator as u64,
        EventKind::TransactionDeadline { spot, round } => {
            (7 << 60) | ((spot as u64) << 32) | round as u64
        }
    }
}

/// Traffic counters for one run. Every classical transmission attempt lands in
/// exactly one of the four outcome buckets.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TrafficCounters {
    pub offered: u64,
    pub delivered: u64,
    pub dropped_congestion: u64,
    pub dropped_loss: u64,
    pub dtn_expired: u64,
    pub dtn_buffered: u64,
    pub quantum_attempts: u64,
    pub quantum_failures: u64,
    pub quantum_fallbacks: u64,
    pub consensus_messages: u64,
    pub data_reports: u64,
    pub feedback_messages: u64,
}

/// Everything a single run produces.
#[derive(Debug, Clone, PartialEq)]
pub struct RunStats {
    pub master_seed: u64,
    pub resolutions: Vec<TransactionResolution>,
    pub traffic: TrafficCounters,
    pub nvis_availability: f64,
    pub events_processed: u64,
    pub trace_digest: u64,
}

/// Executes one simulated run. Identical `(config, master_seed)` yield
/// bit-identical results.
pub fn run(config: &SimConfig, master_seed: u64) -> RunStats {
    Scenario::new(config, master_seed).run()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn round(spot: u32) -> EventKind {
        EventKind::MeasurementRound { spot, round: 0 }
    }

    #[test]
    fn event_at_now_fires_first() {
        let mut s = Scheduler::new(SimTime::from_secs(10));
        s.schedule(SimTime::from_secs(1), round(1));
        s.schedule(SimTime::ZERO, round(0));
        let ev = s.next_event().unwrap();
        assert_eq!(ev.at, SimTime::ZERO);
        assert_eq!(ev.kind, round(0));
    }

    #[test]
    fn equal_times_fire_in_insertion_order() {
        let mut s = Scheduler::new(SimTime::from_secs(10));
        let t = SimTime::from_secs(3);
        for spot in 0..5 {
            s.schedule(t, round(spot));
        }
        let order: Vec<_> = std::iter::from_fn(|| s.next_event()).map(|e| e.kind).collect();
        assert_eq!(order, (0..5).map(round).collect::<Vec<_>>());
    }

    #[test]
    fn event_exactly_at_horizon_fires() {
        let horizon = SimTime::from_secs(400 * 86_400);
        let mut s = Scheduler::new(horizon);
        s.schedule(SimTime::from_secs(86_400), round(0));
        s.schedule(horizon, round(1));
        s.schedule(horizon.plus(SimTime::from_micros(1)), round(2));
        let fired: Vec<_> = std::iter::from_fn(|| s.next_event()).collect();
        assert_eq!(fired.len(), 2);
        assert_eq!(fired[1].at, horizon);
        assert_eq!(fired[1].kind, round(1));
    }

    #[test]
    #[should_panic(expected = "scheduled at")]
    fn scheduling_in_the_past_halts() {
        let mut s = Scheduler::new(SimTime::from_secs(10));
        s.schedule(SimTime::from_secs(5), round(0));
        s.next_event();
        s.schedule(SimTime::from_secs(4), round(1));
    }

    #[test]
    fn cancelled_events_never_fire() {
        let mut s = Scheduler::new(SimTime::from_secs(10));
        let a = s.schedule(SimTime::from_secs(1), round(0));
        s.schedule(SimTime::from_secs(2), round(1));
        assert!(s.cancel(a));
        assert!(!s.cancel(a));
        assert_eq!(s.pending(), 1);
        let fired: Vec<_> = std::iter::from_fn(|| s.next_event()).collect();
        assert_eq!(fired.len(), 1);
        assert_eq!(fired[0].kind, round(1));
        assert!(!s.cancel(a));
    }

    #[test]
    fn clock_is_monotone() {
        let mut s = Scheduler::new(SimTime::from_secs(1_000));
        let mut rng = RandomStream::new(7, StreamId::new(StreamPurpose::Scratch, 0));
        for i in 0..500 {
            let at = SimTime::from_secs_f64(rng.uniform_range(0.0, 900.0));
            s.schedule(at, round(i));
        }
        let mut last = SimTime::ZERO;
        while let Some(ev) = s.next_event() {
            assert!(ev.at >= last);
            last = ev.at;
            if ev.seq % 7 == 0 {
                s.schedule(ev.at.plus_secs(3.0), round(9_999));
            }
        }
    }

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let id = StreamId::new(StreamPurpose::Sensing, 12);
        let mut a = RandomStream::new(42, id);
        let mut b = RandomStream::new(42, id);
        let xs: Vec<u64> = (0..16).map(|_| a.next_u64()).collect();
        let ys: Vec<u64> = (0..16).map(|_| b.next_u64()).collect();
        assert_eq!(xs, ys);

        let mut c = RandomStream::new(42, StreamId::new(StreamPurpose::Sensing, 13));
        let zs: Vec<u64> = (0..16).map(|_| c.next_u64()).collect();
        assert_ne!(xs, zs);

        let mut d = RandomStream::new(43, id);
        assert_ne!(xs[0], d.next_u64());
    }

    #[test]
    fn draw_order_between_streams_does_not_matter() {
        let ida = StreamId::new(StreamPurpose::LoraLink, 0);
        let idb = StreamId::new(StreamPurpose::LoraLink, 1);
        let (mut a1, mut b1) = (RandomStream::new(5, ida), RandomStream::new(5, idb));
        let interleaved: Vec<(f64, f64)> = (0..32).map(|_| (a1.uniform(), b1.uniform())).collect();

        let (mut a2, mut b2) = (RandomStream::new(5, ida), RandomStream::new(5, idb));
        let bs: Vec<f64> = (0..32).map(|_| b2.uniform()).collect();
        let as_: Vec<f64> = (0..32).map(|_| a2.uniform()).collect();
        for (i, (x, y)) in interleaved.iter().enumerate() {
            assert_eq!(*x, as_[i]);
            assert_eq!(*y, bs[i]);
        }
    }

    #[test]
    fn time_conversions_round_trip() {
        assert_eq!(SimTime::from_secs(2).as_micros(), 2_000_000);
        assert_eq!(SimTime::from_secs_f64(0.1666666).as_micros(), 166_667);
        assert_eq!(SimTime::from_secs_f64(-3.0), SimTime::ZERO);
        assert_eq!(SimTime::from_secs(5).saturating_sub(SimTime::from_secs(9)), SimTime::ZERO);
    }
}
