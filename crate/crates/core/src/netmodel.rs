// Copyright 2026 The permafrost-trust Authors.
// SPDX-License-Identifier: Apache-2.0

//! Classical communication models.
//!
//! A [`SharedMedium`] is a single FIFO transmitter with drop-tail admission:
//! it backs both the LoRa access channel of a concentrator area and the NVIS
//! uplink of that concentrator. The NVIS uplink adds an on/off availability
//! process, ionospheric fades that shrink the usable frame length, and a
//! delay-tolerant bundle store that holds traffic while the link is down.

use std::collections::VecDeque;

use thiserror::Error;

use crate::engine::{RandomStream, SimTime};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NetError {
    #[error("message size must be positive")]
    EmptyMessage,
    #[error("link capacity must be positive, got {0}")]
    ZeroCapacity(f64),
    #[error("buffer must hold at least one message")]
    NoBuffer,
    #[error("loss probability {0} outside [0, 1]")]
    LossOutOfRange(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkParams {
    /// Bits per second.
    pub capacity: f64,
    /// Maximum number of messages in the system (queued plus in service).
    pub buffer_slots: usize,
    /// Probability that a transmission is lost on air.
    pub base_loss: f64,
}

impl LinkParams {
    pub fn new(capacity: f64, buffer_slots: usize, base_loss: f64) -> Result<Self, NetError> {
        let p = LinkParams {
            capacity,
            buffer_slots,
            base_loss,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), NetError> {
        if !(self.capacity > 0.0) || !self.capacity.is_finite() {
            return Err(NetError::ZeroCapacity(self.capacity));
        }
        if self.buffer_slots == 0 {
            return Err(NetError::NoBuffer);
        }
        if !(0.0..=1.0).contains(&self.base_loss) {
            return Err(NetError::LossOutOfRange(self.base_loss));
        }
        Ok(())
    }
}

/// Seconds needed to put `size_bits` on a link of `capacity` bits/s.
pub fn airtime(size_bits: u32, capacity: f64) -> f64 {
    debug_assert!(capacity > 0.0);
    size_bits as f64 / capacity
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum NodeId {
    Sensor(u32),
    Concentrator(u16),
    ControlCenter,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TxId {
    pub spot: u32,
    pub round: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MessageKind {
    DataReport,
    PrePrepare,
    Prepare,
    Commit,
    RepFeedback,
    FqcCoordination,
    Ack,
}

impl MessageKind {
    pub fn is_consensus(self) -> bool {
        matches!(
            self,
            MessageKind::PrePrepare
                | MessageKind::Prepare
                | MessageKind::Commit
                | MessageKind::FqcCoordination
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Message {
    pub src: NodeId,
    pub dst: NodeId,
    pub kind: MessageKind,
    size_bits: u32,
    pub tx: TxId,
}

impl Message {
    pub fn new(
        src: NodeId,
        dst: NodeId,
        kind: MessageKind,
        size_bits: u32,
        tx: TxId,
    ) -> Result<Self, NetError> {
        if size_bits == 0 {
            return Err(NetError::EmptyMessage);
        }
        Ok(Message {
            src,
            dst,
            kind,
            size_bits,
            tx,
        })
    }

    pub fn size_bits(&self) -> u32 {
        self.size_bits
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DropReason {
    Congestion,
    Loss,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransmitOutcome {
    Delivered { at: SimTime },
    Dropped(DropReason),
    /// Held by the delay-tolerant store until the link comes back.
    Buffered,
}

/// Per-link outcome counters.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LinkStats {
    pub offered: u64,
    /// Sum of the sizes of all offered frames.
    pub offered_bits: u64,
    pub delivered: u64,
    pub dropped_congestion: u64,
    pub dropped_loss: u64,
    pub buffered: u64,
    pub dtn_expired: u64,
}

impl LinkStats {
    fn record(&mut self, outcome: &TransmitOutcome) {
        match outcome {
            TransmitOutcome::Delivered { .. } => self.delivered += 1,
            TransmitOutcome::Dropped(DropReason::Congestion) => self.dropped_congestion += 1,
            TransmitOutcome::Dropped(DropReason::Loss) => self.dropped_loss += 1,
            TransmitOutcome::Buffered => self.buffered += 1,
        }
    }
}

/// FIFO transmitter with drop-tail admission.
#[derive(Debug, Clone)]
pub struct SharedMedium {
    params: LinkParams,
    /// Departure instants of the messages currently in the system.
    in_system: VecDeque<SimTime>,
    stats: LinkStats,
}

impl SharedMedium {
    pub fn new(params: LinkParams) -> Self {
        SharedMedium {
            params,
            in_system: VecDeque::new(),
            stats: LinkStats::default(),
        }
    }

    pub fn params(&self) -> &LinkParams {
        &self.params
    }

    pub fn stats(&self) -> &LinkStats {
        &self.stats
    }

    /// Messages queued or in service at `now`.
    pub fn occupancy(&mut self, now: SimTime) -> usize {
        while self.in_system.front().is_some_and(|&d| d <= now) {
            self.in_system.pop_front();
        }
        self.in_system.len()
    }

    /// Offers a message of `size_bits` to the medium. `frame_limit`, when set,
    /// makes any longer frame fail on air.
    fn offer(
        &mut self,
        size_bits: u32,
        now: SimTime,
        frame_limit: Option<f64>,
        stream: &mut RandomStream,
    ) -> TransmitOutcome {
        self.stats.offered += 1;
        self.stats.offered_bits += size_bits as u64;
        let outcome = if self.occupancy(now) >= self.params.buffer_slots {
            TransmitOutcome::Dropped(DropReason::Congestion)
        } else {
            let start = self.in_system.back().copied().unwrap_or(now).max(now);
            let depart = start.plus_secs(airtime(size_bits, self.params.capacity));
            self.in_system.push_back(depart);
            // One draw per admitted frame keeps the loss stream aligned.
            let lost_on_air = stream.bernoulli(self.params.base_loss);
            let too_long = frame_limit.is_some_and(|limit| size_bits as f64 > limit);
            if lost_on_air || too_long {
                TransmitOutcome::Dropped(DropReason::Loss)
            } else {
                TransmitOutcome::Delivered { at: depart }
            }
        };
        self.stats.record(&outcome);
        outcome
    }
}

/// Sends `msg` over a plain shared medium (the LoRa access channel).
pub fn link_transmit(
    link: &mut SharedMedium,
    msg: &Message,
    now: SimTime,
    stream: &mut RandomStream,
) -> TransmitOutcome {
    link.offer(msg.size_bits(), now, None, stream)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Up,
    Down,
}

/// On/off availability of an NVIS uplink.
#[derive(Debug, Clone, PartialEq)]
pub struct NvisState {
    pub availability: f64,
    pub phase: Phase,
    pub next_transition: Option<SimTime>,
    /// Mean outage duration, seconds.
    pub mean_down: f64,
}

impl NvisState {
    pub fn new(availability: f64, mean_down: f64) -> Self {
        NvisState {
            availability: availability.clamp(0.0, 1.0),
            phase: Phase::Up,
            next_transition: None,
            mean_down,
        }
    }

    /// Mean Up duration that makes the stationary Up fraction equal to `availability`.
    pub fn mean_up(&self) -> f64 {
        if self.availability >= 1.0 {
            f64::INFINITY
        } else {
            self.mean_down * self.availability / (1.0 - self.availability)
        }
    }
}

/// Draws the length of the phase `state` is currently in. Returns `None` when
/// the phase never ends (availability 1.0 while Up).
pub fn nvis_next_transition(state: &NvisState, stream: &mut RandomStream) -> Option<f64> {
    match state.phase {
        Phase::Down => Some(stream.exponential(state.mean_down)),
        Phase::Up => {
            let mean = state.mean_up();
            if mean.is_finite() {
                Some(stream.exponential(mean))
            } else {
                None
            }
        }
    }
}

/// Ionospheric fading on the NVIS uplink. While faded, each fade episode has a
/// usable frame length drawn uniformly in `[0, frame_max_bits]`; longer
/// frames are lost.
#[derive(Debug, Clone, PartialEq)]
pub struct FadeProcess {
    pub fraction: f64,
    pub mean_fade: f64,
    pub frame_max_bits: f64,
    faded: bool,
    frame_limit: f64,
}

impl FadeProcess {
    pub fn new(fraction: f64, mean_fade: f64, frame_max_bits: f64) -> Self {
        FadeProcess {
            fraction: fraction.clamp(0.0, 1.0),
            mean_fade,
            frame_max_bits,
            faded: false,
            frame_limit: f64::INFINITY,
        }
    }

    pub fn is_faded(&self) -> bool {
        self.faded
    }

    pub fn frame_limit(&self) -> Option<f64> {
        self.faded.then_some(self.frame_limit)
    }

    /// Duration of the current (clear or faded) state, or `None` if it lasts forever.
    pub fn dwell(&self, stream: &mut RandomStream) -> Option<f64> {
        if self.fraction <= 0.0 && !self.faded {
            return None;
        }
        if self.faded {
            Some(stream.exponential(self.mean_fade))
        } else if self.fraction >= 1.0 {
            Some(0.0)
        } else {
            Some(stream.exponential(self.mean_fade * (1.0 - self.fraction) / self.fraction))
        }
    }

    pub fn toggle(&mut self, stream: &mut RandomStream) {
        self.faded = !self.faded;
        // Draw unconditionally so the stream stays aligned across states.
        let u = stream.uniform();
        self.frame_limit = if self.faded {
            u * self.frame_max_bits
        } else {
            f64::INFINITY
        };
    }
}

/// Store-and-forward buffer of a delay-tolerant node.
#[derive(Debug, Clone)]
pub struct DtnBuffer<T> {
    bundles: VecDeque<Bundle<T>>,
    /// Seconds a bundle may wait before it is discarded.
    pub ttl: f64,
}

#[derive(Debug, Clone)]
struct Bundle<T> {
    item: T,
    size_bits: u32,
    enqueued: SimTime,
}

impl<T> DtnBuffer<T> {
    pub fn new(ttl: f64) -> Self {
        DtnBuffer {
            bundles: VecDeque::new(),
            ttl,
        }
    }

    pub fn push(&mut self, item: T, size_bits: u32, now: SimTime) {
        self.bundles.push_back(Bundle {
            item,
            size_bits,
            enqueued: now,
        });
    }

    pub fn len(&self) -> usize {
        self.bundles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bundles.is_empty()
    }

    /// Empties the store without transmitting; returns what was held.
    pub fn drain_all(&mut self) -> Vec<T> {
        self.bundles.drain(..).map(|b| b.item).collect()
    }
}

/// What happened to one bundle during a flush.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlushOutcome {
    Expired,
    Sent(TransmitOutcome),
}

/// NVIS uplink: shared medium plus availability, fading and DTN store.
#[derive(Debug, Clone)]
pub struct NvisLink<T> {
    pub medium: SharedMedium,
    pub state: NvisState,
    pub fade: FadeProcess,
    pub dtn: DtnBuffer<T>,
}

impl<T> NvisLink<T> {
    pub fn new(params: LinkParams, state: NvisState, fade: FadeProcess, ttl: f64) -> Self {
        NvisLink {
            medium: SharedMedium::new(params),
            state,
            fade,
            dtn: DtnBuffer::new(ttl),
        }
    }

    /// Offers `item` to the uplink. While the link is down the item is moved
    /// into the DTN store and `Buffered` is returned.
    pub fn transmit(
        &mut self,
        item: T,
        size_bits: u32,
        now: SimTime,
        stream: &mut RandomStream,
    ) -> TransmitOutcome {
        debug_assert!(size_bits > 0);
        // While older bundles wait in the store, new traffic queues behind them.
        let hold = self.state.phase == Phase::Down || !self.dtn.is_empty();
        match hold {
            true => {
                self.dtn.push(item, size_bits, now);
                self.medium.stats.offered += 1;
                self.medium.stats.record(&TransmitOutcome::Buffered);
                TransmitOutcome::Buffered
            }
            false => self.medium.offer(size_bits, now, self.fade.frame_limit(), stream),
        }
    }

    /// When the store is non-empty and the transmit buffer full, the instant
    /// the next slot frees up; a flush at that time makes progress.
    pub fn next_release(&mut self, now: SimTime) -> Option<SimTime> {
        if self.dtn.is_empty() || self.state.phase == Phase::Down {
            return None;
        }
        if self.medium.occupancy(now) < self.medium.params.buffer_slots {
            return Some(now);
        }
        self.medium.in_system.front().copied()
    }

    pub fn stats(&self) -> &LinkStats {
        self.medium.stats()
    }

    /// Discards whatever is still stored (end of run) and counts it expired.
    pub fn expire_all(&mut self) -> Vec<T> {
        let left = self.dtn.drain_all();
        self.medium.stats.dtn_expired += left.len() as u64;
        left
    }
}

/// Availability, fading and store settings of the NVIS uplinks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NvisParams {
    /// Per-run availability is drawn uniformly in `[availability_min, availability_max]`.
    pub availability_min: f64,
    pub availability_max: f64,
    pub mean_down_s: f64,
    /// Long-run share of time spent faded.
    pub fade_fraction: f64,
    pub mean_fade_s: f64,
    /// Upper end of the usable frame length during a fade.
    pub fade_frame_max_bits: f64,
    pub dtn_ttl_s: f64,
}

impl Default for NvisParams {
    fn default() -> Self {
        NvisParams {
            availability_min: 0.7,
            availability_max: 1.0,
            mean_down_s: 3600.0,
            fade_fraction: 0.42,
            mean_fade_s: 7200.0,
            fade_frame_max_bits: 1000.0,
            dtn_ttl_s: 86_400.0,
        }
    }
}

/// Message sizes in bits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MessageSizes {
    pub data_bits: u32,
    pub consensus_bits: u32,
    pub feedback_bits: u32,
}

impl Default for MessageSizes {
    fn default() -> Self {
        MessageSizes {
            data_bits: 800,
            consensus_bits: 512,
            feedback_bits: 512,
        }
    }
}

/// Drains the DTN store FIFO through the (now Up) link. Bundles older than
/// the ttl are discarded and counted. The store only releases as many
/// bundles as the transmit buffer can take, so a long outage does not turn
/// into a drop-tail burst; the rest wait for [`NvisLink::next_release`].
pub fn dtn_flush<T>(
    link: &mut NvisLink<T>,
    now: SimTime,
    stream: &mut RandomStream,
) -> Vec<(T, FlushOutcome)> {
    debug_assert_eq!(link.state.phase, Phase::Up);
    let ttl = SimTime::from_secs_f64(link.dtn.ttl);
    let slots = link.medium.params.buffer_slots;
    let mut out = Vec::new();
    while !link.dtn.is_empty() {
        let expired = link
            .dtn
            .bundles
            .front()
            .is_some_and(|b| now.saturating_sub(b.enqueued) > ttl);
        if !expired && link.medium.occupancy(now) >= slots {
            break;
        }
        let b = link.dtn.bundles.pop_front().expect("non-empty");
        if expired {
            link.medium.stats.dtn_expired += 1;
            out.push((b.item, FlushOutcome::Expired));
            continue;
        }
        let limit = link.fade.frame_limit();
        let outcome = link.medium.offer(b.size_bits, now, limit, stream);
        // The bundle was already counted as offered when it was buffered.
        link.medium.stats.offered -= 1;
        out.push((b.item, FlushOutcome::Sent(outcome)));
    }
    out
}
