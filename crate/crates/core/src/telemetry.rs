// Copyright 2026 The permafrost-trust Authors.
// SPDX-License-Identifier: Apache-2.0

//! Scenario actors and mode orchestration.
//!
//! Spots are assigned round-robin to concentrators. Every round each sensor
//! of a spot takes a reading; depending on the [`Mode`] the readings are
//! forwarded as they are, filtered by reputation, agreed on by a consensus
//! protocol, or any combination, and each leg can be quantum-assisted. One
//! transaction per (spot, round) is resolved at its deadline.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use crate::consensus::{to_message, ConsensusInstance, ConsensusParams, Outgoing, Protocol};
use crate::engine::{
    EventKind, LinkProcess, RandomStream, RunStats, Scheduler, SimTime, StreamId, StreamPurpose,
    TrafficCounters,
};
use crate::harness::SimConfig;
use crate::netmodel::{
    dtn_flush, link_transmit, nvis_next_transition, FadeProcess, FlushOutcome, Message, MessageKind,
    LinkStats, NodeId, NvisLink, NvisState, Phase, SharedMedium, TransmitOutcome, TxId,
};
use crate::quantum::{quantum_transmit, QuantumLink, QuantumStats};
use crate::social::{record_feedback, reputation, trusted_set, ReputationTable};

/// Variant of one trustworthiness layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Layer {
    None,
    Classical,
    Quantum,
}

impl Layer {
    fn parse(s: &str) -> Option<Layer> {
        match s.trim().to_ascii_lowercase().as_str() {
            "none" | "off" => Some(Layer::None),
            "classical" | "on" => Some(Layer::Classical),
            "quantum" => Some(Layer::Quantum),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Layer::None => "none",
            Layer::Classical => "classical",
            Layer::Quantum => "quantum",
        }
    }
}

impl FromStr for Layer {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Layer::parse(s).ok_or_else(|| format!("unknown layer variant `{s}` (none|classical|quantum)"))
    }
}

/// A (social, consensus) pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Mode {
    pub social: Layer,
    pub consensus: Layer,
}

impl Mode {
    pub const fn new(social: Layer, consensus: Layer) -> Self {
        Mode { social, consensus }
    }

    /// All nine modes in reporting order.
    pub const ALL: [Mode; 9] = [
        Mode::new(Layer::None, Layer::None),
        Mode::new(Layer::Classical, Layer::None),
        Mode::new(Layer::None, Layer::Classical),
        Mode::new(Layer::Classical, Layer::Classical),
        Mode::new(Layer::None, Layer::Quantum),
        Mode::new(Layer::Classical, Layer::Quantum),
        Mode::new(Layer::Quantum, Layer::None),
        Mode::new(Layer::Quantum, Layer::Classical),
        Mode::new(Layer::Quantum, Layer::Quantum),
    ];

    pub const STANDARD: Mode = Mode::new(Layer::None, Layer::None);

    /// Position in [`Mode::ALL`].
    pub fn index(self) -> usize {
        Mode::ALL.iter().position(|&m| m == self).expect("every pair is listed")
    }

    /// Machine label used in CSV files.
    pub fn label(self) -> &'static str {
        ["standard", "social", "consensus", "social+consensus", "quantum-consensus",
         "social+quantum-consensus", "quantum-social", "quantum-social+consensus",
         "quantum-social+quantum-consensus"][self.index()]
    }

    /// Human-readable name.
    pub fn name(self) -> &'static str {
        ["Standard", "Social", "Consensus", "Social + Consensus", "Quantum Consensus",
         "Social + Quantum Consensus", "Quantum Social", "Quantum Social + Consensus",
         "Quantum Social + Quantum Consensus"][self.index()]
    }

    fn short(self) -> &'static str {
        ["std", "s", "c", "s+c", "qc", "s+qc", "qs", "qs+c", "qs+qc"][self.index()]
    }
}

impl Default for Mode {
    fn default() -> Self {
        Mode::STANDARD
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Mode {
    type Err = String;

    /// Accepts the CSV label, the short alias (`qs+qc`) or the display name.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key = s.trim().to_ascii_lowercase();
        Mode::ALL
            .into_iter()
            .find(|m| m.label() == key || m.short() == key || m.name().to_ascii_lowercase() == key)
            .ok_or_else(|| format!("unknown mode `{s}`"))
    }
}

/// Concentrators, spots and per-spot redundancy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Topology {
    pub concentrators: u16,
    pub spots: u32,
    pub redundancy: u32,
}

impl Default for Topology {
    fn default() -> Self {
        Topology {
            concentrators: 5,
            spots: 32,
            redundancy: 1,
        }
    }
}

impl Topology {
    pub fn concentrator_of(&self, spot: u32) -> u16 {
        (spot % self.concentrators as u32) as u16
    }

    /// Position of `spot` among the spots of its concentrator.
    pub fn local_index(&self, spot: u32) -> u32 {
        spot / self.concentrators as u32
    }

    pub fn sensor_id(&self, spot: u32, k: u32) -> u32 {
        spot * self.redundancy + k
    }

    pub fn spot_of(&self, sensor: u32) -> u32 {
        sensor / self.redundancy
    }

    pub fn sensors(&self) -> u32 {
        self.spots * self.redundancy
    }

    pub fn cluster(&self, spot: u32) -> Vec<u32> {
        (0..self.redundancy).map(|k| self.sensor_id(spot, k)).collect()
    }
}

/// Byzantine fault injection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FaultParams {
    /// Per-reading fault probability of a regular sensor.
    pub pb0: f64,
    /// A faulty reading is off by a magnitude in `[offset_min, offset_max]`.
    pub offset_min: f64,
    pub offset_max: f64,
    /// Readings within this distance of the truth are correct.
    pub tolerance: f64,
    /// Share of sensors that are degraded for the whole run.
    pub degraded_fraction: f64,
    /// Per-reading fault probability of a degraded sensor.
    pub degraded_pb: f64,
}

impl Default for FaultParams {
    fn default() -> Self {
        FaultParams {
            pb0: 0.01,
            offset_min: 5.0,
            offset_max: 10.0,
            tolerance: 1.0,
            degraded_fraction: 0.10,
            degraded_pb: 0.8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorReading {
    pub spot: u32,
    pub sensor: u32,
    pub round: u32,
    pub value: f64,
    /// Simulation-side bookkeeping only; protocols never look at it.
    pub faulty: bool,
}

/// Takes one reading. Always consumes three draws so that the streams of
/// different fault rates stay aligned.
pub fn sense(
    spot: u32,
    sensor: u32,
    round: u32,
    truth: f64,
    pb: f64,
    fault: &FaultParams,
    stream: &mut RandomStream,
) -> SensorReading {
    let u_fault = stream.uniform();
    let magnitude = stream.uniform_range(fault.offset_min, fault.offset_max);
    let sign = if stream.uniform() < 0.5 { -1.0 } else { 1.0 };
    let faulty = u_fault < pb;
    SensorReading {
        spot,
        sensor,
        round,
        value: if faulty { truth + sign * magnitude } else { truth },
        faulty,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Outcome {
    Success,
    FailWrongValue,
    /// Something was still on its way when the deadline passed.
    FailDeadline,
    /// Nothing was left that could have arrived.
    FailNoDelivery,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransactionResolution {
    pub spot: u32,
    pub round: u32,
    pub outcome: Outcome,
    pub decided_at: SimTime,
}

impl TransactionResolution {
    pub fn is_success(&self) -> bool {
        self.outcome == Outcome::Success
    }
}

/// First-arrival-wins acceptance of values per (spot, round).
#[derive(Debug, Default)]
pub struct ControlCenter {
    accepted: HashMap<(u32, u32), (f64, SimTime)>,
}

impl ControlCenter {
    /// Returns true if this arrival became the accepted value.
    pub fn accept(&mut self, spot: u32, round: u32, value: f64, at: SimTime) -> bool {
        let mut fresh = false;
        self.accepted.entry((spot, round)).or_insert_with(|| {
            fresh = true;
            (value, at)
        });
        fresh
    }

    pub fn accepted(&self, spot: u32, round: u32) -> Option<(f64, SimTime)> {
        self.accepted.get(&(spot, round)).copied()
    }

    /// Final verdict for a transaction; forgets its state.
    pub fn resolve_deadline(
        &mut self,
        spot: u32,
        round: u32,
        now: SimTime,
        truth: f64,
        tolerance: f64,
        still_pending: bool,
    ) -> TransactionResolution {
        let (outcome, decided_at) = match self.accepted.remove(&(spot, round)) {
            Some((v, at)) if (v - truth).abs() <= tolerance => (Outcome::Success, at),
            Some((_, at)) => (Outcome::FailWrongValue, at),
            None if still_pending => (Outcome::FailDeadline, now),
            None => (Outcome::FailNoDelivery, now),
        };
        TransactionResolution {
            spot,
            round,
            outcome,
            decided_at,
        }
    }
}

/// What a message in flight carries.
#[derive(Debug, Clone, Copy)]
enum Payload {
    /// Sensor reading on its way to the concentrator; `forward` if it should
    /// continue to the control center.
    LoraReport { spot: u32, round: u32, sensor: u32, value: f64, forward: bool },
    /// Value on its way to the control center.
    NvisReport { spot: u32, round: u32, value: f64 },
    Feedback { sensor: u32, bit: bool },
    Consensus { instance: u32, msg: Outgoing },
}

impl Payload {
    fn tx(&self) -> Option<(u32, u32)> {
        match *self {
            Payload::LoraReport { spot, round, .. } | Payload::NvisReport { spot, round, .. } => {
                Some((spot, round))
            }
            _ => None,
        }
    }
}

struct Concentrator {
    lora: SharedMedium,
    nvis: NvisLink<u32>,
    qlink: QuantumLink,
    lora_rng: RandomStream,
    nvis_rng: RandomStream,
    avail_rng: RandomStream,
    fade_rng: RandomStream,
    q_rng: RandomStream,
    flush_pending: bool,
}

struct SpotRec {
    base: f64,
    drift: f64,
    offset: SimTime,
}

struct SensorRec {
    pb: f64,
    rng: RandomStream,
}

/// Concentrator-side state of one transaction.
#[derive(Default)]
struct TxRec {
    round: u32,
    live: bool,
    /// Readings received from sensors, for feedback.
    readings: Vec<(u32, f64)>,
    decided: Option<f64>,
    consensus_running: bool,
    /// Report copies still travelling or stored.
    pending: u32,
}

struct InstanceRec {
    spot: u32,
    round: u32,
    participants: Vec<u32>,
    inst: ConsensusInstance,
    reported: bool,
}

/// One simulated run.
pub struct Scenario {
    cfg: SimConfig,
    seed: u64,
    sched: Scheduler,
    availability: f64,
    concs: Vec<Concentrator>,
    spots: Vec<SpotRec>,
    sensors: Vec<SensorRec>,
    table: ReputationTable,
    cc: ControlCenter,
    txs: Vec<TxRec>,
    ring: usize,
    slab: Vec<Option<Payload>>,
    free: Vec<u32>,
    instances: HashMap<u32, InstanceRec>,
    next_instance: u32,
    resolutions: Vec<TransactionResolution>,
    counters: TrafficCounters,
    duration: SimTime,
}

impl Scenario {
    pub fn new(config: &SimConfig, master_seed: u64) -> Self {
        let cfg = config.clone();
        let topo = cfg.topology;
        let stream = |purpose, index| RandomStream::new(master_seed, StreamId::new(purpose, index));
        let mut run_rng = stream(StreamPurpose::Run, 0);

        let nv = cfg.nvis_dynamics;
        let availability = run_rng.uniform_range(nv.availability_min, nv.availability_max);
        let duration = SimTime::from_secs_f64(cfg.duration_days * 86_400.0);
        let deadline = SimTime::from_secs_f64(cfg.deadline_s);
        let mut sched = Scheduler::new(duration.plus(deadline));

        let mut concs = Vec::with_capacity(topo.concentrators as usize);
        for c in 0..topo.concentrators {
            let idx = c as u32;
            let mut avail_rng = stream(StreamPurpose::NvisAvailability, idx);
            let mut fade_rng = stream(StreamPurpose::NvisFade, idx);
            let mut state = NvisState::new(availability, nv.mean_down_s);
            if !avail_rng.bernoulli(availability) {
                state.phase = Phase::Down;
            }
            let mut fade = FadeProcess::new(nv.fade_fraction, nv.mean_fade_s, nv.fade_frame_max_bits);
            if fade_rng.bernoulli(nv.fade_fraction) {
                fade.toggle(&mut fade_rng);
            }
            if let Some(d) = nvis_next_transition(&state, &mut avail_rng) {
                sched.schedule(
                    SimTime::from_secs_f64(d),
                    EventKind::LinkTransition { concentrator: c, process: LinkProcess::Availability },
                );
            }
            if let Some(d) = fade.dwell(&mut fade_rng) {
                sched.schedule(
                    SimTime::from_secs_f64(d),
                    EventKind::LinkTransition { concentrator: c, process: LinkProcess::Fade },
                );
            }
            concs.push(Concentrator {
                lora: SharedMedium::new(cfg.lora),
                nvis: NvisLink::new(cfg.nvis, state, fade, nv.dtn_ttl_s),
                qlink: QuantumLink::new(cfg.quantum),
                lora_rng: stream(StreamPurpose::LoraLink, idx),
                nvis_rng: stream(StreamPurpose::NvisLink, idx),
                avail_rng,
                fade_rng,
                q_rng: stream(StreamPurpose::Quantum, idx),
                flush_pending: false,
            });
        }

        let mut spots = Vec::with_capacity(topo.spots as usize);
        for s in 0..topo.spots {
            let base = run_rng.uniform_range(-10.0, 0.0);
            let drift = run_rng.uniform_range(-1e-4, 1e-4);
            let offset = (topo.local_index(s) as f64 * cfg.stagger_s) % cfg.period_s;
            let offset = SimTime::from_secs_f64(offset);
            if offset < duration {
                sched.schedule(offset, EventKind::MeasurementRound { spot: s, round: 0 });
            }
            spots.push(SpotRec { base, drift, offset });
        }

        let fault = cfg.fault;
        let sensors = (0..topo.sensors())
            .map(|id| {
                let mut quality = stream(StreamPurpose::SensorQuality, id);
                let degraded = quality.bernoulli(fault.degraded_fraction);
                SensorRec {
                    pb: if degraded { fault.degraded_pb } else { fault.pb0 },
                    rng: stream(StreamPurpose::Sensing, id),
                }
            })
            .collect();

        let ring = (cfg.deadline_s / cfg.period_s).ceil() as usize + 2;
        let txs = (0..topo.spots as usize * ring).map(|_| TxRec::default()).collect();

        Scenario {
            table: ReputationTable::new(topo.sensors() as usize, cfg.social),
            seed: master_seed,
            sched,
            availability,
            concs,
            spots,
            sensors,
            cc: ControlCenter::default(),
            txs,
            ring,
            slab: Vec::new(),
            free: Vec::new(),
            instances: HashMap::new(),
            next_instance: 0,
            resolutions: Vec::new(),
            counters: TrafficCounters::default(),
            duration,
            cfg,
        }
    }

    /// Overrides the fault probability of one sensor (test hook).
    pub fn set_sensor_pb(&mut self, sensor: u32, pb: f64) {
        self.sensors[sensor as usize].pb = pb;
    }

    pub fn reputation(&self, sensor: u32) -> f64 {
        reputation(&self.table, sensor)
    }

    pub fn availability(&self) -> f64 {
        self.availability
    }

    /// Processes events up to and including `until`.
    pub fn run_until(&mut self, until: SimTime) {
        while self.peek_before(until) {
            let Some(ev) = self.sched.next_event() else { break };
            self.handle(ev.kind);
        }
    }

    fn peek_before(&self, until: SimTime) -> bool {
        self.sched.peek_time().is_some_and(|t| t <= until)
    }

    pub fn run(mut self) -> RunStats {
        while let Some(ev) = self.sched.next_event() {
            self.handle(ev.kind);
        }
        self.finish()
    }

    fn finish(mut self) -> RunStats {
        for c in &mut self.concs {
            c.nvis.expire_all();
        }
        let traffic = self.traffic();
        RunStats {
            master_seed: self.seed,
            resolutions: self.resolutions,
            traffic,
            nvis_availability: self.availability,
            events_processed: self.sched.processed(),
            trace_digest: self.sched.trace_digest(),
        }
    }

    /// Resolutions emitted so far.
    pub fn resolutions(&self) -> &[TransactionResolution] {
        &self.resolutions
    }

    pub fn lora_stats(&self, concentrator: u16) -> LinkStats {
        *self.concs[concentrator as usize].lora.stats()
    }

    pub fn nvis_stats(&self, concentrator: u16) -> LinkStats {
        *self.concs[concentrator as usize].nvis.stats()
    }

    pub fn quantum_stats(&self, concentrator: u16) -> QuantumStats {
        *self.concs[concentrator as usize].qlink.stats()
    }

    /// Counters accumulated so far over every concentrator.
    pub fn traffic(&self) -> TrafficCounters {
        let mut t = self.counters.clone();
        for c in &self.concs {
            for st in [c.lora.stats(), c.nvis.stats()] {
                t.offered += st.offered;
                t.delivered += st.delivered;
                t.dropped_congestion += st.dropped_congestion;
                t.dropped_loss += st.dropped_loss;
                t.dtn_expired += st.dtn_expired;
                t.dtn_buffered += st.buffered;
            }
            let q = c.qlink.stats();
            t.quantum_attempts += q.attempts;
            t.quantum_failures += q.failures;
            t.quantum_fallbacks += q.fallbacks;
        }
        t
    }

    fn handle(&mut self, kind: EventKind) {
        let now = self.sched.now();
        match kind {
            EventKind::MeasurementRound { spot, round } => self.run_round(spot, round, now),
            EventKind::LinkTransition { concentrator, process } => match process {
                LinkProcess::Availability => self.availability_transition(concentrator, now),
                LinkProcess::Fade => self.fade_transition(concentrator, now),
            },
            EventKind::MessageDelivery { message } => self.deliver(message, now),
            EventKind::ConsensusTimeout { instance, attempt } => self.consensus_timeout(instance, attempt, now),
            EventKind::DtnFlush { concentrator } => {
                self.concs[concentrator as usize].flush_pending = false;
                self.flush(concentrator, now);
            }
            EventKind::EntanglementTick { concentrator } => {
                let c = &mut self.concs[concentrator as usize];
                c.qlink.refill(now, &mut c.q_rng);
            }
            EventKind::TransactionDeadline { spot, round } => self.resolve(spot, round, now),
        }
    }

    fn truth(&self, spot: u32, round: u32) -> f64 {
        let s = &self.spots[spot as usize];
        s.base + s.drift * round as f64
    }

    fn tx_index(&self, spot: u32, round: u32) -> usize {
        spot as usize * self.ring + round as usize % self.ring
    }

    fn tx_mut(&mut self, spot: u32, round: u32) -> Option<&mut TxRec> {
        let i = self.tx_index(spot, round);
        let rec = &mut self.txs[i];
        (rec.live && rec.round == round).then_some(rec)
    }

    /// Starts a round: schedules the next one and the deadline, sends the
    /// previous round's feedback, takes readings and dispatches them.
    pub fn run_round(&mut self, spot: u32, round: u32, now: SimTime) {
        let next = self.spots[spot as usize]
            .offset
            .plus_secs(self.cfg.period_s * (round + 1) as f64);
        if next < self.duration {
            self.sched.schedule(next, EventKind::MeasurementRound { spot, round: round + 1 });
        }
        self.sched.schedule(
            now.plus_secs(self.cfg.deadline_s),
            EventKind::TransactionDeadline { spot, round },
        );
        let i = self.tx_index(spot, round);
        debug_assert!(!self.txs[i].live, "transaction ring too small");
        self.txs[i] = TxRec {
            round,
            live: true,
            ..Default::default()
        };

        let mode = self.cfg.mode;
        if mode.social != Layer::None && round > 0 {
            self.send_feedback(spot, round - 1, now);
        }

        let topo = self.cfg.topology;
        let cluster = topo.cluster(spot);
        let participants = if mode.social == Layer::None {
            cluster.clone()
        } else {
            trusted_set(&self.table, &cluster, self.cfg.social.theta)
        };

        let truth = self.truth(spot, round);
        let fault = self.cfg.fault;
        let mut readings: Vec<(f64, u32, f64)> = cluster
            .iter()
            .map(|&sensor| {
                let rec = &mut self.sensors[sensor as usize];
                let r = sense(spot, sensor, round, truth, rec.pb, &fault, &mut rec.rng);
                // Transmission order inside the spot is random.
                (rec.rng.uniform(), sensor, r.value)
            })
            .collect();
        readings.sort_by(|a, b| a.0.total_cmp(&b.0));

        let conc = topo.concentrator_of(spot);
        let quantum_social = mode.social == Layer::Quantum;
        let tx = TxId { spot, round };
        match mode.consensus {
            Layer::None => {
                for &(_, sensor, value) in &readings {
                    let forward = participants.contains(&sensor);
                    self.send_report(conc, spot, round, sensor, value, forward, quantum_social, now);
                }
            }
            Layer::Classical | Layer::Quantum => {
                for &(_, sensor, value) in &readings {
                    if !participants.contains(&sensor) {
                        // Excluded sensors keep reporting so they can earn
                        // their way back.
                        self.send_report(conc, spot, round, sensor, value, false, quantum_social, now);
                    }
                }
                let values: Vec<f64> = participants
                    .iter()
                    .map(|s| readings.iter().find(|r| r.1 == *s).expect("participant sensed").2)
                    .collect();
                let protocol = match mode.consensus {
                    Layer::Quantum => Protocol::Fqc { c: self.cfg.consensus.fqc_c },
                    _ => Protocol::Pbft,
                };
                let params = ConsensusParams::new(
                    participants.len(),
                    self.cfg.consensus.timeout_s,
                    self.cfg.consensus.max_retries,
                    self.cfg.sizes.consensus_bits,
                );
                let id = self.next_instance;
                self.next_instance += 1;
                let mut inst = ConsensusInstance::new(protocol, params, values, now);
                let batch = inst.start(now);
                let mut rec = InstanceRec {
                    spot,
                    round,
                    participants,
                    inst,
                    reported: false,
                };
                if let Some(t) = self.tx_mut(spot, round) {
                    t.consensus_running = true;
                }
                self.sched.schedule(
                    now.plus_secs(self.cfg.consensus.timeout_s),
                    EventKind::ConsensusTimeout { instance: id, attempt: 0 },
                );
                self.send_consensus(id, &mut rec, batch, conc, tx, now);
                self.settle_instance(id, rec, now);
            }
        }
    }

    fn alloc(&mut self, p: Payload) -> u32 {
        if let Some((spot, round)) = p.tx() {
            if let Some(t) = self.tx_mut(spot, round) {
                t.pending += 1;
            }
        }
        match self.free.pop() {
            Some(id) => {
                self.slab[id as usize] = Some(p);
                id
            }
            None => {
                self.slab.push(Some(p));
                (self.slab.len() - 1) as u32
            }
        }
    }

    fn release(&mut self, id: u32) -> Payload {
        let p = self.slab[id as usize].take().expect("live payload");
        self.free.push(id);
        if let Some((spot, round)) = p.tx() {
            if let Some(t) = self.tx_mut(spot, round) {
                t.pending -= 1;
            }
        }
        p
    }

    /// Offers a payload to the LoRa channel of `conc`.
    fn send_lora(&mut self, conc: u16, payload: Payload, msg: Message, quantum: bool, now: SimTime) -> TransmitOutcome {
        let id = self.alloc(payload);
        let c = &mut self.concs[conc as usize];
        let outcome = if quantum {
            let (lora, rng) = (&mut c.lora, &mut c.lora_rng);
            quantum_transmit(&mut c.qlink, &msg, now, &mut c.q_rng, |bits| {
                lora_offer(lora, &msg, bits, now, rng)
            })
        } else {
            link_transmit(&mut c.lora, &msg, now, &mut c.lora_rng)
        };
        self.settle_send(id, outcome);
        outcome
    }

    /// Offers a payload to the NVIS uplink of `conc`.
    fn send_nvis(&mut self, conc: u16, payload: Payload, msg: Message, quantum: bool, now: SimTime) {
        let id = self.alloc(payload);
        let c = &mut self.concs[conc as usize];
        let outcome = if quantum {
            let (nvis, rng) = (&mut c.nvis, &mut c.nvis_rng);
            quantum_transmit(&mut c.qlink, &msg, now, &mut c.q_rng, |bits| nvis.transmit(id, bits, now, rng))
        } else {
            c.nvis.transmit(id, msg.size_bits(), now, &mut c.nvis_rng)
        };
        self.settle_send(id, outcome);
    }

    fn settle_send(&mut self, id: u32, outcome: TransmitOutcome) {
        match outcome {
            TransmitOutcome::Delivered { at } => {
                self.sched.schedule(at, EventKind::MessageDelivery { message: id });
            }
            TransmitOutcome::Buffered => {}
            TransmitOutcome::Dropped(_) => {
                self.release(id);
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn send_report(
        &mut self,
        conc: u16,
        spot: u32,
        round: u32,
        sensor: u32,
        value: f64,
        forward: bool,
        quantum: bool,
        now: SimTime,
    ) {
        let msg = Message::new(
            NodeId::Sensor(sensor),
            NodeId::Concentrator(conc),
            MessageKind::DataReport,
            self.cfg.sizes.data_bits,
            TxId { spot, round },
        )
        .expect("positive size");
        self.counters.data_reports += 1;
        self.send_lora(conc, Payload::LoraReport { spot, round, sensor, value, forward }, msg, quantum, now);
    }

    fn forward_report(&mut self, spot: u32, round: u32, value: f64, now: SimTime) {
        let conc = self.cfg.topology.concentrator_of(spot);
        let msg = Message::new(
            NodeId::Concentrator(conc),
            NodeId::ControlCenter,
            MessageKind::DataReport,
            self.cfg.sizes.data_bits,
            TxId { spot, round },
        )
        .expect("positive size");
        self.counters.data_reports += 1;
        let quantum = self.cfg.mode.social == Layer::Quantum;
        self.send_nvis(conc, Payload::NvisReport { spot, round, value }, msg, quantum, now);
    }

    /// Evaluates a finished round at the concentrator and ships one feedback
    /// bit per observed sensor to the reputation store.
    fn send_feedback(&mut self, spot: u32, round: u32, now: SimTime) {
        let consensus = self.cfg.mode.consensus != Layer::None;
        let tol = self.cfg.fault.tolerance;
        let Some(t) = self.tx_mut(spot, round) else { return };
        let readings = std::mem::take(&mut t.readings);
        let accepted = if consensus { t.decided } else { lower_median(&readings) };
        let Some(accepted) = accepted else { return };
        let conc = self.cfg.topology.concentrator_of(spot);
        let quantum = self.cfg.mode.social == Layer::Quantum;
        for (sensor, value) in readings {
            let bit = (value - accepted).abs() <= tol;
            let msg = Message::new(
                NodeId::Concentrator(conc),
                NodeId::ControlCenter,
                MessageKind::RepFeedback,
                self.cfg.sizes.feedback_bits,
                TxId { spot, round },
            )
            .expect("positive size");
            self.counters.feedback_messages += 1;
            self.send_nvis(conc, Payload::Feedback { sensor, bit }, msg, quantum, now);
        }
    }

    fn deliver(&mut self, id: u32, now: SimTime) {
        let payload = self.release(id);
        match payload {
            Payload::LoraReport { spot, round, sensor, value, forward } => {
                let Some(t) = self.tx_mut(spot, round) else { return };
                t.readings.push((sensor, value));
                if forward {
                    self.forward_report(spot, round, value, now);
                }
            }
            Payload::NvisReport { spot, round, value } => {
                if self.tx_mut(spot, round).is_some() {
                    self.cc.accept(spot, round, value, now);
                }
            }
            Payload::Feedback { sensor, bit } => {
                record_feedback(&mut self.table, sensor, bit, now).expect("registered sensor");
            }
            Payload::Consensus { instance, msg } => {
                let Some(mut rec) = self.instances.remove(&instance) else { return };
                let batch = rec.inst.on_deliver(&msg, now);
                let conc = self.cfg.topology.concentrator_of(rec.spot);
                let tx = TxId { spot: rec.spot, round: rec.round };
                self.send_consensus(instance, &mut rec, batch, conc, tx, now);
                self.settle_instance(instance, rec, now);
            }
        }
    }

    fn send_consensus(
        &mut self,
        id: u32,
        rec: &mut InstanceRec,
        batch: Vec<Outgoing>,
        conc: u16,
        tx: TxId,
        now: SimTime,
    ) {
        let quantum = matches!(rec.inst.protocol, Protocol::Fqc { .. });
        self.counters.consensus_messages += batch.len() as u64;
        for out in batch {
            let msg = to_message(&out, &rec.participants, conc, rec.inst.params.msg_bits, tx);
            let outcome = self.send_lora(conc, Payload::Consensus { instance: id, msg: out }, msg, quantum, now);
            rec.inst.on_sent(&out, &outcome);
        }
    }

    /// Reacts to a finished instance and keeps it around while its messages
    /// are still in flight.
    fn settle_instance(&mut self, id: u32, mut rec: InstanceRec, now: SimTime) {
        rec.inst.settle(now);
        if rec.inst.is_finished() && !rec.reported {
            rec.reported = true;
            let decided = rec.inst.decided();
            let (spot, round) = (rec.spot, rec.round);
            let values: Vec<(u32, f64)> = match decided {
                Some(_) => rec.participants.iter().copied().zip(rec.inst.values().iter().copied()).collect(),
                None => Vec::new(),
            };
            if let Some(t) = self.tx_mut(spot, round) {
                t.consensus_running = false;
                t.decided = decided;
                t.readings.extend(values);
            }
            if let Some(v) = decided {
                if self.tx_mut(spot, round).is_some() {
                    self.forward_report(spot, round, v, now);
                }
            }
        }
        if !(rec.inst.is_finished() && rec.inst.in_flight() == 0) {
            self.instances.insert(id, rec);
        }
    }

    fn consensus_timeout(&mut self, id: u32, attempt: u8, now: SimTime) {
        let Some(mut rec) = self.instances.remove(&id) else { return };
        let batch = rec.inst.on_timeout(attempt, now);
        if !rec.inst.is_finished() && rec.inst.attempt() != attempt {
            self.sched.schedule(
                now.plus_secs(self.cfg.consensus.timeout_s),
                EventKind::ConsensusTimeout { instance: id, attempt: rec.inst.attempt() },
            );
        }
        let conc = self.cfg.topology.concentrator_of(rec.spot);
        let tx = TxId { spot: rec.spot, round: rec.round };
        self.send_consensus(id, &mut rec, batch, conc, tx, now);
        self.settle_instance(id, rec, now);
    }

    fn availability_transition(&mut self, conc: u16, now: SimTime) {
        let c = &mut self.concs[conc as usize];
        c.nvis.state.phase = match c.nvis.state.phase {
            Phase::Up => Phase::Down,
            Phase::Down => Phase::Up,
        };
        if let Some(d) = nvis_next_transition(&c.nvis.state, &mut c.avail_rng) {
            self.sched.schedule(
                now.plus_secs(d),
                EventKind::LinkTransition { concentrator: conc, process: LinkProcess::Availability },
            );
        }
        if self.concs[conc as usize].nvis.state.phase == Phase::Up {
            self.flush(conc, now);
        }
    }

    fn fade_transition(&mut self, conc: u16, now: SimTime) {
        let c = &mut self.concs[conc as usize];
        c.nvis.fade.toggle(&mut c.fade_rng);
        if let Some(d) = c.nvis.fade.dwell(&mut c.fade_rng) {
            self.sched.schedule(
                now.plus_secs(d),
                EventKind::LinkTransition { concentrator: conc, process: LinkProcess::Fade },
            );
        }
    }

    fn flush(&mut self, conc: u16, now: SimTime) {
        let c = &mut self.concs[conc as usize];
        if c.nvis.state.phase != Phase::Up {
            return;
        }
        let released = dtn_flush(&mut c.nvis, now, &mut c.nvis_rng);
        let next = c.nvis.next_release(now);
        for (id, outcome) in released {
            match outcome {
                FlushOutcome::Sent(o) => self.settle_send(id, o),
                FlushOutcome::Expired => {
                    self.release(id);
                }
            }
        }
        if let Some(at) = next {
            let c = &mut self.concs[conc as usize];
            if !c.flush_pending {
                c.flush_pending = true;
                self.sched.schedule(at.max(now), EventKind::DtnFlush { concentrator: conc });
            }
        }
    }

    fn resolve(&mut self, spot: u32, round: u32, now: SimTime) {
        let truth = self.truth(spot, round);
        let tol = self.cfg.fault.tolerance;
        let i = self.tx_index(spot, round);
        let t = &mut self.txs[i];
        debug_assert!(t.live && t.round == round);
        let pending = t.pending > 0 || t.consensus_running;
        t.live = false;
        t.readings = Vec::new();
        let res = self.cc.resolve_deadline(spot, round, now, truth, tol, pending);
        self.resolutions.push(res);
    }
}

fn lora_offer(lora: &mut SharedMedium, msg: &Message, bits: u32, now: SimTime, rng: &mut RandomStream) -> TransmitOutcome {
    let m = Message::new(msg.src, msg.dst, msg.kind, bits, msg.tx).expect("positive size");
    link_transmit(lora, &m, now, rng)
}

/// Lower median of the received values; `None` if nothing arrived.
fn lower_median(readings: &[(u32, f64)]) -> Option<f64> {
    if readings.is_empty() {
        return None;
    }
    let mut v: Vec<f64> = readings.iter().map(|r| r.1).collect();
    v.sort_by(f64::total_cmp);
    Some(v[(v.len() - 1) / 2])
}
