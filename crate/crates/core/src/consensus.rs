// Copyright 2026 The permafrost-trust Authors.
// SPDX-License-Identifier: Apache-2.0

//! Cluster agreement protocols.
//!
//! Both protocols are written as message-driven state machines that never
//! touch a medium themselves: the caller transmits whatever [`Outgoing`]
//! messages an instance emits, reports each transmit result back, and feeds
//! deliveries in. [`pbft_instance`] and [`fqc_instance`] wrap that loop for
//! standalone use.
//!
//! A participant only ever compares proposals by value; whether a proposal
//! is faulty is never visible to the protocol.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use crate::engine::{RandomStream, SimTime};
use crate::netmodel::{
    link_transmit, Message, MessageKind, NodeId, SharedMedium, TransmitOutcome, TxId,
};
use crate::quantum::{quantum_transmit, QuantumLink};

/// Proposals closer than this are the same value.
const SAME_VALUE_EPS: f64 = 1e-9;

fn same(a: f64, b: f64) -> bool {
    (a - b).abs() <= SAME_VALUE_EPS
}

/// Vote counts per distinct value.
#[derive(Debug, Clone, Default)]
struct Tally(Vec<(f64, usize)>);

impl Tally {
    fn add(&mut self, v: f64) {
        match self.0.iter_mut().find(|(u, _)| same(*u, v)) {
            Some(entry) => entry.1 += 1,
            None => self.0.push((v, 1)),
        }
    }

    fn count(&self, v: f64) -> usize {
        self.0.iter().find(|(u, _)| same(*u, v)).map_or(0, |e| e.1)
    }
}

/// Largest number of byzantine members a group of `n` tolerates.
pub fn byzantine_tolerance(n: usize) -> usize {
    n.saturating_sub(1) / 3
}

/// Matching votes needed to decide. `2f + 1` alone is not a majority for
/// very small groups (n = 2, 3), so the larger of it and a strict majority
/// is used.
pub fn quorum(n: usize) -> usize {
    (2 * byzantine_tolerance(n) + 1).max(n / 2 + 1)
}

/// Messages of one fault-free PBFT instance: pre-prepare multicast, prepare
/// multicasts from every backup, commit multicasts from every member.
pub fn pbft_message_count(n: usize) -> usize {
    let m = n.saturating_sub(1);
    m + m * m + n * m
}

pub fn fqc_message_count(n: usize, c: usize) -> usize {
    c * n
}

/// Modal value; ties go to the value first proposed by the lowest sensor id.
pub fn majority_value(values: &[(u32, f64)]) -> Option<f64> {
    let mut sorted: Vec<(u32, f64)> = values.to_vec();
    sorted.sort_by_key(|&(id, _)| id);
    let mut best: Option<(usize, f64)> = None;
    for (i, &(_, v)) in sorted.iter().enumerate() {
        if sorted[..i].iter().any(|&(_, u)| same(u, v)) {
            continue;
        }
        let count = sorted[i..].iter().filter(|&&(_, u)| same(u, v)).count();
        if best.is_none_or(|(c, _)| count > c) {
            best = Some((count, v));
        }
    }
    best.map(|(_, v)| v)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConsensusParams {
    pub n: usize,
    pub f: usize,
    /// Seconds an attempt may run before it is abandoned.
    pub timeout: f64,
    pub max_retries: u8,
    pub msg_bits: u32,
}

impl ConsensusParams {
    pub fn new(n: usize, timeout: f64, max_retries: u8, msg_bits: u32) -> Self {
        assert!(n >= 1, "a consensus group needs at least one member");
        ConsensusParams {
            n,
            f: byzantine_tolerance(n),
            timeout,
            max_retries,
            msg_bits,
        }
    }
}

/// Run-level consensus settings; the group size comes from the topology.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConsensusConfig {
    pub timeout_s: f64,
    pub max_retries: u8,
    /// Coordination messages per member in fast quantum consensus.
    pub fqc_c: u32,
}

impl Default for ConsensusConfig {
    fn default() -> Self {
        ConsensusConfig {
            timeout_s: 600.0,
            max_retries: 2,
            fqc_c: 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FailReason {
    Timeout,
    InsufficientQuorum,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ConsensusResult {
    Decided(f64),
    Failed(FailReason),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConsensusOutcome {
    pub result: ConsensusResult,
    /// Messages offered, across all attempts.
    pub msg_count: u64,
    /// Seconds from start to decision or failure.
    pub latency: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Protocol {
    Pbft,
    /// Fast quantum consensus with `c` coordination messages per member.
    Fqc { c: u32 },
}

/// A protocol message. `to == None` addresses the concentrator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Outgoing {
    pub attempt: u8,
    pub kind: MessageKind,
    pub from: u16,
    pub to: Option<u16>,
    pub value: f64,
}

#[derive(Debug, Clone, Default)]
struct PbftNode {
    got_pre_prepare: bool,
    /// Pre-prepare/prepare votes from other members, by value.
    prepares: Tally,
    /// The value this member prepared; it commits to it even when its own
    /// reading differs.
    prepared: Option<f64>,
    /// Commits by value, own included once prepared.
    commits: Tally,
    committed: bool,
}

#[derive(Debug, Clone)]
enum AttemptState {
    Pbft(Vec<PbftNode>),
    Fqc {
        delivered: Vec<u32>,
        /// (value, completed flows carrying it)
        tally: Vec<(f64, usize)>,
    },
}

/// One agreement instance among the members of a cluster.
#[derive(Debug, Clone)]
pub struct ConsensusInstance {
    pub protocol: Protocol,
    pub params: ConsensusParams,
    values: Vec<f64>,
    quorum: usize,
    started: SimTime,
    attempt: u8,
    state: AttemptState,
    in_flight: u32,
    lost: bool,
    msg_count: u64,
    result: Option<(ConsensusResult, SimTime)>,
}

impl ConsensusInstance {
    pub fn new(protocol: Protocol, params: ConsensusParams, values: Vec<f64>, now: SimTime) -> Self {
        assert_eq!(values.len(), params.n, "one proposal per member");
        let n = params.n;
        ConsensusInstance {
            protocol,
            params,
            values,
            quorum: quorum(n),
            started: now,
            attempt: 0,
            state: AttemptState::Pbft(Vec::new()),
            in_flight: 0,
            lost: false,
            msg_count: 0,
            result: None,
        }
    }

    /// Proposals in member order.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn attempt(&self) -> u8 {
        self.attempt
    }

    pub fn msg_count(&self) -> u64 {
        self.msg_count
    }

    pub fn in_flight(&self) -> u32 {
        self.in_flight
    }

    pub fn is_finished(&self) -> bool {
        self.result.is_some()
    }

    pub fn decided(&self) -> Option<f64> {
        match self.result {
            Some((ConsensusResult::Decided(v), _)) => Some(v),
            _ => None,
        }
    }

    pub fn outcome(&self) -> Option<ConsensusOutcome> {
        self.result.map(|(result, at)| ConsensusOutcome {
            result,
            msg_count: self.msg_count,
            latency: at.saturating_sub(self.started).as_secs_f64(),
        })
    }

    /// Starts the first attempt.
    pub fn start(&mut self, now: SimTime) -> Vec<Outgoing> {
        self.begin_attempt(0, now)
    }

    fn begin_attempt(&mut self, attempt: u8, now: SimTime) -> Vec<Outgoing> {
        self.attempt = attempt;
        self.lost = false;
        let n = self.params.n;
        let mut out = Vec::new();
        match self.protocol {
            Protocol::Pbft => {
                self.state = AttemptState::Pbft(vec![PbftNode::default(); n]);
                let primary = attempt as usize % n;
                let v = self.values[primary];
                for to in (0..n).filter(|&j| j != primary) {
                    out.push(self.msg(MessageKind::PrePrepare, primary, Some(to), v));
                }
                self.check_prepared(primary, now, &mut out);
            }
            Protocol::Fqc { c } => {
                self.state = AttemptState::Fqc {
                    delivered: vec![0; n],
                    tally: Vec::new(),
                };
                for from in 0..n {
                    for _ in 0..c {
                        out.push(self.msg(MessageKind::FqcCoordination, from, None, self.values[from]));
                    }
                }
            }
        }
        self.msg_count += out.len() as u64;
        out
    }

    fn msg(&self, kind: MessageKind, from: usize, to: Option<usize>, value: f64) -> Outgoing {
        Outgoing {
            attempt: self.attempt,
            kind,
            from: from as u16,
            to: to.map(|t| t as u16),
            value,
        }
    }

    /// Reports what the medium did with one emitted message. Every delivered
    /// message must later be handed to [`Self::on_deliver`].
    pub fn on_sent(&mut self, msg: &Outgoing, outcome: &TransmitOutcome) {
        match outcome {
            TransmitOutcome::Delivered { .. } => self.in_flight += 1,
            _ => {
                if msg.attempt == self.attempt {
                    self.lost = true;
                }
            }
        }
    }

    pub fn on_deliver(&mut self, msg: &Outgoing, now: SimTime) -> Vec<Outgoing> {
        debug_assert!(self.in_flight > 0);
        self.in_flight -= 1;
        let mut out = Vec::new();
        if msg.attempt != self.attempt {
            return out;
        }
        let from = msg.from as usize;
        match msg.kind {
            MessageKind::PrePrepare | MessageKind::Prepare | MessageKind::Commit => {
                let me = msg.to.expect("PBFT messages are addressed to a member") as usize;
                let mine = self.values[me];
                let AttemptState::Pbft(nodes) = &mut self.state else {
                    return out;
                };
                let node = &mut nodes[me];
                match msg.kind {
                    MessageKind::PrePrepare => {
                        if node.got_pre_prepare {
                            return out;
                        }
                        node.got_pre_prepare = true;
                        node.prepares.add(msg.value);
                        for to in (0..self.params.n).filter(|&j| j != me) {
                            out.push(self.msg(MessageKind::Prepare, me, Some(to), mine));
                        }
                        self.check_prepared(me, now, &mut out);
                    }
                    MessageKind::Prepare => {
                        node.prepares.add(msg.value);
                        self.check_prepared(me, now, &mut out);
                    }
                    _ => {
                        node.commits.add(msg.value);
                        self.check_decided(me, now);
                    }
                }
            }
            MessageKind::FqcCoordination => {
                let c = match self.protocol {
                    Protocol::Fqc { c } => c,
                    Protocol::Pbft => return out,
                };
                let AttemptState::Fqc { delivered, tally } = &mut self.state else {
                    return out;
                };
                delivered[from] += 1;
                if delivered[from] == c {
                    let v = msg.value;
                    let count = match tally.iter_mut().find(|(u, _)| same(*u, v)) {
                        Some(entry) => {
                            entry.1 += 1;
                            entry.1
                        }
                        None => {
                            tally.push((v, 1));
                            1
                        }
                    };
                    if count >= self.quorum {
                        self.finish(ConsensusResult::Decided(v), now);
                    }
                }
            }
            _ => {}
        }
        self.msg_count += out.len() as u64;
        out
    }

    fn check_prepared(&mut self, me: usize, now: SimTime, out: &mut Vec<Outgoing>) {
        let primary = self.attempt as usize % self.params.n;
        let mine = self.values[me];
        let quorum = self.quorum;
        let AttemptState::Pbft(nodes) = &mut self.state else {
            return;
        };
        let node = &mut nodes[me];
        let ready = me == primary || node.got_pre_prepare;
        if node.prepared.is_some() || !ready {
            return;
        }
        // Own reading counts as one vote; quorum > n/2 makes the value unique.
        let votes = |v: f64| node.prepares.count(v) + same(v, mine) as usize;
        let Some(v) = std::iter::once(mine)
            .chain(node.prepares.0.iter().map(|e| e.0))
            .find(|&v| votes(v) >= quorum)
        else {
            return;
        };
        node.prepared = Some(v);
        node.commits.add(v);
        for to in (0..self.params.n).filter(|&j| j != me) {
            out.push(self.msg(MessageKind::Commit, me, Some(to), v));
        }
        self.check_decided(me, now);
    }

    fn check_decided(&mut self, me: usize, now: SimTime) {
        if self.result.is_some() {
            return;
        }
        let AttemptState::Pbft(nodes) = &mut self.state else {
            return;
        };
        let node = &mut nodes[me];
        let Some(v) = node.prepared else {
            return;
        };
        if node.committed || node.commits.count(v) < self.quorum {
            return;
        }
        node.committed = true;
        // The concentrator acts on a decision once f + 1 replicas vouch for it.
        let committed = nodes.iter().filter(|n| n.committed).count();
        if committed > byzantine_tolerance(self.params.n) {
            self.finish(ConsensusResult::Decided(v), now);
        }
    }

    fn finish(&mut self, result: ConsensusResult, now: SimTime) {
        if self.result.is_none() {
            self.result = Some((result, now));
        }
    }

    /// Call after each batch of sends and deliveries. Ends the instance when
    /// the attempt has gone quiet without losing anything: the proposals
    /// themselves cannot form a quorum, and retrying would not change that.
    pub fn settle(&mut self, now: SimTime) {
        if self.result.is_none() && self.in_flight == 0 && !self.lost {
            self.finish(ConsensusResult::Failed(FailReason::InsufficientQuorum), now);
        }
    }

    /// Handles the timeout of `attempt`. Returns the messages of a retry, if
    /// one is started.
    pub fn on_timeout(&mut self, attempt: u8, now: SimTime) -> Vec<Outgoing> {
        if self.result.is_some() || attempt != self.attempt {
            return Vec::new();
        }
        if self.attempt < self.retry_limit() {
            self.begin_attempt(self.attempt + 1, now)
        } else {
            self.finish(ConsensusResult::Failed(FailReason::Timeout), now);
            Vec::new()
        }
    }

    fn retry_limit(&self) -> u8 {
        match self.protocol {
            Protocol::Pbft => self.params.max_retries,
            // A single expected round, retried once.
            Protocol::Fqc { .. } => self.params.max_retries.min(1),
        }
    }
}

/// Builds the wire message for an emitted protocol message.
pub fn to_message(out: &Outgoing, participants: &[u32], concentrator: u16, bits: u32, tx: TxId) -> Message {
    let dst = match out.to {
        Some(i) => NodeId::Sensor(participants[i as usize]),
        None => NodeId::Concentrator(concentrator),
    };
    Message::new(NodeId::Sensor(participants[out.from as usize]), dst, out.kind, bits, tx)
        .expect("consensus messages have a positive size")
}

#[derive(Clone, Copy)]
enum Pending {
    Deliver(Outgoing),
    Timeout(u8),
}

struct LocalQueue {
    heap: BinaryHeap<Reverse<(SimTime, usize)>>,
    items: Vec<Pending>,
}

impl LocalQueue {
    fn push(&mut self, at: SimTime, p: Pending) {
        self.heap.push(Reverse((at, self.items.len())));
        self.items.push(p);
    }

    fn dispatch<F>(&mut self, inst: &mut ConsensusInstance, batch: Vec<Outgoing>, now: SimTime, send: &mut F)
    where
        F: FnMut(&Outgoing, SimTime) -> TransmitOutcome,
    {
        for m in batch {
            let outcome = send(&m, now);
            inst.on_sent(&m, &outcome);
            if let TransmitOutcome::Delivered { at } = outcome {
                self.push(at, Pending::Deliver(m));
            }
        }
    }
}

/// Private event loop shared by the standalone drivers.
fn drive<F>(mut inst: ConsensusInstance, now: SimTime, mut send: F) -> ConsensusOutcome
where
    F: FnMut(&Outgoing, SimTime) -> TransmitOutcome,
{
    let timeout = inst.params.timeout;
    let mut q = LocalQueue {
        heap: BinaryHeap::new(),
        items: Vec::new(),
    };
    let first = inst.start(now);
    q.dispatch(&mut inst, first, now, &mut send);
    q.push(now.plus_secs(timeout), Pending::Timeout(0));
    inst.settle(now);

    while let Some(Reverse((at, idx))) = q.heap.pop() {
        if inst.is_finished() && inst.in_flight() == 0 {
            break;
        }
        let batch = match q.items[idx] {
            Pending::Deliver(m) => inst.on_deliver(&m, at),
            Pending::Timeout(a) => {
                let retry = inst.on_timeout(a, at);
                if !inst.is_finished() && inst.attempt() != a {
                    q.push(at.plus_secs(timeout), Pending::Timeout(inst.attempt()));
                }
                retry
            }
        };
        q.dispatch(&mut inst, batch, at, &mut send);
        inst.settle(at);
    }
    inst.outcome().expect("an instance always ends by its last timeout")
}

/// Runs one PBFT instance on its own over `medium`.
pub fn pbft_instance(
    values: &[f64],
    params: ConsensusParams,
    medium: &mut SharedMedium,
    now: SimTime,
    stream: &mut RandomStream,
) -> ConsensusOutcome {
    let participants: Vec<u32> = (0..values.len() as u32).collect();
    let tx = TxId { spot: 0, round: 0 };
    let inst = ConsensusInstance::new(Protocol::Pbft, params, values.to_vec(), now);
    drive(inst, now, |m, at| {
        let msg = to_message(m, &participants, 0, params.msg_bits, tx);
        link_transmit(medium, &msg, at, stream)
    })
}

/// Runs one FQC instance on its own: coordination goes through `qplane`,
/// with the classical residual (or a full fallback) on `medium`.
pub fn fqc_instance(
    values: &[f64],
    params: ConsensusParams,
    c: u32,
    qplane: &mut QuantumLink,
    medium: &mut SharedMedium,
    now: SimTime,
    stream: &mut RandomStream,
) -> ConsensusOutcome {
    let participants: Vec<u32> = (0..values.len() as u32).collect();
    let tx = TxId { spot: 0, round: 0 };
    let inst = ConsensusInstance::new(Protocol::Fqc { c }, params, values.to_vec(), now);
    let mut classical_stream = stream.fork();
    drive(inst, now, |m, at| {
        let msg = to_message(m, &participants, 0, params.msg_bits, tx);
        quantum_transmit(qplane, &msg, at, stream, |bits| {
            let residual = Message::new(msg.src, msg.dst, msg.kind, bits, tx).expect("positive size");
            link_transmit(medium, &residual, at, &mut classical_stream)
        })
    })
}
