//! Discrete-event message bus.
//!
//! Events are ordered by `(time, sequence)`. Each delivery takes
//! `base + uniform(0..=jitter)` time units, clamped so a link never reorders
//! messages. Every message is encoded on send and decoded on delivery, so the
//! byte counts are those of the real wire format.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, HashMap};
use std::time::Duration;

use bytes::Bytes;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::chunkstore::{Address, ChunkId};
use crate::protocol::{Dest, Message, MessageKind, Outgoing, Peer};

use super::metrics::{EvalRecord, MetricsReport};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Latency {
    pub base: u64,
    pub jitter: u64,
}

impl Default for Latency {
    fn default() -> Self {
        Self { base: 1, jitter: 0 }
    }
}

#[derive(Debug, PartialEq, Eq, PartialOrd, Ord)]
struct Event {
    time: u64,
    seq: u64,
    from: usize,
    to: usize,
    bytes: Bytes,
}

#[derive(Debug)]
pub struct Simulation {
    peers: Vec<Peer>,
    index: HashMap<Address, usize>,
    heap: BinaryHeap<Reverse<Event>>,
    now: u64,
    seq: u64,
    latency: Latency,
    rng: ChaCha8Rng,
    link_last: HashMap<(usize, usize), u64>,
    epoch: u32,
    metadata_per_peer: Vec<u64>,
    payload_bytes: u64,
    kinds: BTreeMap<MessageKind, u64>,
    kind_metadata: BTreeMap<MessageKind, u64>,
    selects_per_peer: Vec<u64>,
    events: u64,
    decode_errors: u64,
    transferred: Vec<BTreeSet<ChunkId>>,
    evals: Vec<EvalRecord>,
    pair_rounds: HashMap<(usize, usize), u32>,
    prove_bits: (f64, u64),
    mphf_bits: (f64, u64),
    trace: Option<Vec<String>>,
}

impl Simulation {
    pub fn new(peers: Vec<Peer>, latency: Latency, seed: u64, trace: bool) -> Self {
        let n = peers.len();
        let index = peers.iter().enumerate().map(|(i, p)| (p.address(), i)).collect();
        Self {
            peers,
            index,
            heap: BinaryHeap::new(),
            now: 0,
            seq: 0,
            latency,
            rng: ChaCha8Rng::seed_from_u64(seed),
            link_last: HashMap::new(),
            epoch: 0,
            metadata_per_peer: vec![0; n],
            payload_bytes: 0,
            kinds: BTreeMap::new(),
            kind_metadata: BTreeMap::new(),
            selects_per_peer: vec![0; n],
            events: 0,
            decode_errors: 0,
            transferred: vec![BTreeSet::new(); n],
            evals: Vec::new(),
            pair_rounds: HashMap::new(),
            prove_bits: (0.0, 0),
            mphf_bits: (0.0, 0),
            trace: trace.then(Vec::new),
        }
    }

    pub fn peers(&self) -> &[Peer] {
        &self.peers
    }

    pub fn peer_mut(&mut self, i: usize) -> &mut Peer {
        &mut self.peers[i]
    }

    pub fn index_of(&self, addr: &Address) -> Option<usize> {
        self.index.get(addr).copied()
    }

    pub fn now(&self) -> u64 {
        self.now
    }

    pub fn events(&self) -> u64 {
        self.events
    }

    pub fn decode_errors(&self) -> u64 {
        self.decode_errors
    }

    pub fn evaluations(&self) -> &[EvalRecord] {
        &self.evals
    }

    pub fn selects_sent(&self, peer: usize) -> u64 {
        self.selects_per_peer[peer]
    }

    pub fn metadata_bytes(&self) -> u64 {
        self.metadata_per_peer.iter().sum()
    }

    /// Non-payload bytes sent in messages of `kind`.
    pub fn metadata_bytes_of(&self, kind: MessageKind) -> u64 {
        self.kind_metadata.get(&kind).copied().unwrap_or(0)
    }

    pub fn message_count(&self, kind: MessageKind) -> u64 {
        self.kinds.get(&kind).copied().unwrap_or(0)
    }

    pub fn trace(&self) -> &[String] {
        self.trace.as_deref().unwrap_or(&[])
    }

    fn log(&mut self, line: impl FnOnce() -> String) {
        if let Some(t) = self.trace.as_mut() {
            t.push(line());
        }
    }

    /// Fires the beacon trigger of `epoch` at every peer, in peer order.
    pub fn beacon(&mut self, epoch: u32) {
        self.epoch = epoch;
        let now = self.now;
        self.log(|| format!("t={now} beacon epoch={epoch}"));
        for i in 0..self.peers.len() {
            let block = self.peers[i].config().beacon.epoch_start(epoch as u64);
            let out = self.peers[i].on_beacon(block);
            self.dispatch(i, out);
        }
    }

    /// Queues `msg` from peer `from` to peer `to` outside the protocol, for
    /// replay and fault injection.
    pub fn inject(&mut self, from: usize, to: usize, msg: &Message) {
        self.schedule(from, to, Bytes::from(msg.encode()));
    }

    /// Queues raw bytes from peer `from` to peer `to`.
    pub fn inject_bytes(&mut self, from: usize, to: usize, bytes: Vec<u8>) {
        self.schedule(from, to, Bytes::from(bytes));
    }

    fn dispatch(&mut self, from: usize, out: Vec<Outgoing>) {
        for o in out {
            let targets: Vec<usize> = match o.dest {
                Dest::Peer(addr) => match self.index.get(&addr) {
                    Some(&i) => vec![i],
                    None => continue,
                },
                Dest::Neighborhood => (0..self.peers.len()).filter(|&i| i != from).collect(),
            };
            let bytes = Bytes::from(o.msg.encode());
            let k = targets.len() as u64;
            self.metadata_per_peer[from] += o.msg.metadata_len() as u64 * k;
            self.payload_bytes += o.msg.payload_len() as u64 * k;
            *self.kinds.entry(o.msg.kind()).or_default() += k;
            *self.kind_metadata.entry(o.msg.kind()).or_default() += o.msg.metadata_len() as u64 * k;
            match &o.msg {
                Message::Select { .. } => self.selects_per_peer[from] += k,
                Message::Prove(p) if !p.is_empty() => {
                    let n = p.len() as f64;
                    self.prove_bits.0 += k as f64 * 8.0 * o.msg.metadata_len() as f64 / n;
                    self.prove_bits.1 += k;
                    self.mphf_bits.0 += k as f64 * p.mphf().size_bits() as f64 / n;
                    self.mphf_bits.1 += k;
                }
                _ => {}
            }
            for to in targets {
                self.schedule(from, to, bytes.clone());
            }
        }
    }

    fn schedule(&mut self, from: usize, to: usize, bytes: Bytes) {
        let jitter = if self.latency.jitter > 0 { self.rng.gen_range(0..=self.latency.jitter) } else { 0 };
        let last = self.link_last.entry((from, to)).or_insert(0);
        let time = (self.now + self.latency.base + jitter).max(*last);
        *last = time;
        self.seq += 1;
        self.heap.push(Reverse(Event { time, seq: self.seq, from, to, bytes }));
    }

    /// Delivers the next event. Returns false when the queue is empty.
    pub fn step(&mut self) -> bool {
        let Some(Reverse(ev)) = self.heap.pop() else { return false };
        self.now = ev.time;
        self.events += 1;
        let msg = match Message::decode(&ev.bytes) {
            Ok(m) => m,
            Err(e) => {
                self.decode_errors += 1;
                let now = self.now;
                self.log(|| format!("t={now} {}->{} decode-error {e}", ev.from, ev.to));
                return true;
            }
        };
        let now = self.now;
        let len = ev.bytes.len();
        self.log(|| format!("t={now} {}->{} {} bytes={len}", ev.from, ev.to, msg.kind().name()));
        if let Message::Upload(c) = &msg {
            self.transferred[ev.to].insert(c.id());
        }
        let from_addr = self.peers[ev.from].address();
        let out = self.peers[ev.to].handle(from_addr, msg);
        self.record_evaluations(ev.to);
        self.dispatch(ev.to, out);
        true
    }

    /// Runs until no events remain or `max_events` more were delivered.
    /// Returns true on quiescence.
    pub fn run_until_quiet(&mut self, max_events: u64) -> bool {
        for _ in 0..max_events {
            if !self.step() {
                return true;
            }
        }
        self.heap.is_empty()
    }

    fn record_evaluations(&mut self, v: usize) {
        let evals = self.peers[v].take_evaluations();
        for e in evals {
            let Some(&p) = self.index.get(&e.prover) else { continue };
            let Some(rev) = self.peers[p].reverse_map(&e.nonce) else { continue };
            let store = self.peers[v].store();
            let truly_missing: BTreeSet<ChunkId> = rev.iter().map(|(_, id)| id).filter(|id| !store.contains(id)).collect();
            let identified: BTreeSet<ChunkId> = e.report.missing.iter().filter_map(|&i| rev.get(i)).collect();
            let members_held = rev.len() as u64 - truly_missing.len() as u64;
            let round = self.pair_rounds.entry((v, p)).or_default();
            *round += 1;
            let rec = EvalRecord {
                epoch: self.epoch,
                verifier: v,
                prover: p,
                pair_round: *round,
                nonce: e.nonce,
                n: e.n,
                collision: e.report.collision,
                false_positive_hits: e.report.hits.saturating_sub(members_held),
                identified,
                truly_missing,
            };
            let now = self.now;
            self.log(|| {
                format!(
                    "t={now} eval verifier={} prover={} round={} n={} identified={} missing={} collision={}",
                    rec.verifier,
                    rec.prover,
                    rec.pair_round,
                    rec.n,
                    rec.identified.len(),
                    rec.truly_missing.len(),
                    rec.collision
                )
            });
            self.evals.push(rec);
        }
    }

    /// Fills the protocol-side fields of a report.
    pub fn fill_report(&self, r: &mut MetricsReport) {
        r.metadata_bytes = self.metadata_bytes();
        r.sync_metadata_bytes =
            r.metadata_bytes - self.metadata_bytes_of(MessageKind::Upload) - self.metadata_bytes_of(MessageKind::UploadDone);
        r.metadata_bytes_per_peer = self.metadata_per_peer.clone();
        r.chunk_payload_bytes = self.payload_bytes;
        r.select_messages = self.message_count(MessageKind::Select);
        r.max_selects_per_peer = self.selects_per_peer.iter().max().copied().unwrap_or(0);
        r.prove_messages = self.message_count(MessageKind::Prove);
        r.new_proof_messages = self.message_count(MessageKind::NewProof);
        r.upload_messages = self.message_count(MessageKind::Upload);
        r.duration_events = self.events;
        r.bits_per_chunk = mean(self.prove_bits);
        r.mphf_bits_per_chunk = mean(self.mphf_bits);
        r.false_positive_hits = self.evals.iter().map(|e| e.false_positive_hits).sum();
        r.collisions = self.evals.iter().filter(|e| e.collision).count() as u64;
        r.checksum_mismatches = self.peers.iter().map(|p| p.counters().checksum_mismatch).sum();
        r.rejected_uploads = self.peers.iter().map(|p| p.counters().uploads_rejected).sum();
        r.proof_accuracy_per_round = accuracy_per_round(&self.evals);
        let (create, find) = self.peers.iter().fold((Duration::ZERO, Duration::ZERO), |(c, f), p| {
            let t = p.phase_times();
            (c + t.create, f + t.evaluate)
        });
        r.create_seconds = create.as_secs_f64();
        r.find_missing_seconds = find.as_secs_f64();
        r.transferred = self.transferred.clone();
        r.evaluations = self.evals.clone();
        r.addresses = self.peers.iter().map(|p| p.address()).collect();
        r.trace = self.trace().to_vec();
    }
}

fn mean((sum, count): (f64, u64)) -> f64 {
    if count == 0 {
        0.0
    } else {
        sum / count as f64
    }
}

/// For each k, identified over truly missing summed across all k-th pair
/// evaluations; 1 where nothing was missing.
pub(crate) fn accuracy_per_round(evals: &[EvalRecord]) -> Vec<f64> {
    let mut sums: BTreeMap<u32, (u64, u64)> = BTreeMap::new();
    for e in evals {
        let s = sums.entry(e.pair_round).or_default();
        s.0 += e.identified.intersection(&e.truly_missing).count() as u64;
        s.1 += e.truly_missing.len() as u64;
    }
    sums.values().map(|&(hit, total)| if total == 0 { 1.0 } else { hit as f64 / total as f64 }).collect()
}
