//! Per-peer state machine.
//!
//! A [`Peer`] consumes one message at a time and returns the messages it
//! wants sent. Received proofs are queued and evaluated one at a time; a
//! proof is evaluated against the store as it is when the proof leaves the
//! queue, so chunks received through earlier proofs are taken into account.
//!
//! Uploads for the proof in flight are held back until UploadDone. When the
//! evaluation saw no collision and checksum verification is enabled, the
//! chunk proofs of all indices are reassembled (local hits plus uploads) and
//! compared with the proof checksum; on mismatch the uploads are dropped.
//! A collision or a mismatch asks the prover for a fresh proof under the
//! next recovery nonce of the same epoch.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet, VecDeque};
use std::time::{Duration, Instant};

use crate::chunkstore::{in_neighborhood, Address, Chunk, ChunkStore};
use crate::hash::Digest;
use crate::mphf::DEFAULT_GAMMA;
use crate::proof::{
    chunk_proof, create_proof, proof_checksum, tally, ChunkProofCache, Identity, MissingReport, Nonce, ReverseMap,
    StorageProof,
};

use super::beacon::Beacon;
use super::message::{Message, SelectBits};

#[derive(Clone, Debug)]
pub struct PeerConfig {
    /// Neighborhood depth; chunks and provers must share this many bits.
    pub prefix_bits: u32,
    /// Range proven on beacon triggers and on NewProof without a range.
    pub range: (Address, Address),
    pub gamma: f64,
    pub verify_checksum: bool,
    /// Epochs whose nonces, proofs and replay keys are retained.
    pub keep_epochs: u64,
    /// Recovery nonces available per epoch.
    pub max_recovery: u64,
    pub beacon: Beacon,
}

impl Default for PeerConfig {
    fn default() -> Self {
        Self {
            prefix_bits: 0,
            range: (Address::ZERO, Address::MAX),
            gamma: DEFAULT_GAMMA,
            verify_checksum: true,
            keep_epochs: 2,
            max_recovery: 32,
            beacon: Beacon::default(),
        }
    }
}

#[derive(Clone, Debug)]
pub enum Dest {
    Peer(Address),
    /// Every other peer of the neighborhood.
    Neighborhood,
}

#[derive(Clone, Debug)]
pub struct Outgoing {
    pub dest: Dest,
    pub msg: Message,
}

impl Outgoing {
    fn to(addr: Address, msg: Message) -> Self {
        Self { dest: Dest::Peer(addr), msg }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Counters {
    pub proofs_created: u64,
    pub proof_failures: u64,
    pub bad_signature: u64,
    pub foreign_prover: u64,
    pub unknown_nonce: u64,
    pub replayed: u64,
    pub unknown_select_nonce: u64,
    pub select_out_of_range: u64,
    pub chunk_unavailable: u64,
    pub uploads_accepted: u64,
    pub uploads_rejected: u64,
    pub missing_uploads: u64,
    pub unsolicited_upload_done: u64,
    pub checksum_mismatch: u64,
    pub chunks_committed: u64,
    pub selects_sent: u64,
    pub new_proofs_sent: u64,
}

/// Wall-clock time spent building and evaluating proofs.
#[derive(Clone, Copy, Debug, Default)]
pub struct PhaseTimes {
    pub create: Duration,
    pub evaluate: Duration,
}

/// One evaluated proof, as seen by the verifier.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Evaluation {
    pub prover: Address,
    pub nonce: Nonce,
    pub n: u64,
    pub report: MissingReport,
}

#[derive(Clone, Debug)]
struct CachedProof {
    range: (Address, Address),
    proof: StorageProof,
    reverse: ReverseMap,
}

#[derive(Clone, Copy, Debug)]
struct NonceInfo {
    epoch: u64,
    depth: u64,
}

#[derive(Debug)]
struct Pipeline {
    prover: Address,
    proof: StorageProof,
    collision: bool,
    slots: Vec<Option<Digest>>,
    outstanding: BTreeSet<u64>,
    received: BTreeMap<u64, (Digest, Chunk)>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
enum ReplayKind {
    Prove,
    Select,
}

#[derive(Debug)]
pub struct Peer {
    identity: Identity,
    config: PeerConfig,
    store: ChunkStore,
    cache: ChunkProofCache,
    window: HashMap<Nonce, NonceInfo>,
    epochs: BTreeMap<u64, Vec<Nonce>>,
    proofs: HashMap<Nonce, CachedProof>,
    seen: HashMap<Nonce, HashSet<(ReplayKind, Address)>>,
    queue: VecDeque<(Address, StorageProof)>,
    inflight: Option<Pipeline>,
    counters: Counters,
    misbehavior: BTreeMap<Address, u64>,
    evaluations: Vec<Evaluation>,
    times: PhaseTimes,
}

impl Peer {
    pub fn new(identity: Identity, config: PeerConfig) -> Self {
        Self {
            identity,
            config,
            store: ChunkStore::new(),
            cache: ChunkProofCache::new(),
            window: HashMap::new(),
            epochs: BTreeMap::new(),
            proofs: HashMap::new(),
            seen: HashMap::new(),
            queue: VecDeque::new(),
            inflight: None,
            counters: Counters::default(),
            misbehavior: BTreeMap::new(),
            evaluations: Vec::new(),
            times: PhaseTimes::default(),
        }
    }

    pub fn with_store(identity: Identity, config: PeerConfig, store: ChunkStore) -> Self {
        let mut p = Self::new(identity, config);
        p.store = store;
        p
    }

    pub fn address(&self) -> Address {
        self.identity.address()
    }

    pub fn identity(&self) -> &Identity {
        &self.identity
    }

    pub fn config(&self) -> &PeerConfig {
        &self.config
    }

    pub fn store(&self) -> &ChunkStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ChunkStore {
        &mut self.store
    }

    pub fn counters(&self) -> &Counters {
        &self.counters
    }

    pub fn cache(&self) -> &ChunkProofCache {
        &self.cache
    }

    /// Rejected messages attributed to `peer`.
    pub fn misbehavior(&self, peer: &Address) -> u64 {
        self.misbehavior.get(peer).copied().unwrap_or(0)
    }

    pub fn reverse_map(&self, nonce: &Nonce) -> Option<&ReverseMap> {
        self.proofs.get(nonce).map(|c| &c.reverse)
    }

    pub fn cached_proof(&self, nonce: &Nonce) -> Option<&StorageProof> {
        self.proofs.get(nonce).map(|c| &c.proof)
    }

    pub fn knows_nonce(&self, nonce: &Nonce) -> bool {
        self.window.contains_key(nonce)
    }

    pub fn queued(&self) -> usize {
        self.queue.len()
    }

    /// Prover of the proof currently awaiting uploads.
    pub fn inflight_prover(&self) -> Option<Address> {
        self.inflight.as_ref().map(|p| p.prover)
    }

    pub fn is_idle(&self) -> bool {
        self.inflight.is_none() && self.queue.is_empty()
    }

    pub fn phase_times(&self) -> PhaseTimes {
        self.times
    }

    pub fn evaluations(&self) -> &[Evaluation] {
        &self.evaluations
    }

    pub fn take_evaluations(&mut self) -> Vec<Evaluation> {
        std::mem::take(&mut self.evaluations)
    }

    /// Opens the epoch started by `block`, if any, and broadcasts its proof.
    pub fn on_beacon(&mut self, block: u64) -> Vec<Outgoing> {
        let Some(epoch) = self.config.beacon.trigger_epoch(block) else {
            return Vec::new();
        };
        self.open_epoch(epoch);
        let nonce = self.config.beacon.nonce(epoch, 0);
        match self.proof_for(nonce, self.config.range) {
            Some(proof) => vec![Outgoing { dest: Dest::Neighborhood, msg: Message::Prove(proof) }],
            None => Vec::new(),
        }
    }

    pub fn handle(&mut self, from: Address, msg: Message) -> Vec<Outgoing> {
        let mut out = Vec::new();
        match msg {
            Message::NewProof { nonce, range } => self.on_new_proof(from, nonce, range, &mut out),
            Message::Prove(proof) => self.on_prove(from, proof, &mut out),
            Message::Select { nonce, bits } => self.on_select(from, nonce, &bits, &mut out),
            Message::Upload(chunk) => self.on_upload(from, chunk),
            Message::UploadDone => self.on_upload_done(from, &mut out),
        }
        out
    }

    fn open_epoch(&mut self, epoch: u64) {
        if self.epochs.contains_key(&epoch) {
            return;
        }
        let nonces: Vec<Nonce> = (0..=self.config.max_recovery)
            .map(|depth| {
                let nonce = self.config.beacon.nonce(epoch, depth);
                self.window.insert(nonce, NonceInfo { epoch, depth });
                nonce
            })
            .collect();
        self.epochs.insert(epoch, nonces);
        let keep = self.config.keep_epochs.max(1);
        while self.epochs.len() as u64 > keep {
            let (_, nonces) = self.epochs.pop_first().unwrap();
            for n in nonces {
                self.window.remove(&n);
                self.proofs.remove(&n);
                self.seen.remove(&n);
                self.cache.evict(&n);
            }
        }
    }

    fn proof_for(&mut self, nonce: Nonce, range: (Address, Address)) -> Option<StorageProof> {
        if let Some(c) = self.proofs.get(&nonce) {
            if c.range == range {
                return Some(c.proof.clone());
            }
        }
        let t0 = Instant::now();
        let built = create_proof(&self.store, nonce, range.0, range.1, &mut self.cache, &self.identity, self.config.gamma);
        self.times.create += t0.elapsed();
        match built {
            Ok((proof, reverse)) => {
                self.counters.proofs_created += 1;
                self.proofs.insert(nonce, CachedProof { range, proof: proof.clone(), reverse });
                Some(proof)
            }
            Err(_) => {
                self.counters.proof_failures += 1;
                None
            }
        }
    }

    fn blame(&mut self, peer: Address) {
        *self.misbehavior.entry(peer).or_default() += 1;
    }

    fn on_new_proof(&mut self, from: Address, nonce: Nonce, range: Option<(Address, Address)>, out: &mut Vec<Outgoing>) {
        if !self.window.contains_key(&nonce) {
            self.counters.unknown_nonce += 1;
            return;
        }
        let range = range.unwrap_or(self.config.range);
        if range.0 > range.1 {
            self.blame(from);
            return;
        }
        if let Some(proof) = self.proof_for(nonce, range) {
            out.push(Outgoing::to(from, Message::Prove(proof)));
        }
    }

    fn on_prove(&mut self, from: Address, proof: StorageProof, out: &mut Vec<Outgoing>) {
        if proof.verify_signature() != Some(from) {
            self.counters.bad_signature += 1;
            self.blame(from);
            return;
        }
        if !in_neighborhood(&self.address(), &from, self.config.prefix_bits) {
            self.counters.foreign_prover += 1;
            return;
        }
        let nonce = proof.nonce();
        if !self.window.contains_key(&nonce) {
            self.counters.unknown_nonce += 1;
            return;
        }
        if !self.seen.entry(nonce).or_default().insert((ReplayKind::Prove, from)) {
            self.counters.replayed += 1;
            return;
        }
        self.queue.push_back((from, proof));
        self.pump(out);
    }

    /// Evaluates queued proofs until one needs chunks.
    fn pump(&mut self, out: &mut Vec<Outgoing>) {
        while self.inflight.is_none() {
            let Some((prover, proof)) = self.queue.pop_front() else { return };
            let t0 = Instant::now();
            let t = tally(&self.store, &proof, &mut self.cache);
            self.times.evaluate += t0.elapsed();
            self.evaluations.push(Evaluation {
                prover,
                nonce: proof.nonce(),
                n: proof.len(),
                report: t.report.clone(),
            });
            if t.report.missing.is_empty() {
                continue;
            }
            let bits = SelectBits::from_indices(proof.len() as u32, t.report.missing.iter().copied());
            out.push(Outgoing::to(prover, Message::Select { nonce: proof.nonce(), bits }));
            self.counters.selects_sent += 1;
            self.inflight = Some(Pipeline {
                prover,
                collision: t.report.collision,
                outstanding: t.report.missing.into_iter().collect(),
                slots: t.slots,
                received: BTreeMap::new(),
                proof,
            });
        }
    }

    fn on_select(&mut self, from: Address, nonce: Nonce, bits: &SelectBits, out: &mut Vec<Outgoing>) {
        if !self.window.contains_key(&nonce) || !self.proofs.contains_key(&nonce) {
            self.counters.unknown_select_nonce += 1;
            return;
        }
        if !self.seen.entry(nonce).or_default().insert((ReplayKind::Select, from)) {
            self.counters.replayed += 1;
            return;
        }
        let reverse = &self.proofs[&nonce].reverse;
        for idx in bits.indices() {
            match reverse.get(idx).and_then(|id| self.store.get(&id)) {
                Some(chunk) => out.push(Outgoing::to(from, Message::Upload(chunk.clone()))),
                None if idx > reverse.len() as u64 => self.counters.select_out_of_range += 1,
                None => self.counters.chunk_unavailable += 1,
            }
        }
        out.push(Outgoing::to(from, Message::UploadDone));
    }

    fn on_upload(&mut self, from: Address, chunk: Chunk) {
        let me = self.address();
        let prefix_bits = self.config.prefix_bits;
        let accepted = match self.inflight.as_mut() {
            Some(p) if p.prover == from => {
                let cp = chunk_proof(&p.proof.nonce(), &chunk);
                let idx = p.proof.find(&cp);
                if in_neighborhood(&me, &chunk.id(), prefix_bits) && p.outstanding.remove(&idx) {
                    p.received.insert(idx, (cp, chunk));
                    true
                } else {
                    false
                }
            }
            _ => false,
        };
        if accepted {
            self.counters.uploads_accepted += 1;
        } else {
            self.counters.uploads_rejected += 1;
            self.blame(from);
        }
    }

    fn on_upload_done(&mut self, from: Address, out: &mut Vec<Outgoing>) {
        if self.inflight.as_ref().map(|p| p.prover) != Some(from) {
            self.counters.unsolicited_upload_done += 1;
            self.blame(from);
            return;
        }
        let p = self.inflight.take().unwrap();
        self.counters.missing_uploads += p.outstanding.len() as u64;

        let checked = self.config.verify_checksum && !p.collision;
        let mismatch = checked && p.proof.checksum().is_some_and(|want| reassembled_checksum(&p) != Some(want));
        if mismatch {
            self.counters.checksum_mismatch += 1;
        } else {
            for (_, (_, chunk)) in p.received {
                if self.store.put(chunk) {
                    self.counters.chunks_committed += 1;
                }
            }
        }

        if p.collision || mismatch {
            if let Some(info) = self.window.get(&p.proof.nonce()).copied() {
                if info.depth < self.config.max_recovery {
                    let nonce = self.config.beacon.nonce(info.epoch, info.depth + 1);
                    out.push(Outgoing::to(from, Message::NewProof { nonce, range: None }));
                    self.counters.new_proofs_sent += 1;
                }
            }
        }
        self.pump(out);
    }
}

/// Checksum over the chunk proofs of all indices, or `None` when some index
/// has neither a local hit nor an upload.
fn reassembled_checksum(p: &Pipeline) -> Option<Digest> {
    let seq: Option<Vec<Digest>> = p
        .slots
        .iter()
        .enumerate()
        .map(|(i, local)| p.received.get(&(i as u64 + 1)).map(|(cp, _)| *cp).or(*local))
        .collect();
    seq.map(|s| proof_checksum(&s))
}
