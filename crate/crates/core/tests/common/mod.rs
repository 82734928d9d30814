#![allow(dead_code)]

use std::collections::{BTreeSet, VecDeque};

use bytes::Bytes;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use snips::chunkstore::{Chunk, ChunkId, ChunkStore};
use snips::proof::{chunk_proof, Identity, StorageProof};
use snips::protocol::{Dest, Message, MessageKind, Outgoing, Peer, PeerConfig, DEFAULT_INTERVAL};

/// FIFO router over encoded messages. Every delivery is logged.
pub struct Net {
    pub peers: Vec<Peer>,
    pub queue: VecDeque<(usize, usize, Bytes)>,
    pub log: Vec<(usize, usize, Message)>,
}

impl Net {
    pub fn new(stores: Vec<ChunkStore>, config: PeerConfig, seed: u64) -> Self {
        let peers = stores
            .into_iter()
            .enumerate()
            .map(|(i, s)| Peer::with_store(Identity::from_seed(seed * 1000 + i as u64), config.clone(), s))
            .collect();
        Self { peers, queue: VecDeque::new(), log: Vec::new() }
    }

    pub fn from_peers(peers: Vec<Peer>) -> Self {
        Self { peers, queue: VecDeque::new(), log: Vec::new() }
    }

    pub fn index(&self, addr: &snips::chunkstore::Address) -> usize {
        self.peers.iter().position(|p| p.address() == *addr).expect("known peer")
    }

    pub fn route(&mut self, from: usize, out: Vec<Outgoing>) {
        for o in out {
            let targets: Vec<usize> = match o.dest {
                Dest::Peer(a) => vec![self.index(&a)],
                Dest::Neighborhood => (0..self.peers.len()).filter(|&i| i != from).collect(),
            };
            let bytes = Bytes::from(o.msg.encode());
            for t in targets {
                self.queue.push_back((from, t, bytes.clone()));
            }
        }
    }

    pub fn send(&mut self, from: usize, to: usize, msg: &Message) {
        self.queue.push_back((from, to, Bytes::from(msg.encode())));
    }

    /// Delivers one queued message; false when the queue is empty.
    pub fn step(&mut self) -> bool {
        let Some((from, to, bytes)) = self.queue.pop_front() else { return false };
        let msg = Message::decode(&bytes).expect("peers emit valid messages");
        self.log.push((from, to, msg.clone()));
        let addr = self.peers[from].address();
        let out = self.peers[to].handle(addr, msg);
        self.route(to, out);
        true
    }

    pub fn run(&mut self) {
        let mut guard = 0u64;
        while self.step() {
            guard += 1;
            assert!(guard < 10_000_000, "router did not quiesce");
        }
    }

    pub fn beacon(&mut self, block: u64) {
        for i in 0..self.peers.len() {
            let out = self.peers[i].on_beacon(block);
            self.route(i, out);
        }
    }

    pub fn ids(&self, i: usize) -> BTreeSet<ChunkId> {
        self.peers[i].store().ids().copied().collect()
    }
}

pub fn chunks(seed: u64, count: usize, size: usize) -> Vec<Chunk> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let mut d = vec![0u8; size];
            rng.fill_bytes(&mut d);
            Chunk::new(d).unwrap()
        })
        .collect()
}

pub fn store_of(chunks: &[Chunk]) -> ChunkStore {
    chunks.iter().cloned().collect()
}

/// A chunk outside the proven set that the proof maps to `index`.
pub fn impostor_for(proof: &StorageProof, index: u64, seed: u64) -> Chunk {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let mut d = vec![0u8; 64];
        rng.fill(&mut d[..]);
        let c = Chunk::new(d).unwrap();
        if proof.find(&chunk_proof(&proof.nonce(), &c)) == index {
            return c;
        }
    }
}

/// Runs two peers to quiescence, re-delivering random earlier Prove and
/// Select messages at random points.
pub fn run_with_replays(a: &[Chunk], b: &[Chunk], seed: u64, replay_prob: f64) -> (Net, u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut net = Net::new(vec![store_of(a), store_of(b)], PeerConfig::default(), 7);
    let mut replays = 0;
    for epoch in 0..10u64 {
        net.beacon(epoch * DEFAULT_INTERVAL);
        loop {
            if rng.gen_bool(replay_prob) {
                let old: Vec<(usize, usize, Message)> = net
                    .log
                    .iter()
                    .filter(|e| matches!(e.2.kind(), MessageKind::Prove | MessageKind::Select))
                    .cloned()
                    .collect();
                if !old.is_empty() {
                    let (f, t, m) = old[rng.gen_range(0..old.len())].clone();
                    let before = net.peers[t].store().clone();
                    let addr = net.peers[f].address();
                    let out = net.peers[t].handle(addr, m);
                    assert!(out.is_empty(), "replay produced output");
                    assert_eq!(net.peers[t].store().ids().collect::<Vec<_>>(), before.ids().collect::<Vec<_>>());
                    replays += 1;
                }
            }
            if !net.step() {
                break;
            }
        }
    }
    (net, replays)
}

