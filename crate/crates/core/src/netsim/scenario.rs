use std::collections::BTreeSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::chunkstore::{ChunkId, ChunkStore};
use crate::proof::Identity;
use crate::protocol::{Peer, PeerConfig};

use super::metrics::MetricsReport;
use super::sim::Simulation;
use super::{random_chunks, run_baseline, sample_positions, seed_for, Protocol, Scenario, ScenarioConfig};

/// Deliveries allowed per epoch before the run is cut off.
const MAX_EVENTS_PER_EPOCH: u64 = 50_000_000;

const STREAM_STORES: u64 = 1;
const STREAM_LATENCY: u64 = 2;
const STREAM_IDENTITY: u64 = 100;

/// Initial stores of every peer for `config`.
pub fn build_stores(config: &ScenarioConfig) -> Vec<ChunkStore> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed_for(config.seed, STREAM_STORES));
    let n = config.chunks_per_peer();
    let size = config.chunk_size;
    match config.scenario {
        Scenario::ChunkLoss(f) => {
            let base: ChunkStore = random_chunks(&mut rng, n, size).into_iter().collect();
            let mut stores = vec![base; config.peers];
            let ids: Vec<ChunkId> = stores[0].ids().copied().collect();
            for pos in sample_positions(&mut rng, n, (f * n as f64).round() as usize) {
                stores[0].delete(&ids[pos]);
            }
            stores
        }
        Scenario::ChunkAdd(bytes) => {
            let base: ChunkStore = random_chunks(&mut rng, n, size).into_iter().collect();
            let mut stores = vec![base; config.peers];
            let extra = (bytes as usize).div_ceil(size);
            stores[0].extend(random_chunks(&mut rng, extra, size));
            stores
        }
        Scenario::Similarity(s) => {
            let shared = (s * n as f64).round() as usize;
            let core = random_chunks(&mut rng, shared, size);
            (0..config.peers)
                .map(|_| core.iter().cloned().chain(random_chunks(&mut rng, n - shared, size)).collect())
                .collect()
        }
    }
}

pub fn union_of(stores: &[ChunkStore]) -> BTreeSet<ChunkId> {
    stores.iter().flat_map(|s| s.ids().copied()).collect()
}

fn converged(sim: &Simulation, union: &BTreeSet<ChunkId>) -> bool {
    sim.peers().iter().all(|p| p.store().len() == union.len() && union.iter().all(|id| p.store().contains(id)))
}

pub(crate) fn report_header(config: &ScenarioConfig) -> MetricsReport {
    MetricsReport {
        protocol: config.protocol.name().into(),
        scenario: config.scenario.label(),
        peers: config.peers,
        chunk_size: config.chunk_size,
        chunks_per_peer: config.chunks_per_peer(),
        seed: config.seed,
        ..Default::default()
    }
}

/// Runs `config` with the protocol it names.
pub fn run(config: &ScenarioConfig) -> MetricsReport {
    match config.protocol {
        Protocol::Snips => run_scenario(config),
        Protocol::Baseline => run_baseline(config),
    }
}

/// Runs the synchronization protocol one beacon epoch at a time until every
/// peer holds the union of the initial stores or `max_rounds` epochs pass.
///
/// Panics if `config` fails validation.
pub fn run_scenario(config: &ScenarioConfig) -> MetricsReport {
    if let Err(e) = config.validate() {
        panic!("invalid scenario config: {e}");
    }
    let stores = build_stores(config);
    let union = union_of(&stores);
    let peer_config = PeerConfig { gamma: config.gamma, verify_checksum: config.verify_checksum, ..Default::default() };
    let peers = stores
        .into_iter()
        .enumerate()
        .map(|(i, store)| {
            let id = Identity::from_seed(seed_for(config.seed, STREAM_IDENTITY + i as u64));
            Peer::with_store(id, peer_config.clone(), store)
        })
        .collect();
    let mut sim = Simulation::new(peers, config.latency, seed_for(config.seed, STREAM_LATENCY), config.trace);

    let mut report = report_header(config);
    for epoch in 0..config.max_rounds {
        sim.beacon(epoch);
        sim.run_until_quiet(MAX_EVENTS_PER_EPOCH);
        if converged(&sim, &union) {
            report.converged = true;
            report.rounds_to_sync = epoch + 1;
            break;
        }
    }
    if !report.converged {
        report.rounds_to_sync = config.max_rounds;
    }
    sim.fill_report(&mut report);
    report
}
