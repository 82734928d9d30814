//! Deterministic neighborhood simulator, scenario drivers and Monte Carlo
//! estimators.

mod baseline;
mod cost;
mod metrics;
mod montecarlo;
mod scenario;
mod sim;

use std::collections::BTreeSet;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::chunkstore::{Chunk, ChunkId, ChunkStore, MAX_CHUNK_SIZE};

pub use baseline::{run_baseline, BASELINE_ENVELOPE};
pub use cost::{measure_proof_cost, ProofCost};
pub use metrics::{EvalRecord, MetricsReport};
pub use montecarlo::{simulate_false_consistency, simulate_false_positive, FcEstimate, FpEstimate, MC_CHUNK_SIZE};
pub use scenario::{build_stores, run, run_scenario, union_of};
pub use sim::{Latency, Simulation};

pub const MIB: u64 = 1 << 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Protocol {
    Snips,
    Baseline,
}

impl Protocol {
    pub fn name(self) -> &'static str {
        match self {
            Protocol::Snips => "snips",
            Protocol::Baseline => "baseline",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Scenario {
    /// Peer 0 loses this fraction of the shared store.
    ChunkLoss(f64),
    /// Peer 0 gains this many bytes of new chunks on top of the shared store.
    ChunkAdd(u64),
    /// Every peer holds `round(s * n)` shared chunks and `n - round(s * n)`
    /// chunks of its own.
    Similarity(f64),
}

impl Scenario {
    pub fn label(&self) -> String {
        match self {
            Scenario::ChunkLoss(f) => format!("cl:{f}"),
            Scenario::ChunkAdd(b) => format!("ca:{b}"),
            Scenario::Similarity(s) => format!("sim:{s}"),
        }
    }

    /// Parses `cl:<fraction>`, `ca:<bytes>`, `ca:<n>mb` or `sim:<s>`.
    pub fn parse(s: &str) -> Result<Self, String> {
        let (kind, val) = s.split_once(':').ok_or_else(|| format!("expected kind:value, got {s:?}"))?;
        let frac = |v: &str| -> Result<f64, String> {
            let x: f64 = v.parse().map_err(|_| format!("bad number {v:?}"))?;
            if (0.0..=1.0).contains(&x) {
                Ok(x)
            } else {
                Err(format!("{x} outside [0, 1]"))
            }
        };
        match kind {
            "cl" => Ok(Scenario::ChunkLoss(frac(val)?)),
            "sim" => Ok(Scenario::Similarity(frac(val)?)),
            "ca" => {
                let lower = val.to_ascii_lowercase();
                let bytes = match lower.strip_suffix("mb") {
                    Some(mb) => mb.parse::<f64>().map(|m| (m * MIB as f64) as u64),
                    None => lower.parse::<f64>().map(|b| b as u64),
                };
                bytes.map(Scenario::ChunkAdd).map_err(|_| format!("bad byte count {val:?}"))
            }
            _ => Err(format!("unknown scenario kind {kind:?}")),
        }
    }
}

#[derive(Clone, Debug)]
pub struct ScenarioConfig {
    pub protocol: Protocol,
    pub peers: usize,
    /// Size of each peer's initial store before the scenario is applied.
    pub total_storage_bytes: u64,
    pub chunk_size: usize,
    pub scenario: Scenario,
    pub seed: u64,
    /// Beacon epochs allowed before a run is declared failed.
    pub max_rounds: u32,
    pub latency: Latency,
    pub verify_checksum: bool,
    pub gamma: f64,
    pub trace: bool,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            protocol: Protocol::Snips,
            peers: 2,
            total_storage_bytes: 10 * MIB,
            chunk_size: MAX_CHUNK_SIZE,
            scenario: Scenario::ChunkLoss(0.0),
            seed: 0,
            max_rounds: 10,
            latency: Latency::default(),
            verify_checksum: true,
            gamma: crate::mphf::DEFAULT_GAMMA,
            trace: false,
        }
    }
}

impl ScenarioConfig {
    pub fn chunks_per_peer(&self) -> usize {
        (self.total_storage_bytes / self.chunk_size as u64) as usize
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.peers < 2 {
            return Err("at least two peers are required".into());
        }
        if self.chunk_size == 0 || self.chunk_size > MAX_CHUNK_SIZE {
            return Err(format!("chunk size must be in 1..={MAX_CHUNK_SIZE}"));
        }
        if self.chunks_per_peer() == 0 {
            return Err("storage smaller than one chunk".into());
        }
        match self.scenario {
            Scenario::ChunkLoss(f) | Scenario::Similarity(f) if !(0.0..=1.0).contains(&f) => {
                Err(format!("fraction {f} outside [0, 1]"))
            }
            _ => Ok(()),
        }
    }
}

/// splitmix64 finalizer applied to `seed + stream`.
pub fn seed_for(seed: u64, stream: u64) -> u64 {
    let mut z = seed.wrapping_add(stream.wrapping_mul(0x9e37_79b9_7f4a_7c15)).wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// `count` chunks of `size` pseudorandom bytes.
pub fn random_chunks(rng: &mut impl RngCore, count: usize, size: usize) -> Vec<Chunk> {
    (0..count)
        .map(|_| {
            let mut d = vec![0u8; size];
            rng.fill_bytes(&mut d);
            Chunk::new(d).expect("size checked by caller")
        })
        .collect()
}

/// Two stores of `n` chunks each sharing exactly `round(s * n)` chunks.
///
/// Panics unless `s` is in `[0, 1]`.
pub fn init_similarity(n: usize, s: f64, seed: u64) -> (ChunkStore, ChunkStore) {
    init_similarity_sized(n, s, MAX_CHUNK_SIZE, seed)
}

pub fn init_similarity_sized(n: usize, s: f64, chunk_size: usize, seed: u64) -> (ChunkStore, ChunkStore) {
    assert!((0.0..=1.0).contains(&s), "similarity {s} outside [0, 1]");
    let shared = (s * n as f64).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let common = random_chunks(&mut rng, shared, chunk_size);
    let a_only = random_chunks(&mut rng, n - shared, chunk_size);
    let b_only = random_chunks(&mut rng, n - shared, chunk_size);
    let a = common.iter().cloned().chain(a_only).collect();
    let b = common.into_iter().chain(b_only).collect();
    (a, b)
}

/// `|A ∩ B| / min(|A|, |B|)`; 1 when both are empty, 0 when one is.
pub fn overlap_coefficient(a: &BTreeSet<ChunkId>, b: &BTreeSet<ChunkId>) -> f64 {
    match (a.is_empty(), b.is_empty()) {
        (true, true) => 1.0,
        (true, false) | (false, true) => 0.0,
        _ => a.intersection(b).count() as f64 / a.len().min(b.len()) as f64,
    }
}

/// `|identified ∩ truly_missing| / |truly_missing|`; 1 when nothing is missing.
pub fn proof_accuracy(identified: &BTreeSet<ChunkId>, truly_missing: &BTreeSet<ChunkId>) -> f64 {
    if truly_missing.is_empty() {
        return 1.0;
    }
    identified.intersection(truly_missing).count() as f64 / truly_missing.len() as f64
}

/// Random sample of `k` distinct positions below `n`, in ascending order.
pub(crate) fn sample_positions(rng: &mut impl Rng, n: usize, k: usize) -> Vec<usize> {
    let mut v = rand::seq::index::sample(rng, n, k.min(n)).into_vec();
    v.sort_unstable();
    v
}
