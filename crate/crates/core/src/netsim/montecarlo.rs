//! Monte Carlo estimators for false positives and false consistency.
//!
//! Trials are independent: trial `t` draws every chunk and nonce from
//! `seed_for(seed, t)`, so results do not depend on thread count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::chunkstore::{Address, ChunkStore};
use crate::hash::Digest;
use crate::mphf::DEFAULT_GAMMA;
use crate::proof::{create_proof, find_missing, ChunkProofCache, Identity, Nonce, StorageProof};

use super::{random_chunks, seed_for};

/// Payload size of generated chunks; content does not affect the estimates.
pub const MC_CHUNK_SIZE: usize = 16;

#[derive(Clone, Debug, PartialEq)]
pub struct FcEstimate {
    pub n: usize,
    pub trials: u64,
    pub false_consistent: u64,
    pub estimate: f64,
    /// `1 / n`.
    pub analytic: f64,
    /// Binomial standard error of the estimate under the analytic rate.
    pub sigma: f64,
}

impl FcEstimate {
    pub fn z_score(&self) -> f64 {
        (self.estimate - self.analytic) / self.sigma
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FpEstimate {
    pub n: usize,
    pub probe_count: usize,
    pub trials: u64,
    pub with_false_positive: u64,
    pub probability: f64,
}

fn prove(store: &ChunkStore, nonce: Nonce, identity: &Identity) -> StorageProof {
    create_proof(store, nonce, Address::ZERO, Address::MAX, &mut ChunkProofCache::new(), identity, DEFAULT_GAMMA)
        .expect("random chunk proofs are distinct")
        .0
}

/// Fraction of trials in which a verifier differing from the prover in
/// exactly one chunk sees neither a missing index nor a collision.
///
/// Panics if `n` is zero.
pub fn simulate_false_consistency(n: usize, trials: u64, seed: u64) -> FcEstimate {
    assert!(n >= 1, "false consistency needs at least one chunk");
    let identity = Identity::from_seed(seed);
    let hits = (0..trials)
        .into_par_iter()
        .filter(|&t| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed_for(seed, t));
            let mut chunks = random_chunks(&mut rng, n + 1, MC_CHUNK_SIZE);
            let nonce: Nonce = rng.gen();
            let only_verifier = chunks.pop().unwrap();
            let prover: ChunkStore = chunks.iter().cloned().collect();
            chunks.pop();
            let verifier: ChunkStore = chunks.into_iter().chain([only_verifier]).collect();
            let proof = prove(&prover, nonce, &identity);
            let report = find_missing(&verifier, &proof, &mut ChunkProofCache::new());
            report.missing.is_empty() && !report.collision
        })
        .count() as u64;
    let analytic = 1.0 / n as f64;
    FcEstimate {
        n,
        trials,
        false_consistent: hits,
        estimate: hits as f64 / trials as f64,
        analytic,
        sigma: (analytic * (1.0 - analytic) / trials as f64).sqrt(),
    }
}

/// Fraction of trials in which at least one of `probe_count` random
/// non-member digests gets a nonzero index from an `n`-chunk proof.
pub fn simulate_false_positive(n: usize, probe_count: usize, trials: u64, seed: u64) -> FpEstimate {
    let identity = Identity::from_seed(seed);
    let hits = if n == 0 {
        0
    } else {
        (0..trials)
            .into_par_iter()
            .filter(|&t| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed_for(seed, t));
                let store: ChunkStore = random_chunks(&mut rng, n, MC_CHUNK_SIZE).into_iter().collect();
                let proof = prove(&store, rng.gen(), &identity);
                (0..probe_count).any(|_| proof.find(&rng.gen::<Digest>()) != 0)
            })
            .count() as u64
    };
    FpEstimate {
        n,
        probe_count,
        trials,
        with_false_positive: hits,
        probability: if trials == 0 { 0.0 } else { hits as f64 / trials as f64 },
    }
}
