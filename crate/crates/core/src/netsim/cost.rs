use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::chunkstore::{Address, ChunkStore};
use crate::mphf::DEFAULT_GAMMA;
use crate::proof::{create_proof, find_missing, ChunkProofCache, Identity, Nonce};
use crate::protocol::Message;

use super::{random_chunks, seed_for};

/// Size and fastest observed compute time of one proof over `chunks` chunks.
#[derive(Clone, Debug, PartialEq)]
pub struct ProofCost {
    pub chunks: usize,
    pub chunk_size: usize,
    pub mphf_bits: u64,
    pub prove_bytes: usize,
    pub levels: usize,
    pub fallback: usize,
    /// `create_proof` with a cold chunk-proof cache.
    pub create: Duration,
    /// `find_missing` by a verifier holding the same chunks, cold cache.
    pub find_missing: Duration,
}

impl ProofCost {
    pub fn mphf_bits_per_chunk(&self) -> f64 {
        self.mphf_bits as f64 / self.chunks as f64
    }

    pub fn prove_bits_per_chunk(&self) -> f64 {
        (self.prove_bytes * 8) as f64 / self.chunks as f64
    }

    pub fn create_us_per_chunk(&self) -> f64 {
        self.create.as_secs_f64() * 1e6 / self.chunks as f64
    }

    pub fn find_missing_us_per_chunk(&self) -> f64 {
        self.find_missing.as_secs_f64() * 1e6 / self.chunks as f64
    }
}

/// Builds a random store of `chunks` chunks and times proof creation and
/// verification `reps` times, keeping the minimum of each.
///
/// Panics if `chunks` or `reps` is zero or `chunk_size` is not a valid size.
pub fn measure_proof_cost(chunks: usize, chunk_size: usize, reps: u32, seed: u64) -> ProofCost {
    assert!(chunks > 0 && reps > 0, "nothing to measure");
    let mut rng = ChaCha8Rng::seed_from_u64(seed_for(seed, chunks as u64));
    let store: ChunkStore = random_chunks(&mut rng, chunks, chunk_size).into_iter().collect();
    let identity = Identity::from_seed(seed);
    let mut best: Option<ProofCost> = None;
    for _ in 0..reps {
        let nonce: Nonce = rng.gen();
        let t = Instant::now();
        let (proof, _) = create_proof(&store, nonce, Address::ZERO, Address::MAX, &mut ChunkProofCache::new(), &identity, DEFAULT_GAMMA)
            .expect("random chunk proofs are distinct");
        let create = t.elapsed();
        let t = Instant::now();
        let report = find_missing(&store, &proof, &mut ChunkProofCache::new());
        let find = t.elapsed();
        debug_assert!(report.missing.is_empty());
        let mphf = proof.mphf();
        let sample = ProofCost {
            chunks,
            chunk_size,
            mphf_bits: mphf.size_bits(),
            prove_bytes: Message::Prove(proof.clone()).encoded_len(),
            levels: mphf.level_count(),
            fallback: mphf.fallback_len(),
            create,
            find_missing: find,
        };
        best = Some(match best {
            None => sample,
            Some(b) => ProofCost { create: b.create.min(sample.create), find_missing: b.find_missing.min(sample.find_missing), ..b },
        });
    }
    best.expect("reps > 0")
}
