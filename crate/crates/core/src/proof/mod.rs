//! Storage proofs: nonce-bound chunk proofs compressed into a signed MPHF.
//!
//! A chunk proof is `H(nonce ‖ data)`. The prover builds an [`Mphf`] over the
//! chunk proofs of every stored chunk in `[start, end]` and keeps the inverse
//! index → chunk id map so it can serve later requests. A verifier queries
//! its own chunk proofs against the MPHF and tallies hits per index:
//!
//! * count 1 (no local hit) means the chunk at that index is missing,
//! * count 0 means it was found,
//! * a negative count means two local chunks landed on one index, so at
//!   least one of them is a false positive (a collision).

mod signature;

use std::collections::HashMap;
use std::sync::Arc;

use bytes::Bytes;
use rayon::prelude::*;
use thiserror::Error;

use crate::chunkstore::{in_neighborhood, Address, Chunk, ChunkId, ChunkStore, RangeError};
use crate::hash::{hash_concat, Digest};
use crate::mphf::{DecodeError, Mphf, MphfError};
pub use signature::{Identity, SignatureField, SCHEME_ED25519, SIGNATURE_LEN};

pub type Nonce = [u8; 8];

/// Below this many uncached chunks proofs are hashed on the calling thread.
const PARALLEL_THRESHOLD: usize = 512;

#[derive(Debug, Error)]
pub enum ProofError {
    #[error(transparent)]
    Range(#[from] RangeError),
    #[error(transparent)]
    Mphf(#[from] MphfError),
    #[error(transparent)]
    Decode(#[from] DecodeError),
}

pub fn chunk_proof(nonce: &Nonce, chunk: &Chunk) -> Digest {
    hash_concat([&nonce[..], chunk.data()])
}

/// `H(cp_1 ‖ cp_2 ‖ …)` over chunk proofs in ascending index order.
pub fn proof_checksum(chunk_proofs: &[Digest]) -> Digest {
    hash_concat(chunk_proofs.iter().map(|d| &d[..]))
}

/// Chance that a random chunk both lands in a `prefix_bits` neighborhood and
/// maps to one given index of an `n`-element proof.
pub fn trojan_probability(prefix_bits: u32, n: u64) -> f64 {
    1.0 / (2f64.powi(prefix_bits as i32) * n as f64)
}

/// Per-nonce memo of chunk proofs, shared by the prover and verifier roles.
#[derive(Clone, Debug, Default)]
pub struct ChunkProofCache {
    entries: HashMap<Nonce, HashMap<ChunkId, Digest>>,
    computed: u64,
}

impl ChunkProofCache {
    pub fn new() -> Self {
        Self::default()
    }

    /// Number of chunk proofs hashed so far (cache misses).
    pub fn computed(&self) -> u64 {
        self.computed
    }

    pub fn get(&self, nonce: &Nonce, id: &ChunkId) -> Option<Digest> {
        self.entries.get(nonce)?.get(id).copied()
    }

    pub fn get_or_compute(&mut self, nonce: &Nonce, chunk: &Chunk) -> Digest {
        let map = self.entries.entry(*nonce).or_default();
        *map.entry(chunk.id()).or_insert_with(|| {
            self.computed += 1;
            chunk_proof(nonce, chunk)
        })
    }

    /// Chunk proofs for `chunks`, in input order.
    pub fn proofs_for(&mut self, nonce: &Nonce, chunks: &[&Chunk]) -> Vec<Digest> {
        let map = self.entries.entry(*nonce).or_default();
        let mut out: Vec<Option<Digest>> = chunks.iter().map(|c| map.get(&c.id()).copied()).collect();
        let misses: Vec<usize> = (0..chunks.len()).filter(|&i| out[i].is_none()).collect();
        let fresh: Vec<Digest> = if misses.len() >= PARALLEL_THRESHOLD {
            misses.par_iter().map(|&i| chunk_proof(nonce, chunks[i])).collect()
        } else {
            misses.iter().map(|&i| chunk_proof(nonce, chunks[i])).collect()
        };
        self.computed += fresh.len() as u64;
        map.reserve(fresh.len());
        for (&i, d) in misses.iter().zip(fresh) {
            map.insert(chunks[i].id(), d);
            out[i] = Some(d);
        }
        out.into_iter().map(|d| d.expect("every slot filled")).collect()
    }

    pub fn evict(&mut self, nonce: &Nonce) {
        self.entries.remove(nonce);
    }

    pub fn nonces(&self) -> impl Iterator<Item = &Nonce> + '_ {
        self.entries.keys()
    }
}

/// A signed MPHF over one nonce and range.
#[derive(Clone, Debug)]
pub struct StorageProof {
    mphf: Arc<Mphf>,
    mphf_bytes: Bytes,
    nonce: Nonce,
    start: Address,
    end: Address,
    checksum: Option<Digest>,
    signature: SignatureField,
}

impl StorageProof {
    pub fn create(
        mphf: Mphf,
        nonce: Nonce,
        start: Address,
        end: Address,
        checksum: Option<Digest>,
        identity: &Identity,
    ) -> Result<Self, ProofError> {
        if start > end {
            return Err(RangeError { start, end }.into());
        }
        let mphf_bytes = Bytes::from(mphf.to_bytes());
        let payload = signed_payload(&mphf_bytes, &nonce, &start, &end, checksum.as_ref());
        let signature = identity.sign(&payload);
        Ok(Self { mphf: Arc::new(mphf), mphf_bytes, nonce, start, end, checksum, signature })
    }

    /// Rebuilds a proof received off the wire. The signature is not checked.
    pub fn from_parts(
        mphf_bytes: Bytes,
        nonce: Nonce,
        start: Address,
        end: Address,
        checksum: Option<Digest>,
        signature: SignatureField,
    ) -> Result<Self, ProofError> {
        if start > end {
            return Err(RangeError { start, end }.into());
        }
        let mphf = Mphf::from_bytes(&mphf_bytes)?;
        Ok(Self { mphf: Arc::new(mphf), mphf_bytes, nonce, start, end, checksum, signature })
    }

    pub fn mphf(&self) -> &Mphf {
        &self.mphf
    }

    pub fn mphf_bytes(&self) -> &Bytes {
        &self.mphf_bytes
    }

    pub fn nonce(&self) -> Nonce {
        self.nonce
    }

    pub fn start(&self) -> Address {
        self.start
    }

    pub fn end(&self) -> Address {
        self.end
    }

    pub fn checksum(&self) -> Option<Digest> {
        self.checksum
    }

    pub fn signature(&self) -> &SignatureField {
        &self.signature
    }

    /// Number of chunks the proof covers.
    pub fn len(&self) -> u64 {
        self.mphf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mphf.is_empty()
    }

    pub fn find(&self, chunk_proof: &Digest) -> u64 {
        self.mphf.find(chunk_proof)
    }

    /// The signer, if the signature verifies.
    pub fn verify_signature(&self) -> Option<Address> {
        let payload = signed_payload(&self.mphf_bytes, &self.nonce, &self.start, &self.end, self.checksum.as_ref());
        self.signature.verify(&payload)
    }
}

fn signed_payload(mphf: &[u8], nonce: &Nonce, start: &Address, end: &Address, checksum: Option<&Digest>) -> Vec<u8> {
    let mut out = Vec::with_capacity(mphf.len() + 8 + 64 + 33);
    out.extend_from_slice(mphf);
    out.extend_from_slice(nonce);
    out.extend_from_slice(&start.0);
    out.extend_from_slice(&end.0);
    match checksum {
        Some(c) => {
            out.push(1);
            out.extend_from_slice(c);
        }
        None => out.push(0),
    }
    out
}

/// Prover-side index → chunk id map for one proof.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ReverseMap {
    ids: Vec<ChunkId>,
}

impl ReverseMap {
    /// Chunk id stored at 1-based `index`.
    pub fn get(&self, index: u64) -> Option<ChunkId> {
        let i = usize::try_from(index).ok()?.checked_sub(1)?;
        self.ids.get(i).copied()
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// `(index, id)` pairs in ascending index order.
    pub fn iter(&self) -> impl Iterator<Item = (u64, ChunkId)> + '_ {
        self.ids.iter().enumerate().map(|(i, id)| (i as u64 + 1, *id))
    }
}

/// Builds and signs the proof for every chunk of `store` in `[start, end]`.
pub fn create_proof(
    store: &ChunkStore,
    nonce: Nonce,
    start: Address,
    end: Address,
    cache: &mut ChunkProofCache,
    identity: &Identity,
    gamma: f64,
) -> Result<(StorageProof, ReverseMap), ProofError> {
    let chunks: Vec<&Chunk> = store.iter_range(&start, &end)?.collect();
    let proofs = cache.proofs_for(&nonce, &chunks);
    let mphf = Mphf::build(&proofs, gamma)?;

    let n = chunks.len();
    let mut ids = vec![ChunkId::ZERO; n];
    let mut ordered = vec![[0u8; 32]; n];
    for (chunk, cp) in chunks.iter().zip(&proofs) {
        let slot = (mphf.find(cp) - 1) as usize;
        ids[slot] = chunk.id();
        ordered[slot] = *cp;
    }
    let checksum = proof_checksum(&ordered);
    let proof = StorageProof::create(mphf, nonce, start, end, Some(checksum), identity)?;
    Ok((proof, ReverseMap { ids }))
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct MissingReport {
    /// Indices whose chunk no local chunk proof reached, ascending.
    pub missing: Vec<u64>,
    /// Some index was reached by two or more local chunks.
    pub collision: bool,
    /// Local in-range chunks whose query returned a nonzero index.
    pub hits: u64,
}

/// A [`MissingReport`] plus, per index, the first local chunk proof that
/// reached it.
#[derive(Clone, Debug, Default)]
pub struct Tally {
    pub report: MissingReport,
    pub slots: Vec<Option<Digest>>,
}

pub fn find_missing(store: &ChunkStore, proof: &StorageProof, cache: &mut ChunkProofCache) -> MissingReport {
    tally(store, proof, cache).report
}

pub fn tally(store: &ChunkStore, proof: &StorageProof, cache: &mut ChunkProofCache) -> Tally {
    let n = proof.len() as usize;
    if n == 0 {
        return Tally::default();
    }
    let chunks: Vec<&Chunk> = store
        .iter_range(&proof.start, &proof.end)
        .expect("proof ranges are ordered")
        .collect();
    let proofs = cache.proofs_for(&proof.nonce, &chunks);

    let mut mfc = vec![1i64; n];
    let mut slots = vec![None; n];
    let mut hits = 0;
    for cp in &proofs {
        let idx = proof.find(cp);
        if idx != 0 {
            let i = (idx - 1) as usize;
            mfc[i] -= 1;
            slots[i].get_or_insert(*cp);
            hits += 1;
        }
    }
    let missing = (0..n).filter(|&i| mfc[i] == 1).map(|i| i as u64 + 1).collect();
    let collision = mfc.iter().any(|&c| c < 0);
    Tally { report: MissingReport { missing, collision, hits }, slots }
}

/// Accepts `chunk` iff it belongs to `peer`'s neighborhood and its chunk
/// proof maps to `expected_index`.
pub fn verify_upload(proof: &StorageProof, expected_index: u64, chunk: &Chunk, peer: &Address, prefix_bits: u32) -> bool {
    expected_index != 0
        && in_neighborhood(peer, &chunk.id(), prefix_bits)
        && proof.find(&chunk_proof(&proof.nonce, chunk)) == expected_index
}
