//! Minimal perfect hashing over 32-byte digests.
//!
//! Construction follows the cascaded bit-array scheme: at level `i` every
//! still-unplaced key is hashed with `level_seed(i)` into an array of
//! `ceil(gamma * remaining)` bits. Keys that land alone claim their bit; keys
//! that share a slot cascade to the next level. A key's index is one plus the
//! rank of its bit across the concatenated levels, so members map onto
//! `1..=n`. After [`MAX_LEVELS`] levels any leftover keys go into an explicit
//! fallback table.
//!
//! Querying a key that was not in the build set walks the same levels and
//! stops at the first set bit, so a foreign key either reports `0` ("definitely
//! not in the set") or some index in `1..=n` (a false positive).
//!
//! # Serialized layout
//!
//! All integers little-endian:
//!
//! ```text
//! "SMPH" | version u8 | gamma f64 | n u64 | level_count u8
//!   | per level: bit_len u64, ceil(bit_len / 8) packed bytes (bit i of the level = byte i/8, bit i%8)
//!   | fallback_count u32 | (digest [32], index u64) * fallback_count
//!   | integrity [8] = first 8 bytes of SHA-256 over everything before it
//! ```
//!
//! Level seeds are not stored: they are a fixed function of the level number
//! and the format version.

mod bits;

use std::collections::BTreeMap;

use thiserror::Error;

use crate::hash::{content_hash, Digest, DIGEST_LEN};
use bits::RankedBits;

pub const DEFAULT_GAMMA: f64 = 2.0;
pub const MAX_LEVELS: usize = 64;
/// Leftover keys beyond this after the last level abort construction.
pub const MAX_FALLBACK: usize = 4096;

pub const MAGIC: &[u8; 4] = b"SMPH";
pub const FORMAT_VERSION: u8 = 1;
const BUILD_SEED: u64 = 0x534e_4950_535f_4d50;
const INTEGRITY_LEN: usize = 8;
/// magic + version + gamma + n + level_count + fallback_count + integrity
const FIXED_HEADER_LEN: usize = 4 + 1 + 8 + 8 + 1 + 4 + INTEGRITY_LEN;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MphfError {
    #[error("duplicate key {}", hex::encode(.0))]
    DuplicateKey(Digest),
    #[error("gamma must be a finite value >= 1.0, got {0}")]
    InvalidGamma(f64),
    #[error("{remaining} keys still unplaced after {MAX_LEVELS} levels")]
    CascadeExhausted { remaining: usize },
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DecodeError {
    #[error("input truncated")]
    Truncated,
    #[error("bad magic")]
    BadMagic,
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u8),
    #[error("integrity digest mismatch")]
    IntegrityMismatch,
    #[error("malformed encoding: {0}")]
    Malformed(&'static str),
}

#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn level_seed(level: usize) -> u64 {
    mix64(BUILD_SEED ^ (level as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15))
}

#[inline]
fn slot(seed: u64, key: &Digest, len: u64) -> u64 {
    let mut h = seed;
    for word in key.chunks_exact(8) {
        h = mix64(h ^ u64::from_le_bytes(word.try_into().unwrap()));
    }
    ((h as u128 * len as u128) >> 64) as u64
}

/// A minimal perfect hash function over a static set of digests.
///
/// Immutable once built; queries take `&self` and are safe to share across
/// threads.
#[derive(Clone, Debug, PartialEq)]
pub struct Mphf {
    gamma: f64,
    n: u64,
    levels: Vec<RankedBits>,
    seeds: Vec<u64>,
    /// set bits in all levels before level `i`
    offsets: Vec<u64>,
    fallback: BTreeMap<Digest, u64>,
}

impl Mphf {
    /// Builds over `keys`, which must be distinct.
    ///
    /// Placement conflicts are decided by slot occupancy alone, so the result
    /// does not depend on the order of `keys`.
    pub fn build(keys: &[Digest], gamma: f64) -> Result<Self, MphfError> {
        if !gamma.is_finite() || gamma < 1.0 {
            return Err(MphfError::InvalidGamma(gamma));
        }
        let mut levels = Vec::new();
        let mut remaining: Vec<Digest> = keys.to_vec();
        while !remaining.is_empty() && levels.len() < MAX_LEVELS {
            let seed = level_seed(levels.len());
            let len = (gamma * remaining.len() as f64).ceil() as u64;
            let words = len.div_ceil(64) as usize;
            let mut taken = vec![0u64; words];
            let mut collided = vec![0u64; words];
            for key in &remaining {
                let pos = slot(seed, key, len);
                let (w, b) = ((pos / 64) as usize, 1u64 << (pos % 64));
                if taken[w] & b != 0 {
                    collided[w] |= b;
                } else {
                    taken[w] |= b;
                }
            }
            for (t, c) in taken.iter_mut().zip(&collided) {
                *t &= !c;
            }
            remaining.retain(|key| {
                let pos = slot(seed, key, len);
                collided[(pos / 64) as usize] & (1 << (pos % 64)) != 0
            });
            levels.push(RankedBits::from_words(taken, len));
        }

        let placed: u64 = levels.iter().map(|l| l.ones()).sum();
        let mut fallback = BTreeMap::new();
        if !remaining.is_empty() {
            // Equal keys collide at every level, so any duplicate ends up here.
            remaining.sort_unstable();
            if let Some(w) = remaining.windows(2).find(|w| w[0] == w[1]) {
                return Err(MphfError::DuplicateKey(w[0]));
            }
            if remaining.len() > MAX_FALLBACK {
                return Err(MphfError::CascadeExhausted { remaining: remaining.len() });
            }
            for (i, key) in remaining.into_iter().enumerate() {
                fallback.insert(key, placed + 1 + i as u64);
            }
        }
        Ok(Self::assemble(gamma, keys.len() as u64, levels, fallback))
    }

    fn assemble(gamma: f64, n: u64, levels: Vec<RankedBits>, fallback: BTreeMap<Digest, u64>) -> Self {
        let mut offsets = Vec::with_capacity(levels.len());
        let mut acc = 0;
        for level in &levels {
            offsets.push(acc);
            acc += level.ones();
        }
        let seeds = (0..levels.len()).map(level_seed).collect();
        Self { gamma, n, levels, seeds, offsets, fallback }
    }

    /// Index of `key` in `1..=n`, or `0` when the key is definitely not a
    /// member. Non-members may also receive a (false positive) index.
    #[inline]
    pub fn find(&self, key: &Digest) -> u64 {
        for ((level, &seed), &offset) in self.levels.iter().zip(&self.seeds).zip(&self.offsets) {
            let pos = slot(seed, key, level.len());
            if level.get(pos) {
                return offset + level.rank(pos) + 1;
            }
        }
        if self.fallback.is_empty() {
            0
        } else {
            self.fallback.get(key).copied().unwrap_or(0)
        }
    }

    pub fn len(&self) -> u64 {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn level_count(&self) -> usize {
        self.levels.len()
    }

    pub fn fallback_len(&self) -> usize {
        self.fallback.len()
    }

    /// Bits of the serialized form plus the in-memory rank index.
    pub fn size_bits(&self) -> u64 {
        let rank: u64 = self.levels.iter().map(|l| l.rank_bits()).sum();
        8 * self.serialized_len() as u64 + rank
    }

    pub fn serialized_len(&self) -> usize {
        FIXED_HEADER_LEN
            + self.levels.iter().map(|l| 8 + l.len().div_ceil(8) as usize).sum::<usize>()
            + self.fallback.len() * (DIGEST_LEN + 8)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.serialized_len());
        out.extend_from_slice(MAGIC);
        out.push(FORMAT_VERSION);
        out.extend_from_slice(&self.gamma.to_le_bytes());
        out.extend_from_slice(&self.n.to_le_bytes());
        out.push(self.levels.len() as u8);
        for level in &self.levels {
            out.extend_from_slice(&level.len().to_le_bytes());
            out.extend_from_slice(&level.to_bytes());
        }
        out.extend_from_slice(&(self.fallback.len() as u32).to_le_bytes());
        for (key, idx) in &self.fallback {
            out.extend_from_slice(key);
            out.extend_from_slice(&idx.to_le_bytes());
        }
        let check = content_hash(&out);
        out.extend_from_slice(&check[..INTEGRITY_LEN]);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, DecodeError> {
        if bytes.len() < FIXED_HEADER_LEN {
            return Err(DecodeError::Truncated);
        }
        if &bytes[..4] != MAGIC {
            return Err(DecodeError::BadMagic);
        }
        if bytes[4] != FORMAT_VERSION {
            return Err(DecodeError::UnsupportedVersion(bytes[4]));
        }
        let (body, trailer) = bytes.split_at(bytes.len() - INTEGRITY_LEN);
        if content_hash(body)[..INTEGRITY_LEN] != *trailer {
            return Err(DecodeError::IntegrityMismatch);
        }

        let mut r = Reader { buf: body, pos: 5 };
        let gamma = f64::from_le_bytes(r.array()?);
        if !gamma.is_finite() || gamma < 1.0 {
            return Err(DecodeError::Malformed("gamma"));
        }
        let n = u64::from_le_bytes(r.array()?);
        let level_count = r.take(1)?[0] as usize;
        if level_count > MAX_LEVELS {
            return Err(DecodeError::Malformed("level count"));
        }
        let mut levels = Vec::with_capacity(level_count);
        for _ in 0..level_count {
            let len = u64::from_le_bytes(r.array()?);
            if len == 0 {
                return Err(DecodeError::Malformed("empty level"));
            }
            let packed = r.take(usize::try_from(len.div_ceil(8)).map_err(|_| DecodeError::Truncated)?)?;
            levels.push(RankedBits::from_bytes(packed, len).ok_or(DecodeError::Malformed("level padding"))?);
        }
        let placed: u64 = levels.iter().map(|l| l.ones()).sum();
        let fallback_count = u32::from_le_bytes(r.array()?) as u64;
        if placed.checked_add(fallback_count) != Some(n) {
            return Err(DecodeError::Malformed("element count"));
        }
        let mut fallback = BTreeMap::new();
        let mut seen_idx = vec![false; fallback_count as usize];
        for _ in 0..fallback_count {
            let key: Digest = r.array()?;
            let idx = u64::from_le_bytes(r.array()?);
            if idx <= placed || idx > n || std::mem::replace(&mut seen_idx[(idx - placed - 1) as usize], true) {
                return Err(DecodeError::Malformed("fallback index"));
            }
            if fallback.insert(key, idx).is_some() {
                return Err(DecodeError::Malformed("fallback key"));
            }
        }
        if r.pos != body.len() {
            return Err(DecodeError::Malformed("trailing bytes"));
        }
        Ok(Self::assemble(gamma, n, levels, fallback))
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], DecodeError> {
        let end = self.pos.checked_add(n).ok_or(DecodeError::Truncated)?;
        let s = self.buf.get(self.pos..end).ok_or(DecodeError::Truncated)?;
        self.pos = end;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N], DecodeError> {
        Ok(self.take(N)?.try_into().unwrap())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_keys(n: usize, seed: u64) -> Vec<Digest> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.gen()).collect()
    }

    /// Enumerates every member query and checks the results are exactly 1..=n.
    fn assert_bijective(m: &Mphf, keys: &[Digest]) {
        let mut idx: Vec<u64> = keys.iter().map(|k| m.find(k)).collect();
        idx.sort_unstable();
        let expected: Vec<u64> = (1..=keys.len() as u64).collect();
        assert_eq!(idx, expected);
    }

    #[test]
    fn empty_set() {
        let m = Mphf::build(&[], 2.0).unwrap();
        assert_eq!(m.len(), 0);
        for k in random_keys(100, 1) {
            assert_eq!(m.find(&k), 0);
        }
    }

    #[test]
    fn singleton_maps_to_one() {
        let k = random_keys(1, 2);
        let m = Mphf::build(&k, 2.0).unwrap();
        assert_eq!(m.find(&k[0]), 1);
    }

    #[test]
    fn three_keys_permutation() {
        let k = random_keys(3, 3);
        let m = Mphf::build(&k, 2.0).unwrap();
        assert_bijective(&m, &k);
    }

    #[test]
    fn duplicate_rejected() {
        let mut k = random_keys(50, 4);
        k.push(k[17]);
        assert_eq!(Mphf::build(&k, 2.0), Err(MphfError::DuplicateKey(k[17])));
    }

    #[test]
    fn gamma_below_one_rejected() {
        assert!(matches!(Mphf::build(&[], 0.9), Err(MphfError::InvalidGamma(_))));
        assert!(matches!(Mphf::build(&[], f64::NAN), Err(MphfError::InvalidGamma(_))));
        assert!(Mphf::build(&random_keys(1000, 5), 1.0).is_ok());
    }

    #[test]
    fn set_bits_equal_n() {
        let k = random_keys(5000, 6);
        let m = Mphf::build(&k, 2.0).unwrap();
        let placed: u64 = m.levels.iter().map(|l| l.ones()).sum();
        assert_eq!(placed + m.fallback_len() as u64, 5000);
        assert!(m.level_count() <= MAX_LEVELS);
    }

    #[test]
    fn order_independent() {
        let mut k = random_keys(2000, 7);
        let a = Mphf::build(&k, 2.0).unwrap().to_bytes();
        k.reverse();
        let b = Mphf::build(&k, 2.0).unwrap().to_bytes();
        assert_eq!(a, b);
    }

    #[test]
    fn non_members_stay_in_range() {
        let k = random_keys(10_000, 8);
        let m = Mphf::build(&k, 2.0).unwrap();
        let (mut zero, mut fp) = (0, 0);
        for q in random_keys(100_000, 9) {
            let i = m.find(&q);
            assert!(i <= 10_000);
            if i == 0 { zero += 1 } else { fp += 1 }
        }
        assert!(zero > 0 && fp > 0);
    }

    #[test]
    fn size_of_empty_is_header_only() {
        let a = Mphf::build(&[], 2.0).unwrap();
        let b = Mphf::build(&[], 3.5).unwrap();
        assert_eq!(a.size_bits(), 8 * FIXED_HEADER_LEN as u64);
        assert_eq!(a.size_bits(), b.size_bits());
    }

    #[test]
    fn bits_per_key_band_at_scale() {
        let n = 100_000;
        let m = Mphf::build(&random_keys(n, 10), 2.0).unwrap();
        let bpk = m.size_bits() as f64 / n as f64;
        assert!((1.44..=4.5).contains(&bpk), "{bpk}");
    }

    #[test]
    fn round_trip_empty() {
        let m = Mphf::build(&[], 2.0).unwrap();
        let back = Mphf::from_bytes(&m.to_bytes()).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.find(&[1; 32]), 0);
    }

    #[test]
    fn round_trip_ten_thousand() {
        let k = random_keys(10_000, 11);
        let m = Mphf::build(&k, 2.0).unwrap();
        let bytes = m.to_bytes();
        assert_eq!(bytes.len(), m.serialized_len());
        let back = Mphf::from_bytes(&bytes).unwrap();
        for key in &k {
            assert_eq!(back.find(key), m.find(key));
        }
        for q in random_keys(10_000, 12) {
            assert_eq!(back.find(&q), m.find(&q));
        }
    }

    #[test]
    fn fallback_round_trips() {
        // gamma = 1 with a hand-built fallback table exercises that path of the codec.
        let k = random_keys(64, 13);
        let built = Mphf::build(&k, 1.0).unwrap();
        let mut levels = built.levels.clone();
        let last = levels.pop().unwrap();
        let placed: u64 = levels.iter().map(|l| l.ones()).sum();
        let orphan: Vec<Digest> = k.iter().copied().filter(|key| built.find(key) > placed).collect();
        assert_eq!(orphan.len() as u64, last.ones());
        let fallback = orphan.iter().enumerate().map(|(i, key)| (*key, placed + 1 + i as u64)).collect();
        let m = Mphf::assemble(1.0, 64, levels, fallback);
        assert_bijective(&m, &k);
        let back = Mphf::from_bytes(&m.to_bytes()).unwrap();
        assert_eq!(back, m);
        assert_bijective(&back, &k);
    }

    #[test]
    fn every_single_byte_flip_is_detected() {
        let k = random_keys(300, 14);
        let bytes = Mphf::build(&k, 2.0).unwrap().to_bytes();
        for pos in 0..bytes.len() {
            for flip in [0x01u8, 0x80, 0xff] {
                let mut b = bytes.clone();
                b[pos] ^= flip;
                assert!(Mphf::from_bytes(&b).is_err(), "flip {flip:#x} at {pos} accepted");
            }
        }
    }

    #[test]
    fn truncation_and_version_rejected() {
        let bytes = Mphf::build(&random_keys(100, 15), 2.0).unwrap().to_bytes();
        for cut in [0, 3, 10, bytes.len() - 1] {
            assert!(Mphf::from_bytes(&bytes[..cut]).is_err());
        }
        let mut b = bytes.clone();
        b[4] = 9;
        assert_eq!(Mphf::from_bytes(&b), Err(DecodeError::UnsupportedVersion(9)));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn bijective_for_random_sets(n in 0usize..3000, seed in any::<u64>(), gamma in 1.0f64..4.0) {
            let k = random_keys(n, seed);
            let m = Mphf::build(&k, gamma).unwrap();
            assert_bijective(&m, &k);
            let back = Mphf::from_bytes(&m.to_bytes()).unwrap();
            prop_assert_eq!(back.to_bytes(), m.to_bytes());
        }
    }
}
