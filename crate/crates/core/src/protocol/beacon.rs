//! Deterministic stand-in for block-hash randomness.
//!
//! Block `b` yields nonce `H(b as u64 big-endian)[..8]`. Epoch `e` starts at
//! block `e * interval`; the blocks right after an epoch start supply the
//! nonces used to re-prove after a collision.

use crate::hash::content_hash;
use crate::proof::Nonce;

pub const DEFAULT_INTERVAL: u64 = 7200;

pub fn beacon_nonce(block: u64) -> Nonce {
    content_hash(&block.to_be_bytes())[..8].try_into().unwrap()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Beacon {
    pub interval: u64,
}

impl Default for Beacon {
    fn default() -> Self {
        Self { interval: DEFAULT_INTERVAL }
    }
}

impl Beacon {
    /// Panics if `interval` is zero.
    pub fn new(interval: u64) -> Self {
        assert!(interval > 0, "beacon interval must be positive");
        Self { interval }
    }

    /// Blocks between proofs when proving once per `period_secs`.
    pub fn interval_for(period_secs: u64, block_secs: u64) -> u64 {
        period_secs / block_secs
    }

    pub fn epoch_start(&self, epoch: u64) -> u64 {
        epoch * self.interval
    }

    /// The epoch that `block` opens, if it is a trigger block.
    pub fn trigger_epoch(&self, block: u64) -> Option<u64> {
        (block % self.interval == 0).then_some(block / self.interval)
    }

    /// Nonce for recovery depth `depth` of `epoch`; depth 0 is the epoch nonce.
    pub fn nonce(&self, epoch: u64, depth: u64) -> Nonce {
        beacon_nonce(self.epoch_start(epoch) + depth)
    }
}
