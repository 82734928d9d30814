//! The single 256-bit content hash used throughout the crate.
//!
//! Chunk identifiers, chunk proofs, proof checksums, integrity trailers and
//! beacon nonces are all SHA-256.

use sha2::{Digest as _, Sha256};

/// A 32-byte SHA-256 output.
pub type Digest = [u8; 32];

pub const DIGEST_LEN: usize = 32;

/// SHA-256 of `data`.
pub fn content_hash(data: &[u8]) -> Digest {
    Sha256::digest(data).into()
}

/// SHA-256 over the concatenation of `parts`, without materializing it.
pub fn hash_concat<'a, I>(parts: I) -> Digest
where
    I: IntoIterator<Item = &'a [u8]>,
{
    let mut hasher = Sha256::new();
    for part in parts {
        hasher.update(part);
    }
    hasher.finalize().into()
}

/// Incremental hashing, for callers that stream many digests.
#[derive(Clone, Default)]
pub struct StreamHasher(Sha256);

impl StreamHasher {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn update(&mut self, bytes: &[u8]) {
        self.0.update(bytes);
    }

    pub fn finish(self) -> Digest {
        self.0.finalize().into()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_vector() {
        // FIPS 180-2 "abc"
        assert_eq!(
            hex::encode(content_hash(b"abc")),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn concat_matches_contiguous() {
        let joined = content_hash(b"noncechunk");
        let parts = hash_concat([&b"nonce"[..], &b"chunk"[..]]);
        assert_eq!(joined, parts);
        let mut s = StreamHasher::new();
        s.update(b"non");
        s.update(b"cechunk");
        assert_eq!(s.finish(), joined);
    }
}
