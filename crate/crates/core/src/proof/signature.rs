//! Peer identities and the fixed-width 97-byte signature field.
//!
//! Field layout: `scheme tag u8 | signature [64] | context [32]`. For the
//! only defined scheme (tag 1, Ed25519) the context carries the signer's
//! public key, which is also the peer's overlay address.

use ed25519_dalek::{Signer as _, SigningKey, VerifyingKey};

use crate::chunkstore::{in_neighborhood, Address};
use crate::hash::hash_concat;

pub const SIGNATURE_LEN: usize = 97;
pub const SCHEME_ED25519: u8 = 0x01;

/// Grinding gives up after this many candidate keys.
const MAX_GRIND: u64 = 1 << 24;

#[derive(Clone, Copy, PartialEq, Eq)]
pub struct SignatureField(pub [u8; SIGNATURE_LEN]);

impl SignatureField {
    pub fn scheme(&self) -> u8 {
        self.0[0]
    }

    /// Address named in the context bytes; not authenticated on its own.
    pub fn claimed_signer(&self) -> Address {
        Address(self.0[65..].try_into().unwrap())
    }

    /// Returns the signer when the field is a valid signature over `msg`.
    pub fn verify(&self, msg: &[u8]) -> Option<Address> {
        if self.scheme() != SCHEME_ED25519 {
            return None;
        }
        let signer = self.claimed_signer();
        let key = VerifyingKey::from_bytes(&signer.0).ok()?;
        let sig = ed25519_dalek::Signature::from_bytes(self.0[1..65].try_into().unwrap());
        key.verify_strict(msg, &sig).ok()?;
        Some(signer)
    }
}

impl std::fmt::Debug for SignatureField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "SignatureField({:02x}, {})", self.0[0], hex::encode(&self.0[1..9]))
    }
}

/// A signing key together with the overlay address it induces.
#[derive(Clone)]
pub struct Identity {
    key: SigningKey,
    address: Address,
}

impl Identity {
    pub fn from_secret(secret: [u8; 32]) -> Self {
        let key = SigningKey::from_bytes(&secret);
        let address = Address(key.verifying_key().to_bytes());
        Self { key, address }
    }

    /// Deterministic identity from a 64-bit seed.
    pub fn from_seed(seed: u64) -> Self {
        Self::from_secret(hash_concat([&b"snips-identity"[..], &seed.to_le_bytes()]))
    }

    /// First identity derived from `seed` whose address shares `prefix_bits`
    /// bits with `target`.
    pub fn in_neighborhood(seed: u64, target: &Address, prefix_bits: u32) -> Option<Self> {
        (0..MAX_GRIND).find_map(|ctr| {
            let secret = hash_concat([&b"snips-identity"[..], &seed.to_le_bytes(), &ctr.to_le_bytes()]);
            let id = Self::from_secret(secret);
            in_neighborhood(target, &id.address, prefix_bits).then_some(id)
        })
    }

    pub fn address(&self) -> Address {
        self.address
    }

    pub fn sign(&self, msg: &[u8]) -> SignatureField {
        let mut out = [0u8; SIGNATURE_LEN];
        out[0] = SCHEME_ED25519;
        out[1..65].copy_from_slice(&self.key.sign(msg).to_bytes());
        out[65..].copy_from_slice(&self.address.0);
        SignatureField(out)
    }
}

impl std::fmt::Debug for Identity {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Identity").field("address", &self.address).finish_non_exhaustive()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sign_verify_round_trip() {
        let id = Identity::from_seed(7);
        let sig = id.sign(b"payload");
        assert_eq!(sig.verify(b"payload"), Some(id.address()));
        assert_eq!(sig.verify(b"payloae"), None);
    }

    #[test]
    fn tampered_field_rejected() {
        let id = Identity::from_seed(8);
        let sig = id.sign(b"m");
        for pos in [0, 1, 40, 64, 65, 96] {
            let mut bad = sig;
            bad.0[pos] ^= 1;
            assert_eq!(bad.verify(b"m"), None, "byte {pos}");
        }
    }

    #[test]
    fn seeds_are_deterministic_and_distinct() {
        assert_eq!(Identity::from_seed(1).address(), Identity::from_seed(1).address());
        assert_ne!(Identity::from_seed(1).address(), Identity::from_seed(2).address());
    }

    #[test]
    fn grinding_reaches_prefix() {
        let target = Address([0b1011_0110; 32]);
        let id = Identity::in_neighborhood(3, &target, 8).unwrap();
        assert!(in_neighborhood(&target, &id.address(), 8));
    }
}
