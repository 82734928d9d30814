use std::fmt;

use crate::hash::Digest;

/// A 32-byte overlay address. Peers and chunks share this address space.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Address(pub Digest);

/// Chunk identifiers are content addresses.
pub type ChunkId = Address;

impl Address {
    pub const ZERO: Address = Address([0; 32]);
    pub const MAX: Address = Address([0xff; 32]);

    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }

    /// Bit `i` counted from the most significant bit of byte 0.
    pub fn bit(&self, i: u32) -> bool {
        (self.0[(i / 8) as usize] >> (7 - i % 8)) & 1 == 1
    }

    /// The closed range of addresses sharing the first `prefix_bits` bits
    /// with `self`.
    pub fn prefix_range(&self, prefix_bits: u32) -> (Address, Address) {
        let prefix_bits = prefix_bits.min(256);
        let (mut lo, mut hi) = (self.0, self.0);
        for i in prefix_bits..256 {
            let (byte, mask) = ((i / 8) as usize, 0x80u8 >> (i % 8));
            lo[byte] &= !mask;
            hi[byte] |= mask;
        }
        (Address(lo), Address(hi))
    }

    pub fn short(&self) -> String {
        hex::encode(&self.0[..4])
    }
}

impl From<Digest> for Address {
    fn from(d: Digest) -> Self {
        Address(d)
    }
}

impl fmt::Debug for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Address({})", self.short())
    }
}

impl fmt::Display for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&hex::encode(self.0))
    }
}

/// True iff the first `prefix_bits` bits of `peer` and `id` agree.
pub fn in_neighborhood(peer: &Address, id: &Address, prefix_bits: u32) -> bool {
    let prefix_bits = prefix_bits.min(256);
    let full = (prefix_bits / 8) as usize;
    if peer.0[..full] != id.0[..full] {
        return false;
    }
    let rest = prefix_bits % 8;
    if rest == 0 {
        return true;
    }
    let mask = 0xffu8 << (8 - rest);
    peer.0[full] & mask == id.0[full] & mask
}

#[cfg(test)]
mod tests {
    use super::*;

    fn with_bit(i: u32) -> Address {
        let mut a = [0u8; 32];
        a[(i / 8) as usize] |= 0x80 >> (i % 8);
        Address(a)
    }

    #[test]
    fn zero_prefix_always_matches() {
        assert!(in_neighborhood(&Address::ZERO, &Address::MAX, 0));
    }

    #[test]
    fn full_prefix_requires_equality() {
        let a = Address([0x5a; 32]);
        assert!(in_neighborhood(&a, &a, 256));
        assert!(!in_neighborhood(&a, &with_bit(255), 256));
    }

    #[test]
    fn bit_five_difference() {
        let peer = Address::ZERO;
        let id = with_bit(5);
        assert!(id.bit(5) && !id.bit(4) && !id.bit(6));
        assert!(!in_neighborhood(&peer, &id, 16));
        assert!(!in_neighborhood(&peer, &id, 6));
        assert!(in_neighborhood(&peer, &id, 5));
    }

    #[test]
    fn prefix_range_bounds() {
        let a = Address([0b1010_1010; 32]);
        let (lo, hi) = a.prefix_range(4);
        assert_eq!(lo.0[0], 0b1010_0000);
        assert_eq!(hi.0[0], 0b1010_1111);
        assert!(lo.0[1..].iter().all(|&b| b == 0));
        assert!(hi.0[1..].iter().all(|&b| b == 0xff));
        assert_eq!(a.prefix_range(0), (Address::ZERO, Address::MAX));
        assert_eq!(a.prefix_range(256), (a, a));
    }
}
