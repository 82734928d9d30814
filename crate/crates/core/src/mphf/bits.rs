/// Bits covered by one cached rank entry.
pub(crate) const BLOCK_BITS: u64 = 512;
const WORDS_PER_BLOCK: usize = (BLOCK_BITS / 64) as usize;

/// A fixed-length bit array with one cumulative popcount per 512-bit block.
#[derive(Clone, Debug, PartialEq, Eq)]
pub(crate) struct RankedBits {
    words: Vec<u64>,
    len: u64,
    blocks: Vec<u32>,
    ones: u64,
}

impl RankedBits {
    pub fn from_words(words: Vec<u64>, len: u64) -> Self {
        debug_assert_eq!(words.len() as u64, len.div_ceil(64));
        let mut blocks = Vec::with_capacity(words.len().div_ceil(WORDS_PER_BLOCK));
        let mut acc = 0u64;
        for chunk in words.chunks(WORDS_PER_BLOCK) {
            blocks.push(acc as u32);
            acc += chunk.iter().map(|w| w.count_ones() as u64).sum::<u64>();
        }
        Self { words, len, blocks, ones: acc }
    }

    pub fn len(&self) -> u64 {
        self.len
    }

    pub fn ones(&self) -> u64 {
        self.ones
    }

    #[inline]
    pub fn get(&self, pos: u64) -> bool {
        (self.words[(pos / 64) as usize] >> (pos % 64)) & 1 == 1
    }

    /// Number of set bits strictly before `pos`.
    #[inline]
    pub fn rank(&self, pos: u64) -> u64 {
        let word = (pos / 64) as usize;
        let block = word / WORDS_PER_BLOCK;
        let mut r = self.blocks[block] as u64;
        for w in &self.words[block * WORDS_PER_BLOCK..word] {
            r += w.count_ones() as u64;
        }
        let mask = (1u64 << (pos % 64)) - 1;
        r + (self.words[word] & mask).count_ones() as u64
    }

    /// Size of the rank index in bits.
    pub fn rank_bits(&self) -> u64 {
        32 * self.blocks.len() as u64
    }

    /// Packed little-endian bytes, `ceil(len / 8)` of them.
    pub fn to_bytes(&self) -> Vec<u8> {
        let n = self.len.div_ceil(8) as usize;
        let mut out = Vec::with_capacity(n);
        for w in &self.words {
            out.extend_from_slice(&w.to_le_bytes());
        }
        out.truncate(n);
        out
    }

    /// Inverse of [`to_bytes`](Self::to_bytes). Returns `None` when bits past
    /// `len` are set.
    pub fn from_bytes(bytes: &[u8], len: u64) -> Option<Self> {
        debug_assert_eq!(bytes.len() as u64, len.div_ceil(8));
        let mut words = vec![0u64; len.div_ceil(64) as usize];
        for (i, chunk) in bytes.chunks(8).enumerate() {
            let mut buf = [0u8; 8];
            buf[..chunk.len()].copy_from_slice(chunk);
            words[i] = u64::from_le_bytes(buf);
        }
        if len % 64 != 0 {
            if let Some(last) = words.last() {
                if last >> (len % 64) != 0 {
                    return None;
                }
            }
        }
        Some(Self::from_words(words, len))
    }
}
