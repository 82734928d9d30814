//! Wire codec. All integers are little-endian; every message starts with a
//! one-byte tag.
//!
//! ```text
//! 0x01 NewProof       nonce [8]
//! 0x02 NewProofRange  nonce [8] | start [32] | end [32]
//! 0x03 Prove          nonce [8] | start [32] | end [32] | mphf_len u32 | mphf [mphf_len]
//!                     | signature [97] | (0x01 | checksum [32])?
//! 0x04 Select         nonce [8] | bit_len u32 | bits [ceil(bit_len / 8)]
//! 0x05 Upload         data_len u16 | data [data_len]
//! 0x06 UploadDone
//! ```
//!
//! Select bit `i - 1` (LSB-first within each byte) requests index `i`.
//! Padding bits past `bit_len` must be zero. Only the Upload data bytes
//! count as payload; everything else is metadata.

use bytes::Bytes;
use thiserror::Error;

use crate::chunkstore::{Address, Chunk, ChunkError};
use crate::proof::{Nonce, ProofError, SignatureField, StorageProof, SIGNATURE_LEN};

pub const TAG_NEW_PROOF: u8 = 0x01;
pub const TAG_NEW_PROOF_RANGE: u8 = 0x02;
pub const TAG_PROVE: u8 = 0x03;
pub const TAG_SELECT: u8 = 0x04;
pub const TAG_UPLOAD: u8 = 0x05;
pub const TAG_UPLOAD_DONE: u8 = 0x06;

const CHECKSUM_MARKER: u8 = 0x01;
/// Fixed part of a Prove: tag, nonce, start, end, length, signature.
pub const PROVE_FIXED_LEN: usize = 1 + 8 + 32 + 32 + 4 + SIGNATURE_LEN;
pub const CHECKSUM_BLOCK_LEN: usize = 33;

#[derive(Debug, Error)]
pub enum CodecError {
    #[error("message truncated")]
    Truncated,
    #[error("unknown message tag {0:#04x}")]
    BadTag(u8),
    #[error("select bit vector does not match its declared length")]
    BitLength,
    #[error("{0} unexpected trailing bytes")]
    Trailing(usize),
    #[error("malformed checksum block")]
    ChecksumBlock,
    #[error(transparent)]
    Proof(#[from] ProofError),
    #[error(transparent)]
    Chunk(#[from] ChunkError),
}

/// Requested indices as a fixed-length bit vector.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SelectBits {
    len: u32,
    bytes: Vec<u8>,
}

impl SelectBits {
    /// Bit vector of length `len` with the given 1-based indices set.
    ///
    /// Panics if an index is 0 or above `len`.
    pub fn from_indices(len: u32, indices: impl IntoIterator<Item = u64>) -> Self {
        let mut bytes = vec![0u8; (len as usize).div_ceil(8)];
        for idx in indices {
            assert!(idx >= 1 && idx <= len as u64, "index {idx} outside 1..={len}");
            let bit = (idx - 1) as usize;
            bytes[bit / 8] |= 1 << (bit % 8);
        }
        Self { len, bytes }
    }

    fn from_raw(len: u32, bytes: Vec<u8>) -> Result<Self, CodecError> {
        if bytes.len() != (len as usize).div_ceil(8) {
            return Err(CodecError::BitLength);
        }
        let rem = len % 8;
        if rem != 0 && bytes.last().is_some_and(|b| b >> rem != 0) {
            return Err(CodecError::BitLength);
        }
        Ok(Self { len, bytes })
    }

    pub fn len(&self) -> u32 {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.bytes
    }

    /// Set indices, ascending and 1-based.
    pub fn indices(&self) -> impl Iterator<Item = u64> + '_ {
        self.bytes.iter().enumerate().flat_map(|(i, &b)| {
            (0..8).filter(move |k| b >> k & 1 == 1).map(move |k| (i * 8 + k) as u64 + 1)
        })
    }

    pub fn count(&self) -> usize {
        self.bytes.iter().map(|b| b.count_ones() as usize).sum()
    }
}

#[derive(Clone, Debug)]
pub enum Message {
    /// Without a range the prover uses the range it serves by default.
    NewProof { nonce: Nonce, range: Option<(Address, Address)> },
    Prove(StorageProof),
    Select { nonce: Nonce, bits: SelectBits },
    Upload(Chunk),
    UploadDone,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MessageKind {
    NewProof,
    Prove,
    Select,
    Upload,
    UploadDone,
}

impl MessageKind {
    pub fn name(self) -> &'static str {
        match self {
            MessageKind::NewProof => "NewProof",
            MessageKind::Prove => "Prove",
            MessageKind::Select => "Select",
            MessageKind::Upload => "Upload",
            MessageKind::UploadDone => "UploadDone",
        }
    }
}

impl Message {
    pub fn kind(&self) -> MessageKind {
        match self {
            Message::NewProof { .. } => MessageKind::NewProof,
            Message::Prove(_) => MessageKind::Prove,
            Message::Select { .. } => MessageKind::Select,
            Message::Upload(_) => MessageKind::Upload,
            Message::UploadDone => MessageKind::UploadDone,
        }
    }

    pub fn encoded_len(&self) -> usize {
        match self {
            Message::NewProof { range: None, .. } => 1 + 8,
            Message::NewProof { range: Some(_), .. } => 1 + 8 + 64,
            Message::Prove(p) => {
                PROVE_FIXED_LEN + p.mphf_bytes().len() + if p.checksum().is_some() { CHECKSUM_BLOCK_LEN } else { 0 }
            }
            Message::Select { bits, .. } => 1 + 8 + 4 + bits.as_bytes().len(),
            Message::Upload(c) => 1 + 2 + c.len(),
            Message::UploadDone => 1,
        }
    }

    /// Chunk data bytes carried; zero for everything but Upload.
    pub fn payload_len(&self) -> usize {
        match self {
            Message::Upload(c) => c.len(),
            _ => 0,
        }
    }

    pub fn metadata_len(&self) -> usize {
        self.encoded_len() - self.payload_len()
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.encoded_len());
        match self {
            Message::NewProof { nonce, range: None } => {
                out.push(TAG_NEW_PROOF);
                out.extend_from_slice(nonce);
            }
            Message::NewProof { nonce, range: Some((start, end)) } => {
                out.push(TAG_NEW_PROOF_RANGE);
                out.extend_from_slice(nonce);
                out.extend_from_slice(&start.0);
                out.extend_from_slice(&end.0);
            }
            Message::Prove(p) => {
                out.push(TAG_PROVE);
                out.extend_from_slice(&p.nonce());
                out.extend_from_slice(&p.start().0);
                out.extend_from_slice(&p.end().0);
                out.extend_from_slice(&(p.mphf_bytes().len() as u32).to_le_bytes());
                out.extend_from_slice(p.mphf_bytes());
                out.extend_from_slice(&p.signature().0);
                if let Some(c) = p.checksum() {
                    out.push(CHECKSUM_MARKER);
                    out.extend_from_slice(&c);
                }
            }
            Message::Select { nonce, bits } => {
                out.push(TAG_SELECT);
                out.extend_from_slice(nonce);
                out.extend_from_slice(&bits.len.to_le_bytes());
                out.extend_from_slice(&bits.bytes);
            }
            Message::Upload(c) => {
                out.push(TAG_UPLOAD);
                out.extend_from_slice(&(c.len() as u16).to_le_bytes());
                out.extend_from_slice(c.data());
            }
            Message::UploadDone => out.push(TAG_UPLOAD_DONE),
        }
        debug_assert_eq!(out.len(), self.encoded_len());
        out
    }

    pub fn decode(buf: &Bytes) -> Result<Self, CodecError> {
        let mut r = Cursor { buf, pos: 0 };
        let msg = match r.u8()? {
            TAG_NEW_PROOF => Message::NewProof { nonce: r.array()?, range: None },
            TAG_NEW_PROOF_RANGE => {
                let nonce = r.array()?;
                let start = Address(r.array()?);
                let end = Address(r.array()?);
                Message::NewProof { nonce, range: Some((start, end)) }
            }
            TAG_PROVE => {
                let nonce = r.array()?;
                let start = Address(r.array()?);
                let end = Address(r.array()?);
                let len = u32::from_le_bytes(r.array()?) as usize;
                let mphf = r.bytes(len)?;
                let signature = SignatureField(r.array()?);
                let checksum = match r.remaining() {
                    0 => None,
                    CHECKSUM_BLOCK_LEN if r.u8()? == CHECKSUM_MARKER => Some(r.array()?),
                    CHECKSUM_BLOCK_LEN => return Err(CodecError::ChecksumBlock),
                    n => return Err(CodecError::Trailing(n)),
                };
                Message::Prove(StorageProof::from_parts(mphf, nonce, start, end, checksum, signature)?)
            }
            TAG_SELECT => {
                let nonce = r.array()?;
                let len = u32::from_le_bytes(r.array()?);
                let bytes = r.bytes((len as usize).div_ceil(8))?.to_vec();
                Message::Select { nonce, bits: SelectBits::from_raw(len, bytes)? }
            }
            TAG_UPLOAD => {
                let len = u16::from_le_bytes(r.array()?) as usize;
                Message::Upload(Chunk::new(r.bytes(len)?)?)
            }
            TAG_UPLOAD_DONE => Message::UploadDone,
            t => return Err(CodecError::BadTag(t)),
        };
        match r.remaining() {
            0 => Ok(msg),
            n => Err(CodecError::Trailing(n)),
        }
    }
}

struct Cursor<'a> {
    buf: &'a Bytes,
    pos: usize,
}

impl Cursor<'_> {
    fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    fn bytes(&mut self, n: usize) -> Result<Bytes, CodecError> {
        if self.remaining() < n {
            return Err(CodecError::Truncated);
        }
        let out = self.buf.slice(self.pos..self.pos + n);
        self.pos += n;
        Ok(out)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N], CodecError> {
        Ok(self.bytes(N)?[..].try_into().unwrap())
    }

    fn u8(&mut self) -> Result<u8, CodecError> {
        Ok(self.array::<1>()?[0])
    }
}
