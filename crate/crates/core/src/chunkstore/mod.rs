//! Content-addressed chunk storage.
//!
//! A [`Chunk`] can only be built from its payload, so its identifier always
//! equals `content_hash(data)`. [`ChunkStore`] keeps chunks ordered by
//! identifier for closed-range scans.
//!
//! Snapshot file layout (little-endian):
//!
//! ```text
//! "SCHK" | version u8 | count u64 | (len u16 | data [len]) * count
//! ```
//!
//! Identifiers are recomputed on load.

mod address;
pub mod file;

use std::collections::BTreeMap;
use std::io::{self, Read, Write};
use std::ops::Bound;
use std::path::Path;

use bytes::Bytes;
use thiserror::Error;

use crate::hash::{content_hash, Digest};
pub use address::{in_neighborhood, Address, ChunkId};
pub use file::{reassemble, split_file, FileTree};

pub const MAX_CHUNK_SIZE: usize = 4096;
pub const SNAPSHOT_MAGIC: &[u8; 4] = b"SCHK";
pub const SNAPSHOT_VERSION: u8 = 1;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ChunkError {
    #[error("chunk payload is empty")]
    Empty,
    #[error("chunk payload of {0} bytes exceeds {MAX_CHUNK_SIZE}")]
    TooLarge(usize),
}

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
#[error("range start {start:?} is above end {end:?}")]
pub struct RangeError {
    pub start: Address,
    pub end: Address,
}

#[derive(Debug, Error)]
pub enum SnapshotError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("not a chunk snapshot")]
    BadMagic,
    #[error("unsupported snapshot version {0}")]
    UnsupportedVersion(u8),
    #[error("invalid chunk in snapshot: {0}")]
    Chunk(#[from] ChunkError),
}

/// Identifier of a payload; fails for empty or oversized input.
pub fn chunk_id(data: &[u8]) -> Result<Digest, ChunkError> {
    check_size(data.len())?;
    Ok(content_hash(data))
}

fn check_size(len: usize) -> Result<(), ChunkError> {
    match len {
        0 => Err(ChunkError::Empty),
        n if n > MAX_CHUNK_SIZE => Err(ChunkError::TooLarge(n)),
        _ => Ok(()),
    }
}

#[derive(Clone, PartialEq, Eq)]
pub struct Chunk {
    id: ChunkId,
    data: Bytes,
}

impl Chunk {
    pub fn new(data: impl Into<Bytes>) -> Result<Self, ChunkError> {
        let data = data.into();
        let id = Address(chunk_id(&data)?);
        Ok(Self { id, data })
    }

    pub fn id(&self) -> ChunkId {
        self.id
    }

    pub fn data(&self) -> &Bytes {
        &self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

impl std::fmt::Debug for Chunk {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Chunk").field("id", &self.id).field("len", &self.data.len()).finish()
    }
}

#[derive(Clone, Debug, Default)]
pub struct ChunkStore {
    chunks: BTreeMap<ChunkId, Chunk>,
}

impl ChunkStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts `chunk`; returns false (and changes nothing) if it was present.
    pub fn put(&mut self, chunk: Chunk) -> bool {
        use std::collections::btree_map::Entry;
        match self.chunks.entry(chunk.id) {
            Entry::Occupied(_) => false,
            Entry::Vacant(v) => {
                v.insert(chunk);
                true
            }
        }
    }

    pub fn get(&self, id: &ChunkId) -> Option<&Chunk> {
        self.chunks.get(id)
    }

    pub fn contains(&self, id: &ChunkId) -> bool {
        self.chunks.contains_key(id)
    }

    pub fn delete(&mut self, id: &ChunkId) -> Option<Chunk> {
        self.chunks.remove(id)
    }

    pub fn len(&self) -> usize {
        self.chunks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chunks.is_empty()
    }

    /// All chunks in ascending identifier order.
    pub fn iter(&self) -> impl Iterator<Item = &Chunk> + '_ {
        self.chunks.values()
    }

    pub fn ids(&self) -> impl Iterator<Item = &ChunkId> + '_ {
        self.chunks.keys()
    }

    /// Chunks with `start <= id <= end`, ascending.
    pub fn iter_range(&self, start: &Address, end: &Address) -> Result<impl Iterator<Item = &Chunk> + '_, RangeError> {
        if start > end {
            return Err(RangeError { start: *start, end: *end });
        }
        Ok(self.chunks.range((Bound::Included(*start), Bound::Included(*end))).map(|(_, c)| c))
    }

    pub fn count_range(&self, start: &Address, end: &Address) -> Result<usize, RangeError> {
        Ok(self.iter_range(start, end)?.count())
    }

    /// Identifiers whose stored payload no longer hashes to them.
    pub fn scrub(&self) -> Vec<ChunkId> {
        self.chunks.values().filter(|c| content_hash(&c.data) != c.id.0).map(|c| c.id).collect()
    }

    pub fn write_snapshot<W: Write>(&self, mut w: W) -> Result<(), SnapshotError> {
        w.write_all(SNAPSHOT_MAGIC)?;
        w.write_all(&[SNAPSHOT_VERSION])?;
        w.write_all(&(self.chunks.len() as u64).to_le_bytes())?;
        for c in self.chunks.values() {
            w.write_all(&(c.data.len() as u16).to_le_bytes())?;
            w.write_all(&c.data)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_snapshot<R: Read>(mut r: R) -> Result<Self, SnapshotError> {
        let mut head = [0u8; 13];
        r.read_exact(&mut head)?;
        if &head[..4] != SNAPSHOT_MAGIC {
            return Err(SnapshotError::BadMagic);
        }
        if head[4] != SNAPSHOT_VERSION {
            return Err(SnapshotError::UnsupportedVersion(head[4]));
        }
        let count = u64::from_le_bytes(head[5..13].try_into().unwrap());
        let mut store = Self::new();
        for _ in 0..count {
            let mut len = [0u8; 2];
            r.read_exact(&mut len)?;
            let len = u16::from_le_bytes(len) as usize;
            check_size(len)?;
            let mut data = vec![0u8; len];
            r.read_exact(&mut data)?;
            store.put(Chunk::new(data)?);
        }
        Ok(store)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), SnapshotError> {
        let file = std::fs::File::create(path)?;
        self.write_snapshot(io::BufWriter::new(file))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, SnapshotError> {
        let file = std::fs::File::open(path)?;
        Self::read_snapshot(io::BufReader::new(file))
    }
}

impl Extend<Chunk> for ChunkStore {
    fn extend<T: IntoIterator<Item = Chunk>>(&mut self, iter: T) {
        for c in iter {
            self.put(c);
        }
    }
}

impl FromIterator<Chunk> for ChunkStore {
    fn from_iter<T: IntoIterator<Item = Chunk>>(iter: T) -> Self {
        let mut s = Self::new();
        s.extend(iter);
        s
    }
}
