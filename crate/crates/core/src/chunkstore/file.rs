//! Splitting files into a 128-ary tree of chunks.
//!
//! Leaves hold consecutive slices of at most [`MAX_CHUNK_SIZE`] bytes.
//! Internal chunks hold the concatenated identifiers of up to [`BRANCHING`]
//! children. No span metadata is stored, so reassembly needs the tree depth.

use std::collections::HashSet;

use super::{Chunk, ChunkError, ChunkId, ChunkStore, MAX_CHUNK_SIZE};

pub const BRANCHING: usize = MAX_CHUNK_SIZE / 32;

#[derive(Clone, Debug)]
pub struct FileTree {
    pub root: ChunkId,
    /// 0 when the root is itself a leaf.
    pub depth: u32,
    /// Every distinct chunk of the tree, leaves first.
    pub chunks: Vec<Chunk>,
    pub leaf_count: usize,
}

pub fn split_file(data: &[u8]) -> Result<FileTree, ChunkError> {
    if data.is_empty() {
        return Err(ChunkError::Empty);
    }
    let mut seen = HashSet::new();
    let mut chunks = Vec::new();
    let mut push = |c: Chunk, chunks: &mut Vec<Chunk>| {
        let id = c.id();
        if seen.insert(id) {
            chunks.push(c);
        }
        id
    };

    let mut layer: Vec<ChunkId> = data
        .chunks(MAX_CHUNK_SIZE)
        .map(|slice| push(Chunk::new(slice.to_vec()).expect("slice within bounds"), &mut chunks))
        .collect();
    let leaf_count = layer.len();
    let mut depth = 0;
    while layer.len() > 1 {
        layer = layer
            .chunks(BRANCHING)
            .map(|ids| {
                let body: Vec<u8> = ids.iter().flat_map(|id| id.0).collect();
                push(Chunk::new(body).expect("at most 4096 bytes of ids"), &mut chunks)
            })
            .collect();
        depth += 1;
    }
    Ok(FileTree { root: layer[0], depth, chunks, leaf_count })
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum ReassembleError {
    #[error("chunk {0} missing from store")]
    Missing(ChunkId),
    #[error("internal chunk {0} is not a list of identifiers")]
    Malformed(ChunkId),
}

/// Depth-first concatenation of the leaves below `root`.
pub fn reassemble(store: &ChunkStore, root: ChunkId, depth: u32) -> Result<Vec<u8>, ReassembleError> {
    let mut out = Vec::new();
    walk(store, root, depth, &mut out)?;
    Ok(out)
}

fn walk(store: &ChunkStore, id: ChunkId, depth: u32, out: &mut Vec<u8>) -> Result<(), ReassembleError> {
    let chunk = store.get(&id).ok_or(ReassembleError::Missing(id))?;
    if depth == 0 {
        out.extend_from_slice(chunk.data());
        return Ok(());
    }
    if chunk.data().len() % 32 != 0 {
        return Err(ReassembleError::Malformed(id));
    }
    for child in chunk.data().chunks_exact(32) {
        walk(store, ChunkId::from(<[u8; 32]>::try_from(child).unwrap()), depth - 1, out)?;
    }
    Ok(())
}
