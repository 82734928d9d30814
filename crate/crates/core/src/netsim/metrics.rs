use std::collections::BTreeSet;
use std::io;

use crate::chunkstore::{Address, ChunkId};
use crate::proof::Nonce;

/// One proof evaluation joined with ground truth from the prover's side.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalRecord {
    pub epoch: u32,
    pub verifier: usize,
    pub prover: usize,
    /// 1-based position among evaluations of this (verifier, prover) pair.
    pub pair_round: u32,
    pub nonce: Nonce,
    pub n: u64,
    pub collision: bool,
    pub identified: BTreeSet<ChunkId>,
    pub truly_missing: BTreeSet<ChunkId>,
    /// Local chunk hits that were not members of the proof.
    pub false_positive_hits: u64,
}

impl EvalRecord {
    pub fn exact(&self) -> bool {
        self.identified == self.truly_missing
    }
}

/// Outcome of one run. Timing fields are zero unless measured and are only
/// written to CSV on request, so default CSV output is deterministic.
#[derive(Clone, Debug, Default)]
pub struct MetricsReport {
    pub protocol: String,
    pub scenario: String,
    pub peers: usize,
    pub chunk_size: usize,
    pub chunks_per_peer: usize,
    pub seed: u64,
    pub converged: bool,
    /// Beacon epochs used; 1 for the baseline.
    pub rounds_to_sync: u32,
    /// All non-payload bytes put on the wire.
    pub metadata_bytes: u64,
    /// Metadata without upload framing: proofs, proof requests and
    /// selections (offers and wants for the baseline).
    pub sync_metadata_bytes: u64,
    pub metadata_bytes_per_peer: Vec<u64>,
    pub chunk_payload_bytes: u64,
    /// Select messages (Want messages for the baseline).
    pub select_messages: u64,
    pub max_selects_per_peer: u64,
    pub prove_messages: u64,
    pub new_proof_messages: u64,
    pub upload_messages: u64,
    /// Aggregate accuracy of the k-th evaluation over all peer pairs.
    pub proof_accuracy_per_round: Vec<f64>,
    pub duration_events: u64,
    /// Mean Prove message size in bits per covered chunk.
    pub bits_per_chunk: f64,
    /// Mean MPHF size in bits per covered chunk.
    pub mphf_bits_per_chunk: f64,
    pub false_positive_hits: u64,
    pub collisions: u64,
    pub checksum_mismatches: u64,
    pub rejected_uploads: u64,
    pub create_seconds: f64,
    pub find_missing_seconds: f64,
    /// Chunk ids delivered by Upload per receiving peer.
    pub transferred: Vec<BTreeSet<ChunkId>>,
    pub evaluations: Vec<EvalRecord>,
    pub addresses: Vec<Address>,
    pub trace: Vec<String>,
}

const BASE_HEADER: &[&str] = &[
    "protocol",
    "scenario",
    "peers",
    "chunk_size",
    "chunks_per_peer",
    "seed",
    "converged",
    "rounds_to_sync",
    "metadata_bytes",
    "sync_metadata_bytes",
    "max_peer_metadata_bytes",
    "chunk_payload_bytes",
    "select_messages",
    "max_selects_per_peer",
    "prove_messages",
    "new_proof_messages",
    "upload_messages",
    "duration_events",
    "bits_per_chunk",
    "mphf_bits_per_chunk",
    "false_positive_hits",
    "collisions",
    "checksum_mismatches",
    "rejected_uploads",
    "proof_accuracy_per_round",
];
const TIMING_HEADER: &[&str] = &["create_seconds", "find_missing_seconds"];

impl MetricsReport {
    pub fn csv_header(timing: bool) -> Vec<&'static str> {
        let mut h = BASE_HEADER.to_vec();
        if timing {
            h.extend_from_slice(TIMING_HEADER);
        }
        h
    }

    pub fn csv_row(&self, timing: bool) -> Vec<String> {
        let accuracy: Vec<String> = self.proof_accuracy_per_round.iter().map(|a| format!("{a:.6}")).collect();
        let mut row = vec![
            self.protocol.clone(),
            self.scenario.clone(),
            self.peers.to_string(),
            self.chunk_size.to_string(),
            self.chunks_per_peer.to_string(),
            self.seed.to_string(),
            self.converged.to_string(),
            self.rounds_to_sync.to_string(),
            self.metadata_bytes.to_string(),
            self.sync_metadata_bytes.to_string(),
            self.metadata_bytes_per_peer.iter().max().copied().unwrap_or(0).to_string(),
            self.chunk_payload_bytes.to_string(),
            self.select_messages.to_string(),
            self.max_selects_per_peer.to_string(),
            self.prove_messages.to_string(),
            self.new_proof_messages.to_string(),
            self.upload_messages.to_string(),
            self.duration_events.to_string(),
            format!("{:.6}", self.bits_per_chunk),
            format!("{:.6}", self.mphf_bits_per_chunk),
            self.false_positive_hits.to_string(),
            self.collisions.to_string(),
            self.checksum_mismatches.to_string(),
            self.rejected_uploads.to_string(),
            accuracy.join(";"),
        ];
        if timing {
            row.push(format!("{:.6}", self.create_seconds));
            row.push(format!("{:.6}", self.find_missing_seconds));
        }
        row
    }

    pub fn write_csv<W: io::Write>(reports: &[MetricsReport], timing: bool, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(Self::csv_header(timing))?;
        for r in reports {
            w.write_record(r.csv_row(timing))?;
        }
        w.flush()?;
        Ok(())
    }

    /// Accuracy sequence is nondecreasing.
    pub fn accuracy_nondecreasing(&self) -> bool {
        self.proof_accuracy_per_round.windows(2).all(|w| w[0] <= w[1])
    }
}
