//! List-exchange comparison protocol.
//!
//! For every ordered pair (requester, responder) the responder offers the ids
//! of its initial store, the requester answers with a bit vector of the ids it
//! neither holds nor already requested, and the responder delivers them.
//! Requesters handle offers one after another, so no chunk is requested
//! twice. Wire layout (little-endian):
//!
//! ```text
//! Offer     0x11 | count u32 | ids [32 * count]
//! Want      0x12 | bit_len u32 | bits [ceil(bit_len / 8)]
//! Delivery  0x13 | data_len u16 | data
//! ```

use std::collections::BTreeSet;

use crate::chunkstore::{ChunkId, ChunkStore};

use super::metrics::MetricsReport;
use super::scenario::{build_stores, report_header, union_of};
use super::ScenarioConfig;

/// Tag plus count of an Offer or Want.
pub const BASELINE_ENVELOPE: u64 = 5;
const DELIVERY_HEADER: u64 = 3;

/// Panics if `config` fails validation.
pub fn run_baseline(config: &ScenarioConfig) -> MetricsReport {
    if let Err(e) = config.validate() {
        panic!("invalid scenario config: {e}");
    }
    let mut stores = build_stores(config);
    let union = union_of(&stores);
    let offers: Vec<Vec<ChunkId>> = stores.iter().map(|s| s.ids().copied().collect()).collect();
    let initial: Vec<ChunkStore> = stores.clone();
    let peers = stores.len();

    let mut report = report_header(config);
    let mut metadata = vec![0u64; peers];
    let mut wants = vec![0u64; peers];
    let mut framing = 0u64;
    let mut transferred = vec![BTreeSet::new(); peers];
    let mut events = 0u64;
    for r in 0..peers {
        for s in (0..peers).filter(|&s| s != r) {
            let offer = &offers[s];
            metadata[s] += BASELINE_ENVELOPE + 32 * offer.len() as u64;
            metadata[r] += BASELINE_ENVELOPE + (offer.len() as u64).div_ceil(8);
            wants[r] += 1;
            events += 2;
            for id in offer {
                if stores[r].contains(id) {
                    continue;
                }
                let chunk = initial[s].get(id).expect("offered ids come from the initial store").clone();
                metadata[s] += DELIVERY_HEADER;
                framing += DELIVERY_HEADER;
                report.chunk_payload_bytes += chunk.len() as u64;
                report.upload_messages += 1;
                events += 1;
                transferred[r].insert(*id);
                stores[r].put(chunk);
            }
        }
    }

    report.converged = stores.iter().all(|s| s.len() == union.len());
    report.rounds_to_sync = 1;
    report.metadata_bytes = metadata.iter().sum();
    report.sync_metadata_bytes = report.metadata_bytes - framing;
    report.metadata_bytes_per_peer = metadata;
    report.select_messages = wants.iter().sum();
    report.max_selects_per_peer = wants.iter().max().copied().unwrap_or(0);
    report.duration_events = events;
    report.proof_accuracy_per_round = vec![1.0];
    report.bits_per_chunk = 256.0;
    report.transferred = transferred;
    report
}
