//! The synchronization protocol: wire messages, the nonce beacon and the
//! per-peer state machine.

mod beacon;
mod message;
mod peer;

pub use beacon::{beacon_nonce, Beacon, DEFAULT_INTERVAL};
pub use message::{
    CodecError, Message, MessageKind, SelectBits, CHECKSUM_BLOCK_LEN, PROVE_FIXED_LEN, TAG_NEW_PROOF,
    TAG_NEW_PROOF_RANGE, TAG_PROVE, TAG_SELECT, TAG_UPLOAD, TAG_UPLOAD_DONE,
};
pub use peer::{Counters, Dest, Evaluation, Outgoing, Peer, PeerConfig, PhaseTimes};
