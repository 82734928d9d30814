use bytes::Bytes;
use proptest::prelude::*;
use snips::chunkstore::{Address, Chunk, ChunkStore, MAX_CHUNK_SIZE};
use snips::mphf::{Mphf, DEFAULT_GAMMA};
use snips::proof::{create_proof, ChunkProofCache, Identity, StorageProof};
use snips::protocol::{Message, SelectBits, CHECKSUM_BLOCK_LEN, PROVE_FIXED_LEN};

fn address() -> impl Strategy<Value = Address> {
    any::<[u8; 32]>().prop_map(Address)
}

fn proof(datas: Vec<Vec<u8>>, nonce: [u8; 8], with_checksum: bool, key: u64) -> StorageProof {
    let store: ChunkStore = datas.into_iter().filter_map(|d| Chunk::new(d).ok()).collect();
    let id = Identity::from_seed(key);
    let (p, _) = create_proof(&store, nonce, Address::ZERO, Address::MAX, &mut ChunkProofCache::new(), &id, DEFAULT_GAMMA).unwrap();
    if with_checksum {
        p
    } else {
        let mphf = Mphf::from_bytes(p.mphf_bytes()).unwrap();
        StorageProof::create(mphf, nonce, p.start(), p.end(), None, &id).unwrap()
    }
}

fn message() -> impl Strategy<Value = Message> {
    prop_oneof![
        (any::<[u8; 8]>(), proptest::option::of((address(), address())))
            .prop_map(|(nonce, range)| Message::NewProof { nonce, range }),
        (proptest::collection::vec(proptest::collection::vec(any::<u8>(), 1..24), 0..24), any::<[u8; 8]>(), any::<bool>(), 0u64..4)
            .prop_map(|(d, n, c, k)| Message::Prove(proof(d, n, c, k))),
        (any::<[u8; 8]>(), 0u32..300, proptest::collection::vec(any::<u32>(), 0..40)).prop_map(|(nonce, len, raw)| {
            let idx = raw.into_iter().filter(|_| len > 0).map(|r| (r % len) as u64 + 1);
            Message::Select { nonce, bits: SelectBits::from_indices(len, idx) }
        }),
        prop_oneof![1usize..64, Just(MAX_CHUNK_SIZE), 1usize..=MAX_CHUNK_SIZE]
            .prop_flat_map(|n| proptest::collection::vec(any::<u8>(), n))
            .prop_map(|d| Message::Upload(Chunk::new(d).unwrap())),
        Just(Message::UploadDone),
    ]
}

fn expected_len(m: &Message) -> usize {
    match m {
        Message::NewProof { range: None, .. } => 1 + 8,
        Message::NewProof { range: Some(_), .. } => 1 + 8 + 32 + 32,
        Message::Prove(p) => {
            1 + 8 + 32 + 32 + 4 + p.mphf_bytes().len() + 97 + if p.checksum().is_some() { 33 } else { 0 }
        }
        Message::Select { bits, .. } => 1 + 8 + 4 + (bits.len() as usize).div_ceil(8),
        Message::Upload(c) => 1 + 2 + c.len(),
        Message::UploadDone => 1,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100_000))]

    #[test]
    fn round_trip(m in message()) {
        let bytes = m.encode();
        prop_assert_eq!(bytes.len(), expected_len(&m));
        prop_assert_eq!(m.encoded_len(), bytes.len());
        let back = Message::decode(&Bytes::from(bytes.clone())).unwrap();
        prop_assert_eq!(back.kind(), m.kind());
        prop_assert_eq!(back.encode(), bytes);
        if let (Message::Prove(a), Message::Prove(b)) = (&m, &back) {
            prop_assert_eq!(b.verify_signature(), a.verify_signature());
            prop_assert!(b.verify_signature().is_some());
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2_000))]

    #[test]
    fn strict_prefixes_do_not_decode(m in message()) {
        let bytes = m.encode();
        let checksum_cut = matches!(&m, Message::Prove(p) if p.checksum().is_some()).then(|| bytes.len() - CHECKSUM_BLOCK_LEN);
        for cut in 0..bytes.len() {
            let r = Message::decode(&Bytes::copy_from_slice(&bytes[..cut]));
            if Some(cut) == checksum_cut {
                prop_assert!(r.is_ok(), "dropping the checksum block leaves a valid proof");
            } else {
                prop_assert!(r.is_err(), "prefix of length {} decoded", cut);
            }
        }
    }

    #[test]
    fn trailing_bytes_rejected(m in message(), extra in proptest::collection::vec(any::<u8>(), 1..40)) {
        let mut bytes = m.encode();
        let prove_with_room = matches!(&m, Message::Prove(p) if p.checksum().is_none()) && extra.len() == CHECKSUM_BLOCK_LEN;
        bytes.extend_from_slice(&extra);
        let r = Message::decode(&Bytes::from(bytes));
        if !prove_with_room {
            prop_assert!(r.is_err());
        }
    }

    #[test]
    fn arbitrary_bytes_never_panic(bytes in proptest::collection::vec(any::<u8>(), 0..600)) {
        if let Ok(m) = Message::decode(&Bytes::from(bytes.clone())) {
            prop_assert_eq!(m.encode(), bytes);
        }
    }
}

#[test]
fn prove_fixed_part() {
    assert_eq!(PROVE_FIXED_LEN, 1 + 8 + 32 + 32 + 4 + 97);
    assert_eq!(CHECKSUM_BLOCK_LEN, 33);
}

#[test]
fn select_three_missing_two() {
    let m = Message::Select { nonce: [0; 8], bits: SelectBits::from_indices(3, [2]) };
    let bytes = m.encode();
    assert_eq!(&bytes[bytes.len() - 1..], &[0b010]);
    assert_eq!(bytes.len(), 1 + 8 + 4 + 1);
}

#[test]
fn oversized_upload_rejected() {
    let mut bytes = vec![0x05];
    bytes.extend_from_slice(&((MAX_CHUNK_SIZE + 1) as u16).to_le_bytes());
    bytes.extend(std::iter::repeat(7u8).take(MAX_CHUNK_SIZE + 1));
    assert!(Message::decode(&Bytes::from(bytes)).is_err());
    assert!(Message::decode(&Bytes::from_static(&[0x05, 0, 0])).is_err(), "empty chunk");
}

#[test]
fn select_length_mismatch_rejected() {
    let m = Message::Select { nonce: [1; 8], bits: SelectBits::from_indices(9, [9]) };
    let mut bytes = m.encode();
    bytes[9..13].copy_from_slice(&20u32.to_le_bytes());
    assert!(Message::decode(&Bytes::from(bytes)).is_err());
}
