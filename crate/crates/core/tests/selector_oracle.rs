mod support {
    pub mod keccak_oracle;
}

use hammer_core::abi::{encode_call, function_selector, keccak256, GET_ITEM_SIGNATURE, SET_ITEM_SIGNATURE};
use hammer_core::prng::SplitMix64;
use hammer_core::U256;
use proptest::prelude::*;
use support::keccak_oracle;

// Computed with the standalone oracle in support/keccak_oracle.rs.
const SET_ITEM_SELECTOR: [u8; 4] = [0x17, 0xb7, 0x95, 0x65];
const GET_ITEM_SELECTOR: [u8; 4] = [0x31, 0x29, 0xe7, 0x73];

#[test]
fn oracle_reproduces_published_vectors() {
    assert_eq!(
        hex::encode(keccak_oracle::keccak256(b"")),
        "c5d2460186f7233c927e7db2dcc703c0e500b653ca82273b7bfad8045d85a470"
    );
    assert_eq!(keccak_oracle::selector("transfer(address,uint256)"), [0xa9, 0x05, 0x9c, 0xbb]);
}

#[test]
fn frozen_contract_selectors() {
    assert_eq!(keccak_oracle::selector(SET_ITEM_SIGNATURE), SET_ITEM_SELECTOR);
    assert_eq!(keccak_oracle::selector(GET_ITEM_SIGNATURE), GET_ITEM_SELECTOR);
    assert_eq!(function_selector(SET_ITEM_SIGNATURE), SET_ITEM_SELECTOR);
    assert_eq!(function_selector(GET_ITEM_SIGNATURE), GET_ITEM_SELECTOR);
}

const TYPES: [&str; 8] = ["uint256", "address", "bool", "bytes32", "string", "uint8", "int256", "bytes"];
const NAME_CHARS: &[u8] = b"abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ_0123456789";

fn random_signature(rng: &mut SplitMix64) -> String {
    let name_len = 1 + (rng.next_u64() % 16) as usize;
    let name: String = (0..name_len)
        .map(|i| {
            // Identifiers cannot start with a digit.
            let pool = if i == 0 { &NAME_CHARS[..53] } else { NAME_CHARS };
            pool[(rng.next_u64() % pool.len() as u64) as usize] as char
        })
        .collect();
    let arity = (rng.next_u64() % 5) as usize;
    let args: Vec<&str> = (0..arity)
        .map(|_| TYPES[(rng.next_u64() % TYPES.len() as u64) as usize])
        .collect();
    format!("{name}({})", args.join(","))
}

#[test]
fn hundred_random_signatures_match_oracle() {
    let mut rng = SplitMix64::new(0x5e1ec7);
    for _ in 0..100 {
        let sig = random_signature(&mut rng);
        assert_eq!(function_selector(&sig), keccak_oracle::selector(&sig), "{sig}");
    }
}

proptest! {
    #[test]
    fn arbitrary_input_digests_agree(data in proptest::collection::vec(any::<u8>(), 0..600)) {
        prop_assert_eq!(keccak256(&data), keccak_oracle::keccak256(&data));
    }

    #[test]
    fn selector_is_four_bytes_of_digest(sig in "[a-zA-Z_][a-zA-Z0-9_]{0,20}\\((uint256(,uint256){0,3})?\\)") {
        let sel = function_selector(&sig);
        prop_assert_eq!(sel.len(), 4);
        prop_assert_eq!(&sel[..], &keccak_oracle::keccak256(sig.as_bytes())[..4]);
    }

    #[test]
    fn encoded_length_law(args in proptest::collection::vec(any::<u64>(), 0..12)) {
        let words: Vec<U256> = args.iter().map(|a| U256::from(*a)).collect();
        let data = encode_call(SET_ITEM_SELECTOR, &words);
        prop_assert_eq!(data.len(), 4 + 32 * words.len());
        for (i, a) in args.iter().enumerate() {
            let word = &data[4 + 32 * i..4 + 32 * (i + 1)];
            prop_assert_eq!(&word[24..], &a.to_be_bytes()[..]);
        }
    }
}
