//! Keccak-256 hashing and static contract-call encoding.

use tiny_keccak::{Hasher, Keccak};

use crate::types::{H256, U256};

pub const SET_ITEM_SIGNATURE: &str = "setItem(uint256,uint256)";
pub const GET_ITEM_SIGNATURE: &str = "getItem(uint256)";

pub fn keccak256(data: impl AsRef<[u8]>) -> [u8; 32] {
    let mut output = [0u8; 32];
    let mut hasher = Keccak::v256();
    hasher.update(data.as_ref());
    hasher.finalize(&mut output);
    output
}

pub fn keccak_hash(data: impl AsRef<[u8]>) -> H256 {
    H256(keccak256(data))
}

/// First four bytes of the Keccak-256 digest of a canonical signature such as
/// `"setItem(uint256,uint256)"`.
pub fn function_selector(signature: &str) -> [u8; 4] {
    let hash = keccak256(signature.as_bytes());
    [hash[0], hash[1], hash[2], hash[3]]
}

/// Selector followed by each argument as a 32-byte big-endian word.
pub fn encode_call(selector: [u8; 4], args: &[U256]) -> Vec<u8> {
    let mut out = Vec::with_capacity(4 + 32 * args.len());
    out.extend_from_slice(&selector);
    for arg in args {
        out.extend_from_slice(&arg.to_be_bytes());
    }
    out
}

pub fn set_item_call(key: U256, value: U256) -> Vec<u8> {
    encode_call(function_selector(SET_ITEM_SIGNATURE), &[key, value])
}

pub fn get_item_call(key: U256) -> Vec<u8> {
    encode_call(function_selector(GET_ITEM_SIGNATURE), &[key])
}

/// Splits calldata into selector and argument words when it is exactly
/// `4 + 32·n` bytes long.
pub fn decode_static_call(data: &[u8]) -> Option<([u8; 4], Vec<U256>)> {
    if data.len() < 4 || !(data.len() - 4).is_multiple_of(32) {
        return None;
    }
    let selector = [data[0], data[1], data[2], data[3]];
    let args = data[4..]
        .chunks_exact(32)
        .map(|w| U256::from_be_bytes(w.try_into().unwrap()))
        .collect();
    Some((selector, args))
}
