//! Fixed-size chain primitives and their `0x` hex framing.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum HexError {
    #[error("missing 0x prefix")]
    MissingPrefix,
    #[error("invalid hex: {0}")]
    Invalid(String),
    #[error("expected {expected} bytes, got {actual}")]
    Length { expected: usize, actual: usize },
    #[error("quantity {0:?} is not minimal hex")]
    NonMinimal(String),
    #[error("quantity overflows {0} bits")]
    Overflow(u32),
}

fn strip_prefix(text: &str) -> Result<&str, HexError> {
    text.strip_prefix("0x")
        .or_else(|| text.strip_prefix("0X"))
        .ok_or(HexError::MissingPrefix)
}

/// Decodes a `0x`-prefixed, even-length byte string.
pub fn decode_bytes(text: &str) -> Result<Vec<u8>, HexError> {
    hex::decode(strip_prefix(text)?).map_err(|e| HexError::Invalid(e.to_string()))
}

pub fn encode_bytes(bytes: &[u8]) -> String {
    format!("0x{}", hex::encode(bytes))
}

/// Minimal-length quantity encoding (`0x0`, `0x1f4`, ...).
pub fn encode_quantity(value: u64) -> String {
    format!("0x{value:x}")
}

/// Parses a quantity. Leading zeros are rejected, except for `0x0` itself.
pub fn decode_quantity(text: &str) -> Result<u64, HexError> {
    let digits = strip_prefix(text)?;
    if digits.is_empty() || (digits.len() > 1 && digits.starts_with('0')) {
        return Err(HexError::NonMinimal(text.to_string()));
    }
    if digits.len() > 16 {
        return Err(HexError::Overflow(64));
    }
    u64::from_str_radix(digits, 16).map_err(|e| HexError::Invalid(e.to_string()))
}

macro_rules! fixed_bytes {
    ($(#[$meta:meta])* $name:ident, $len:expr) => {
        $(#[$meta])*
        #[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
        pub struct $name(pub [u8; $len]);

        impl $name {
            pub const LEN: usize = $len;

            pub fn as_bytes(&self) -> &[u8; $len] {
                &self.0
            }
        }

        impl TryFrom<&[u8]> for $name {
            type Error = HexError;

            fn try_from(bytes: &[u8]) -> Result<Self, Self::Error> {
                let array: [u8; $len] = bytes.try_into().map_err(|_| HexError::Length {
                    expected: $len,
                    actual: bytes.len(),
                })?;
                Ok(Self(array))
            }
        }

        impl FromStr for $name {
            type Err = HexError;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                Self::try_from(decode_bytes(s)?.as_slice())
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&encode_bytes(&self.0))
            }
        }

        impl fmt::Debug for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}({})", stringify!($name), self)
            }
        }

        impl Serialize for $name {
            fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
                serializer.serialize_str(&self.to_string())
            }
        }

        impl<'de> Deserialize<'de> for $name {
            fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
                let text = String::deserialize(deserializer)?;
                text.parse().map_err(serde::de::Error::custom)
            }
        }
    };
}

fixed_bytes!(
    /// 20-byte account or contract address.
    Address,
    20
);
fixed_bytes!(
    /// 32-byte Keccak digest: transaction and block hashes.
    H256,
    32
);

/// Unsigned 256-bit integer stored as a big-endian word. No arithmetic, only framing.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct U256(pub [u8; 32]);

impl U256 {
    pub const ZERO: U256 = U256([0; 32]);

    pub fn to_be_bytes(self) -> [u8; 32] {
        self.0
    }

    pub fn from_be_bytes(bytes: [u8; 32]) -> Self {
        Self(bytes)
    }

    pub fn is_zero(&self) -> bool {
        self.0 == [0; 32]
    }

    /// The low 64 bits, if the value fits.
    pub fn to_u64(&self) -> Option<u64> {
        if self.0[..24].iter().any(|b| *b != 0) {
            return None;
        }
        Some(u64::from_be_bytes(self.0[24..].try_into().unwrap()))
    }

    pub fn to_quantity(&self) -> String {
        let first = self.0.iter().position(|b| *b != 0);
        match first {
            None => "0x0".to_string(),
            Some(i) => {
                let digits = hex::encode(&self.0[i..]);
                format!("0x{}", digits.trim_start_matches('0'))
            }
        }
    }

    pub fn from_quantity(text: &str) -> Result<Self, HexError> {
        let digits = strip_prefix(text)?;
        if digits.is_empty() || (digits.len() > 1 && digits.starts_with('0')) {
            return Err(HexError::NonMinimal(text.to_string()));
        }
        if digits.len() > 64 {
            return Err(HexError::Overflow(256));
        }
        let padded = format!("{digits:0>64}");
        let bytes = hex::decode(padded).map_err(|e| HexError::Invalid(e.to_string()))?;
        Ok(Self(bytes.try_into().unwrap()))
    }
}

impl From<u64> for U256 {
    fn from(v: u64) -> Self {
        let mut word = [0u8; 32];
        word[24..].copy_from_slice(&v.to_be_bytes());
        Self(word)
    }
}

impl From<u128> for U256 {
    fn from(v: u128) -> Self {
        let mut word = [0u8; 32];
        word[16..].copy_from_slice(&v.to_be_bytes());
        Self(word)
    }
}

impl fmt::Debug for U256 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "U256({})", self.to_quantity())
    }
}

impl fmt::Display for U256 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_quantity())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantity_framing() {
        assert_eq!(encode_quantity(0), "0x0");
        assert_eq!(encode_quantity(500), "0x1f4");
        assert_eq!(decode_quantity("0x1f4").unwrap(), 500);
        assert_eq!(decode_quantity("0x0").unwrap(), 0);
        assert!(matches!(decode_quantity("0x01"), Err(HexError::NonMinimal(_))));
        assert!(matches!(decode_quantity("0x"), Err(HexError::NonMinimal(_))));
        assert_eq!(decode_quantity("12"), Err(HexError::MissingPrefix));
    }

    #[test]
    fn u256_quantity() {
        assert_eq!(U256::ZERO.to_quantity(), "0x0");
        assert_eq!(U256::from(1u64).to_quantity(), "0x1");
        assert_eq!(U256::from(0x100u64).to_quantity(), "0x100");
        assert_eq!(U256::from_quantity("0x100").unwrap(), U256::from(256u64));
        assert_eq!(U256::from(u64::MAX).to_u64(), Some(u64::MAX));
        assert_eq!(U256::from(u128::MAX).to_u64(), None);
    }

    #[test]
    fn address_length_checked() {
        let ok: Address = "0x00000000000000000000000000000000000000aa".parse().unwrap();
        assert_eq!(ok.0[19], 0xaa);
        let short = "0x000000000000000000000000000000000000aa".parse::<Address>();
        assert_eq!(
            short,
            Err(HexError::Length {
                expected: 20,
                actual: 19
            })
        );
    }
}
