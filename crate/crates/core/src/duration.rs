//! Human-readable durations such as `"1m"`, `"30s"`, `"10ms"` or `"1m30s"`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

const MS_PER_SECOND: u64 = 1_000;
const MS_PER_MINUTE: u64 = 60 * MS_PER_SECOND;
const MS_PER_HOUR: u64 = 60 * MS_PER_MINUTE;

/// Units ordered from largest to smallest. Compound strings must follow this order.
const UNITS: [(&str, u64); 4] = [
    ("h", MS_PER_HOUR),
    ("m", MS_PER_MINUTE),
    ("s", MS_PER_SECOND),
    ("ms", 1),
];

/// A non-negative span of time with millisecond resolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Duration {
    millis: u64,
}

impl Duration {
    pub const ZERO: Duration = Duration { millis: 0 };

    pub const fn from_millis(millis: u64) -> Self {
        Self { millis }
    }

    pub const fn from_secs(secs: u64) -> Self {
        Self {
            millis: secs * MS_PER_SECOND,
        }
    }

    pub const fn as_millis(&self) -> u64 {
        self.millis
    }

    pub const fn as_nanos(&self) -> u64 {
        self.millis * 1_000_000
    }

    pub const fn is_zero(&self) -> bool {
        self.millis == 0
    }

    /// Truncates a nanosecond count to whole milliseconds.
    pub const fn from_nanos_floor(nanos: u64) -> Self {
        Self {
            millis: nanos / 1_000_000,
        }
    }

    pub fn to_std(self) -> std::time::Duration {
        std::time::Duration::from_millis(self.millis)
    }
}

impl From<Duration> for std::time::Duration {
    fn from(d: Duration) -> Self {
        d.to_std()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DurationError {
    #[error("empty duration string")]
    Empty,
    #[error("negative duration {0:?}")]
    Negative(String),
    #[error("missing number before {0:?}")]
    MissingNumber(String),
    #[error("missing unit after {0:?}")]
    MissingUnit(String),
    #[error("unknown unit {0:?}")]
    UnknownUnit(String),
    #[error("unit {0:?} out of order: compound durations must use strictly descending units")]
    NotDescending(String),
    #[error("duration {0:?} overflows")]
    Overflow(String),
}

/// Parses `<integer><unit>` tokens (units `h`, `m`, `s`, `ms`), largest unit first.
pub fn parse_duration(text: &str) -> Result<Duration, DurationError> {
    if text.is_empty() {
        return Err(DurationError::Empty);
    }
    if text.starts_with('-') {
        return Err(DurationError::Negative(text.to_string()));
    }

    let bytes = text.as_bytes();
    let mut pos = 0;
    let mut total: u64 = 0;
    // Index into UNITS of the last unit seen; the next one must be strictly smaller.
    let mut last_unit: Option<usize> = None;

    while pos < bytes.len() {
        let num_start = pos;
        while pos < bytes.len() && bytes[pos].is_ascii_digit() {
            pos += 1;
        }
        let number = &text[num_start..pos];
        let unit_start = pos;
        while pos < bytes.len() && bytes[pos].is_ascii_alphabetic() {
            pos += 1;
        }
        let unit = &text[unit_start..pos];

        if number.is_empty() {
            // Either a stray character or a unit without a count.
            if unit.is_empty() {
                let bad = &text[unit_start..];
                let end = bad.chars().next().map_or(0, char::len_utf8);
                return Err(DurationError::UnknownUnit(bad[..end].to_string()));
            }
            return Err(DurationError::MissingNumber(unit.to_string()));
        }
        if unit.is_empty() {
            if pos < bytes.len() {
                let bad = &text[pos..];
                let end = bad.chars().next().map_or(0, char::len_utf8);
                return Err(DurationError::UnknownUnit(bad[..end].to_string()));
            }
            return Err(DurationError::MissingUnit(number.to_string()));
        }

        let unit_index = UNITS
            .iter()
            .position(|(name, _)| *name == unit)
            .ok_or_else(|| DurationError::UnknownUnit(unit.to_string()))?;
        if let Some(prev) = last_unit {
            if unit_index <= prev {
                return Err(DurationError::NotDescending(format!("{number}{unit}")));
            }
        }
        last_unit = Some(unit_index);

        let value: u64 = number
            .parse()
            .map_err(|_| DurationError::Overflow(text.to_string()))?;
        total = value
            .checked_mul(UNITS[unit_index].1)
            .and_then(|ms| total.checked_add(ms))
            .ok_or_else(|| DurationError::Overflow(text.to_string()))?;
    }

    Ok(Duration::from_millis(total))
}

/// Canonical rendering: largest unit first, zero components omitted, `"0s"` for zero.
pub fn format_duration(d: Duration) -> String {
    if d.millis == 0 {
        return "0s".to_string();
    }
    let mut rest = d.millis;
    let mut out = String::new();
    for (name, scale) in UNITS {
        let count = rest / scale;
        if count > 0 {
            out.push_str(&count.to_string());
            out.push_str(name);
            rest -= count * scale;
        }
    }
    out
}

impl fmt::Display for Duration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&format_duration(*self))
    }
}

impl FromStr for Duration {
    type Err = DurationError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_duration(s)
    }
}

impl Serialize for Duration {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&format_duration(*self))
    }
}

impl<'de> Deserialize<'de> for Duration {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        parse_duration(&text).map_err(serde::de::Error::custom)
    }
}
