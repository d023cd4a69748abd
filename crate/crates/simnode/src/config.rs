use std::path::Path;

use hammer_core::Duration;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ClockKind {
    #[default]
    Real,
    Virtual,
}

/// Mock network parameters. Loadable from JSON with camelCase keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct ChainConfig {
    pub block_interval: Duration,
    pub max_tx_per_block: u64,
    #[serde(default)]
    pub rpc_latency: Duration,
    #[serde(default)]
    pub drop_probability: f64,
    #[serde(default)]
    pub reject_probability: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub clock: ClockKind,
    #[serde(default = "one")]
    pub endpoints: usize,
}

fn one() -> usize {
    1
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self {
            block_interval: Duration::from_secs(1),
            max_tx_per_block: 500,
            rpc_latency: Duration::ZERO,
            drop_probability: 0.0,
            reject_probability: 0.0,
            seed: 0,
            clock: ClockKind::Real,
            endpoints: 1,
        }
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("chain config: {0}")]
    Json(#[from] serde_json::Error),
    #[error("chain config: {0}")]
    Invalid(String),
}

impl ChainConfig {
    pub fn from_json(bytes: &[u8]) -> Result<Self, ConfigError> {
        let config: ChainConfig = serde_json::from_slice(bytes)?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&bytes)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |m: String| Err(ConfigError::Invalid(m));
        let interval = self.block_interval.as_millis();
        if interval < 1000 || !interval.is_multiple_of(1000) {
            return invalid(format!(
                "blockInterval must be a whole number of seconds, at least 1s (got {})",
                self.block_interval
            ));
        }
        if self.max_tx_per_block == 0 {
            return invalid("maxTxPerBlock must be at least 1".into());
        }
        for (name, p) in [
            ("dropProbability", self.drop_probability),
            ("rejectProbability", self.reject_probability),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return invalid(format!("{name} must be within [0, 1] (got {p})"));
            }
        }
        if self.drop_probability + self.reject_probability > 1.0 {
            return invalid("dropProbability + rejectProbability must not exceed 1".into());
        }
        if self.endpoints == 0 {
            return invalid("endpoints must be at least 1".into());
        }
        Ok(())
    }

    pub fn block_interval_secs(&self) -> u64 {
        self.block_interval.as_millis() / 1000
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_from_minimal_json() {
        let c = ChainConfig::from_json(br#"{"blockInterval": "2s", "maxTxPerBlock": 100}"#).unwrap();
        assert_eq!(c.block_interval_secs(), 2);
        assert_eq!(c.endpoints, 1);
        assert_eq!(c.clock, ClockKind::Real);
        assert_eq!(c.rpc_latency, Duration::ZERO);
    }

    #[test]
    fn rejects_invalid() {
        for bad in [
            r#"{"blockInterval": "500ms", "maxTxPerBlock": 1}"#,
            r#"{"blockInterval": "1500ms", "maxTxPerBlock": 1}"#,
            r#"{"blockInterval": "1s", "maxTxPerBlock": 0}"#,
            r#"{"blockInterval": "1s", "maxTxPerBlock": 1, "dropProbability": 0.6, "rejectProbability": 0.5}"#,
            r#"{"blockInterval": "1s", "maxTxPerBlock": 1, "dropProbability": -0.1}"#,
            r#"{"blockInterval": "1s", "maxTxPerBlock": 1, "endpoints": 0}"#,
            r#"{"blockInterval": "1s", "maxTxPerBlock": 1, "gasLimit": 5}"#,
        ] {
            assert!(ChainConfig::from_json(bad.as_bytes()).is_err(), "{bad}");
        }
    }
}
