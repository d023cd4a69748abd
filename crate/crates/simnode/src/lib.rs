//! Deterministic mock of an Ethereum-style node cluster.
//!
//! Every endpoint of a [`Cluster`] serves the same in-memory [`Chain`] over
//! JSON-RPC. Blocks are sealed every `block_interval` on the cluster's clock,
//! draining at most `max_tx_per_block` transactions from a FIFO mempool.
//! Submissions can be rejected or silently dropped with configured
//! probabilities drawn from a seeded generator.

pub mod chain;
pub mod cluster;
pub mod config;

pub use chain::{Arrival, ArrivalOutcome, Chain, ChainSnapshot};
pub use cluster::{start_cluster, start_cluster_with_clock, Cluster, ClusterError};
pub use config::{ChainConfig, ClockKind, ConfigError};
