//! Executes a [`TestPlan`](hammer_core::TestPlan) against a set of nodes.
//!
//! Each profile runs a pool of workers that submit transactions (or reads)
//! round-robin across the nodes while a tracker follows new blocks until every
//! transaction is included or timed out. Profiles run strictly in order with
//! their quiet periods in between.

mod nonce;
mod profile;
mod run;

use hammer_core::plan::Violation;
use hammer_core::prng::SplitMix64;
use hammer_core::rpc::RpcError;
use hammer_core::U256;
use thiserror::Error;

pub use nonce::NonceCounter;
pub use profile::{run_profile, PlanContext, RECEIPT_POLL_INTERVAL};
pub use run::{run_plan, RunOptions, RunReport};

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("invalid plan: {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    InvalidPlan(Vec<Violation>),
    #[error("{0}")]
    Config(String),
    #[error("no node reachable: {0}")]
    NoReachableNodes(String),
    #[error("node error: {0}")]
    Rpc(#[from] RpcError),
}

/// Node for the `seq_within_profile`-th unit of work.
pub fn assign_node(seq_within_profile: u64, node_count: usize) -> usize {
    assert!(node_count >= 1, "at least one node");
    (seq_within_profile % node_count as u64) as usize
}

/// The (key, value) a setItem call carries for global sequence number `seq`.
pub fn workload_item(seed: u64, seq: u64) -> (U256, U256) {
    (U256::from(seq), U256::from(SplitMix64::nth(seed, seq)))
}
