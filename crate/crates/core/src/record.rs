//! Per-transaction lifecycle records and per-profile results.

use serde::{Deserialize, Serialize};

use crate::duration::Duration;
use crate::plan::Mode;
use crate::types::H256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TxStatus {
    Pending,
    Included,
    FailedTimeout,
    Rejected,
}

impl TxStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            TxStatus::Pending => "pending",
            TxStatus::Included => "included",
            TxStatus::FailedTimeout => "failed_timeout",
            TxStatus::Rejected => "rejected",
        }
    }

    pub fn is_terminal(&self) -> bool {
        !matches!(self, TxStatus::Pending)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TxRecord {
    pub seq: u64,
    pub profile_index: usize,
    pub node_index: usize,
    /// Clock nanoseconds at submission.
    pub submit_time: u64,
    pub tx_hash: Option<H256>,
    pub nonce: Option<u64>,
    pub status: TxStatus,
    pub inclusion_block: Option<u64>,
    pub inclusion_time: Option<u64>,
    /// RPC or transport error text for rejected submissions.
    pub error: Option<String>,
}

impl TxRecord {
    pub fn pending(seq: u64, profile_index: usize, node_index: usize, submit_time: u64) -> Self {
        Self {
            seq,
            profile_index,
            node_index,
            submit_time,
            tx_hash: None,
            nonce: None,
            status: TxStatus::Pending,
            inclusion_block: None,
            inclusion_time: None,
            error: None,
        }
    }

    pub fn mark_included(&mut self, block: u64, at: u64) {
        self.status = TxStatus::Included;
        self.inclusion_block = Some(block);
        self.inclusion_time = Some(at.max(self.submit_time));
    }

    pub fn mark_rejected(&mut self, error: impl Into<String>) {
        self.status = TxStatus::Rejected;
        self.error = Some(error.into());
    }

    pub fn mark_timed_out(&mut self) {
        self.status = TxStatus::FailedTimeout;
    }

    /// Submission-to-receipt latency in nanoseconds, for included records.
    pub fn latency_ns(&self) -> Option<u64> {
        self.inclusion_time.map(|t| t - self.submit_time)
    }

    /// Checks the record-level invariants; returns a description of the first breach.
    pub fn check(&self) -> Result<(), String> {
        let included = self.status == TxStatus::Included;
        if included != (self.inclusion_block.is_some() && self.inclusion_time.is_some()) {
            return Err(format!("seq {}: inclusion fields disagree with status", self.seq));
        }
        if let Some(t) = self.inclusion_time {
            if t < self.submit_time {
                return Err(format!("seq {}: included before submission", self.seq));
            }
        }
        Ok(())
    }
}

/// One `eth_call` issued by a read profile.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReadRecord {
    pub seq: u64,
    pub profile_index: usize,
    pub node_index: usize,
    pub key: u64,
    pub start_time: u64,
    pub end_time: u64,
    pub ok: bool,
}

impl ReadRecord {
    pub fn latency_ns(&self) -> u64 {
        self.end_time - self.start_time
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProfileResult {
    pub profile_index: usize,
    pub mode: Mode,
    pub produced: u64,
    pub included: u64,
    pub failed_timeout: u64,
    pub rejected: u64,
    /// First submission attempt to last terminal transition.
    pub wall_time: Duration,
    pub started_ns: u64,
    pub finished_ns: u64,
    pub quiet_period: Duration,
    /// Submissions per node index.
    pub per_node: Vec<u64>,
    pub records: Vec<TxRecord>,
    pub reads: Vec<ReadRecord>,
}

impl ProfileResult {
    pub fn empty(profile_index: usize, mode: Mode, node_count: usize) -> Self {
        Self {
            profile_index,
            mode,
            produced: 0,
            included: 0,
            failed_timeout: 0,
            rejected: 0,
            wall_time: Duration::ZERO,
            started_ns: 0,
            finished_ns: 0,
            quiet_period: Duration::ZERO,
            per_node: vec![0; node_count],
            records: Vec::new(),
            reads: Vec::new(),
        }
    }

    pub fn is_conserved(&self) -> bool {
        self.produced == self.included + self.failed_timeout + self.rejected
    }

    /// Inclusion blocks spanned by this profile's transactions.
    pub fn block_range(&self) -> Option<(u64, u64)> {
        let mut blocks = self.records.iter().filter_map(|r| r.inclusion_block);
        let first = blocks.next()?;
        Some(blocks.fold((first, first), |(lo, hi), b| (lo.min(b), hi.max(b))))
    }

    pub fn tx_latencies(&self) -> Vec<u64> {
        self.records.iter().filter_map(TxRecord::latency_ns).collect()
    }

    pub fn read_latencies(&self) -> Vec<u64> {
        self.reads.iter().filter(|r| r.ok).map(ReadRecord::latency_ns).collect()
    }
}
