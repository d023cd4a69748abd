use std::sync::atomic::{AtomicU64, Ordering};

use hammer_core::rpc::{RpcClient, RpcError};
use hammer_core::Address;

/// Per-sender nonce source shared by all workers of a run.
#[derive(Debug)]
pub struct NonceCounter {
    initial: u64,
    next: AtomicU64,
}

impl NonceCounter {
    pub fn new(initial: u64) -> Self {
        Self {
            initial,
            next: AtomicU64::new(initial),
        }
    }

    /// Starts from the sender's pending transaction count on `client`'s node.
    pub async fn init(client: &RpcClient, sender: Address) -> Result<Self, RpcError> {
        Ok(Self::new(client.transaction_count(sender, "pending").await?))
    }

    pub fn next_nonce(&self) -> u64 {
        self.next.fetch_add(1, Ordering::SeqCst)
    }

    pub fn initial(&self) -> u64 {
        self.initial
    }

    /// How many nonces have been handed out.
    pub fn issued(&self) -> u64 {
        self.next.load(Ordering::SeqCst) - self.initial
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_from_initial() {
        let c = NonceCounter::new(0);
        assert_eq!([c.next_nonce(), c.next_nonce(), c.next_nonce()], [0, 1, 2]);
        let c = NonceCounter::new(7);
        assert_eq!(c.next_nonce(), 7);
        assert_eq!(c.issued(), 1);
    }
}
