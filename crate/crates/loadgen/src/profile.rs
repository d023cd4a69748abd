use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, MutexGuard};
use std::time::Duration as StdDuration;

use hammer_core::abi::{get_item_call, set_item_call};
use hammer_core::clock::{Clock, Participant};
use hammer_core::record::{ProfileResult, ReadRecord, TxRecord, TxStatus};
use hammer_core::rpc::{BlockId, RpcClient, TxCall};
use hammer_core::{Address, Duration, Mode, TestPlan, TestProfile, H256, U256};

use crate::nonce::NonceCounter;
use crate::{assign_node, workload_item, LoadError};

/// Default receipt polling period.
pub const RECEIPT_POLL_INTERVAL: StdDuration = StdDuration::from_millis(250);

/// State that carries over from one profile to the next within a run.
pub struct PlanContext {
    pub clients: Vec<RpcClient>,
    pub contract: Address,
    pub sender: Address,
    pub seed: u64,
    pub receipt_timeout: Duration,
    pub receipt_poll_interval: StdDuration,
    /// Set by the first profile that reaches a node.
    pub nonces: Option<Arc<NonceCounter>>,
    /// Global sequence number of the next unit of work.
    pub next_seq: u64,
    /// Keys of included setItem transactions, in sequence order.
    pub written_keys: Vec<u64>,
}

impl PlanContext {
    /// Expects a plan that passed validation.
    pub fn new(plan: &TestPlan, clients: Vec<RpcClient>) -> Result<Self, LoadError> {
        let address = |r: Result<Address, _>, what: &str| {
            r.map_err(|e| LoadError::Config(format!("{what} address: {e}")))
        };
        Ok(Self {
            clients,
            contract: address(plan.contract(), "contract")?,
            sender: address(plan.sender(), "sender")?,
            seed: plan.seed,
            receipt_timeout: plan.receipt_timeout,
            receipt_poll_interval: RECEIPT_POLL_INTERVAL,
            nonces: None,
            next_seq: 0,
            written_keys: Vec::new(),
        })
    }
}

/// Index and head of the first node that answers `eth_blockNumber`.
async fn probe(clients: &[RpcClient]) -> Result<(usize, u64), LoadError> {
    let heads = futures::future::join_all(clients.iter().map(|c| c.block_number())).await;
    let mut last_error = None;
    for (i, head) in heads.into_iter().enumerate() {
        match head {
            Ok(h) => return Ok((i, h)),
            Err(e) => {
                tracing::warn!(url = clients[i].url(), "node not reachable: {e}");
                last_error = Some(e);
            }
        }
    }
    Err(LoadError::NoReachableNodes(
        last_error.map(|e| e.to_string()).unwrap_or_else(|| "no nodes configured".into()),
    ))
}

/// Runs one profile to completion: every unit of work ends in a terminal state.
pub async fn run_profile(
    index: usize,
    profile: &TestProfile,
    ctx: &mut PlanContext,
    participant: &Participant,
) -> Result<ProfileResult, LoadError> {
    let (scan_node, head) = probe(&ctx.clients).await?;
    let mut result = match profile.mode {
        Mode::Transaction => {
            if ctx.nonces.is_none() {
                let counter = NonceCounter::init(&ctx.clients[scan_node], ctx.sender).await?;
                tracing::debug!(initial = counter.initial(), "nonce counter initialised");
                ctx.nonces = Some(Arc::new(counter));
            }
            run_transactions(index, profile, ctx, participant, scan_node, head).await
        }
        Mode::Read => run_reads(index, profile, ctx, participant).await,
    };
    ctx.next_seq += profile.transactions;
    result.quiet_period = profile.timeout;
    tracing::info!(
        profile = index,
        produced = result.produced,
        included = result.included,
        failed_timeout = result.failed_timeout,
        rejected = result.rejected,
        wall_time = %result.wall_time,
        "profile finished"
    );
    Ok(result)
}

struct Sink {
    records: Vec<Option<TxRecord>>,
    /// Pending hash -> index into `records`.
    pending: HashMap<H256, usize>,
    submitted: u64,
    last_terminal: u64,
}

impl Sink {
    fn insert(&mut self, i: usize, record: TxRecord, now: u64) {
        match (record.status, record.tx_hash) {
            (TxStatus::Pending, Some(hash)) => {
                self.pending.insert(hash, i);
            }
            _ => self.last_terminal = self.last_terminal.max(now),
        }
        self.records[i] = Some(record);
        self.submitted += 1;
    }

    fn settle(&mut self, included: &HashMap<H256, u64>, now: u64, timeout_ns: u64) {
        let records = &mut self.records;
        let mut changed = false;
        self.pending.retain(|hash, i| {
            let r = records[*i].as_mut().expect("pending record exists");
            if let Some(&block) = included.get(hash) {
                r.mark_included(block, now);
            } else if now.saturating_sub(r.submit_time) >= timeout_ns {
                r.mark_timed_out();
            } else {
                return true;
            }
            changed = true;
            false
        });
        if changed {
            self.last_terminal = self.last_terminal.max(now);
        }
    }
}

struct TxWorkers {
    profile_index: usize,
    first_seq: u64,
    count: u64,
    next: AtomicU64,
    clients: Vec<RpcClient>,
    nonces: Arc<NonceCounter>,
    contract: Address,
    sender: Address,
    seed: u64,
    call_contract: bool,
    /// Present under a virtual clock: serialises submissions so arrival order is seq order.
    gate: Option<tokio::sync::Mutex<()>>,
    clock: Clock,
    sink: Mutex<Sink>,
}

impl TxWorkers {
    fn sink(&self) -> MutexGuard<'_, Sink> {
        self.sink.lock().unwrap_or_else(|e| e.into_inner())
    }

    fn call(&self, seq: u64, nonce: u64) -> TxCall {
        let (data, value) = if self.call_contract {
            let (key, value) = workload_item(self.seed, seq);
            (set_item_call(key, value), U256::ZERO)
        } else {
            (Vec::new(), U256::from(1u64))
        };
        TxCall {
            from: self.sender,
            to: self.contract,
            value,
            data,
            nonce: Some(nonce),
        }
    }

    async fn work(self: Arc<Self>, _participant: Participant) {
        loop {
            let gate = match &self.gate {
                Some(g) => Some(g.lock().await),
                None => None,
            };
            let i = self.next.fetch_add(1, Ordering::SeqCst);
            if i >= self.count {
                break;
            }
            let seq = self.first_seq + i;
            let node = assign_node(i, self.clients.len());
            let nonce = self.nonces.next_nonce();
            let call = self.call(seq, nonce);
            let submit_time = self.clock.now_ns();
            let outcome = self.clients[node].submit_transaction(&call).await;
            drop(gate);

            let mut record = TxRecord::pending(seq, self.profile_index, node, submit_time);
            record.nonce = Some(nonce);
            match outcome {
                Ok(hash) => record.tx_hash = Some(hash),
                Err(e) => {
                    tracing::debug!(seq, "submission rejected: {e}");
                    record.mark_rejected(e.to_string());
                }
            }
            let now = self.clock.now_ns();
            self.sink().insert(i as usize, record, now);
        }
    }
}

async fn run_transactions(
    index: usize,
    profile: &TestProfile,
    ctx: &mut PlanContext,
    participant: &Participant,
    mut scan_node: usize,
    mut scanned: u64,
) -> ProfileResult {
    let clock = participant.clock().clone();
    let started = clock.now_ns();
    let shared = Arc::new(TxWorkers {
        profile_index: index,
        first_seq: ctx.next_seq,
        count: profile.transactions,
        next: AtomicU64::new(0),
        clients: ctx.clients.clone(),
        nonces: ctx.nonces.clone().expect("nonce counter initialised"),
        contract: ctx.contract,
        sender: ctx.sender,
        seed: ctx.seed,
        call_contract: profile.call_contract_method,
        gate: clock.is_virtual().then(|| tokio::sync::Mutex::new(())),
        clock: clock.clone(),
        sink: Mutex::new(Sink {
            records: vec![None; profile.transactions as usize],
            pending: HashMap::new(),
            submitted: 0,
            last_terminal: started,
        }),
    });

    let workers: Vec<_> = (0..profile.workers.max(1))
        .map(|_| tokio::spawn(shared.clone().work(participant.fork())))
        .collect();

    // Receipt tracker: scan each new block once, match against pending hashes.
    let timeout_ns = ctx.receipt_timeout.as_nanos();
    let mut included: HashMap<H256, u64> = HashMap::new();
    loop {
        {
            let sink = shared.sink();
            if sink.submitted == profile.transactions && sink.pending.is_empty() {
                break;
            }
        }
        participant.sleep(ctx.receipt_poll_interval).await;
        if !shared.sink().pending.is_empty() {
            scan_blocks(&ctx.clients, &mut scan_node, &mut scanned, &mut included).await;
        }
        let now = clock.now_ns();
        shared.sink().settle(&included, now, timeout_ns);
    }
    for w in workers {
        if let Err(e) = w.await {
            tracing::error!("worker task failed: {e}");
        }
    }

    let sink = std::mem::replace(
        &mut *shared.sink(),
        Sink {
            records: Vec::new(),
            pending: HashMap::new(),
            submitted: 0,
            last_terminal: 0,
        },
    );
    let mut result = ProfileResult::empty(index, Mode::Transaction, ctx.clients.len());
    result.records = sink.records.into_iter().map(|r| r.expect("every slot submitted")).collect();
    for r in &result.records {
        result.per_node[r.node_index] += 1;
        match r.status {
            TxStatus::Included => result.included += 1,
            TxStatus::FailedTimeout => result.failed_timeout += 1,
            TxStatus::Rejected => result.rejected += 1,
            TxStatus::Pending => unreachable!("tracker exits only when nothing is pending"),
        }
    }
    if profile.call_contract_method {
        ctx.written_keys.extend(
            result
                .records
                .iter()
                .filter(|r| r.status == TxStatus::Included)
                .map(|r| r.seq),
        );
    }
    result.produced = result.records.len() as u64;
    let first = result.records.iter().map(|r| r.submit_time).min().unwrap_or(started);
    result.started_ns = first;
    result.finished_ns = sink.last_terminal.max(first);
    result.wall_time = Duration::from_nanos_floor(result.finished_ns - first);
    result
}

/// Fetches blocks above `scanned` up to the head, recording their tx hashes.
/// Moves to the next node when the current one fails at the transport level.
async fn scan_blocks(
    clients: &[RpcClient],
    node: &mut usize,
    scanned: &mut u64,
    included: &mut HashMap<H256, u64>,
) {
    for _ in 0..clients.len() {
        let client = &clients[*node];
        let head = match client.block_number().await {
            Ok(h) => h,
            Err(e) => {
                tracing::debug!(url = client.url(), "head query failed: {e}");
                *node = (*node + 1) % clients.len();
                continue;
            }
        };
        while *scanned < head {
            match client.fetch_block(BlockId::Number(*scanned + 1)).await {
                Ok(Some(block)) => {
                    for hash in block.tx_hashes {
                        included.insert(hash, block.number);
                    }
                    *scanned += 1;
                }
                Ok(None) => break,
                Err(e) => {
                    tracing::debug!(url = client.url(), "block fetch failed: {e}");
                    break;
                }
            }
        }
        return;
    }
}

struct ReadWorkers {
    profile_index: usize,
    first_seq: u64,
    count: u64,
    next: AtomicU64,
    clients: Vec<RpcClient>,
    contract: Address,
    sender: Address,
    keys: Vec<u64>,
    gate: Option<tokio::sync::Mutex<()>>,
    clock: Clock,
    reads: Mutex<Vec<ReadRecord>>,
}

impl ReadWorkers {
    async fn work(self: Arc<Self>, _participant: Participant) {
        loop {
            let gate = match &self.gate {
                Some(g) => Some(g.lock().await),
                None => None,
            };
            let i = self.next.fetch_add(1, Ordering::SeqCst);
            if i >= self.count {
                break;
            }
            let node = assign_node(i, self.clients.len());
            let key = match self.keys.len() {
                0 => 0,
                n => self.keys[(i % n as u64) as usize],
            };
            let call = TxCall {
                from: self.sender,
                to: self.contract,
                value: U256::ZERO,
                data: get_item_call(U256::from(key)),
                nonce: None,
            };
            let start_time = self.clock.now_ns();
            let outcome = self.clients[node].call_read(&call).await;
            let end_time = self.clock.now_ns();
            drop(gate);
            if let Err(e) = &outcome {
                tracing::debug!(key, "read failed: {e}");
            }
            let record = ReadRecord {
                seq: self.first_seq + i,
                profile_index: self.profile_index,
                node_index: node,
                key,
                start_time,
                end_time,
                ok: outcome.is_ok(),
            };
            self.reads.lock().unwrap_or_else(|e| e.into_inner()).push(record);
        }
    }
}

async fn run_reads(
    index: usize,
    profile: &TestProfile,
    ctx: &mut PlanContext,
    participant: &Participant,
) -> ProfileResult {
    let clock = participant.clock().clone();
    let started = clock.now_ns();
    let shared = Arc::new(ReadWorkers {
        profile_index: index,
        first_seq: ctx.next_seq,
        count: profile.transactions,
        next: AtomicU64::new(0),
        clients: ctx.clients.clone(),
        contract: ctx.contract,
        sender: ctx.sender,
        keys: ctx.written_keys.clone(),
        gate: clock.is_virtual().then(|| tokio::sync::Mutex::new(())),
        clock: clock.clone(),
        reads: Mutex::new(Vec::with_capacity(profile.transactions as usize)),
    });
    let workers: Vec<_> = (0..profile.workers.max(1))
        .map(|_| tokio::spawn(shared.clone().work(participant.fork())))
        .collect();
    for w in workers {
        if let Err(e) = w.await {
            tracing::error!("worker task failed: {e}");
        }
    }

    let mut reads = std::mem::take(&mut *shared.reads.lock().unwrap_or_else(|e| e.into_inner()));
    reads.sort_by_key(|r| r.seq);
    let mut result = ProfileResult::empty(index, Mode::Read, ctx.clients.len());
    for r in &reads {
        result.per_node[r.node_index] += 1;
        if r.ok {
            result.included += 1;
        } else {
            result.rejected += 1;
        }
    }
    result.produced = reads.len() as u64;
    result.started_ns = reads.iter().map(|r| r.start_time).min().unwrap_or(started);
    result.finished_ns = reads.iter().map(|r| r.end_time).max().unwrap_or(started);
    result.wall_time = Duration::from_nanos_floor(result.finished_ns - result.started_ns);
    result.reads = reads;
    result
}
