//! In-memory chain: FIFO mempool, capacity-bounded sealing, a key/value
//! contract store and the JSON-RPC method table served over it.

use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};

use hammer_core::abi::{decode_static_call, function_selector, keccak_hash, GET_ITEM_SIGNATURE, SET_ITEM_SIGNATURE};
use hammer_core::prng::SplitMix64;
use hammer_core::rpc::{codes, Receipt, ReceiptStatus, Response, TxCall};
use hammer_core::types::{decode_quantity, encode_bytes, encode_quantity};
use hammer_core::{Address, Block, H256, U256};
use serde_json::{json, Value};

use crate::config::ChainConfig;

/// Genesis timestamp is this base plus `seed % 1_000_000`.
pub const GENESIS_TIMESTAMP_BASE: u64 = 1_600_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArrivalOutcome {
    Enqueued,
    Dropped,
    Rejected,
}

/// One `eth_sendTransaction` as seen by the node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Arrival {
    pub time_ns: u64,
    pub endpoint: usize,
    pub hash: Option<H256>,
    pub outcome: ArrivalOutcome,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StoredTx {
    pub hash: H256,
    pub from: Address,
    pub to: Address,
    pub value: U256,
    pub data: Vec<u8>,
    pub nonce: u64,
}

#[derive(Debug, Clone, Copy)]
struct Location {
    block: u64,
    index: u64,
    status: ReceiptStatus,
}

/// Everything that defines chain state, for equality checks across runs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChainSnapshot {
    pub blocks: Vec<Block>,
    pub kv: Vec<((Address, U256), U256)>,
}

pub struct Chain {
    config: ChainConfig,
    blocks: Vec<Block>,
    block_txs: Vec<Vec<StoredTx>>,
    mempool: VecDeque<StoredTx>,
    known: HashSet<H256>,
    locations: HashMap<H256, Location>,
    kv: BTreeMap<(Address, U256), U256>,
    included_by_sender: HashMap<Address, u64>,
    pending_by_sender: HashMap<Address, u64>,
    arrivals: Vec<Arrival>,
    rng: SplitMix64,
}

fn block_hash(number: u64, parent: &H256, timestamp: u64, txs: &[H256]) -> H256 {
    let mut preimage = Vec::with_capacity(48 + 32 * txs.len());
    preimage.extend_from_slice(&number.to_be_bytes());
    preimage.extend_from_slice(parent.as_bytes());
    preimage.extend_from_slice(&timestamp.to_be_bytes());
    for h in txs {
        preimage.extend_from_slice(h.as_bytes());
    }
    keccak_hash(preimage)
}

/// Keccak-256 over sender, nonce and calldata.
pub fn tx_hash(from: &Address, nonce: u64, data: &[u8]) -> H256 {
    let mut preimage = Vec::with_capacity(28 + data.len());
    preimage.extend_from_slice(from.as_bytes());
    preimage.extend_from_slice(&nonce.to_be_bytes());
    preimage.extend_from_slice(data);
    keccak_hash(preimage)
}

type RpcResult = Result<Value, (i64, String)>;

fn invalid_params(message: impl Into<String>) -> (i64, String) {
    (codes::INVALID_PARAMS, message.into())
}

impl Chain {
    pub fn new(config: ChainConfig) -> Self {
        let timestamp = GENESIS_TIMESTAMP_BASE + config.seed % 1_000_000;
        let genesis = Block {
            number: 0,
            hash: block_hash(0, &H256::default(), timestamp, &[]),
            parent_hash: H256::default(),
            timestamp,
            tx_hashes: Vec::new(),
        };
        let rng = SplitMix64::new(config.seed);
        Self {
            config,
            blocks: vec![genesis],
            block_txs: vec![Vec::new()],
            mempool: VecDeque::new(),
            known: HashSet::new(),
            locations: HashMap::new(),
            kv: BTreeMap::new(),
            included_by_sender: HashMap::new(),
            pending_by_sender: HashMap::new(),
            arrivals: Vec::new(),
            rng,
        }
    }

    pub fn config(&self) -> &ChainConfig {
        &self.config
    }

    pub fn head(&self) -> &Block {
        self.blocks.last().expect("genesis always present")
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn block_txs(&self, number: u64) -> Option<&[StoredTx]> {
        self.block_txs.get(number as usize).map(Vec::as_slice)
    }

    pub fn mempool_len(&self) -> usize {
        self.mempool.len()
    }

    pub fn arrivals(&self) -> &[Arrival] {
        &self.arrivals
    }

    pub fn get_item(&self, contract: &Address, key: U256) -> U256 {
        self.kv.get(&(*contract, key)).copied().unwrap_or(U256::ZERO)
    }

    pub fn snapshot(&self) -> ChainSnapshot {
        ChainSnapshot {
            blocks: self.blocks.clone(),
            kv: self.kv.iter().map(|(k, v)| (*k, *v)).collect(),
        }
    }

    pub fn receipt(&self, hash: &H256) -> Option<Receipt> {
        let loc = self.locations.get(hash)?;
        Some(Receipt {
            tx_hash: *hash,
            block_number: loc.block,
            block_hash: self.blocks[loc.block as usize].hash,
            transaction_index: loc.index,
            status: loc.status,
        })
    }

    /// Admits or refuses one transaction, drawing one fault-injection decision.
    pub fn submit(&mut self, call: TxCall, endpoint: usize, now_ns: u64) -> Result<H256, (i64, String)> {
        let nonce = call
            .nonce
            .unwrap_or_else(|| self.pending_count(&call.from));
        let hash = tx_hash(&call.from, nonce, &call.data);
        if self.known.contains(&hash) {
            return Err((codes::SERVER_ERROR, format!("known transaction: {hash}")));
        }

        let draw = self.rng.next_f64();
        let (outcome, result) = if draw < self.config.reject_probability {
            (
                ArrivalOutcome::Rejected,
                Err((codes::SERVER_ERROR, "transaction rejected by node".to_string())),
            )
        } else if draw < self.config.reject_probability + self.config.drop_probability {
            (ArrivalOutcome::Dropped, Ok(hash))
        } else {
            self.known.insert(hash);
            *self.pending_by_sender.entry(call.from).or_default() += 1;
            self.mempool.push_back(StoredTx {
                hash,
                from: call.from,
                to: call.to,
                value: call.value,
                data: call.data,
                nonce,
            });
            (ArrivalOutcome::Enqueued, Ok(hash))
        };
        self.arrivals.push(Arrival {
            time_ns: now_ns,
            endpoint,
            hash: result.as_ref().ok().copied(),
            outcome,
        });
        result
    }

    fn pending_count(&self, sender: &Address) -> u64 {
        self.included_by_sender.get(sender).copied().unwrap_or(0)
            + self.pending_by_sender.get(sender).copied().unwrap_or(0)
    }

    fn count_through(&self, sender: &Address, number: u64) -> u64 {
        self.block_txs
            .iter()
            .take(number as usize + 1)
            .flatten()
            .filter(|tx| tx.from == *sender)
            .count() as u64
    }

    fn execute(&mut self, tx: &StoredTx) -> ReceiptStatus {
        if tx.data.is_empty() {
            return ReceiptStatus::Success;
        }
        match decode_static_call(&tx.data) {
            Some((selector, args)) if selector == function_selector(SET_ITEM_SIGNATURE) && args.len() == 2 => {
                self.kv.insert((tx.to, args[0]), args[1]);
                ReceiptStatus::Success
            }
            _ => ReceiptStatus::Reverted,
        }
    }

    /// Seals the next block from the head of the mempool.
    pub fn seal_block(&mut self) -> &Block {
        let take = (self.config.max_tx_per_block as usize).min(self.mempool.len());
        let txs: Vec<StoredTx> = self.mempool.drain(..take).collect();
        let parent = self.head().clone();
        let number = parent.number + 1;
        let timestamp = parent.timestamp + self.config.block_interval_secs();

        let mut hashes = Vec::with_capacity(txs.len());
        for (index, tx) in txs.iter().enumerate() {
            let status = self.execute(tx);
            self.locations.insert(
                tx.hash,
                Location {
                    block: number,
                    index: index as u64,
                    status,
                },
            );
            *self.pending_by_sender.get_mut(&tx.from).expect("pending sender") -= 1;
            *self.included_by_sender.entry(tx.from).or_default() += 1;
            hashes.push(tx.hash);
        }

        self.blocks.push(Block {
            number,
            hash: block_hash(number, &parent.hash, timestamp, &hashes),
            parent_hash: parent.hash,
            timestamp,
            tx_hashes: hashes,
        });
        self.block_txs.push(txs);
        self.head()
    }

    fn resolve_block_tag(&self, v: &Value) -> Result<Option<u64>, (i64, String)> {
        let head = self.head().number;
        match v.as_str() {
            Some("latest") | Some("pending") | Some("safe") | Some("finalized") => Ok(Some(head)),
            Some("earliest") => Ok(Some(0)),
            Some(q) => {
                let n = decode_quantity(q).map_err(|e| invalid_params(format!("block number: {e}")))?;
                Ok((n <= head).then_some(n))
            }
            None => Err(invalid_params("block tag must be a string")),
        }
    }

    fn block_json(&self, number: u64, full: bool) -> Value {
        let block = &self.blocks[number as usize];
        let mut v = block.to_json();
        if full {
            v["transactions"] = Value::Array(
                self.block_txs[number as usize]
                    .iter()
                    .enumerate()
                    .map(|(i, tx)| {
                        json!({
                            "hash": tx.hash.to_string(),
                            "from": tx.from.to_string(),
                            "to": tx.to.to_string(),
                            "value": tx.value.to_quantity(),
                            "input": encode_bytes(&tx.data),
                            "nonce": encode_quantity(tx.nonce),
                            "blockNumber": encode_quantity(number),
                            "transactionIndex": encode_quantity(i as u64),
                        })
                    })
                    .collect(),
            );
        }
        v
    }

    /// Dispatches one method call. Errors are `(code, message)` pairs.
    pub fn dispatch(&mut self, method: &str, params: &[Value], endpoint: usize, now_ns: u64) -> RpcResult {
        let param = |i: usize| params.get(i).ok_or_else(|| invalid_params(format!("missing parameter {i}")));
        match method {
            "eth_blockNumber" => Ok(json!(encode_quantity(self.head().number))),
            "eth_sendTransaction" => {
                let call = TxCall::from_json(param(0)?).map_err(invalid_params)?;
                self.submit(call, endpoint, now_ns).map(|h| json!(h.to_string()))
            }
            "eth_getTransactionReceipt" => {
                let hash: H256 = param(0)?
                    .as_str()
                    .ok_or_else(|| invalid_params("hash must be a string"))?
                    .parse()
                    .map_err(|e| invalid_params(format!("hash: {e}")))?;
                Ok(self.receipt(&hash).map_or(Value::Null, |r| r.to_json()))
            }
            "eth_getBlockByNumber" => {
                let full = match params.get(1) {
                    None => false,
                    Some(v) => v.as_bool().ok_or_else(|| invalid_params("full flag must be a boolean"))?,
                };
                Ok(match self.resolve_block_tag(param(0)?)? {
                    Some(n) => self.block_json(n, full),
                    None => Value::Null,
                })
            }
            "eth_getTransactionCount" => {
                let address: Address = param(0)?
                    .as_str()
                    .ok_or_else(|| invalid_params("address must be a string"))?
                    .parse()
                    .map_err(|e| invalid_params(format!("address: {e}")))?;
                let tag = params.get(1).cloned().unwrap_or(json!("latest"));
                let count = match tag.as_str() {
                    Some("pending") => self.pending_count(&address),
                    _ => match self.resolve_block_tag(&tag)? {
                        Some(n) => self.count_through(&address, n),
                        None => return Err(invalid_params("block not found")),
                    },
                };
                Ok(json!(encode_quantity(count)))
            }
            "eth_call" => {
                let call = TxCall::from_json(param(0)?).map_err(invalid_params)?;
                match decode_static_call(&call.data) {
                    Some((selector, args)) if selector == function_selector(GET_ITEM_SIGNATURE) && args.len() == 1 => {
                        Ok(json!(encode_bytes(&self.get_item(&call.to, args[0]).to_be_bytes())))
                    }
                    _ => Err((codes::SERVER_ERROR, "execution reverted: unsupported call".into())),
                }
            }
            other => Err((codes::METHOD_NOT_FOUND, format!("method {other} not found"))),
        }
    }

    /// Full JSON-RPC request handling, including framing errors.
    pub fn handle_rpc(&mut self, body: &[u8], endpoint: usize, now_ns: u64) -> Response {
        let request: Value = match serde_json::from_slice(body) {
            Ok(v) => v,
            Err(e) => return Response::error(Value::Null, codes::PARSE_ERROR, format!("parse error: {e}")),
        };
        let id = request.get("id").cloned().unwrap_or(Value::Null);
        let Some(obj) = request.as_object() else {
            return Response::error(id, codes::INVALID_REQUEST, "request must be an object");
        };
        if obj.get("jsonrpc").and_then(Value::as_str) != Some("2.0") {
            return Response::error(id, codes::INVALID_REQUEST, "jsonrpc must be \"2.0\"");
        }
        let Some(method) = obj.get("method").and_then(Value::as_str) else {
            return Response::error(id, codes::INVALID_REQUEST, "missing method");
        };
        let params = match obj.get("params") {
            None => Vec::new(),
            Some(Value::Array(a)) => a.clone(),
            Some(_) => return Response::error(id, codes::INVALID_PARAMS, "params must be an array"),
        };
        match self.dispatch(method, &params, endpoint, now_ns) {
            Ok(result) => Response::result(id, result),
            Err((code, message)) => Response::error(id, code, message),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use hammer_core::abi::{get_item_call, set_item_call};
    use hammer_core::rpc::Payload;

    const SENDER: Address = Address([0xa1; 20]);
    const CONTRACT: Address = Address([0xc0; 20]);

    fn chain(cap: u64) -> Chain {
        Chain::new(ChainConfig {
            max_tx_per_block: cap,
            ..ChainConfig::default()
        })
    }

    fn transfer(nonce: u64) -> TxCall {
        TxCall {
            from: SENDER,
            to: CONTRACT,
            value: U256::from(1u64),
            data: Vec::new(),
            nonce: Some(nonce),
        }
    }

    #[test]
    fn fifo_drain_respects_capacity() {
        let mut c = chain(500);
        let hashes: Vec<H256> = (0..1200).map(|n| c.submit(transfer(n), 0, 0).unwrap()).collect();
        let sizes: Vec<usize> = (0..4).map(|_| c.seal_block().tx_hashes.len()).collect();
        assert_eq!(sizes, [500, 500, 200, 0]);
        let included: Vec<H256> = c.blocks()[1..].iter().flat_map(|b| b.tx_hashes.clone()).collect();
        assert_eq!(included, hashes);
    }

    #[test]
    fn empty_block_advances_timestamp() {
        let mut c = chain(10);
        let t0 = c.head().timestamp;
        assert_eq!(t0, GENESIS_TIMESTAMP_BASE);
        let b = c.seal_block().clone();
        assert_eq!(b.number, 1);
        assert!(b.tx_hashes.is_empty());
        assert_eq!(b.timestamp, t0 + 1);
        assert_eq!(b.parent_hash, c.blocks()[0].hash);
    }

    #[test]
    fn set_item_then_get_item() {
        let mut c = chain(10);
        let key = U256::from(5u64);
        let read = |c: &mut Chain| {
            let call = TxCall { data: get_item_call(key), nonce: None, ..transfer(0) };
            c.dispatch("eth_call", &[call.to_json()], 0, 0).unwrap()
        };
        assert_eq!(read(&mut c), json!(format!("0x{}", "00".repeat(32))));
        let set = TxCall { data: set_item_call(key, U256::from(0xbeefu64)), ..transfer(0) };
        let h = c.submit(set, 0, 0).unwrap();
        assert!(c.receipt(&h).is_none());
        c.seal_block();
        assert_eq!(c.receipt(&h).unwrap().status, ReceiptStatus::Success);
        assert_eq!(read(&mut c), json!(format!("0x{}beef", "00".repeat(30))));
    }

    #[test]
    fn bad_calldata_reverts() {
        let mut c = chain(10);
        let h = c.submit(TxCall { data: vec![1, 2, 3], ..transfer(0) }, 0, 0).unwrap();
        c.seal_block();
        assert_eq!(c.receipt(&h).unwrap().status, ReceiptStatus::Reverted);
        let err = c
            .dispatch("eth_call", &[TxCall { data: vec![9], ..transfer(0) }.to_json()], 0, 0)
            .unwrap_err();
        assert_eq!(err.0, codes::SERVER_ERROR);
    }

    #[test]
    fn duplicate_hash_refused() {
        let mut c = chain(10);
        c.submit(transfer(3), 0, 0).unwrap();
        assert_eq!(c.submit(transfer(3), 0, 0).unwrap_err().0, codes::SERVER_ERROR);
    }

    #[test]
    fn nonce_counts() {
        let mut c = chain(2);
        for n in 0..3 {
            c.submit(transfer(n), 0, 0).unwrap();
        }
        let count = |c: &mut Chain, tag: &str| c.dispatch("eth_getTransactionCount", &[json!(SENDER.to_string()), json!(tag)], 0, 0).unwrap();
        assert_eq!(count(&mut c, "pending"), json!("0x3"));
        assert_eq!(count(&mut c, "latest"), json!("0x0"));
        c.seal_block();
        assert_eq!(count(&mut c, "latest"), json!("0x2"));
        assert_eq!(count(&mut c, "pending"), json!("0x3"));
        assert_eq!(count(&mut c, "0x0"), json!("0x0"));
        // Node assigns the pending count when the nonce is omitted.
        let h = c.submit(TxCall { nonce: None, ..transfer(0) }, 0, 0).unwrap();
        assert_eq!(h, tx_hash(&SENDER, 3, &[]));
    }

    #[test]
    fn reject_and_drop_boundaries() {
        let mut all_rejected = Chain::new(ChainConfig { reject_probability: 1.0, ..ChainConfig::default() });
        for n in 0..50 {
            assert_eq!(all_rejected.submit(transfer(n), 0, 0).unwrap_err().0, -32000);
        }
        let mut all_dropped = Chain::new(ChainConfig { drop_probability: 1.0, ..ChainConfig::default() });
        let h = all_dropped.submit(transfer(0), 0, 0).unwrap();
        all_dropped.seal_block();
        assert!(all_dropped.receipt(&h).is_none());
        assert_eq!(all_dropped.arrivals()[0].outcome, ArrivalOutcome::Dropped);
    }

    #[test]
    fn fixed_seed_replays_drop_pattern() {
        let pattern = || {
            let mut c = Chain::new(ChainConfig { drop_probability: 0.1, seed: 99, ..ChainConfig::default() });
            (0..2000)
                .map(|n| {
                    c.submit(transfer(n), 0, 0).unwrap();
                    c.arrivals().last().unwrap().outcome
                })
                .collect::<Vec<_>>()
        };
        let a = pattern();
        assert_eq!(a, pattern());
        let dropped = a.iter().filter(|o| **o == ArrivalOutcome::Dropped).count();
        assert!((100..300).contains(&dropped), "{dropped}");
    }

    #[test]
    fn framing_errors() {
        let mut c = chain(1);
        let code = |r: Response| match r.payload {
            Payload::Error(e) => e.code,
            Payload::Result(v) => panic!("unexpected result {v}"),
        };
        assert_eq!(code(c.handle_rpc(b"{nope", 0, 0)), codes::PARSE_ERROR);
        assert_eq!(code(c.handle_rpc(b"[]", 0, 0)), codes::INVALID_REQUEST);
        assert_eq!(code(c.handle_rpc(br#"{"jsonrpc":"1.0","id":1,"method":"eth_blockNumber"}"#, 0, 0)), codes::INVALID_REQUEST);
        assert_eq!(code(c.handle_rpc(br#"{"jsonrpc":"2.0","id":1,"method":"eth_mine","params":[]}"#, 0, 0)), codes::METHOD_NOT_FOUND);
        assert_eq!(code(c.handle_rpc(br#"{"jsonrpc":"2.0","id":1,"method":"eth_getTransactionReceipt","params":[]}"#, 0, 0)), codes::INVALID_PARAMS);
        assert_eq!(code(c.handle_rpc(br#"{"jsonrpc":"2.0","id":1,"method":"eth_blockNumber","params":{}}"#, 0, 0)), codes::INVALID_PARAMS);
        let ok = c.handle_rpc(br#"{"jsonrpc":"2.0","id":9,"method":"eth_blockNumber","params":[]}"#, 0, 0);
        assert_eq!(serde_json::to_string(&ok).unwrap(), r#"{"jsonrpc":"2.0","id":9,"result":"0x0"}"#);
    }

    #[test]
    fn block_lookup() {
        let mut c = chain(5);
        c.submit(transfer(0), 0, 0).unwrap();
        c.seal_block();
        assert_eq!(c.dispatch("eth_getBlockByNumber", &[json!("0x5"), json!(false)], 0, 0).unwrap(), Value::Null);
        let latest = c.dispatch("eth_getBlockByNumber", &[json!("latest"), json!(false)], 0, 0).unwrap();
        let b = Block::from_json(&latest).unwrap();
        assert_eq!(b.number, 1);
        let full = c.dispatch("eth_getBlockByNumber", &[json!("0x1"), json!(true)], 0, 0).unwrap();
        assert_eq!(Block::from_json(&full).unwrap(), b);
        assert_eq!(full["transactions"][0]["nonce"], "0x0");
    }
}
