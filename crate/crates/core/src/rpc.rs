//! JSON-RPC 2.0 client for the Ethereum method subset the load tester needs,
//! plus the wire types shared with the mock node.

use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Duration as StdDuration;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::types::{decode_bytes, decode_quantity, encode_bytes, encode_quantity, Address, H256, U256};

pub const JSONRPC_VERSION: &str = "2.0";

/// Error codes used on the wire.
pub mod codes {
    pub const PARSE_ERROR: i64 = -32700;
    pub const INVALID_REQUEST: i64 = -32600;
    pub const METHOD_NOT_FOUND: i64 = -32601;
    pub const INVALID_PARAMS: i64 = -32602;
    pub const SERVER_ERROR: i64 = -32000;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Request {
    pub jsonrpc: String,
    pub id: u64,
    pub method: String,
    pub params: Vec<Value>,
}

impl Request {
    pub fn new(id: u64, method: impl Into<String>, params: Vec<Value>) -> Self {
        Self {
            jsonrpc: JSONRPC_VERSION.to_string(),
            id,
            method: method.into(),
            params,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorObject {
    pub code: i64,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Payload {
    #[serde(rename = "result")]
    Result(Value),
    #[serde(rename = "error")]
    Error(ErrorObject),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Response {
    pub jsonrpc: String,
    pub id: Value,
    #[serde(flatten)]
    pub payload: Payload,
}

impl Response {
    pub fn result(id: Value, result: Value) -> Self {
        Self {
            jsonrpc: JSONRPC_VERSION.to_string(),
            id,
            payload: Payload::Result(result),
        }
    }

    pub fn error(id: Value, code: i64, message: impl Into<String>) -> Self {
        Self {
            jsonrpc: JSONRPC_VERSION.to_string(),
            id,
            payload: Payload::Error(ErrorObject {
                code,
                message: message.into(),
            }),
        }
    }
}

/// A transaction or call as sent with `eth_sendTransaction` / `eth_call`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TxCall {
    pub from: Address,
    pub to: Address,
    pub value: U256,
    pub data: Vec<u8>,
    pub nonce: Option<u64>,
}

impl TxCall {
    pub fn to_json(&self) -> Value {
        let mut obj = serde_json::Map::new();
        obj.insert("from".into(), json!(self.from.to_string()));
        obj.insert("to".into(), json!(self.to.to_string()));
        obj.insert("value".into(), json!(self.value.to_quantity()));
        obj.insert("data".into(), json!(encode_bytes(&self.data)));
        if let Some(n) = self.nonce {
            obj.insert("nonce".into(), json!(encode_quantity(n)));
        }
        Value::Object(obj)
    }

    /// Lenient decoding used by the node side: `input` is accepted for `data`,
    /// gas fields are ignored, `value` defaults to zero.
    pub fn from_json(v: &Value) -> Result<Self, String> {
        let obj = v.as_object().ok_or("transaction must be an object")?;
        let addr = |key: &str| -> Result<Address, String> {
            obj.get(key)
                .and_then(Value::as_str)
                .ok_or_else(|| format!("missing `{key}`"))?
                .parse()
                .map_err(|e| format!("bad `{key}`: {e}"))
        };
        let from = addr("from")?;
        let to = addr("to")?;
        let value = match obj.get("value").and_then(Value::as_str) {
            Some(q) => U256::from_quantity(q).map_err(|e| format!("bad `value`: {e}"))?,
            None => U256::ZERO,
        };
        let data = match obj.get("data").or_else(|| obj.get("input")).and_then(Value::as_str) {
            Some(d) => decode_bytes(d).map_err(|e| format!("bad `data`: {e}"))?,
            None => Vec::new(),
        };
        let nonce = match obj.get("nonce").and_then(Value::as_str) {
            Some(q) => Some(decode_quantity(q).map_err(|e| format!("bad `nonce`: {e}"))?),
            None => None,
        };
        Ok(Self {
            from,
            to,
            value,
            data,
            nonce,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Block {
    pub number: u64,
    pub hash: H256,
    pub parent_hash: H256,
    pub timestamp: u64,
    pub tx_hashes: Vec<H256>,
}

impl Block {
    pub fn parent_number(&self) -> Option<u64> {
        self.number.checked_sub(1)
    }

    pub fn to_json(&self) -> Value {
        json!({
            "number": encode_quantity(self.number),
            "hash": self.hash.to_string(),
            "parentHash": self.parent_hash.to_string(),
            "timestamp": encode_quantity(self.timestamp),
            "transactions": self.tx_hashes.iter().map(|h| h.to_string()).collect::<Vec<_>>(),
        })
    }

    pub fn from_json(v: &Value) -> Result<Self, String> {
        let obj = v.as_object().ok_or("block must be an object")?;
        let quantity = |key: &str| -> Result<u64, String> {
            decode_quantity(obj.get(key).and_then(Value::as_str).ok_or(format!("missing `{key}`"))?)
                .map_err(|e| format!("bad `{key}`: {e}"))
        };
        let hash = |key: &str| -> Result<H256, String> {
            obj.get(key)
                .and_then(Value::as_str)
                .ok_or(format!("missing `{key}`"))?
                .parse()
                .map_err(|e| format!("bad `{key}`: {e}"))
        };
        let tx_hashes = obj
            .get("transactions")
            .and_then(Value::as_array)
            .ok_or("missing `transactions`")?
            .iter()
            .map(|t| {
                // Full transaction objects carry their hash under `hash`.
                let text = t
                    .as_str()
                    .or_else(|| t.get("hash").and_then(Value::as_str))
                    .ok_or("bad transaction entry")?;
                text.parse::<H256>().map_err(|e| e.to_string())
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            number: quantity("number")?,
            hash: hash("hash")?,
            parent_hash: hash("parentHash")?,
            timestamp: quantity("timestamp")?,
            tx_hashes,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReceiptStatus {
    Success,
    Reverted,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Receipt {
    pub tx_hash: H256,
    pub block_number: u64,
    pub block_hash: H256,
    pub transaction_index: u64,
    pub status: ReceiptStatus,
}

impl Receipt {
    pub fn to_json(&self) -> Value {
        json!({
            "transactionHash": self.tx_hash.to_string(),
            "transactionIndex": encode_quantity(self.transaction_index),
            "blockNumber": encode_quantity(self.block_number),
            "blockHash": self.block_hash.to_string(),
            "status": match self.status {
                ReceiptStatus::Success => "0x1",
                ReceiptStatus::Reverted => "0x0",
            },
        })
    }

    pub fn from_json(v: &Value) -> Result<Self, String> {
        let obj = v.as_object().ok_or("receipt must be an object")?;
        let text = |key: &str| -> Result<&str, String> {
            obj.get(key).and_then(Value::as_str).ok_or(format!("missing `{key}`"))
        };
        let status = match text("status")? {
            "0x1" => ReceiptStatus::Success,
            "0x0" => ReceiptStatus::Reverted,
            other => return Err(format!("bad `status` {other:?}")),
        };
        Ok(Self {
            tx_hash: text("transactionHash")?.parse().map_err(|e| format!("{e}"))?,
            block_number: decode_quantity(text("blockNumber")?).map_err(|e| e.to_string())?,
            block_hash: text("blockHash")?.parse().map_err(|e| format!("{e}"))?,
            transaction_index: decode_quantity(text("transactionIndex")?).map_err(|e| e.to_string())?,
            status,
        })
    }
}

/// Block selector for `eth_getBlockByNumber`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockId {
    Number(u64),
    Latest,
}

impl BlockId {
    pub fn to_json(self) -> Value {
        match self {
            BlockId::Number(n) => json!(encode_quantity(n)),
            BlockId::Latest => json!("latest"),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RpcError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("rpc error {code}: {message}")]
    Rpc { code: i64, message: String },
    #[error("malformed response: {0}")]
    Decode(String),
}

impl RpcError {
    pub fn is_transport(&self) -> bool {
        matches!(self, RpcError::Transport(_))
    }
}

pub const DEFAULT_REQUEST_TIMEOUT: StdDuration = StdDuration::from_secs(30);

/// Client for one endpoint. Cheap to clone; clones share the connection pool
/// and the request-id counter.
#[derive(Debug, Clone)]
pub struct RpcClient {
    http: reqwest::Client,
    url: String,
    next_id: std::sync::Arc<AtomicU64>,
}

impl RpcClient {
    pub fn new(url: impl Into<String>) -> Self {
        let http = reqwest::Client::builder()
            .timeout(DEFAULT_REQUEST_TIMEOUT)
            .build()
            .expect("http client builds with static settings");
        Self::with_http(http, url)
    }

    pub fn with_http(http: reqwest::Client, url: impl Into<String>) -> Self {
        Self {
            http,
            url: url.into(),
            next_id: std::sync::Arc::new(AtomicU64::new(1)),
        }
    }

    pub fn url(&self) -> &str {
        &self.url
    }

    /// Sends one request and returns the raw `result` value.
    pub async fn request_raw(&self, method: &str, params: Vec<Value>) -> Result<Value, RpcError> {
        let id = self.next_id.fetch_add(1, Ordering::Relaxed);
        let body = serde_json::to_vec(&Request::new(id, method, params))
            .map_err(|e| RpcError::Decode(e.to_string()))?;
        let response = self
            .http
            .post(&self.url)
            .header(reqwest::header::CONTENT_TYPE, "application/json")
            .body(body)
            .send()
            .await
            .map_err(|e| RpcError::Transport(e.to_string()))?;
        let status = response.status();
        let bytes = response
            .bytes()
            .await
            .map_err(|e| RpcError::Transport(e.to_string()))?;
        let parsed: Response = serde_json::from_slice(&bytes).map_err(|e| {
            if status.is_success() {
                RpcError::Decode(e.to_string())
            } else {
                RpcError::Transport(format!("http status {status}"))
            }
        })?;
        if parsed.jsonrpc != JSONRPC_VERSION {
            return Err(RpcError::Decode(format!("jsonrpc version {:?}", parsed.jsonrpc)));
        }
        match parsed.payload {
            Payload::Result(v) => Ok(v),
            Payload::Error(e) => Err(RpcError::Rpc {
                code: e.code,
                message: e.message,
            }),
        }
    }

    pub async fn request<T: DeserializeOwned>(&self, method: &str, params: Vec<Value>) -> Result<T, RpcError> {
        let v = self.request_raw(method, params).await?;
        serde_json::from_value(v).map_err(|e| RpcError::Decode(e.to_string()))
    }

    pub async fn submit_transaction(&self, call: &TxCall) -> Result<H256, RpcError> {
        let text: String = self.request("eth_sendTransaction", vec![call.to_json()]).await?;
        text.parse().map_err(|e| RpcError::Decode(format!("tx hash: {e}")))
    }

    pub async fn fetch_block(&self, id: BlockId) -> Result<Option<Block>, RpcError> {
        let v = self
            .request_raw("eth_getBlockByNumber", vec![id.to_json(), json!(false)])
            .await?;
        if v.is_null() {
            return Ok(None);
        }
        Block::from_json(&v).map(Some).map_err(RpcError::Decode)
    }

    pub async fn fetch_receipt(&self, hash: H256) -> Result<Option<Receipt>, RpcError> {
        let v = self
            .request_raw("eth_getTransactionReceipt", vec![json!(hash.to_string())])
            .await?;
        if v.is_null() {
            return Ok(None);
        }
        Receipt::from_json(&v).map(Some).map_err(RpcError::Decode)
    }

    pub async fn block_number(&self) -> Result<u64, RpcError> {
        let text: String = self.request("eth_blockNumber", vec![]).await?;
        decode_quantity(&text).map_err(|e| RpcError::Decode(e.to_string()))
    }

    /// `tag` is `"latest"` or `"pending"`.
    pub async fn transaction_count(&self, address: Address, tag: &str) -> Result<u64, RpcError> {
        let text: String = self
            .request("eth_getTransactionCount", vec![json!(address.to_string()), json!(tag)])
            .await?;
        decode_quantity(&text).map_err(|e| RpcError::Decode(e.to_string()))
    }

    pub async fn call_read(&self, call: &TxCall) -> Result<Vec<u8>, RpcError> {
        let text: String = self.request("eth_call", vec![call.to_json(), json!("latest")]).await?;
        decode_bytes(&text).map_err(|e| RpcError::Decode(e.to_string()))
    }
}
