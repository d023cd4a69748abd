//! Test plan configuration: which nodes to hit and how each profile produces load.
//!
//! The document is JSON with camelCase keys. Unknown keys are rejected and every
//! error carries a path-like locator (`profiles[1].timeout`) pointing at the
//! offending value.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::duration::{parse_duration, Duration};
use crate::types::{decode_bytes, Address};

pub const DEFAULT_WORKERS: u32 = 8;
pub const DEFAULT_RECEIPT_TIMEOUT: Duration = Duration::from_secs(60);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeEndpoint {
    pub url: String,
    pub name: String,
}

impl NodeEndpoint {
    pub fn new(url: impl Into<String>, index: usize) -> Self {
        Self {
            url: url.into(),
            name: default_node_name(index),
        }
    }
}

pub fn default_node_name(index: usize) -> String {
    format!("node{index}")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Transaction,
    Read,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Transaction => "transaction",
            Mode::Read => "read",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TestProfile {
    pub transactions: u64,
    /// Quiet period observed after this profile finishes.
    pub timeout: Duration,
    /// Ignored for read profiles; reads always target the contract.
    pub call_contract_method: bool,
    pub mode: Mode,
    pub workers: u32,
}

impl TestProfile {
    pub fn new(transactions: u64) -> Self {
        Self {
            transactions,
            timeout: Duration::ZERO,
            call_contract_method: false,
            mode: Mode::Transaction,
            workers: DEFAULT_WORKERS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TestPlan {
    pub nodes: Vec<NodeEndpoint>,
    pub profiles: Vec<TestProfile>,
    /// Raw decoded bytes; `validate_plan` checks the 20-byte length.
    pub contract_address: Vec<u8>,
    pub sender_address: Vec<u8>,
    pub receipt_timeout: Duration,
    pub seed: u64,
}

impl TestPlan {
    pub fn contract(&self) -> Result<Address, crate::types::HexError> {
        Address::try_from(self.contract_address.as_slice())
    }

    pub fn sender(&self) -> Result<Address, crate::types::HexError> {
        Address::try_from(self.sender_address.as_slice())
    }

    pub fn total_transactions(&self) -> u64 {
        self.profiles.iter().map(|p| p.transactions).sum()
    }

    /// Serializes back to the config schema with every default written out.
    pub fn to_json(&self) -> Value {
        let nodes: Vec<Value> = self
            .nodes
            .iter()
            .enumerate()
            .map(|(i, n)| {
                if n.name == default_node_name(i) {
                    Value::String(n.url.clone())
                } else {
                    serde_json::json!({ "url": n.url, "name": n.name })
                }
            })
            .collect();
        let profiles: Vec<Value> = self
            .profiles
            .iter()
            .map(|p| {
                serde_json::json!({
                    "transactions": p.transactions,
                    "timeout": p.timeout.to_string(),
                    "callContractMethod": p.call_contract_method,
                    "mode": p.mode.as_str(),
                    "workers": p.workers,
                })
            })
            .collect();
        serde_json::json!({
            "nodes": nodes,
            "contractAddress": crate::types::encode_bytes(&self.contract_address),
            "senderAddress": crate::types::encode_bytes(&self.sender_address),
            "receiptTimeout": self.receipt_timeout.to_string(),
            "seed": self.seed,
            "profiles": profiles,
        })
    }
}

/// One failed check, located by a JSON-path-like string.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub locator: String,
    pub message: String,
}

impl Violation {
    fn new(locator: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            locator: locator.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.locator, self.message)
    }
}

#[derive(Debug, Error)]
pub enum PlanError {
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("config is not valid UTF-8")]
    Utf8,
    #[error("malformed JSON at line {line}, column {column}: {message}")]
    Json {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{0}")]
    Schema(Violation),
    #[error("invalid plan: {}", join_violations(.0))]
    Invalid(Vec<Violation>),
}

fn join_violations(v: &[Violation]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

impl PlanError {
    /// Locator of the first problem; `$` for whole-document errors.
    pub fn locator(&self) -> &str {
        match self {
            PlanError::Schema(v) => &v.locator,
            PlanError::Invalid(v) => v.first().map_or("$", |v| v.locator.as_str()),
            _ => "$",
        }
    }
}

pub fn load_plan_file(path: impl AsRef<Path>) -> Result<TestPlan, PlanError> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|source| PlanError::Io {
        path: path.display().to_string(),
        source,
    })?;
    load_plan(&bytes)
}

/// Parses, defaults and validates a config document.
pub fn load_plan(document: &[u8]) -> Result<TestPlan, PlanError> {
    let text = std::str::from_utf8(document).map_err(|_| PlanError::Utf8)?;
    let root: Value = serde_json::from_str(text).map_err(|e| PlanError::Json {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    let plan = plan_from_value(&root).map_err(PlanError::Schema)?;
    let violations = validate_plan(&plan);
    if violations.is_empty() {
        Ok(plan)
    } else {
        Err(PlanError::Invalid(violations))
    }
}

fn plan_from_value(root: &Value) -> Result<TestPlan, Violation> {
    let obj = as_object(root, "$")?;
    reject_unknown(
        obj,
        "",
        &[
            "nodes",
            "contractAddress",
            "senderAddress",
            "receiptTimeout",
            "seed",
            "profiles",
        ],
    )?;

    let nodes = require(obj, "", "nodes")?
        .as_array()
        .ok_or_else(|| Violation::new("nodes", "expected an array"))?
        .iter()
        .enumerate()
        .map(|(i, v)| node_from_value(v, i))
        .collect::<Result<Vec<_>, _>>()?;

    let profiles = require(obj, "", "profiles")?
        .as_array()
        .ok_or_else(|| Violation::new("profiles", "expected an array"))?
        .iter()
        .enumerate()
        .map(|(i, v)| profile_from_value(v, &format!("profiles[{i}]")))
        .collect::<Result<Vec<_>, _>>()?;

    let contract_address = address_bytes(require(obj, "", "contractAddress")?, "contractAddress")?;
    let sender_address = address_bytes(require(obj, "", "senderAddress")?, "senderAddress")?;

    let receipt_timeout = match obj.get("receiptTimeout") {
        None => DEFAULT_RECEIPT_TIMEOUT,
        Some(v) => duration_field(v, "receiptTimeout")?,
    };
    let seed = match obj.get("seed") {
        None => 0,
        Some(v) => v
            .as_u64()
            .ok_or_else(|| Violation::new("seed", "expected an unsigned 64-bit integer"))?,
    };

    Ok(TestPlan {
        nodes,
        profiles,
        contract_address,
        sender_address,
        receipt_timeout,
        seed,
    })
}

fn node_from_value(v: &Value, index: usize) -> Result<NodeEndpoint, Violation> {
    let at = format!("nodes[{index}]");
    match v {
        Value::String(url) => Ok(NodeEndpoint::new(url.clone(), index)),
        Value::Object(obj) => {
            reject_unknown(obj, &at, &["url", "name"])?;
            let url = require(obj, &at, "url")?
                .as_str()
                .ok_or_else(|| Violation::new(format!("{at}.url"), "expected a string"))?;
            let name = match obj.get("name") {
                None => default_node_name(index),
                Some(n) => n
                    .as_str()
                    .ok_or_else(|| Violation::new(format!("{at}.name"), "expected a string"))?
                    .to_string(),
            };
            Ok(NodeEndpoint {
                url: url.to_string(),
                name,
            })
        }
        _ => Err(Violation::new(at, "expected a URL string or {url, name} object")),
    }
}

fn profile_from_value(v: &Value, at: &str) -> Result<TestProfile, Violation> {
    let obj = as_object(v, at)?;
    reject_unknown(
        obj,
        at,
        &["transactions", "timeout", "callContractMethod", "mode", "workers"],
    )?;
    let transactions = require(obj, at, "transactions")?.as_u64().ok_or_else(|| {
        Violation::new(format!("{at}.transactions"), "expected a non-negative integer")
    })?;
    let timeout = match obj.get("timeout") {
        None => Duration::ZERO,
        Some(t) => duration_field(t, &format!("{at}.timeout"))?,
    };
    let call_contract_method = match obj.get("callContractMethod") {
        None => false,
        Some(b) => b.as_bool().ok_or_else(|| {
            Violation::new(format!("{at}.callContractMethod"), "expected a boolean")
        })?,
    };
    let mode = match obj.get("mode") {
        None => Mode::Transaction,
        Some(m) => match m.as_str() {
            Some("transaction") => Mode::Transaction,
            Some("read") => Mode::Read,
            _ => {
                return Err(Violation::new(
                    format!("{at}.mode"),
                    "expected \"transaction\" or \"read\"",
                ))
            }
        },
    };
    let workers = match obj.get("workers") {
        None => DEFAULT_WORKERS,
        Some(w) => w
            .as_u64()
            .and_then(|w| u32::try_from(w).ok())
            .ok_or_else(|| Violation::new(format!("{at}.workers"), "expected a small integer"))?,
    };
    Ok(TestProfile {
        transactions,
        timeout,
        call_contract_method,
        mode,
        workers,
    })
}

fn as_object<'a>(v: &'a Value, at: &str) -> Result<&'a Map<String, Value>, Violation> {
    v.as_object()
        .ok_or_else(|| Violation::new(at, "expected an object"))
}

fn join_path(parent: &str, key: &str) -> String {
    if parent.is_empty() {
        key.to_string()
    } else {
        format!("{parent}.{key}")
    }
}

fn require<'a>(obj: &'a Map<String, Value>, parent: &str, key: &str) -> Result<&'a Value, Violation> {
    obj.get(key)
        .ok_or_else(|| Violation::new(join_path(parent, key), "missing required field"))
}

fn reject_unknown(obj: &Map<String, Value>, parent: &str, known: &[&str]) -> Result<(), Violation> {
    match obj.keys().find(|k| !known.contains(&k.as_str())) {
        Some(k) => Err(Violation::new(join_path(parent, k), "unknown field")),
        None => Ok(()),
    }
}

fn duration_field(v: &Value, at: &str) -> Result<Duration, Violation> {
    let text = v
        .as_str()
        .ok_or_else(|| Violation::new(at, "expected a duration string like \"30s\""))?;
    parse_duration(text).map_err(|e| Violation::new(at, e.to_string()))
}

fn address_bytes(v: &Value, at: &str) -> Result<Vec<u8>, Violation> {
    let text = v
        .as_str()
        .ok_or_else(|| Violation::new(at, "expected a 0x-prefixed hex string"))?;
    decode_bytes(text).map_err(|e| Violation::new(at, e.to_string()))
}

/// Checks every plan invariant. An empty result means the plan is runnable.
pub fn validate_plan(plan: &TestPlan) -> Vec<Violation> {
    let mut out = Vec::new();

    if plan.nodes.is_empty() {
        out.push(Violation::new("nodes", "at least one node is required"));
    }
    for (i, node) in plan.nodes.iter().enumerate() {
        let at = format!("nodes[{i}]");
        if node.url.is_empty() {
            out.push(Violation::new(at.clone(), "url is empty"));
        } else {
            match url::Url::parse(&node.url) {
                Ok(u) if matches!(u.scheme(), "http" | "https") && u.host().is_some() => {}
                Ok(u) => out.push(Violation::new(
                    at.clone(),
                    format!("unsupported url {:?} (scheme {})", node.url, u.scheme()),
                )),
                Err(e) => out.push(Violation::new(at.clone(), format!("invalid url {:?}: {e}", node.url))),
            }
        }
        if node.name.is_empty() {
            out.push(Violation::new(format!("{at}.name"), "name is empty"));
        }
    }

    if plan.profiles.is_empty() {
        out.push(Violation::new("profiles", "at least one profile is required"));
    }
    for (i, p) in plan.profiles.iter().enumerate() {
        if p.transactions == 0 {
            out.push(Violation::new(
                format!("profiles[{i}].transactions"),
                "must be at least 1",
            ));
        }
        if p.workers == 0 {
            out.push(Violation::new(format!("profiles[{i}].workers"), "must be at least 1"));
        }
    }

    for (locator, bytes) in [
        ("contractAddress", &plan.contract_address),
        ("senderAddress", &plan.sender_address),
    ] {
        if bytes.len() != Address::LEN {
            out.push(Violation::new(
                locator,
                format!("expected 20 bytes, got {}", bytes.len()),
            ));
        }
    }

    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const CONTRACT: &str = "0x00000000000000000000000000000000000000c0";
    const SENDER: &str = "0x00000000000000000000000000000000000000a1";

    fn doc(extra: &str) -> String {
        format!(
            r#"{{"nodes": ["http://127.0.0.1:8545", "http://127.0.0.1:8546"],
                "contractAddress": "{CONTRACT}", "senderAddress": "{SENDER}",
                "profiles": [{{"transactions": 1000, "timeout": "1m"}}, {{"transactions": 2000}}]{extra}}}"#
        )
    }

    #[test]
    fn loads_two_profiles_with_defaults() {
        let plan = load_plan(doc("").as_bytes()).unwrap();
        assert_eq!(plan.profiles.len(), 2);
        assert_eq!(plan.profiles[0].transactions, 1000);
        assert_eq!(plan.profiles[1].transactions, 2000);
        assert_eq!(plan.profiles[0].timeout.as_millis(), 60_000);
        assert_eq!(plan.profiles[1].timeout, Duration::ZERO);
        assert_eq!(plan.profiles[0].workers, 8);
        assert_eq!(plan.profiles[0].mode, Mode::Transaction);
        assert!(!plan.profiles[0].call_contract_method);
        assert_eq!(plan.receipt_timeout.as_millis(), 60_000);
        assert_eq!(plan.seed, 0);
        assert_eq!(plan.nodes[1].name, "node1");
        assert_eq!(plan.total_transactions(), 3000);
    }

    #[test]
    fn empty_nodes_located() {
        let text = format!(
            r#"{{"nodes": [], "contractAddress": "{CONTRACT}", "senderAddress": "{SENDER}",
                "profiles": [{{"transactions": 1}}]}}"#
        );
        let err = load_plan(text.as_bytes()).unwrap_err();
        assert_eq!(err.locator(), "nodes");
    }

    #[test]
    fn missing_profiles_located() {
        let text = format!(
            r#"{{"nodes": ["http://a:1"], "contractAddress": "{CONTRACT}", "senderAddress": "{SENDER}"}}"#
        );
        let err = load_plan(text.as_bytes()).unwrap_err();
        assert!(matches!(err, PlanError::Schema(_)));
        assert_eq!(err.locator(), "profiles");
    }

    #[test]
    fn unknown_keys_rejected() {
        let err = load_plan(doc(r#", "bogus": 1"#).as_bytes()).unwrap_err();
        assert_eq!(err.locator(), "bogus");
        let text = doc("").replace(r#""transactions": 2000"#, r#""transactions": 2000, "rate": 5"#);
        assert_eq!(load_plan(text.as_bytes()).unwrap_err().locator(), "profiles[1].rate");
    }

    #[test]
    fn bad_duration_names_token() {
        let text = doc("").replace(r#""1m""#, r#""5x""#);
        let err = load_plan(text.as_bytes()).unwrap_err();
        assert_eq!(err.locator(), "profiles[0].timeout");
        assert!(err.to_string().contains("\"x\""), "{err}");
    }

    #[test]
    fn malformed_json_and_utf8() {
        assert!(matches!(load_plan(b"{\"nodes\": ["), Err(PlanError::Json { .. })));
        assert!(matches!(load_plan(&[0xff, 0xfe]), Err(PlanError::Utf8)));
        assert_eq!(load_plan(b"[]").unwrap_err().locator(), "$");
    }

    #[test]
    fn validate_examples() {
        let plan = load_plan(doc("").as_bytes()).unwrap();
        assert!(validate_plan(&plan).is_empty());

        let mut zero = plan.clone();
        zero.profiles[0].transactions = 0;
        let v = validate_plan(&zero);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].locator, "profiles[0].transactions");

        let mut short = plan.clone();
        short.contract_address.pop();
        let v = validate_plan(&short);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].locator, "contractAddress");

        let mut no_workers = plan;
        no_workers.profiles[1].workers = 0;
        no_workers.nodes[0].url = "ftp://x".into();
        let locs: Vec<_> = validate_plan(&no_workers).into_iter().map(|v| v.locator).collect();
        assert_eq!(locs, ["nodes[0]", "profiles[1].workers"]);
    }

    #[test]
    fn reload_is_idempotent() {
        let plan = load_plan(doc(r#", "seed": 42, "receiptTimeout": "1m30s""#).as_bytes()).unwrap();
        let again = load_plan(plan.to_json().to_string().as_bytes()).unwrap();
        assert_eq!(plan, again);
    }

    #[test]
    fn named_node_objects() {
        let text = doc("").replace(
            r#""http://127.0.0.1:8546""#,
            r#"{"url": "http://127.0.0.1:8546", "name": "validator"}"#,
        );
        let plan = load_plan(text.as_bytes()).unwrap();
        assert_eq!(plan.nodes[1].name, "validator");
        assert_eq!(load_plan(plan.to_json().to_string().as_bytes()).unwrap(), plan);
    }
}
