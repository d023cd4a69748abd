//! Building blocks for the hammer blockchain load tester: plan parsing,
//! the JSON-RPC client, time sources, metrics and reporting.

pub mod abi;
pub mod clock;
pub mod duration;
pub mod metrics;
pub mod plan;
pub mod prng;
pub mod record;
pub mod report;
pub mod rpc;
pub mod types;

pub use clock::{Clock, Participant};
pub use duration::{format_duration, parse_duration, Duration};
pub use plan::{load_plan, validate_plan, Mode, NodeEndpoint, TestPlan, TestProfile};
pub use rpc::{Block, BlockId, Receipt, RpcClient, RpcError, TxCall};
pub use types::{Address, H256, U256};
