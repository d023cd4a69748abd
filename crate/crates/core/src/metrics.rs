//! Throughput, latency and resource metrics.
//!
//! Throughput comes from the chain: each block's transaction count over the
//! whole-second timestamp gap to its parent. Latency statistics use the
//! nearest-rank percentile rule so results are exactly reproducible.

use std::fmt;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::{Duration as StdDuration, Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clock::Participant;
use crate::rpc::{Block, BlockId, RpcClient, RpcError};

/// An exact throughput ratio: `txs` transactions over `seconds` seconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Rate {
    pub txs: u64,
    pub seconds: u64,
}

impl Rate {
    pub fn per_second(&self) -> f64 {
        self.txs as f64 / self.seconds as f64
    }
}

impl fmt::Display for Rate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.2}", self.per_second())
    }
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
struct RateRepr {
    txs: u64,
    seconds: u64,
    #[serde(default, skip_deserializing)]
    per_second: f64,
}

impl Serialize for Rate {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        RateRepr {
            txs: self.txs,
            seconds: self.seconds,
            per_second: self.per_second(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Rate {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let repr = RateRepr::deserialize(deserializer)?;
        if repr.seconds == 0 {
            return Err(serde::de::Error::custom("rate with zero seconds"));
        }
        Ok(Rate {
            txs: repr.txs,
            seconds: repr.seconds,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TpsSample {
    pub block_number: u64,
    /// Block timestamp in unix seconds.
    pub timestamp: u64,
    pub tx_count: u64,
    pub span_seconds: u64,
}

impl TpsSample {
    pub fn tps(&self) -> Rate {
        Rate {
            txs: self.tx_count,
            seconds: self.span_seconds,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MetricsError {
    #[error("block {cur} does not follow block {prev}")]
    NotConsecutive { prev: u64, cur: u64 },
    #[error("block {number} timestamp {cur} does not exceed parent timestamp {prev}")]
    TimestampNotIncreasing { number: u64, prev: u64, cur: u64 },
}

pub fn block_tps(prev: &Block, cur: &Block) -> Result<TpsSample, MetricsError> {
    if prev.number.checked_add(1) != Some(cur.number) {
        return Err(MetricsError::NotConsecutive {
            prev: prev.number,
            cur: cur.number,
        });
    }
    if cur.timestamp <= prev.timestamp {
        return Err(MetricsError::TimestampNotIncreasing {
            number: cur.number,
            prev: prev.timestamp,
            cur: cur.timestamp,
        });
    }
    Ok(TpsSample {
        block_number: cur.number,
        timestamp: cur.timestamp,
        tx_count: cur.tx_hashes.len() as u64,
        span_seconds: cur.timestamp - prev.timestamp,
    })
}

/// Total transactions over total span; `None` for an empty window.
pub fn aggregate_tps(samples: &[TpsSample]) -> Option<Rate> {
    if samples.is_empty() {
        return None;
    }
    let txs = samples.iter().map(|s| s.tx_count).sum();
    let seconds = samples.iter().map(|s| s.span_seconds).sum();
    Some(Rate { txs, seconds })
}

/// Samples for blocks numbered within `[first, last]`.
pub fn samples_in_range(samples: &[TpsSample], first: u64, last: u64) -> Vec<TpsSample> {
    samples
        .iter()
        .filter(|s| (first..=last).contains(&s.block_number))
        .copied()
        .collect()
}

/// Latency summary in nanoseconds. All values are absent when `count == 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct LatencyStats {
    pub count: u64,
    #[serde(default, rename = "minNs", skip_serializing_if = "Option::is_none")]
    pub min: Option<u64>,
    #[serde(default, rename = "maxNs", skip_serializing_if = "Option::is_none")]
    pub max: Option<u64>,
    #[serde(default, rename = "meanNs", skip_serializing_if = "Option::is_none")]
    pub mean: Option<u64>,
    #[serde(default, rename = "p50Ns", skip_serializing_if = "Option::is_none")]
    pub p50: Option<u64>,
    #[serde(default, rename = "p95Ns", skip_serializing_if = "Option::is_none")]
    pub p95: Option<u64>,
    #[serde(default, rename = "p99Ns", skip_serializing_if = "Option::is_none")]
    pub p99: Option<u64>,
}

/// Nearest-rank percentile of an ascending slice: the value at 1-based rank
/// `ceil(percent/100 · n)`.
fn nearest_rank(sorted: &[u64], percent: u64) -> u64 {
    let n = sorted.len() as u64;
    let rank = (percent * n).div_ceil(100).max(1);
    sorted[(rank - 1) as usize]
}

pub fn latency_stats(latencies: &[u64]) -> LatencyStats {
    if latencies.is_empty() {
        return LatencyStats::default();
    }
    let mut sorted = latencies.to_vec();
    sorted.sort_unstable();
    let n = sorted.len() as u128;
    let sum: u128 = sorted.iter().map(|v| *v as u128).sum();
    // Round half up to the nearest nanosecond.
    let mean = ((2 * sum + n) / (2 * n)) as u64;
    LatencyStats {
        count: sorted.len() as u64,
        min: sorted.first().copied(),
        max: sorted.last().copied(),
        mean: Some(mean),
        p50: Some(nearest_rank(&sorted, 50)),
        p95: Some(nearest_rank(&sorted, 95)),
        p99: Some(nearest_rank(&sorted, 99)),
    }
}

pub const DEFAULT_POLL_INTERVAL: StdDuration = StdDuration::from_millis(500);
pub const DEFAULT_FAILURE_BUDGET: StdDuration = StdDuration::from_secs(30);

#[derive(Debug, Error)]
pub enum WatchError {
    #[error("endpoint unreachable for {0:?}: {1}")]
    Unreachable(StdDuration, RpcError),
    #[error("node returned an error: {0}")]
    Rpc(RpcError),
}

/// Asks a running [`BlockWatcher`] to drain up to the current head and finish.
#[derive(Debug, Clone, Default)]
pub struct StopHandle(Arc<AtomicBool>);

impl StopHandle {
    pub fn stop(&self) {
        self.0.store(true, Ordering::SeqCst);
    }

    pub fn is_stopped(&self) -> bool {
        self.0.load(Ordering::SeqCst)
    }
}

/// Polls `eth_blockNumber` and yields every new block once, in order, with no gaps.
pub struct BlockWatcher {
    client: RpcClient,
    participant: Participant,
    next: u64,
    head: Option<u64>,
    poll_interval: StdDuration,
    failure_budget: StdDuration,
    stop: StopHandle,
}

/// Starts watching at `from_block`. The participant is the watcher's hold on
/// the clock; create it before spawning the task that drives the watcher.
pub fn watch_blocks(client: RpcClient, from_block: u64, participant: Participant) -> BlockWatcher {
    BlockWatcher {
        client,
        participant,
        next: from_block,
        head: None,
        poll_interval: DEFAULT_POLL_INTERVAL,
        failure_budget: DEFAULT_FAILURE_BUDGET,
        stop: StopHandle::default(),
    }
}

impl BlockWatcher {
    pub fn with_poll_interval(mut self, interval: StdDuration) -> Self {
        self.poll_interval = interval;
        self
    }

    pub fn with_failure_budget(mut self, budget: StdDuration) -> Self {
        self.failure_budget = budget;
        self
    }

    pub fn stop_handle(&self) -> StopHandle {
        self.stop.clone()
    }

    /// Next block number this watcher will yield.
    pub fn position(&self) -> u64 {
        self.next
    }

    /// Next block, or `None` once stopped and drained.
    pub async fn next(&mut self) -> Result<Option<Block>, WatchError> {
        let mut refreshed_after_stop = false;
        loop {
            if self.head.is_some_and(|h| self.next <= h) {
                match self.retrying(|c, n| async move { c.fetch_block(BlockId::Number(n)).await }).await? {
                    Some(block) => {
                        self.next += 1;
                        return Ok(Some(block));
                    }
                    // Head moved backwards or is not served yet; re-read it.
                    None => self.head = None,
                }
            }
            if self.stop.is_stopped() {
                if refreshed_after_stop {
                    return Ok(None);
                }
                refreshed_after_stop = true;
            } else if self.head.is_some() {
                self.participant.sleep(self.poll_interval).await;
            }
            let head = self.retrying(|c, _| async move { c.block_number().await }).await?;
            self.head = Some(head);
        }
    }

    async fn retrying<T, F, Fut>(&self, op: F) -> Result<T, WatchError>
    where
        F: Fn(RpcClient, u64) -> Fut,
        Fut: std::future::Future<Output = Result<T, RpcError>>,
    {
        let clock = self.participant.clock().clone();
        let started = clock.now_ns();
        let mut backoff = self.poll_interval.max(StdDuration::from_millis(1));
        loop {
            match op(self.client.clone(), self.next).await {
                Ok(v) => return Ok(v),
                Err(e) if e.is_transport() => {
                    let failing_for = StdDuration::from_nanos(clock.now_ns() - started);
                    if failing_for >= self.failure_budget {
                        return Err(WatchError::Unreachable(failing_for, e));
                    }
                    let wait = backoff.min(self.failure_budget - failing_for);
                    tracing::debug!(url = self.client.url(), ?wait, "block watcher retrying: {e}");
                    self.participant.sleep(wait).await;
                    backoff = (backoff * 2).min(self.failure_budget);
                }
                Err(e) => return Err(WatchError::Rpc(e)),
            }
        }
    }
}

/// Turns a stream of consecutive blocks into TPS samples.
#[derive(Debug, Default)]
pub struct TpsTracker {
    prev: Option<Block>,
    samples: Vec<TpsSample>,
}

impl TpsTracker {
    pub fn new(baseline: Option<Block>) -> Self {
        Self {
            prev: baseline,
            samples: Vec::new(),
        }
    }

    /// Records `block`, returning its sample when a parent is known.
    pub fn push(&mut self, block: Block) -> Result<Option<TpsSample>, MetricsError> {
        let sample = match &self.prev {
            Some(prev) => Some(block_tps(prev, &block)?),
            None => None,
        };
        if let Some(s) = sample {
            self.samples.push(s);
        }
        self.prev = Some(block);
        Ok(sample)
    }

    pub fn samples(&self) -> &[TpsSample] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<TpsSample> {
        self.samples
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ResourceSample {
    /// Unix milliseconds.
    pub wall_time: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cpu_percent: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rss_bytes: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub net_rx_bytes: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub net_tx_bytes: Option<u64>,
}

fn unix_millis() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

/// Process CPU ticks (utime + stime) and start time in ticks since boot, from
/// the contents of `/proc/self/stat`.
fn parse_proc_stat(text: &str) -> Option<(u64, u64)> {
    // The command name may contain spaces and parentheses; fields resume after the last ')'.
    let rest = &text[text.rfind(')')? + 1..];
    let fields: Vec<&str> = rest.split_whitespace().collect();
    let utime: u64 = fields.get(11)?.parse().ok()?;
    let stime: u64 = fields.get(12)?.parse().ok()?;
    let start: u64 = fields.get(19)?.parse().ok()?;
    Some((utime + stime, start))
}

fn parse_vm_rss(status: &str) -> Option<u64> {
    let line = status.lines().find(|l| l.starts_with("VmRSS:"))?;
    let kb: u64 = line.split_whitespace().nth(1)?.parse().ok()?;
    Some(kb * 1024)
}

/// Sums receive and transmit byte counters over all interfaces in `/proc/net/dev`.
fn parse_net_dev(text: &str) -> Option<(u64, u64)> {
    let mut rx = 0u64;
    let mut tx = 0u64;
    let mut seen = false;
    for line in text.lines().skip(2) {
        let Some((_, counters)) = line.split_once(':') else { continue };
        let fields: Vec<&str> = counters.split_whitespace().collect();
        rx += fields.first()?.parse::<u64>().ok()?;
        tx += fields.get(8)?.parse::<u64>().ok()?;
        seen = true;
    }
    seen.then_some((rx, tx))
}

fn clock_ticks_per_second() -> f64 {
    #[cfg(unix)]
    {
        // SAFETY: sysconf has no preconditions.
        let ticks = unsafe { libc::sysconf(libc::_SC_CLK_TCK) };
        if ticks > 0 {
            return ticks as f64;
        }
    }
    100.0
}

/// Samples local process resources. CPU percentage is measured over the
/// interval since the previous sample (since process start for the first).
pub struct ResourceSampler {
    prev: Option<(u64, Instant)>,
    ticks_per_second: f64,
}

impl Default for ResourceSampler {
    fn default() -> Self {
        Self::new()
    }
}

impl ResourceSampler {
    pub fn new() -> Self {
        Self {
            prev: None,
            ticks_per_second: clock_ticks_per_second(),
        }
    }

    pub fn sample(&mut self) -> ResourceSample {
        let now = Instant::now();
        let stat = std::fs::read_to_string("/proc/self/stat").ok();
        let cpu_ticks = stat.as_deref().and_then(parse_proc_stat);

        let cpu_percent = cpu_ticks.and_then(|(ticks, start)| {
            let busy_secs;
            let elapsed_secs;
            match self.prev {
                Some((prev_ticks, prev_at)) => {
                    busy_secs = ticks.saturating_sub(prev_ticks) as f64 / self.ticks_per_second;
                    elapsed_secs = now.duration_since(prev_at).as_secs_f64();
                }
                None => {
                    let uptime: f64 = std::fs::read_to_string("/proc/uptime")
                        .ok()?
                        .split_whitespace()
                        .next()?
                        .parse()
                        .ok()?;
                    busy_secs = ticks as f64 / self.ticks_per_second;
                    elapsed_secs = uptime - start as f64 / self.ticks_per_second;
                }
            }
            (elapsed_secs > 0.0).then(|| (busy_secs / elapsed_secs * 100.0).max(0.0))
        });
        if let Some((ticks, _)) = cpu_ticks {
            self.prev = Some((ticks, now));
        }

        let rss_bytes = std::fs::read_to_string("/proc/self/status")
            .ok()
            .as_deref()
            .and_then(parse_vm_rss);
        let net = std::fs::read_to_string("/proc/self/net/dev")
            .ok()
            .as_deref()
            .and_then(parse_net_dev);

        ResourceSample {
            wall_time: unix_millis(),
            cpu_percent,
            rss_bytes,
            net_rx_bytes: net.map(|n| n.0),
            net_tx_bytes: net.map(|n| n.1),
        }
    }
}

/// One standalone sample; CPU is averaged over the process lifetime.
pub fn sample_resources() -> ResourceSample {
    ResourceSampler::new().sample()
}
