use std::time::Duration as StdDuration;

use chrono::NaiveDateTime;
use hammer_core::clock::{Clock, Participant};
use hammer_core::metrics::{
    watch_blocks, ResourceSample, ResourceSampler, StopHandle, TpsSample, TpsTracker, DEFAULT_POLL_INTERVAL,
};
use hammer_core::record::{ProfileResult, TxRecord};
use hammer_core::report::RunSummary;
use hammer_core::rpc::{BlockId, RpcClient};
use hammer_core::{validate_plan, Duration, TestPlan};
use tokio::task::JoinHandle;

use crate::profile::{run_profile, PlanContext, RECEIPT_POLL_INTERVAL};
use crate::LoadError;

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub clock: Clock,
    /// Watch blocks on the first reachable node and compute TPS.
    pub monitor: bool,
    /// Sample this host's CPU, memory and network counters.
    pub sample_resources: bool,
    pub receipt_poll_interval: StdDuration,
    pub block_poll_interval: StdDuration,
    pub resource_interval: StdDuration,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            clock: Clock::real(),
            monitor: true,
            sample_resources: false,
            receipt_poll_interval: RECEIPT_POLL_INTERVAL,
            block_poll_interval: DEFAULT_POLL_INTERVAL,
            resource_interval: StdDuration::from_secs(1),
        }
    }
}

/// Everything a finished (or aborted) run produced.
#[derive(Debug, Clone)]
pub struct RunReport {
    pub summary: RunSummary,
    pub results: Vec<ProfileResult>,
    pub tps_samples: Vec<TpsSample>,
    pub resources: Vec<ResourceSample>,
    /// Why block monitoring stopped early, if it did.
    pub monitor_error: Option<String>,
}

impl RunReport {
    pub fn aborted(&self) -> bool {
        self.summary.aborted.is_some()
    }

    pub fn records(&self) -> impl Iterator<Item = &TxRecord> {
        self.results.iter().flat_map(|r| r.records.iter())
    }
}

type MonitorTask = JoinHandle<(Vec<TpsSample>, Option<String>)>;

async fn start_monitor(clients: &[RpcClient], participant: &Participant, poll: StdDuration) -> Option<(MonitorTask, StopHandle)> {
    for client in clients {
        let head = match client.block_number().await {
            Ok(h) => h,
            Err(_) => continue,
        };
        let baseline = client.fetch_block(BlockId::Number(head)).await.ok().flatten();
        let mut watcher = watch_blocks(client.clone(), head + 1, participant.fork()).with_poll_interval(poll);
        let stop = watcher.stop_handle();
        let task = tokio::spawn(async move {
            let mut tracker = TpsTracker::new(baseline);
            loop {
                match watcher.next().await {
                    Ok(Some(block)) => {
                        if let Err(e) = tracker.push(block) {
                            tracing::warn!("tps sample skipped: {e}");
                        }
                    }
                    Ok(None) => return (tracker.into_samples(), None),
                    Err(e) => {
                        tracing::warn!("block monitor stopped: {e}");
                        return (tracker.into_samples(), Some(e.to_string()));
                    }
                }
            }
        });
        return Some((task, stop));
    }
    tracing::warn!("no node reachable for block monitoring");
    None
}

fn start_sampler(participant: Participant, period: StdDuration) -> (JoinHandle<Vec<ResourceSample>>, StopHandle) {
    let stop = StopHandle::default();
    let stopped = stop.clone();
    let task = tokio::spawn(async move {
        let mut sampler = ResourceSampler::new();
        let mut samples = Vec::new();
        while !stopped.is_stopped() {
            samples.push(sampler.sample());
            participant.sleep(period).await;
        }
        samples
    });
    (task, stop)
}

/// Runs every profile in order, observing each profile's quiet period
/// afterwards. An abort keeps the completed profiles in the summary.
pub async fn run_plan(plan: &TestPlan, options: RunOptions) -> Result<RunReport, LoadError> {
    let violations = validate_plan(plan);
    if !violations.is_empty() {
        return Err(LoadError::InvalidPlan(violations));
    }
    let started_at: NaiveDateTime = chrono::Local::now().naive_local();
    let clients: Vec<RpcClient> = plan.nodes.iter().map(|n| RpcClient::new(&n.url)).collect();
    let mut ctx = PlanContext::new(plan, clients)?;
    ctx.receipt_poll_interval = options.receipt_poll_interval;

    let clock = options.clock.clone();
    let participant = clock.participant();
    let monitor = match options.monitor {
        true => start_monitor(&ctx.clients, &participant, options.block_poll_interval).await,
        false => None,
    };
    let sampler = options
        .sample_resources
        .then(|| start_sampler(participant.fork(), options.resource_interval));

    let run_start = clock.now_ns();
    let mut results = Vec::with_capacity(plan.profiles.len());
    let mut aborted = None;
    for (index, profile) in plan.profiles.iter().enumerate() {
        tracing::info!(profile = index, transactions = profile.transactions, mode = profile.mode.as_str(), "profile starting");
        match run_profile(index, profile, &mut ctx, &participant).await {
            Ok(result) => results.push(result),
            Err(e) => {
                tracing::error!(profile = index, "profile aborted: {e}");
                aborted = Some(format!("profile {index}: {e}"));
                results.push(ProfileResult::empty(index, profile.mode, plan.nodes.len()));
                break;
            }
        }
        if !profile.timeout.is_zero() {
            tracing::info!(profile = index, quiet_period = %profile.timeout, "quiet period");
            participant.sleep(profile.timeout.to_std()).await;
        }
    }
    let total = Duration::from_nanos_floor(clock.now_ns() - run_start);

    // Let the helpers finish on their own time: the monitor drains to the
    // current head, the sampler exits after its next wake-up.
    if let Some((_, stop)) = &monitor {
        stop.stop();
    }
    if let Some((_, stop)) = &sampler {
        stop.stop();
    }
    drop(participant);
    let (tps_samples, monitor_error) = match monitor {
        Some((task, _)) => task.await.unwrap_or_else(|e| (Vec::new(), Some(e.to_string()))),
        None => (Vec::new(), None),
    };
    let resources = match sampler {
        Some((task, _)) => task.await.unwrap_or_default(),
        None => Vec::new(),
    };

    let mut summary = RunSummary::build(started_at, total, &results, &tps_samples, resources.clone());
    summary.aborted = aborted;
    Ok(RunReport {
        summary,
        results,
        tps_samples,
        resources,
        monitor_error,
    })
}
