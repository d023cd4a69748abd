use std::collections::HashSet;
use std::net::SocketAddr;

use hammer_core::abi::decode_static_call;
use hammer_core::record::TxStatus;
use hammer_core::{Duration, Mode, NodeEndpoint, TestPlan, TestProfile};
use hammer_loadgen::{run_plan, workload_item, RunOptions};
use hammer_simnode::{start_cluster, ArrivalOutcome, ChainConfig, ClockKind, Cluster};

async fn cluster(config: ChainConfig) -> Cluster {
    let listen: SocketAddr = "127.0.0.1:0".parse().unwrap();
    start_cluster(
        ChainConfig {
            clock: ClockKind::Virtual,
            ..config
        },
        listen,
    )
    .await
    .unwrap()
}

fn plan(urls: &[String], profiles: Vec<TestProfile>) -> TestPlan {
    TestPlan {
        nodes: urls.iter().enumerate().map(|(i, u)| NodeEndpoint::new(u.clone(), i)).collect(),
        profiles,
        contract_address: vec![0xc0; 20],
        sender_address: vec![0xa1; 20],
        receipt_timeout: Duration::from_secs(10),
        seed: 99,
    }
}

fn options(cluster: &Cluster) -> RunOptions {
    RunOptions {
        clock: cluster.clock(),
        ..RunOptions::default()
    }
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn healthy_profile_includes_everything() {
    let c = cluster(ChainConfig::default()).await;
    let report = run_plan(&plan(&c.urls(), vec![TestProfile::new(1000)]), options(&c)).await.unwrap();
    assert!(!report.aborted());
    let r = &report.results[0];
    assert_eq!((r.produced, r.included, r.failed_timeout, r.rejected), (1000, 1000, 0, 0));
    assert!(r.records.iter().all(|rec| rec.check().is_ok()));
    // Everything submitted at t=0, drained 500 per 1 s block.
    assert_eq!(r.wall_time, Duration::from_secs(2));
    let included: u64 = report.tps_samples.iter().map(|s| s.tx_count).sum();
    assert_eq!(included, 1000);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn round_robin_and_nonces_over_three_nodes() {
    let c = cluster(ChainConfig {
        endpoints: 3,
        ..ChainConfig::default()
    })
    .await;
    let report = run_plan(
        &plan(&c.urls(), vec![TestProfile::new(7), TestProfile::new(200)]),
        options(&c),
    )
    .await
    .unwrap();
    assert_eq!(report.results[0].per_node, [3, 2, 2]);
    for r in &report.results {
        for (i, rec) in r.records.iter().enumerate() {
            assert_eq!(rec.node_index, i % 3);
        }
    }
    let seqs: Vec<u64> = report.records().map(|r| r.seq).collect();
    assert_eq!(seqs, (0..207).collect::<Vec<_>>());
    let mut nonces: Vec<u64> = report.records().map(|r| r.nonce.unwrap()).collect();
    nonces.sort_unstable();
    assert_eq!(nonces, (0..207).collect::<Vec<_>>());
    let endpoints: Vec<usize> = c.arrivals().iter().map(|a| a.endpoint).collect();
    assert_eq!(&endpoints[..7], [0, 1, 2, 0, 1, 2, 0]);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn nonce_counter_starts_at_pending_count() {
    let c = cluster(ChainConfig::default()).await;
    let urls = c.urls();
    let first = run_plan(&plan(&urls, vec![TestProfile::new(5)]), options(&c)).await.unwrap();
    assert_eq!(first.records().map(|r| r.nonce.unwrap()).collect::<Vec<_>>(), [0, 1, 2, 3, 4]);
    let second = run_plan(&plan(&urls, vec![TestProfile::new(3)]), options(&c)).await.unwrap();
    assert_eq!(second.records().map(|r| r.nonce.unwrap()).collect::<Vec<_>>(), [5, 6, 7]);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn dropped_transactions_time_out() {
    let c = cluster(ChainConfig {
        drop_probability: 1.0,
        ..ChainConfig::default()
    })
    .await;
    let report = run_plan(&plan(&c.urls(), vec![TestProfile::new(300)]), options(&c)).await.unwrap();
    let r = &report.results[0];
    assert_eq!((r.included, r.failed_timeout), (0, 300));
    assert!(r.records.iter().all(|rec| rec.status == TxStatus::FailedTimeout));
    assert!(c.clock().now_ns() >= 10_000_000_000);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn rejections_are_counted_not_fatal() {
    let c = cluster(ChainConfig {
        reject_probability: 0.5,
        seed: 3,
        ..ChainConfig::default()
    })
    .await;
    let report = run_plan(&plan(&c.urls(), vec![TestProfile::new(400)]), options(&c)).await.unwrap();
    let r = &report.results[0];
    assert!(r.is_conserved());
    assert!(r.rejected > 100 && r.included > 100, "{r:?}");
    assert_eq!(r.failed_timeout, 0);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn unreachable_nodes_abort_with_nothing_produced() {
    let c = cluster(ChainConfig::default()).await;
    let url = c.urls()[0].clone();
    c.shutdown().await;
    let report = run_plan(&plan(&[url], vec![TestProfile::new(10), TestProfile::new(10)]), RunOptions::default())
        .await
        .unwrap();
    assert!(report.aborted());
    assert_eq!(report.results.len(), 1);
    assert_eq!(report.summary.total_produced(), 0);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn abort_keeps_completed_profiles() {
    let c = cluster(ChainConfig::default()).await;
    let mut p = plan(&c.urls(), vec![TestProfile::new(10), TestProfile::new(10)]);
    p.profiles[0].timeout = Duration::from_secs(5);
    let clock = c.clock();
    let v = clock.as_virtual().unwrap().clone();
    // Take the node down while the first quiet period is running.
    let killer = {
        let p = clock.participant();
        tokio::spawn(async move {
            p.sleep(std::time::Duration::from_secs(3)).await;
            c.shutdown().await;
            drop(p);
        })
    };
    let report = run_plan(&p, RunOptions { clock, ..RunOptions::default() }).await.unwrap();
    killer.await.unwrap();
    assert!(report.aborted());
    assert_eq!(report.results.len(), 2);
    assert_eq!(report.results[0].included, 10);
    assert_eq!(report.results[1].produced, 0);
    assert!(v.now_ns() >= 5_000_000_000);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn quiet_period_has_no_arrivals() {
    let c = cluster(ChainConfig::default()).await;
    let mut profiles = vec![TestProfile::new(100), TestProfile::new(100)];
    profiles[0].timeout = Duration::from_secs(30);
    let report = run_plan(&plan(&c.urls(), profiles), options(&c)).await.unwrap();
    let first_end = report.results[0].finished_ns;
    let second_start = report.results[1].started_ns;
    assert!(second_start - first_end >= 30_000_000_000);
    let inside = c
        .arrivals()
        .iter()
        .filter(|a| a.time_ns > first_end && a.time_ns < first_end + 30_000_000_000)
        .count();
    assert_eq!(inside, 0);
    assert_eq!(report.summary.profiles[0].quiet_period, Duration::from_secs(30));
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn contract_writes_then_reads() {
    let c = cluster(ChainConfig::default()).await;
    let mut write = TestProfile::new(50);
    write.call_contract_method = true;
    let mut read = TestProfile::new(120);
    read.mode = Mode::Read;
    let report = run_plan(&plan(&c.urls(), vec![write, read]), options(&c)).await.unwrap();

    // Calldata carries the seeded workload.
    let snapshot = c.snapshot();
    let mut seen = 0u64;
    for block in &snapshot.blocks {
        c.with_chain(|chain| {
            for tx in chain.block_txs(block.number).unwrap() {
                let (_, args) = decode_static_call(&tx.data).unwrap();
                let (key, value) = workload_item(99, seen);
                assert_eq!(args, vec![key, value]);
                seen += 1;
            }
        });
    }
    assert_eq!(seen, 50);
    assert_eq!(snapshot.kv.len(), 50);

    let reads = &report.results[1];
    assert_eq!((reads.produced, reads.included, reads.rejected), (120, 120, 0));
    let keys: HashSet<u64> = reads.reads.iter().map(|r| r.key).collect();
    assert_eq!(keys, (0..50).collect());
    assert_eq!(reads.reads.first().unwrap().seq, 50);
    assert!(report.summary.read_latency.is_some());
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn reads_without_writes_use_key_zero() {
    let c = cluster(ChainConfig::default()).await;
    let mut read = TestProfile::new(10);
    read.mode = Mode::Read;
    let report = run_plan(&plan(&c.urls(), vec![read]), options(&c)).await.unwrap();
    assert!(report.results[0].reads.iter().all(|r| r.key == 0 && r.ok));
    assert!(c.arrivals().is_empty());
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn rejected_arrivals_match_rejected_records() {
    let c = cluster(ChainConfig {
        reject_probability: 0.2,
        drop_probability: 0.2,
        seed: 11,
        ..ChainConfig::default()
    })
    .await;
    let report = run_plan(&plan(&c.urls(), vec![TestProfile::new(500)]), options(&c)).await.unwrap();
    let r = &report.results[0];
    let count = |o: ArrivalOutcome| c.arrivals().iter().filter(|a| a.outcome == o).count() as u64;
    assert_eq!(r.rejected, count(ArrivalOutcome::Rejected));
    assert_eq!(r.failed_timeout, count(ArrivalOutcome::Dropped));
    assert_eq!(r.included, count(ArrivalOutcome::Enqueued));
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn real_clock_concurrent_workers() {
    let listen: SocketAddr = "127.0.0.1:0".parse().unwrap();
    let c = start_cluster(
        ChainConfig {
            endpoints: 2,
            ..ChainConfig::default()
        },
        listen,
    )
    .await
    .unwrap();
    let mut profile = TestProfile::new(300);
    profile.workers = 16;
    let report = run_plan(&plan(&c.urls(), vec![profile]), RunOptions::default()).await.unwrap();
    let r = &report.results[0];
    assert_eq!((r.produced, r.included), (300, 300));
    assert_eq!(r.per_node, [150, 150]);
    let mut nonces: Vec<u64> = report.records().map(|r| r.nonce.unwrap()).collect();
    nonces.sort_unstable();
    assert_eq!(nonces, (0..300).collect::<Vec<_>>());
    let sampled: u64 = report.tps_samples.iter().map(|s| s.tx_count).sum();
    assert_eq!(sampled, 300);
}
