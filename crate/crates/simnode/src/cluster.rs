//! HTTP listeners over one shared [`Chain`], plus the sealing driver.

use std::net::SocketAddr;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex, MutexGuard};

use axum::body::Bytes;
use axum::extract::State;
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response as HttpResponse};
use axum::routing::post;
use axum::Router;
use hammer_core::clock::{Clock, TickerId};
use thiserror::Error;
use tokio::net::TcpListener;
use tokio::task::JoinHandle;

use crate::chain::{Arrival, Chain, ChainSnapshot};
use crate::config::{ChainConfig, ClockKind};

#[derive(Debug, Error)]
pub enum ClusterError {
    #[error("binding {addr}: {source}")]
    Bind { addr: SocketAddr, source: std::io::Error },
    #[error("{0}")]
    Config(#[from] crate::config::ConfigError),
}

struct Shared {
    chain: Mutex<Chain>,
    clock: Clock,
    rpc_latency: std::time::Duration,
    stopped: AtomicBool,
}

impl Shared {
    fn chain(&self) -> MutexGuard<'_, Chain> {
        self.chain.lock().unwrap_or_else(|e| e.into_inner())
    }
}

#[derive(Clone)]
struct Endpoint {
    shared: Arc<Shared>,
    index: usize,
}

async fn handle(State(ep): State<Endpoint>, body: Bytes) -> HttpResponse {
    if ep.shared.stopped.load(Ordering::SeqCst) {
        return StatusCode::SERVICE_UNAVAILABLE.into_response();
    }
    // Read the clock before locking the chain: the sealer holds the clock lock
    // while it takes the chain lock.
    let now = ep.shared.clock.now_ns();
    let response = ep.shared.chain().handle_rpc(&body, ep.index, now);
    if !ep.shared.rpc_latency.is_zero() {
        tokio::time::sleep(ep.shared.rpc_latency).await;
    }
    let body = serde_json::to_vec(&response).expect("response serializes");
    ([(header::CONTENT_TYPE, "application/json")], body).into_response()
}

enum Sealer {
    Virtual(TickerId),
    Real(JoinHandle<()>),
}

/// A running mock network. Dropping it stops listeners and sealing.
pub struct Cluster {
    shared: Arc<Shared>,
    addrs: Vec<SocketAddr>,
    servers: Vec<JoinHandle<()>>,
    sealer: Option<Sealer>,
}

/// Starts the cluster on a fresh clock of the configured kind.
pub async fn start_cluster(config: ChainConfig, listen: SocketAddr) -> Result<Cluster, ClusterError> {
    let clock = match config.clock {
        ClockKind::Real => Clock::real(),
        ClockKind::Virtual => Clock::new_virtual(),
    };
    start_cluster_with_clock(config, listen, clock).await
}

/// Starts `config.endpoints` listeners on consecutive ports from `listen`
/// (or ephemeral ports when its port is 0), all serving one chain.
pub async fn start_cluster_with_clock(
    config: ChainConfig,
    listen: SocketAddr,
    clock: Clock,
) -> Result<Cluster, ClusterError> {
    config.validate()?;
    let shared = Arc::new(Shared {
        chain: Mutex::new(Chain::new(config.clone())),
        clock: clock.clone(),
        rpc_latency: config.rpc_latency.to_std(),
        stopped: AtomicBool::new(false),
    });

    let mut addrs = Vec::with_capacity(config.endpoints);
    let mut servers = Vec::with_capacity(config.endpoints);
    for index in 0..config.endpoints {
        let mut addr = listen;
        if listen.port() != 0 {
            addr.set_port(listen.port() + index as u16);
        }
        let listener = TcpListener::bind(addr)
            .await
            .map_err(|source| ClusterError::Bind { addr, source })?;
        let bound = listener.local_addr().map_err(|source| ClusterError::Bind { addr, source })?;
        let app = Router::new().route("/", post(handle)).with_state(Endpoint {
            shared: shared.clone(),
            index,
        });
        servers.push(tokio::spawn(async move {
            if let Err(e) = axum::serve(listener, app).await {
                tracing::error!("mock endpoint {bound} stopped: {e}");
            }
        }));
        addrs.push(bound);
    }

    let interval_ns = config.block_interval.as_nanos();
    let sealer = match &clock {
        Clock::Virtual(v) => {
            let shared = shared.clone();
            Sealer::Virtual(v.add_ticker(interval_ns, move |_| {
                shared.chain().seal_block();
            }))
        }
        Clock::Real(_) => {
            let shared = shared.clone();
            let period = config.block_interval.to_std();
            Sealer::Real(tokio::spawn(async move {
                let mut ticker = tokio::time::interval_at(tokio::time::Instant::now() + period, period);
                ticker.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Burst);
                loop {
                    ticker.tick().await;
                    let block = shared.chain().seal_block().clone();
                    tracing::debug!(number = block.number, txs = block.tx_hashes.len(), "sealed block");
                }
            }))
        }
    };

    tracing::info!(endpoints = ?addrs, "mock cluster started");
    Ok(Cluster {
        shared,
        addrs,
        servers,
        sealer: Some(sealer),
    })
}

impl Cluster {
    pub fn urls(&self) -> Vec<String> {
        self.addrs.iter().map(|a| format!("http://{a}")).collect()
    }

    pub fn addrs(&self) -> &[SocketAddr] {
        &self.addrs
    }

    pub fn clock(&self) -> Clock {
        self.shared.clock.clone()
    }

    pub fn arrivals(&self) -> Vec<Arrival> {
        self.shared.chain().arrivals().to_vec()
    }

    pub fn snapshot(&self) -> ChainSnapshot {
        self.shared.chain().snapshot()
    }

    /// Runs `f` with the chain locked.
    pub fn with_chain<T>(&self, f: impl FnOnce(&Chain) -> T) -> T {
        f(&self.shared.chain())
    }

    pub fn stop(&mut self) {
        self.shared.stopped.store(true, Ordering::SeqCst);
        match self.sealer.take() {
            Some(Sealer::Virtual(id)) => {
                if let Some(v) = self.shared.clock.as_virtual() {
                    v.remove_ticker(id);
                }
            }
            Some(Sealer::Real(handle)) => handle.abort(),
            None => {}
        }
        for s in &self.servers {
            s.abort();
        }
    }

    /// Stops the cluster and waits until its listeners are closed.
    pub async fn shutdown(mut self) {
        self.stop();
        for s in self.servers.drain(..) {
            let _ = s.await;
        }
    }
}

impl Drop for Cluster {
    fn drop(&mut self) {
        self.stop();
    }
}
