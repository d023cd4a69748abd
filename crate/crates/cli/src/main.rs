//! `hammer`: run load plans, start a mock network, watch TPS, re-render reports.

use std::io::Write;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use hammer_core::metrics::{watch_blocks, TpsTracker};
use hammer_core::plan::load_plan_file;
use hammer_core::report::{
    export_line_protocol, export_profile_csv, import_json, post_line_protocol, render_summary, tps_line,
    write_run_outputs,
};
use hammer_core::rpc::{BlockId, RpcClient};
use hammer_core::{Clock, TestPlan};
use hammer_loadgen::{run_plan, LoadError, RunOptions};
use hammer_simnode::{start_cluster, ChainConfig, ClockKind};

#[derive(Debug, Parser)]
#[command(name = "hammer", version, about = "Config-driven load tester for Ethereum-style JSON-RPC networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Execute a test plan and write the log, JSON summary, CSV and metrics.
    Run {
        /// Test plan (JSON).
        #[arg(long)]
        config: PathBuf,
        /// Output directory; each run gets its own subdirectory.
        #[arg(long, env = "HAMMER_OUT_DIR", default_value = "results")]
        out: PathBuf,
        /// POST the line-protocol metrics to this URL after the run.
        #[arg(long)]
        metrics_url: Option<String>,
    },
    /// Start a mock network until interrupted.
    Mock {
        /// Chain config (JSON).
        #[arg(long)]
        config: PathBuf,
        /// Address of the first endpoint; further endpoints use the following ports.
        #[arg(long)]
        listen: SocketAddr,
    },
    /// Print one line-protocol `tps` line per new block.
    Monitor {
        /// JSON-RPC endpoint URL.
        #[arg(long)]
        endpoint: String,
        /// First block to report; defaults to the block after the current head.
        #[arg(long)]
        from_block: Option<u64>,
    },
    /// Re-render a JSON summary.
    Report {
        /// summary.json written by `run`.
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Csv,
}

enum Failure {
    Config(String),
    Runtime(String),
}

impl Failure {
    fn report(self) -> ExitCode {
        let (code, message) = match self {
            Failure::Config(m) => (1, m),
            Failure::Runtime(m) => (2, m),
        };
        eprintln!("error: {message}");
        ExitCode::from(code)
    }
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let filter = tracing_subscriber::EnvFilter::try_from_default_env()
        .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("off"));
    tracing_subscriber::fmt().with_env_filter(filter).with_writer(std::io::stderr).init();

    let runtime = match tokio::runtime::Runtime::new() {
        Ok(rt) => rt,
        Err(e) => return Failure::Runtime(format!("starting runtime: {e}")).report(),
    };
    let outcome = runtime.block_on(async {
        match cli.command {
            Command::Run {
                config,
                out,
                metrics_url,
            } => run(config, out, metrics_url).await,
            Command::Mock { config, listen } => mock(config, listen).await,
            Command::Monitor { endpoint, from_block } => monitor(endpoint, from_block).await,
            Command::Report { input, format } => report(input, format),
        }
    });
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => f.report(),
    }
}

/// Resource counters describe this host, so they are only worth sampling
/// when the tool runs on a node, i.e. every endpoint is local.
fn all_nodes_local(plan: &TestPlan) -> bool {
    plan.nodes.iter().all(|n| {
        url::Url::parse(&n.url).ok().is_some_and(|u| match u.host() {
            Some(url::Host::Domain(d)) => d == "localhost",
            Some(url::Host::Ipv4(ip)) => ip.is_loopback(),
            Some(url::Host::Ipv6(ip)) => ip.is_loopback(),
            None => false,
        })
    })
}

async fn run(config: PathBuf, out: PathBuf, metrics_url: Option<String>) -> Outcome {
    let plan = load_plan_file(&config).map_err(|e| Failure::Config(format!("{}: {e}", config.display())))?;
    let options = RunOptions {
        sample_resources: all_nodes_local(&plan),
        ..RunOptions::default()
    };
    let report = run_plan(&plan, options).await.map_err(|e| match e {
        LoadError::InvalidPlan(_) | LoadError::Config(_) => Failure::Config(format!("{}: {e}", config.display())),
        other => Failure::Runtime(other.to_string()),
    })?;

    let node = plan.nodes.first().map_or("node0", |n| n.name.as_str());
    let lp = export_line_protocol(&report.tps_samples, &report.resources, node);
    let records: Vec<_> = report.records().collect();
    let outputs = write_run_outputs(&out, &report.summary, &records, &lp).map_err(|e| Failure::Config(e.to_string()))?;

    print!("{}", render_summary(&report.summary));
    println!("log:      {}", outputs.log.display());
    println!("summary:  {}", outputs.summary_json.display());
    println!("csv:      {}", outputs.tx_csv.display());
    println!("metrics:  {}", outputs.line_protocol.display());

    if let Some(url) = metrics_url {
        post_line_protocol(&url, lp).await.map_err(|e| Failure::Runtime(e.to_string()))?;
    }
    if let Some(reason) = &report.summary.aborted {
        return Err(Failure::Runtime(format!("run aborted: {reason}")));
    }
    Ok(())
}

async fn mock(config: PathBuf, listen: SocketAddr) -> Outcome {
    let config = ChainConfig::from_file(&config).map_err(|e| Failure::Config(e.to_string()))?;
    if config.clock == ClockKind::Virtual {
        return Err(Failure::Config(
            "clock \"virtual\" needs an in-process driver; use \"real\" for a standalone mock".into(),
        ));
    }
    let cluster = start_cluster(config, listen)
        .await
        .map_err(|e| Failure::Config(e.to_string()))?;
    for url in cluster.urls() {
        println!("{url}");
    }
    let _ = std::io::stdout().flush();
    tokio::signal::ctrl_c()
        .await
        .map_err(|e| Failure::Runtime(format!("waiting for interrupt: {e}")))?;
    cluster.shutdown().await;
    Ok(())
}

async fn monitor(endpoint: String, from_block: Option<u64>) -> Outcome {
    let client = RpcClient::new(&endpoint);
    let from = match from_block {
        Some(n) => n,
        None => client
            .block_number()
            .await
            .map_err(|e| Failure::Runtime(format!("{endpoint}: {e}")))?
            + 1,
    };
    let baseline = match from.checked_sub(1) {
        Some(prev) => client
            .fetch_block(BlockId::Number(prev))
            .await
            .map_err(|e| Failure::Runtime(format!("{endpoint}: {e}")))?,
        None => None,
    };
    let clock = Clock::real();
    let mut watcher = watch_blocks(client, from, clock.participant());
    let mut tracker = TpsTracker::new(baseline);
    let stdout = std::io::stdout();
    loop {
        let block = tokio::select! {
            next = watcher.next() => next.map_err(|e| Failure::Runtime(e.to_string()))?,
            _ = tokio::signal::ctrl_c() => return Ok(()),
        };
        let Some(block) = block else { return Ok(()) };
        match tracker.push(block) {
            Ok(Some(sample)) => {
                let mut out = stdout.lock();
                let _ = writeln!(out, "{}", tps_line(&sample, "node0"));
                let _ = out.flush();
            }
            Ok(None) => {}
            Err(e) => return Err(Failure::Runtime(e.to_string())),
        }
    }
}

fn report(input: PathBuf, format: Format) -> Outcome {
    let bytes = std::fs::read(&input).map_err(|e| Failure::Config(format!("reading {}: {e}", input.display())))?;
    let summary = import_json(&bytes).map_err(|e| Failure::Config(format!("{}: {e}", input.display())))?;
    match format {
        Format::Text => print!("{}", render_summary(&summary)),
        Format::Csv => print!(
            "{}",
            export_profile_csv(&summary).map_err(|e| Failure::Runtime(e.to_string()))?
        ),
    }
    Ok(())
}
