//! Run summaries and their on-disk forms: the timestamped log, summary JSON,
//! per-transaction CSV and time-series line protocol.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::duration::Duration;
use crate::metrics::{aggregate_tps, latency_stats, samples_in_range, LatencyStats, Rate, ResourceSample, TpsSample};
use crate::plan::Mode;
use crate::record::{ProfileResult, TxRecord};

const STARTED_AT_FORMAT: &str = "%Y-%m-%d %H:%M:%S";

mod started_at_format {
    use chrono::NaiveDateTime;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(t: &NaiveDateTime, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&t.format(super::STARTED_AT_FORMAT).to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<NaiveDateTime, D::Error> {
        let text = String::deserialize(d)?;
        NaiveDateTime::parse_from_str(&text, super::STARTED_AT_FORMAT).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct ProfileSummary {
    pub index: usize,
    pub mode: Mode,
    pub produced: u64,
    pub included: u64,
    pub failed_timeout: u64,
    pub rejected: u64,
    pub wall_time: Duration,
    pub quiet_period: Duration,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tps: Option<Rate>,
    pub latency: LatencyStats,
    /// Submissions per node, in plan order.
    pub per_node: Vec<u64>,
}

impl ProfileSummary {
    pub fn from_result(result: &ProfileResult, samples: &[TpsSample]) -> Self {
        let tps = result
            .block_range()
            .and_then(|(first, last)| aggregate_tps(&samples_in_range(samples, first, last)));
        let latency = match result.mode {
            Mode::Transaction => latency_stats(&result.tx_latencies()),
            Mode::Read => latency_stats(&result.read_latencies()),
        };
        Self {
            index: result.profile_index,
            mode: result.mode,
            produced: result.produced,
            included: result.included,
            failed_timeout: result.failed_timeout,
            rejected: result.rejected,
            wall_time: result.wall_time,
            quiet_period: result.quiet_period,
            tps,
            latency,
            per_node: result.per_node.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct RunSummary {
    #[serde(with = "started_at_format")]
    pub started_at: NaiveDateTime,
    pub total_execution: Duration,
    pub profiles: Vec<ProfileSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tps_overall: Option<Rate>,
    pub latency: LatencyStats,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub read_latency: Option<LatencyStats>,
    pub resources: Vec<ResourceSample>,
    /// Set when a profile aborted; completed profiles are still listed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aborted: Option<String>,
}

impl RunSummary {
    pub fn empty(started_at: NaiveDateTime) -> Self {
        Self {
            started_at: truncate_to_seconds(started_at),
            total_execution: Duration::ZERO,
            profiles: Vec::new(),
            tps_overall: None,
            latency: LatencyStats::default(),
            read_latency: None,
            resources: Vec::new(),
            aborted: None,
        }
    }

    /// Assembles a summary from finished profiles and the monitored blocks.
    pub fn build(
        started_at: NaiveDateTime,
        total_execution: Duration,
        results: &[ProfileResult],
        samples: &[TpsSample],
        resources: Vec<ResourceSample>,
    ) -> Self {
        let profiles = results
            .iter()
            .map(|r| ProfileSummary::from_result(r, samples))
            .collect();

        let ranges: Vec<(u64, u64)> = results.iter().filter_map(ProfileResult::block_range).collect();
        let tps_overall = match (ranges.iter().map(|r| r.0).min(), ranges.iter().map(|r| r.1).max()) {
            (Some(first), Some(last)) => aggregate_tps(&samples_in_range(samples, first, last)),
            _ => None,
        };

        let tx_latencies: Vec<u64> = results.iter().flat_map(ProfileResult::tx_latencies).collect();
        let has_reads = results.iter().any(|r| r.mode == Mode::Read);
        let read_latency = has_reads.then(|| {
            let reads: Vec<u64> = results.iter().flat_map(ProfileResult::read_latencies).collect();
            latency_stats(&reads)
        });

        Self {
            started_at: truncate_to_seconds(started_at),
            total_execution,
            profiles,
            tps_overall,
            latency: latency_stats(&tx_latencies),
            read_latency,
            resources,
            aborted: None,
        }
    }

    pub fn total_produced(&self) -> u64 {
        self.profiles.iter().map(|p| p.produced).sum()
    }

    pub fn total_included(&self) -> u64 {
        self.profiles.iter().map(|p| p.included).sum()
    }

    pub fn total_failed_timeout(&self) -> u64 {
        self.profiles.iter().map(|p| p.failed_timeout).sum()
    }

    pub fn total_rejected(&self) -> u64 {
        self.profiles.iter().map(|p| p.rejected).sum()
    }
}

fn truncate_to_seconds(t: NaiveDateTime) -> NaiveDateTime {
    use chrono::Timelike;
    t.with_nanosecond(0).unwrap_or(t)
}

/// `DD_MM_YY-HH_MM.log`, 24-hour clock.
pub fn log_filename(started_at: &NaiveDateTime) -> String {
    format!("{}.log", log_stem(started_at))
}

pub fn log_stem(started_at: &NaiveDateTime) -> String {
    started_at.format("%d_%m_%y-%H_%M").to_string()
}

/// First of `stem`, `stem-2`, `stem-3`, … for which `taken` is false.
pub fn unique_stem(stem: &str, taken: impl Fn(&str) -> bool) -> String {
    if !taken(stem) {
        return stem.to_string();
    }
    (2u64..)
        .map(|n| format!("{stem}-{n}"))
        .find(|candidate| !taken(candidate))
        .expect("unbounded suffix search")
}

fn fmt_latency(ns: Option<u64>) -> String {
    match ns {
        Some(ns) => format!("{:.3}ms", ns as f64 / 1e6),
        None => "-".to_string(),
    }
}

fn latency_line(stats: &LatencyStats) -> String {
    if stats.count == 0 {
        return "count 0".to_string();
    }
    format!(
        "count {}, min {}, mean {}, p50 {}, p95 {}, p99 {}, max {}",
        stats.count,
        fmt_latency(stats.min),
        fmt_latency(stats.mean),
        fmt_latency(stats.p50),
        fmt_latency(stats.p95),
        fmt_latency(stats.p99),
        fmt_latency(stats.max),
    )
}

fn rate_text(rate: Option<Rate>) -> String {
    match rate {
        Some(r) => format!("{r} ({} tx / {} s)", r.txs, r.seconds),
        None => "-".to_string(),
    }
}

/// Human-readable summary written to the log file.
pub fn render_summary(summary: &RunSummary) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "hammer run summary");
    let _ = writeln!(out, "started at:           {}", summary.started_at.format(STARTED_AT_FORMAT));
    let _ = writeln!(out, "total execution time: {}", summary.total_execution);
    let _ = writeln!(out, "sections:             {}", summary.profiles.len());
    if let Some(reason) = &summary.aborted {
        let _ = writeln!(out, "ABORTED:              {reason}");
    }
    for p in &summary.profiles {
        let _ = writeln!(out);
        let _ = writeln!(out, "section {} ({})", p.index + 1, p.mode.as_str());
        let _ = writeln!(out, "  produced:        {}", p.produced);
        let _ = writeln!(out, "  included:        {}", p.included);
        let _ = writeln!(out, "  failed_timeout:  {}", p.failed_timeout);
        let _ = writeln!(out, "  rejected:        {}", p.rejected);
        let _ = writeln!(out, "  execution time:  {}", p.wall_time);
        let _ = writeln!(out, "  quiet period:    {}", p.quiet_period);
        let _ = writeln!(out, "  tps:             {}", rate_text(p.tps));
        let _ = writeln!(out, "  latency:         {}", latency_line(&p.latency));
    }
    let _ = writeln!(out);
    let _ = writeln!(out, "total produced:       {}", summary.total_produced());
    let _ = writeln!(out, "total included:       {}", summary.total_included());
    let _ = writeln!(out, "total failed_timeout: {}", summary.total_failed_timeout());
    let _ = writeln!(out, "total rejected:       {}", summary.total_rejected());
    let _ = writeln!(out, "overall tps:          {}", rate_text(summary.tps_overall));
    let _ = writeln!(out, "tx latency:           {}", latency_line(&summary.latency));
    if let Some(read) = &summary.read_latency {
        let _ = writeln!(out, "read latency:         {}", latency_line(read));
    }
    if !summary.resources.is_empty() {
        let peak_rss = summary.resources.iter().filter_map(|r| r.rss_bytes).max();
        let peak_cpu = summary
            .resources
            .iter()
            .filter_map(|r| r.cpu_percent)
            .fold(None, |acc: Option<f64>, c| Some(acc.map_or(c, |a| a.max(c))));
        let _ = writeln!(
            out,
            "resources:            {} samples, peak cpu {}, peak rss {}",
            summary.resources.len(),
            peak_cpu.map_or("-".into(), |c| format!("{c:.1}%")),
            peak_rss.map_or("-".into(), |b| format!("{b} bytes")),
        );
    }
    out
}

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("summary JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("posting metrics to {url}: {message}")]
    Post { url: String, message: String },
}

/// Stable-key-order JSON; absent optional values are omitted, not null.
pub fn export_json(summary: &RunSummary) -> Vec<u8> {
    let mut bytes = serde_json::to_vec_pretty(summary).expect("summary serializes");
    bytes.push(b'\n');
    bytes
}

pub fn import_json(bytes: &[u8]) -> Result<RunSummary, ReportError> {
    Ok(serde_json::from_slice(bytes)?)
}

pub const TX_CSV_HEADER: [&str; 6] = ["seq", "profile", "node", "submit_ns", "status", "latency_ns"];

/// One row per transaction record; `latency_ns` is empty unless included.
pub fn export_tx_csv<'a>(records: impl IntoIterator<Item = &'a TxRecord>) -> Result<String, ReportError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(TX_CSV_HEADER)?;
    for r in records {
        w.write_record([
            r.seq.to_string(),
            r.profile_index.to_string(),
            r.node_index.to_string(),
            r.submit_time.to_string(),
            r.status.as_str().to_string(),
            r.latency_ns().map(|l| l.to_string()).unwrap_or_default(),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| csv::Error::from(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Per-profile table re-rendered from a summary.
pub fn export_profile_csv(summary: &RunSummary) -> Result<String, ReportError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "profile",
        "mode",
        "produced",
        "included",
        "failed_timeout",
        "rejected",
        "wall_ms",
        "tps",
        "latency_p50_ns",
        "latency_p95_ns",
        "latency_p99_ns",
    ])?;
    let opt = |v: Option<u64>| v.map(|v| v.to_string()).unwrap_or_default();
    for p in &summary.profiles {
        w.write_record([
            p.index.to_string(),
            p.mode.as_str().to_string(),
            p.produced.to_string(),
            p.included.to_string(),
            p.failed_timeout.to_string(),
            p.rejected.to_string(),
            p.wall_time.as_millis().to_string(),
            p.tps.map(|r| format!("{r}")).unwrap_or_default(),
            opt(p.latency.p50),
            opt(p.latency.p95),
            opt(p.latency.p99),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| csv::Error::from(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Escapes a tag value: commas, equals signs and spaces get a backslash.
pub fn escape_tag(value: &str) -> String {
    let mut out = String::with_capacity(value.len());
    for c in value.chars() {
        if matches!(c, ',' | '=' | ' ' | '\\') {
            out.push('\\');
        }
        out.push(c);
    }
    out
}

/// Shortest decimal that parses back to `v`; integers print without a fraction.
fn decimal(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}

pub fn tps_line(sample: &TpsSample, node: &str) -> String {
    format!(
        "tps,node={} value={} {}",
        escape_tag(node),
        decimal(sample.tps().per_second()),
        sample.timestamp as u128 * 1_000_000_000
    )
}

fn resource_lines(sample: &ResourceSample, node: &str, out: &mut String) {
    let ts = sample.wall_time as u128 * 1_000_000;
    let node = escape_tag(node);
    if let Some(cpu) = sample.cpu_percent {
        let _ = writeln!(out, "cpu_percent,node={node} value={} {ts}", decimal(cpu));
    }
    if let Some(rss) = sample.rss_bytes {
        let _ = writeln!(out, "rss_bytes,node={node} value={rss} {ts}");
    }
}

/// One line per sample: `<measurement>,node=<label> value=<decimal> <unix-ns>`.
pub fn export_line_protocol(tps: &[TpsSample], resources: &[ResourceSample], node: &str) -> String {
    let mut out = String::new();
    for s in tps {
        out.push_str(&tps_line(s, node));
        out.push('\n');
    }
    for r in resources {
        resource_lines(r, node, &mut out);
    }
    out
}

pub async fn post_line_protocol(url: &str, body: String) -> Result<(), ReportError> {
    let err = |message: String| ReportError::Post {
        url: url.to_string(),
        message,
    };
    let response = reqwest::Client::new()
        .post(url)
        .header(reqwest::header::CONTENT_TYPE, "text/plain; charset=utf-8")
        .body(body)
        .send()
        .await
        .map_err(|e| err(e.to_string()))?;
    if !response.status().is_success() {
        return Err(err(format!("http status {}", response.status())));
    }
    Ok(())
}

/// Paths of everything a run writes.
#[derive(Debug, Clone)]
pub struct RunOutputs {
    pub dir: PathBuf,
    pub log: PathBuf,
    pub summary_json: PathBuf,
    pub tx_csv: PathBuf,
    pub line_protocol: PathBuf,
}

fn write_file(path: &Path, contents: &[u8]) -> Result<(), ReportError> {
    std::fs::write(path, contents).map_err(|source| ReportError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Writes all outputs into `<out_root>/<stem>/`, where the stem comes from
/// [`log_filename`] plus a `-N` suffix when an earlier run used the same minute.
pub fn write_run_outputs(
    out_root: &Path,
    summary: &RunSummary,
    records: &[&TxRecord],
    line_protocol: &str,
) -> Result<RunOutputs, ReportError> {
    std::fs::create_dir_all(out_root).map_err(|source| ReportError::Io {
        path: out_root.to_path_buf(),
        source,
    })?;
    let stem = unique_stem(&log_stem(&summary.started_at), |s| out_root.join(s).exists());
    let dir = out_root.join(&stem);
    std::fs::create_dir(&dir).map_err(|source| ReportError::Io {
        path: dir.clone(),
        source,
    })?;

    let outputs = RunOutputs {
        log: dir.join(format!("{stem}.log")),
        summary_json: dir.join("summary.json"),
        tx_csv: dir.join("transactions.csv"),
        line_protocol: dir.join("metrics.lp"),
        dir,
    };
    write_file(&outputs.log, render_summary(summary).as_bytes())?;
    write_file(&outputs.summary_json, &export_json(summary))?;
    write_file(&outputs.tx_csv, export_tx_csv(records.iter().copied())?.as_bytes())?;
    write_file(&outputs.line_protocol, line_protocol.as_bytes())?;
    Ok(outputs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;

    fn at(y: i32, mo: u32, d: u32, h: u32, mi: u32) -> NaiveDateTime {
        NaiveDate::from_ymd_opt(y, mo, d).unwrap().and_hms_opt(h, mi, 0).unwrap()
    }

    fn profile(index: usize, produced: u64, failed: u64) -> ProfileSummary {
        ProfileSummary {
            index,
            mode: Mode::Transaction,
            produced,
            included: produced - failed,
            failed_timeout: failed,
            rejected: 0,
            wall_time: Duration::from_secs(2),
            quiet_period: Duration::ZERO,
            tps: Some(Rate { txs: produced - failed, seconds: 2 }),
            latency: latency_stats(&[1_000_000_000, 2_000_000_000]),
            per_node: vec![produced],
        }
    }

    #[test]
    fn log_filename_examples() {
        assert_eq!(log_filename(&at(2021, 6, 5, 9, 7)), "05_06_21-09_07.log");
        assert_eq!(log_filename(&at(2021, 12, 31, 23, 59)), "31_12_21-23_59.log");
    }

    #[test]
    fn collision_suffixes() {
        let taken = ["05_06_21-09_07", "05_06_21-09_07-2"];
        assert_eq!(unique_stem("05_06_21-09_07", |s| taken.contains(&s)), "05_06_21-09_07-3");
        assert_eq!(unique_stem("x", |_| false), "x");
    }

    #[test]
    fn summary_mentions_sections_and_total() {
        let mut s = RunSummary::empty(at(2021, 6, 5, 9, 7));
        s.profiles = vec![profile(0, 1000, 0), profile(1, 2000, 0)];
        let text = render_summary(&s);
        assert!(text.contains("produced:        1000"));
        assert!(text.contains("produced:        2000"));
        assert!(text.contains("total produced:       3000"));
        assert!(text.contains("execution time:  2s"));
    }

    #[test]
    fn empty_and_failed_runs_render() {
        let s = RunSummary::empty(at(2021, 1, 1, 0, 0));
        let text = render_summary(&s);
        assert!(text.contains("total produced:       0"));
        assert!(text.contains("sections:             0"));

        let mut failed = s.clone();
        failed.profiles = vec![profile(0, 2000, 197)];
        assert!(render_summary(&failed).contains("failed_timeout:  197"));
    }

    #[test]
    fn json_round_trip_and_omission() {
        let mut s = RunSummary::empty(at(2021, 6, 5, 9, 7));
        s.profiles = vec![profile(0, 10, 1)];
        s.resources.push(ResourceSample {
            wall_time: 1,
            cpu_percent: Some(12.345678901234),
            rss_bytes: None,
            net_rx_bytes: Some(5),
            net_tx_bytes: Some(6),
        });
        let bytes = export_json(&s);
        let text = String::from_utf8(bytes.clone()).unwrap();
        assert!(!text.contains("tpsOverall"));
        assert!(!text.contains("null"));
        assert!(text.contains(r#""wallTime": "2s""#));
        assert_eq!(import_json(&bytes).unwrap(), s);
    }

    #[test]
    fn tx_csv_columns() {
        let mut a = TxRecord::pending(0, 0, 1, 100);
        a.mark_included(2, 350);
        let b = TxRecord::pending(1, 0, 0, 120);
        let text = export_tx_csv([&a, &b]).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "seq,profile,node,submit_ns,status,latency_ns");
        assert_eq!(lines[1], "0,0,1,100,included,250");
        assert_eq!(lines[2], "1,0,0,120,pending,");
    }

    #[test]
    fn line_protocol_examples() {
        let s = TpsSample { block_number: 1, timestamp: 1_600_000_000, tx_count: 500, span_seconds: 1 };
        assert_eq!(tps_line(&s, "node0"), "tps,node=node0 value=500 1600000000000000000");
        assert_eq!(export_line_protocol(&[], &[], "node0"), "");
        assert!(tps_line(&s, "my node").starts_with(r"tps,node=my\ node value=500 "));
        let frac = TpsSample { tx_count: 1100, span_seconds: 3, ..s };
        assert!(tps_line(&frac, "n").contains("value=366.6666666666667 "));
    }
}
