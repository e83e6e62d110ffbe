//! Report files.
//!
//! Each cell of an experiment writes one JSON object whose `format` field is
//! `streamckpt-report v1`. A sweep also writes `summary.csv`, whose first
//! line is `# streamckpt-report v1`. Fields are only ever added; renaming
//! one requires a new format version.

use serde::{Deserialize, Serialize};
use streamckpt_core::sim::Protocol;

use crate::metrics::MetricsReport;
use crate::HarnessError;

pub const REPORT_FORMAT: &str = "streamckpt-report v1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellKey {
    pub query: String,
    pub parallelism: u32,
    pub protocol: Protocol,
    pub hot_ratio: f64,
    /// Index into the sweep's failure schedules (0 without a sweep).
    pub schedule: usize,
    pub rate: f64,
    pub seed: u64,
}

impl CellKey {
    /// File-name-safe identifier.
    pub fn id(&self) -> String {
        format!(
            "{}-p{}-hot{}-{}-f{}",
            self.query,
            self.parallelism,
            (self.hot_ratio * 100.0).round() as u32,
            self.protocol,
            self.schedule
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub format: String,
    pub cell: CellKey,
    /// `ok` or `failed`.
    pub status: String,
    pub error: Option<String>,
    pub metrics: Option<MetricsReport>,
}

impl CellReport {
    pub fn ok(cell: CellKey, metrics: MetricsReport) -> Self {
        CellReport { format: REPORT_FORMAT.into(), cell, status: "ok".into(), error: None, metrics: Some(metrics) }
    }

    pub fn failed(cell: CellKey, error: String) -> Self {
        CellReport { format: REPORT_FORMAT.into(), cell, status: "failed".into(), error: Some(error), metrics: None }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("reports serialize");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        let r: CellReport = serde_json::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        if r.format != REPORT_FORMAT {
            return Err(HarnessError::Config(format!("unsupported report format `{}`", r.format)));
        }
        Ok(r)
    }
}

#[derive(Serialize)]
struct SummaryRow<'a> {
    cell: String,
    query: &'a str,
    parallelism: u32,
    protocol: Protocol,
    hot_ratio: f64,
    schedule: usize,
    rate: f64,
    status: &'a str,
    p50_latency: Option<f64>,
    p99_latency: Option<f64>,
    avg_checkpoint_time: Option<f64>,
    restart_time: Option<f64>,
    recovery_time: Option<f64>,
    total_checkpoints: Option<u64>,
    invalid_checkpoints: Option<u64>,
    invalid_percent: Option<f64>,
    forced_checkpoints: Option<u64>,
    skipped_rounds: Option<u64>,
    message_overhead_ratio: Option<f64>,
    total_bytes: Option<u64>,
    throughput: Option<f64>,
    mst: Option<f64>,
    mst_normalized: Option<f64>,
}

/// One row per cell, in the given order.
pub fn summary_csv(cells: &[CellReport]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for c in cells {
        let m = c.metrics.as_ref();
        w.serialize(SummaryRow {
            cell: c.cell.id(),
            query: &c.cell.query,
            parallelism: c.cell.parallelism,
            protocol: c.cell.protocol,
            hot_ratio: c.cell.hot_ratio,
            schedule: c.cell.schedule,
            rate: c.cell.rate,
            status: &c.status,
            p50_latency: m.and_then(|m| m.p50_latency),
            p99_latency: m.and_then(|m| m.p99_latency),
            avg_checkpoint_time: m.and_then(|m| m.avg_checkpoint_time),
            restart_time: m.and_then(|m| m.restart_time),
            recovery_time: m.and_then(|m| m.recovery_time),
            total_checkpoints: m.map(|m| m.total_checkpoints),
            invalid_checkpoints: m.map(|m| m.invalid_checkpoints),
            invalid_percent: m.map(|m| m.invalid_percent),
            forced_checkpoints: m.map(|m| m.forced_checkpoints),
            skipped_rounds: m.map(|m| m.skipped_rounds),
            message_overhead_ratio: m.and_then(|m| m.message_overhead_ratio),
            total_bytes: m.map(|m| m.total_bytes),
            throughput: m.map(|m| m.throughput),
            mst: m.and_then(|m| m.mst),
            mst_normalized: m.and_then(|m| m.mst_normalized),
        })
        .expect("in-memory csv write");
    }
    let body = String::from_utf8(w.into_inner().expect("in-memory csv flush")).expect("csv is utf-8");
    format!("# {REPORT_FORMAT}\n{body}")
}
