use std::fmt::Write as _;

use serde::Serialize;

use crate::kernel_search::ResourceUsage;
use crate::mlp_engine::KernelAssignment;
use crate::time::SimTime;

/// Bumped whenever a field of [`Metrics`] or the trace CSV changes.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct LatencySummary {
    pub p50_ns: f64,
    pub p95_ns: f64,
    pub p99_ns: f64,
    pub max_ns: f64,
    pub mean_ns: f64,
}

impl LatencySummary {
    /// Nearest-rank percentiles over `latencies`; zeros when empty.
    pub fn from_latencies(latencies: &[SimTime]) -> Self {
        if latencies.is_empty() {
            return LatencySummary::default();
        }
        let mut v = latencies.to_vec();
        v.sort_unstable();
        let total: u128 = v.iter().map(|t| t.as_ps() as u128).sum();
        LatencySummary {
            p50_ns: nearest_rank(&v, 50.0).as_ns_f64(),
            p95_ns: nearest_rank(&v, 95.0).as_ns_f64(),
            p99_ns: nearest_rank(&v, 99.0).as_ns_f64(),
            max_ns: v[v.len() - 1].as_ns_f64(),
            mean_ns: total as f64 / v.len() as f64 / 1e3,
        }
    }
}

/// The smallest sample with at least `p`% of samples at or below it.
pub fn nearest_rank(sorted: &[SimTime], p: f64) -> SimTime {
    let n = sorted.len();
    let rank = ((p / 100.0) * n as f64).ceil() as usize;
    sorted[rank.clamp(1, n) - 1]
}

/// Scores checked against the reference model.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct FunctionalCheck {
    pub checked: usize,
    /// Bit-identical to the reference in the configuration's own summation order.
    pub exact: usize,
    /// Largest relative error against the sequential reference.
    pub max_rel_err: f64,
    /// Scores outside tolerance (for RM-SSD, any score that is not exact).
    pub mismatches: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metrics {
    pub schema_version: u32,
    pub scenario: String,
    pub mode: String,
    pub model: String,
    pub seed: u64,
    pub queries: usize,
    pub issued: usize,
    pub completed: usize,
    pub in_flight: usize,
    pub horizon_ns: f64,
    pub throughput_qps: f64,
    pub latency: LatencySummary,
    pub channel_utilization: Vec<f64>,
    pub ev_requests: u64,
    pub flash_page_reads: u64,
    pub dram_hits: u64,
    pub dram_misses: u64,
    pub miss_rate: Option<f64>,
    pub batch: usize,
    pub kernels: Option<KernelAssignment>,
    pub resources: Option<ResourceUsage>,
    pub events: u64,
    pub functional: FunctionalCheck,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Command,
    Embedding,
    BottomMlp,
    TopMlp,
    Result,
    Transfer,
    HostMlp,
    Lookups,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Command => "command",
            Stage::Embedding => "embedding",
            Stage::BottomMlp => "bottom_mlp",
            Stage::TopMlp => "top_mlp",
            Stage::Result => "result",
            Stage::Transfer => "transfer",
            Stage::HostMlp => "host_mlp",
            Stage::Lookups => "lookups",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct TraceRow {
    pub query: usize,
    pub stage: Stage,
    pub start: SimTime,
    pub end: SimTime,
}

/// `query_id,stage,start_ns,end_ns`, one row per query stage.
pub fn traces_csv(rows: &[TraceRow]) -> String {
    let mut s = String::from("query_id,stage,start_ns,end_ns\n");
    for r in rows {
        let _ = writeln!(s, "{},{},{},{}", r.query, r.stage.as_str(), r.start.as_ns_f64(), r.end.as_ns_f64());
    }
    s
}
