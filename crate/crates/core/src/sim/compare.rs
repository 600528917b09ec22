use serde::Serialize;

use super::metrics::Metrics;
use crate::error::{Error, Result};

/// One scenario's metrics relative to the baseline (the first row).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompareRow {
    pub scenario: String,
    pub mode: String,
    pub throughput_qps: f64,
    pub p50_ns: f64,
    pub p99_ns: f64,
    pub throughput_ratio: f64,
    pub p50_ratio: f64,
    pub p99_ratio: f64,
    /// `100 · (1 − p50 / base p50)`.
    pub p50_reduction_pct: f64,
    pub p99_reduction_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    pub model: String,
    pub seed: u64,
    pub baseline: String,
    pub rows: Vec<CompareRow>,
}

fn ratio(a: f64, b: f64) -> f64 {
    if b == 0.0 {
        if a == 0.0 {
            1.0
        } else {
            f64::INFINITY
        }
    } else {
        a / b
    }
}

/// Compares runs of one model and workload seed. Ratios are against the
/// first entry, for throughput and latency alike as `x / base`.
pub fn compare(runs: &[Metrics]) -> Result<Comparison> {
    let base = runs
        .first()
        .ok_or_else(|| Error::Config("compare needs at least one scenario".into()))?;
    for m in &runs[1..] {
        if m.model != base.model {
            return Err(Error::Config(format!(
                "scenario '{}' uses model '{}' but '{}' uses '{}'",
                m.scenario, m.model, base.scenario, base.model
            )));
        }
        if m.seed != base.seed {
            return Err(Error::Config(format!(
                "scenario '{}' ran with seed {} but '{}' with {}",
                m.scenario, m.seed, base.scenario, base.seed
            )));
        }
    }
    let rows = runs
        .iter()
        .map(|m| CompareRow {
            scenario: m.scenario.clone(),
            mode: m.mode.clone(),
            throughput_qps: m.throughput_qps,
            p50_ns: m.latency.p50_ns,
            p99_ns: m.latency.p99_ns,
            throughput_ratio: ratio(m.throughput_qps, base.throughput_qps),
            p50_ratio: ratio(m.latency.p50_ns, base.latency.p50_ns),
            p99_ratio: ratio(m.latency.p99_ns, base.latency.p99_ns),
            p50_reduction_pct: 100.0 * (1.0 - ratio(m.latency.p50_ns, base.latency.p50_ns)),
            p99_reduction_pct: 100.0 * (1.0 - ratio(m.latency.p99_ns, base.latency.p99_ns)),
        })
        .collect();
    Ok(Comparison {
        model: base.model.clone(),
        seed: base.seed,
        baseline: base.scenario.clone(),
        rows,
    })
}

impl Comparison {
    /// Aligned plain-text table.
    pub fn to_text(&self) -> String {
        let head = ["scenario", "mode", "qps", "p50_us", "p99_us", "qps_x", "p99_x", "p99_cut_%"];
        let mut cells: Vec<Vec<String>> = vec![head.iter().map(|s| s.to_string()).collect()];
        for r in &self.rows {
            cells.push(vec![
                r.scenario.clone(),
                r.mode.clone(),
                format!("{:.1}", r.throughput_qps),
                format!("{:.2}", r.p50_ns / 1e3),
                format!("{:.2}", r.p99_ns / 1e3),
                format!("{:.3}", r.throughput_ratio),
                format!("{:.3}", r.p99_ratio),
                format!("{:.1}", r.p99_reduction_pct),
            ]);
        }
        let widths: Vec<usize> = (0..head.len())
            .map(|c| cells.iter().map(|row| row[c].len()).max().unwrap_or(0))
            .collect();
        let mut out = format!("model {} seed {} baseline {}\n", self.model, self.seed, self.baseline);
        for row in &cells {
            let line: Vec<String> = row
                .iter()
                .zip(&widths)
                .enumerate()
                .map(|(i, (s, w))| if i < 2 { format!("{s:<w$}") } else { format!("{s:>w$}") })
                .collect();
            out.push_str(line.join("  ").trim_end());
            out.push('\n');
        }
        out
    }
}
