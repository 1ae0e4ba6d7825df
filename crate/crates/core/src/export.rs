//! Trace and report serialization.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use serde::Serialize;

use crate::simulate::SimulationTrace;

/// `k,x_true_0..,x_hat_0..,u_0..,ref_0..,stage_cost`
pub fn trace_csv_header(n: usize, m: usize) -> String {
    let mut cols = vec!["k".to_string()];
    cols.extend((0..n).map(|i| format!("x_true_{i}")));
    cols.extend((0..n).map(|i| format!("x_hat_{i}")));
    cols.extend((0..m).map(|i| format!("u_{i}")));
    cols.extend((0..n).map(|i| format!("ref_{i}")));
    cols.push("stage_cost".into());
    cols.join(",")
}

/// One row per step. Floats use the shortest round-trip representation,
/// switching to exponent form for very large or small magnitudes.
pub fn trace_csv(trace: &SimulationTrace) -> String {
    let mut out = trace_csv_header(trace.n, trace.m);
    out.push('\n');
    for k in 0..trace.len() {
        let _ = write!(out, "{k}");
        for v in trace
            .x_true(k)
            .iter()
            .chain(trace.x_hat(k))
            .chain(trace.u(k))
            .chain(trace.ref_used(k))
        {
            let _ = write!(out, ",{v:?}");
        }
        let _ = writeln!(out, ",{:?}", trace.stage_cost[k]);
    }
    out
}

/// Sidecar document for one rollout.
#[derive(Debug, Clone, Serialize)]
pub struct TraceMeta {
    pub rollout_index: usize,
    pub seed: u64,
    pub offset: Option<Vec<f64>>,
    pub steps: usize,
    pub total_cost: f64,
    pub average_cost_per_stage: f64,
    pub terminal_cost: Option<f64>,
    pub final_state: Vec<f64>,
    pub diverged: bool,
}

impl TraceMeta {
    pub fn from_trace(trace: &SimulationTrace) -> Self {
        Self {
            rollout_index: trace.rollout_index,
            seed: trace.seed,
            offset: trace.offset.as_ref().map(|w| w.iter().copied().collect()),
            steps: trace.len(),
            total_cost: trace.total_cost,
            average_cost_per_stage: trace.average_cost_per_stage,
            terminal_cost: trace.terminal_cost.is_finite().then_some(trace.terminal_cost),
            final_state: trace.final_state.iter().copied().collect(),
            diverged: trace.diverged,
        }
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> io::Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(io::Error::other)?;
    text.push('\n');
    fs::write(path, text)
}

/// Writes `trace_{i:05}.csv` and `trace_{i:05}.json` into `dir`.
pub fn write_trace(dir: &Path, trace: &SimulationTrace) -> io::Result<()> {
    let stem = format!("trace_{:05}", trace.rollout_index);
    fs::write(dir.join(format!("{stem}.csv")), trace_csv(trace))?;
    write_json(&dir.join(format!("{stem}.json")), &TraceMeta::from_trace(trace))
}
