//! Fused energy/performance metrics and side-by-side comparison of runs.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::SimulationResult;
use crate::error::{Error, Result};

/// Energy-delay product, J·s.
pub fn edp(energy_j: f64, runtime_s: f64) -> f64 {
    energy_j * runtime_s
}

/// Energy-delay-squared product, J·s². Weighs runtime more heavily than
/// [`edp`].
pub fn ed2p(energy_j: f64, runtime_s: f64) -> f64 {
    energy_j * runtime_s * runtime_s
}

/// One run to compare. `workload_hash` is `None` for hand-entered figures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub label: String,
    #[serde(default)]
    pub workload_hash: Option<String>,
    pub makespan_s: f64,
    pub node_energy_j: f64,
    #[serde(default)]
    pub transfer_energy_j: f64,
}

impl RunMetrics {
    pub fn new(label: impl Into<String>, node_energy_j: f64, makespan_s: f64) -> Self {
        Self {
            label: label.into(),
            workload_hash: None,
            makespan_s,
            node_energy_j,
            transfer_energy_j: 0.0,
        }
    }
}

impl From<&SimulationResult> for RunMetrics {
    fn from(r: &SimulationResult) -> Self {
        Self {
            label: format!("{} (alpha={})", r.strategy, r.alpha),
            workload_hash: Some(r.workload_hash.clone()),
            makespan_s: r.makespan_s,
            node_energy_j: r.node_energy_j,
            transfer_energy_j: r.transfer_energy_j,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub label: String,
    pub runtime_s: f64,
    pub energy_j: f64,
    pub transfer_energy_j: f64,
    pub edp: f64,
    pub ed2p: f64,
    /// Divided by the smallest EDP in the table.
    pub edp_normalized: f64,
    pub ed2p_normalized: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub rows: Vec<ComparisonRow>,
}

/// Tabulate runs of the same workload with EDP and ED2P normalized to their
/// column minimum.
pub fn compare(runs: &[RunMetrics]) -> Result<Comparison> {
    if runs.len() < 2 {
        return Err(Error::Config("comparison needs at least two runs".into()));
    }
    let mut hashes = runs.iter().filter_map(|r| r.workload_hash.as_deref());
    if let Some(first) = hashes.next() {
        if let Some(other) = hashes.find(|h| *h != first) {
            return Err(Error::Config(format!(
                "runs come from different workloads ({first} vs {other})"
            )));
        }
    }
    for r in runs {
        let ok = [r.makespan_s, r.node_energy_j, r.transfer_energy_j]
            .iter()
            .all(|v| v.is_finite() && *v >= 0.0);
        if !ok {
            return Err(Error::validation(&r.label, "runtime and energies must be finite and >= 0"));
        }
    }
    let edps: Vec<f64> = runs.iter().map(|r| edp(r.node_energy_j, r.makespan_s)).collect();
    let ed2ps: Vec<f64> = runs.iter().map(|r| ed2p(r.node_energy_j, r.makespan_s)).collect();
    let min_edp = edps.iter().copied().fold(f64::INFINITY, f64::min);
    let min_ed2p = ed2ps.iter().copied().fold(f64::INFINITY, f64::min);
    // A zero minimum leaves nothing to normalize against; report raw ratios
    // as undefined rather than infinite.
    let norm = |v: f64, min: f64| if min > 0.0 { v / min } else { f64::NAN };
    let rows = runs
        .iter()
        .zip(edps.iter().zip(&ed2ps))
        .map(|(r, (&e1, &e2))| ComparisonRow {
            label: r.label.clone(),
            runtime_s: r.makespan_s,
            energy_j: r.node_energy_j,
            transfer_energy_j: r.transfer_energy_j,
            edp: e1,
            ed2p: e2,
            edp_normalized: norm(e1, min_edp),
            ed2p_normalized: norm(e2, min_ed2p),
        })
        .collect();
    Ok(Comparison { rows })
}

const HEADER: [&str; 8] = [
    "label",
    "runtime_s",
    "energy_j",
    "transfer_energy_j",
    "edp",
    "ed2p",
    "edp_normalized",
    "ed2p_normalized",
];

impl ComparisonRow {
    fn cells(&self) -> [String; 8] {
        [
            self.label.clone(),
            format!("{:.3}", self.runtime_s),
            format!("{:.3}", self.energy_j),
            format!("{:.3}", self.transfer_energy_j),
            format!("{:.3}", self.edp),
            format!("{:.3}", self.ed2p),
            format!("{:.3}", self.edp_normalized),
            format!("{:.3}", self.ed2p_normalized),
        ]
    }
}

impl Comparison {
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(HEADER).expect("in-memory write");
        for r in &self.rows {
            w.write_record(r.cells()).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv output is utf-8")
    }

    pub fn to_markdown(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "| {} |", HEADER.join(" | "));
        let _ = writeln!(out, "|{}", "---|".repeat(HEADER.len()));
        for r in &self.rows {
            let _ = writeln!(out, "| {} |", r.cells().join(" | "));
        }
        out
    }
}
