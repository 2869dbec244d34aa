//! Discrete-event simulation of workloads over the fleet.

pub mod catalog;
mod engine;
mod metrics;
mod workload;

use serde::{Deserialize, Serialize};

use crate::sched::Strategy;

pub use engine::{run_simulation, EventKind};
pub use metrics::{compare, ed2p, edp, Comparison, ComparisonRow, RunMetrics};
pub use workload::{
    benchmark_names, gen_moldesign_workload, gen_synthetic_workload, BenchmarkInputs, MolDesign, Workload, BENCHMARKS,
    MOLDESIGN_INFER, MOLDESIGN_SIMULATE, MOLDESIGN_TRAIN,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimOptions {
    pub alpha: f64,
    pub seed: u64,
    /// Tasks submitted within this span of the first pending one are placed
    /// together.
    pub batch_window_s: f64,
    /// Log-space spread of task durations and energies; 0 uses the means.
    pub duration_sigma: f64,
    /// Draw node queue waits from an exponential; otherwise wait the mean.
    pub stochastic_queue: bool,
    pub trace: bool,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            seed: 0,
            batch_window_s: 1.0,
            duration_sigma: 0.1,
            stochastic_queue: true,
            trace: false,
        }
    }
}

impl SimOptions {
    /// Means everywhere and no batching delay.
    pub fn deterministic(alpha: f64) -> Self {
        Self {
            alpha,
            batch_window_s: 0.0,
            duration_sigma: 0.0,
            stochastic_queue: false,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MachineResult {
    pub machine_id: String,
    pub tasks: usize,
    pub nodes_allocated: usize,
    pub idle_energy_j: f64,
    pub dynamic_energy_j: f64,
    pub node_energy_j: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimTaskRecord {
    pub task_id: String,
    pub machine_id: String,
    pub node: usize,
    pub submit_s: f64,
    pub scheduled_s: f64,
    /// Inputs present on the machine.
    pub ready_s: f64,
    pub start_s: f64,
    pub end_s: f64,
    pub energy_j: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub time_s: f64,
    pub kind: EventKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub task_id: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub machine_id: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub node: Option<usize>,
}

/// Outcome of one run. Node energy is idle plus dynamic; transfer energy is
/// reported beside it, not inside it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationResult {
    pub strategy: Strategy,
    pub alpha: f64,
    pub rng_seed: u64,
    pub workload_hash: String,
    pub batch_window_s: f64,
    pub makespan_s: f64,
    pub node_energy_j: f64,
    pub idle_energy_j: f64,
    pub dynamic_energy_j: f64,
    pub transfer_energy_j: f64,
    pub transferred_bytes: u64,
    pub tasks_completed: usize,
    pub batches: usize,
    pub edp: f64,
    pub ed2p: f64,
    pub machines: Vec<MachineResult>,
    #[serde(skip)]
    pub records: Vec<SimTaskRecord>,
    #[serde(skip)]
    pub trace: Vec<TraceEvent>,
}

impl SimulationResult {
    pub fn tasks_on(&self, machine_id: &str) -> usize {
        self.machines.iter().find(|m| m.machine_id == machine_id).map_or(0, |m| m.tasks)
    }
}

#[cfg(test)]
mod tests;
