//! Schedule cost estimation.
//!
//! A schedule is evaluated per machine from the summed predictions of the
//! units placed there: nodes used, compute span, start delay (queue wait or
//! inbound transfers, whichever is longer), and node energy over the time the
//! node is held. Batch-scheduled machines are charged idle power for their
//! own span plus the startup/release overhead; machines without a batch
//! scheduler are charged for the whole predicted workload span.

use crate::error::{Error, Result};
use crate::model::Fleet;
use crate::transfer::{NetworkPath, TransferModel};

/// Per-destination inbound volume from one source machine.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SourceNeed {
    pub src: usize,
    pub files: u64,
    pub bytes: u64,
}

/// A placement unit: a cluster of tasks, or a single task for the
/// per-task baselines. All vectors are indexed by fleet position.
#[derive(Debug, Clone, PartialEq)]
pub struct Unit {
    pub cluster_id: usize,
    /// Indices into the scheduled task list.
    pub tasks: Vec<usize>,
    pub runtime_s: Vec<f64>,
    pub energy_j: Vec<f64>,
    /// Longest single member runtime per machine.
    pub max_runtime_s: Vec<f64>,
    /// Inputs that would have to move if the unit ran on each machine.
    pub inbound: Vec<Vec<SourceNeed>>,
    pub transfer_energy_j: Vec<f64>,
}

impl Unit {
    pub fn mean_runtime_s(&self) -> f64 {
        crate::linreg::mean(&self.runtime_s)
    }

    pub fn mean_energy_j(&self) -> f64 {
        crate::linreg::mean(&self.energy_j)
    }
}

/// What is already running or allocated on a machine when a batch is
/// scheduled.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MachineState {
    /// `Some(t)`: a node is allocated (or requested) and is usable in `t`
    /// seconds, so no fresh queue wait or startup overhead applies.
    pub node_ready_in_s: Option<f64>,
    /// Predicted core-seconds of work already queued or running.
    pub backlog_core_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct PathCost {
    joules_per_bit: f64,
    time: Option<crate::transfer::TransferCoefficients>,
    bottleneck_bps: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub e_tot_j: f64,
    pub c_max_s: f64,
    pub objective: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Weights {
    pub alpha: f64,
    pub sf1_j: f64,
    pub sf2_s: f64,
}

impl Weights {
    pub fn new(alpha: f64, sf1_j: f64, sf2_s: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::Contract(format!("alpha must lie in [0, 1], got {alpha}")));
        }
        if !(sf1_j > 0.0 && sf2_s > 0.0) {
            return Err(Error::Contract(format!("normalizers must be positive, got sf1={sf1_j} sf2={sf2_s}")));
        }
        Ok(Self { alpha, sf1_j, sf2_s })
    }

    pub fn objective(&self, e_tot_j: f64, c_max_s: f64) -> f64 {
        self.alpha * e_tot_j / self.sf1_j + (1.0 - self.alpha) * c_max_s / self.sf2_s
    }
}

/// Running totals of what a partial schedule puts on one machine.
#[derive(Debug, PartialEq)]
pub(crate) struct MachineLoad {
    units: usize,
    tasks: u64,
    work_s: f64,
    dynamic_j: f64,
    max_runtime_s: f64,
    transfer_j: f64,
    inbound: Vec<(u64, u64)>,
}

impl Clone for MachineLoad {
    fn clone(&self) -> Self {
        Self {
            inbound: self.inbound.clone(),
            ..*self
        }
    }

    // Reuses the inbound buffer; the greedy step calls this per candidate.
    fn clone_from(&mut self, other: &Self) {
        self.units = other.units;
        self.tasks = other.tasks;
        self.work_s = other.work_s;
        self.dynamic_j = other.dynamic_j;
        self.max_runtime_s = other.max_runtime_s;
        self.transfer_j = other.transfer_j;
        self.inbound.clone_from(&other.inbound);
    }
}

impl MachineLoad {
    pub(crate) fn new(fleet_len: usize) -> Self {
        Self {
            units: 0,
            tasks: 0,
            work_s: 0.0,
            dynamic_j: 0.0,
            max_runtime_s: 0.0,
            transfer_j: 0.0,
            inbound: vec![(0, 0); fleet_len],
        }
    }

    fn clear(&mut self) {
        self.units = 0;
        self.tasks = 0;
        self.work_s = 0.0;
        self.dynamic_j = 0.0;
        self.max_runtime_s = 0.0;
        self.transfer_j = 0.0;
        self.inbound.iter_mut().for_each(|s| *s = (0, 0));
    }

    pub(crate) fn add(&mut self, unit: &Unit, m: usize) {
        self.units += 1;
        self.tasks += unit.tasks.len() as u64;
        self.work_s += unit.runtime_s[m];
        self.dynamic_j += unit.energy_j[m];
        self.max_runtime_s = self.max_runtime_s.max(unit.max_runtime_s[m]);
        self.transfer_j += unit.transfer_energy_j[m];
        for need in &unit.inbound[m] {
            let slot = &mut self.inbound[need.src];
            slot.0 += need.files;
            slot.1 += need.bytes;
        }
    }
}

/// Everything needed to cost a schedule over a fixed set of units.
#[derive(Debug, Clone)]
pub struct CostModel<'a> {
    pub fleet: &'a Fleet,
    pub units: Vec<Unit>,
    pub state: Vec<MachineState>,
    pub weights: Weights,
    paths: Vec<Vec<PathCost>>,
}

impl<'a> CostModel<'a> {
    /// Units start empty; attach them with [`CostModel::push_unit`] or by
    /// assigning `units`.
    pub fn new(fleet: &'a Fleet, transfer: &TransferModel, state: Vec<MachineState>, weights: Weights) -> Result<Self> {
        let n = fleet.len();
        if state.len() != n {
            return Err(Error::Contract("machine state must cover the whole fleet".into()));
        }
        let mut paths = Vec::with_capacity(n);
        for s in fleet.machines() {
            let mut row = Vec::with_capacity(n);
            for d in fleet.machines() {
                let p: NetworkPath = transfer.network.path(fleet, &s.machine_id, &d.machine_id)?;
                row.push(PathCost {
                    joules_per_bit: p.joules_per_bit(),
                    time: transfer.times.get(&s.machine_id, &d.machine_id).copied(),
                    bottleneck_bps: p.bottleneck_bps().unwrap_or(f64::INFINITY),
                });
            }
            paths.push(row);
        }
        Ok(Self {
            fleet,
            units: Vec::new(),
            state,
            weights,
            paths,
        })
    }

    pub fn push_unit(&mut self, unit: Unit) -> usize {
        self.units.push(unit);
        self.units.len() - 1
    }

    pub(crate) fn joules_per_byte(&self, src: usize, dst: usize) -> f64 {
        self.paths[src][dst].joules_per_bit * 8.0
    }

    fn transfer_time(&self, src: usize, dst: usize, files: u64, bytes: u64) -> f64 {
        if files == 0 && bytes == 0 {
            return 0.0;
        }
        let p = &self.paths[src][dst];
        match p.time {
            Some(c) => c.predict(files, bytes),
            None => bytes as f64 * 8.0 / p.bottleneck_bps,
        }
    }

    pub(crate) fn empty_loads(&self) -> Vec<MachineLoad> {
        vec![MachineLoad::new(self.fleet.len()); self.fleet.len()]
    }

    /// Full evaluation reusing `loads` as scratch space. Pairs must be in
    /// range.
    pub(crate) fn evaluate_with(&self, partial: &[(usize, usize)], loads: &mut [MachineLoad]) -> Evaluation {
        for l in loads.iter_mut() {
            l.clear();
        }
        for &(u, m) in partial {
            loads[m].add(&self.units[u], m);
        }
        self.totals(loads)
    }

    /// Nodes used, compute span and completion time of one machine.
    fn machine_timing(&self, m: usize, load: &MachineLoad) -> (f64, f64, f64) {
        let spec = &self.fleet[m];
        let cores = spec.cores_per_node as f64;
        let nodes = (load.tasks as f64 / cores).ceil().clamp(1.0, spec.max_nodes as f64);
        let span = ((load.work_s + self.state[m].backlog_core_s) / (cores * nodes)).max(load.max_runtime_s);
        let ready = self.state[m].node_ready_in_s.unwrap_or(spec.avg_queue_s);
        let inbound = load
            .inbound
            .iter()
            .enumerate()
            .map(|(src, &(f, b))| self.transfer_time(src, m, f, b))
            .fold(0.0, f64::max);
        (nodes, span, ready.max(inbound) + span)
    }

    pub(crate) fn totals(&self, loads: &[MachineLoad]) -> Evaluation {
        // Machines without a batch scheduler hold their nodes until the
        // makespan, which is only known after every machine is timed.
        let mut c_max: f64 = 0.0;
        let mut e_tot = 0.0;
        let mut held_to_end_w = 0.0;
        for (m, load) in loads.iter().enumerate() {
            if load.units == 0 {
                continue;
            }
            let spec = &self.fleet[m];
            let (nodes, span, completion) = self.machine_timing(m, load);
            c_max = c_max.max(completion);
            let overhead = if self.state[m].node_ready_in_s.is_some() { 0.0 } else { spec.overhead_s() };
            if spec.has_batch_scheduler {
                e_tot += spec.idle_power_w * (span + overhead) * nodes;
            } else {
                e_tot += spec.idle_power_w * overhead * nodes;
                held_to_end_w += spec.idle_power_w * nodes;
            }
            e_tot += load.dynamic_j + load.transfer_j;
        }
        e_tot += held_to_end_w * c_max;
        Evaluation {
            e_tot_j: e_tot,
            c_max_s: c_max,
            objective: self.weights.objective(e_tot, c_max),
        }
    }

    /// Objective of a partial schedule given as (unit, machine) pairs in
    /// placement order. Recomputes everything from scratch.
    pub fn evaluate(&self, partial: &[(usize, usize)]) -> Result<Evaluation> {
        for &(u, m) in partial {
            if u >= self.units.len() {
                return Err(Error::Contract(format!("unit {u} out of range")));
            }
            if m >= self.fleet.len() {
                return Err(Error::Contract(format!("machine {m} out of range")));
            }
        }
        Ok(self.evaluate_with(partial, &mut self.empty_loads()))
    }
}
