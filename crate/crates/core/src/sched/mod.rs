//! Placement of a batch of tasks across the fleet.
//!
//! Tasks are turned into per-machine (runtime, energy) predictions, optionally
//! clustered into units large enough to justify a node, and the units are
//! placed greedily under several orderings. The ordering whose finished
//! schedule has the lowest objective wins.

mod cluster;
mod mhra;
mod objective;

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Fleet, Sharing, TaskSpec};
use crate::profile::{Prediction, ProfileStore};
use crate::transfer::{CacheLedger, TransferModel};

pub use cluster::{cluster_tasks, Cluster};
pub use mhra::{
    cost_model, greedy, schedule, schedule_cluster_mhra, schedule_clustered, schedule_mhra, schedule_round_robin,
    schedule_single, GreedyRun, Heuristic, Schedule, ScheduleSummary, TaskAssignment,
};
pub use objective::{CostModel, Evaluation, MachineState, SourceNeed, Unit, Weights};

/// One batch to place, with everything the scheduler reads.
#[derive(Debug, Clone, Copy)]
pub struct Problem<'a> {
    pub tasks: &'a [TaskSpec],
    pub fleet: &'a Fleet,
    pub profiles: &'a ProfileStore,
    pub transfer: &'a TransferModel,
    pub alpha: f64,
    /// Nodes and backlog carried over from earlier batches, by fleet position.
    pub state: Option<&'a [MachineState]>,
    /// Shared files already resident somewhere; they cost nothing to reuse.
    pub ledger: Option<&'a CacheLedger>,
}

impl<'a> Problem<'a> {
    pub fn new(tasks: &'a [TaskSpec], fleet: &'a Fleet, profiles: &'a ProfileStore, transfer: &'a TransferModel, alpha: f64) -> Self {
        Self {
            tasks,
            fleet,
            profiles,
            transfer,
            alpha,
            state: None,
            ledger: None,
        }
    }

    pub fn with_state(mut self, state: &'a [MachineState]) -> Self {
        self.state = Some(state);
        self
    }

    pub fn with_ledger(mut self, ledger: &'a CacheLedger) -> Self {
        self.ledger = Some(ledger);
        self
    }

    fn check(&self) -> Result<()> {
        if self.fleet.is_empty() {
            return Err(Error::Contract("cannot schedule onto an empty fleet".into()));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Contract(format!("alpha must lie in [0, 1], got {}", self.alpha)));
        }
        if let Some(s) = self.state {
            if s.len() != self.fleet.len() {
                return Err(Error::Contract("machine state must cover the whole fleet".into()));
            }
        }
        Ok(())
    }
}

/// How a batch is placed.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Strategy {
    ClusterMhra,
    Mhra,
    RoundRobin,
    Single(String),
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cluster-mhra" => Ok(Self::ClusterMhra),
            "mhra" => Ok(Self::Mhra),
            "round-robin" => Ok(Self::RoundRobin),
            _ => match s.strip_prefix("single:") {
                Some(id) if !id.is_empty() => Ok(Self::Single(id.to_string())),
                _ => Err(Error::Config(format!(
                    "unknown strategy `{s}` (expected cluster-mhra, mhra, round-robin or single:<machine_id>)"
                ))),
            },
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::ClusterMhra => f.write_str("cluster-mhra"),
            Self::Mhra => f.write_str("mhra"),
            Self::RoundRobin => f.write_str("round-robin"),
            Self::Single(id) => write!(f, "single:{id}"),
        }
    }
}

impl Serialize for Strategy {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Strategy {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskEmbedding {
    pub task_id: String,
    /// `(runtime_s, energy_j)` per machine, interleaved in fleet order.
    pub vector: Vec<f64>,
}

/// Predictions looked up once per distinct function.
#[derive(Debug, Clone)]
pub(crate) struct PredictionTable {
    /// One row per distinct function, one entry per machine.
    pub rows: Vec<Vec<Prediction>>,
    /// Row index of each task.
    pub task_row: Vec<usize>,
}

impl PredictionTable {
    pub fn build(tasks: &[TaskSpec], fleet: &Fleet, profiles: &ProfileStore) -> Result<Self> {
        let mut index: HashMap<&str, usize> = HashMap::new();
        let mut rows = Vec::new();
        let mut task_row = Vec::with_capacity(tasks.len());
        for t in tasks {
            let r = match index.get(t.function_id.as_str()) {
                Some(&r) => r,
                None => {
                    let row = fleet
                        .machines()
                        .iter()
                        .map(|m| profiles.lookup_prediction(fleet, &t.function_id, &m.machine_id))
                        .collect::<Result<Vec<_>>>()?;
                    rows.push(row);
                    index.insert(&t.function_id, rows.len() - 1);
                    rows.len() - 1
                }
            };
            task_row.push(r);
        }
        Ok(Self { rows, task_row })
    }

    pub fn row_vector(&self, r: usize) -> Vec<f64> {
        self.rows[r].iter().flat_map(|p| [p.runtime_s, p.energy_j]).collect()
    }

    pub fn of(&self, task: usize) -> &[Prediction] {
        &self.rows[self.task_row[task]]
    }
}

pub fn build_embeddings(tasks: &[TaskSpec], fleet: &Fleet, profiles: &ProfileStore) -> Result<Vec<TaskEmbedding>> {
    if fleet.is_empty() {
        return Err(Error::Contract("cannot embed tasks over an empty fleet".into()));
    }
    let table = PredictionTable::build(tasks, fleet, profiles)?;
    Ok(tasks
        .iter()
        .zip(&table.task_row)
        .map(|(t, &r)| TaskEmbedding {
            task_id: t.task_id.clone(),
            vector: table.row_vector(r),
        })
        .collect())
}

/// Single-machine totals `(energy_j, runtime_s)` for every machine: the batch
/// run on one node of that machine alone.
fn single_machine_totals(table: &PredictionTable, fleet: &Fleet) -> Vec<(f64, f64)> {
    let mut work = vec![0.0; fleet.len()];
    let mut dynamic = vec![0.0; fleet.len()];
    for t in 0..table.task_row.len() {
        for (m, p) in table.of(t).iter().enumerate() {
            work[m] += p.runtime_s;
            dynamic[m] += p.energy_j;
        }
    }
    fleet
        .machines()
        .iter()
        .enumerate()
        .map(|(m, spec)| {
            let runtime = spec.avg_queue_s + work[m] / spec.cores_per_node as f64;
            (spec.idle_power_w * runtime + dynamic[m], runtime)
        })
        .collect()
}

fn normalizers_from(table: &PredictionTable, fleet: &Fleet) -> (f64, f64) {
    let totals = single_machine_totals(table, fleet);
    let sf1 = totals.iter().map(|t| t.0).fold(0.0, f64::max);
    let sf2 = totals.iter().map(|t| t.1).fold(0.0, f64::max);
    // An all-zero batch would make the objective undefined; any positive
    // scale gives the same (zero) terms.
    let positive = |v: f64| if v > 0.0 && v.is_finite() { v } else { 1.0 };
    (positive(sf1), positive(sf2))
}

/// Pessimistic scales `(sf1_j, sf2_s)`: the worst single-machine energy and
/// runtime for the whole batch.
pub fn compute_normalizers(tasks: &[TaskSpec], fleet: &Fleet, profiles: &ProfileStore) -> Result<(f64, f64)> {
    if tasks.is_empty() {
        return Err(Error::Contract("normalizers need at least one task".into()));
    }
    if fleet.is_empty() {
        return Err(Error::Contract("normalizers need a non-empty fleet".into()));
    }
    let table = PredictionTable::build(tasks, fleet, profiles)?;
    Ok(normalizers_from(&table, fleet))
}

/// Energy needed to bring up a node on the cheapest batch-scheduled machine;
/// zero when no machine has a batch scheduler.
pub fn startup_energy_threshold(fleet: &Fleet) -> f64 {
    fleet
        .machines()
        .iter()
        .filter(|m| m.has_batch_scheduler)
        .map(|m| m.startup_energy_j())
        .reduce(f64::min)
        .unwrap_or(0.0)
}

/// Cost model over `groups` of task indices, one unit per group.
pub(crate) fn build_cost_model<'a>(
    problem: &Problem<'a>,
    table: &PredictionTable,
    groups: Vec<Vec<usize>>,
) -> Result<CostModel<'a>> {
    let fleet = problem.fleet;
    let (sf1, sf2) = normalizers_from(table, fleet);
    let weights = Weights::new(problem.alpha, sf1, sf2)?;
    let state = problem
        .state
        .map(<[MachineState]>::to_vec)
        .unwrap_or_else(|| vec![MachineState::default(); fleet.len()]);
    let mut cost = CostModel::new(fleet, problem.transfer, state, weights)?;
    let ledger = problem.ledger.filter(|l| !l.is_empty());

    let n = fleet.len();
    cost.units.reserve(groups.len());
    for (cluster_id, members) in groups.into_iter().enumerate() {
        let mut runtime = vec![0.0; n];
        let mut energy = vec![0.0; n];
        let mut longest = vec![0.0f64; n];
        let mut volume = vec![vec![(0u64, 0u64); n]; n];
        let mut seen_shared: HashSet<(usize, &str)> = HashSet::new();
        for &t in &members {
            for (m, p) in table.of(t).iter().enumerate() {
                runtime[m] += p.runtime_s;
                energy[m] += p.energy_j;
                longest[m] = longest[m].max(p.runtime_s);
            }
            for f in &problem.tasks[t].input_files {
                let src = fleet.position(&f.home_machine).ok_or_else(|| Error::Planning {
                    file: f.logical_path.clone(),
                    home: f.home_machine.clone(),
                })?;
                let shared = f.sharing == Sharing::Shared;
                if shared && !seen_shared.insert((src, f.logical_path.as_str())) {
                    continue;
                }
                for (dst, row) in volume.iter_mut().enumerate() {
                    if dst == src {
                        continue;
                    }
                    if shared && ledger.is_some_and(|l| l.contains(&fleet[dst].machine_id, &f.logical_path)) {
                        continue;
                    }
                    row[src].0 += 1;
                    row[src].1 += f.size_bytes;
                }
            }
        }
        let mut inbound = Vec::with_capacity(n);
        let mut transfer_energy = Vec::with_capacity(n);
        for (dst, row) in volume.iter().enumerate() {
            let needs: Vec<SourceNeed> = row
                .iter()
                .enumerate()
                .filter(|(_, v)| v.0 > 0)
                .map(|(src, &(files, bytes))| SourceNeed { src, files, bytes })
                .collect();
            transfer_energy.push(needs.iter().map(|s| s.bytes as f64 * cost.joules_per_byte(s.src, dst)).sum());
            inbound.push(needs);
        }
        cost.units.push(Unit {
            cluster_id,
            tasks: members,
            runtime_s: runtime,
            energy_j: energy,
            max_runtime_s: longest,
            inbound,
            transfer_energy_j: transfer_energy,
        });
    }
    Ok(cost)
}
