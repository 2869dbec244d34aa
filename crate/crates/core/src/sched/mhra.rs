//! Greedy multi-ordering placement and the baselines.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::cluster::cluster_indices;
use super::objective::{CostModel, Evaluation};
use super::{build_cost_model, startup_energy_threshold, PredictionTable, Problem, Strategy};
use crate::error::{Error, Result};

/// Unit orderings tried by the greedy placer, in tie-break order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Heuristic {
    ShortestRuntimeFirst,
    LongestRuntimeFirst,
    HighestEnergyFirst,
    LowestEnergyFirst,
}

impl Heuristic {
    pub const ALL: [Heuristic; 4] = [
        Heuristic::ShortestRuntimeFirst,
        Heuristic::LongestRuntimeFirst,
        Heuristic::HighestEnergyFirst,
        Heuristic::LowestEnergyFirst,
    ];

    /// Unit indices in placement order. Keys are means across machines;
    /// equal keys keep unit order.
    pub fn order(self, cost: &CostModel<'_>) -> Vec<usize> {
        let keys: Vec<f64> = cost
            .units
            .iter()
            .map(|u| match self {
                Self::ShortestRuntimeFirst | Self::LongestRuntimeFirst => u.mean_runtime_s(),
                Self::HighestEnergyFirst | Self::LowestEnergyFirst => u.mean_energy_j(),
            })
            .collect();
        let mut order: Vec<usize> = (0..keys.len()).collect();
        match self {
            Self::ShortestRuntimeFirst | Self::LowestEnergyFirst => order.sort_by(|&a, &b| keys[a].total_cmp(&keys[b])),
            Self::LongestRuntimeFirst | Self::HighestEnergyFirst => order.sort_by(|&a, &b| keys[b].total_cmp(&keys[a])),
        }
        order
    }
}

impl fmt::Display for Heuristic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::ShortestRuntimeFirst => "shortest-runtime-first",
            Self::LongestRuntimeFirst => "longest-runtime-first",
            Self::HighestEnergyFirst => "highest-energy-first",
            Self::LowestEnergyFirst => "lowest-energy-first",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GreedyRun {
    pub heuristic: Heuristic,
    /// `(unit, machine position)` in placement order.
    pub placements: Vec<(usize, usize)>,
    pub evaluation: Evaluation,
}

/// Place every unit, in the heuristic's order, on the machine giving the
/// lowest objective for the schedule so far; a later machine must be
/// strictly better to displace an earlier one.
///
/// A candidate only changes its own machine's totals, so those are rebuilt
/// from the committed totals plus the new unit while the other machines are
/// reused. Per-machine sums accumulate in placement order either way, so
/// every candidate's objective is bit-identical to `CostModel::evaluate` on
/// the extended schedule.
pub fn greedy(cost: &CostModel<'_>, heuristic: Heuristic) -> GreedyRun {
    let machines = cost.fleet.len();
    let mut placements: Vec<(usize, usize)> = Vec::with_capacity(cost.units.len());
    let mut loads = cost.empty_loads();
    let mut candidate = loads[0].clone();
    let mut current = cost.totals(&loads);
    for u in heuristic.order(cost) {
        let mut best: Option<(usize, Evaluation)> = None;
        for m in 0..machines {
            candidate.clone_from(&loads[m]);
            candidate.add(&cost.units[u], m);
            std::mem::swap(&mut loads[m], &mut candidate);
            let e = cost.totals(&loads);
            std::mem::swap(&mut loads[m], &mut candidate);
            if best.is_none_or(|(_, b)| e.objective < b.objective) {
                best = Some((m, e));
            }
        }
        let (m, e) = best.expect("fleet is non-empty");
        loads[m].add(&cost.units[u], m);
        placements.push((u, m));
        current = e;
    }
    GreedyRun {
        heuristic,
        placements,
        evaluation: current,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskAssignment {
    pub task_id: String,
    pub cluster_id: usize,
    pub machine_id: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    pub strategy: Strategy,
    /// One entry per task, in workload order.
    pub assignments: Vec<TaskAssignment>,
    /// `(cluster_id, machine position)` in the order units were placed.
    pub placements: Vec<(usize, usize)>,
    pub clusters: usize,
    pub alpha: f64,
    pub sf1_j: f64,
    pub sf2_s: f64,
    pub predicted_e_tot_j: f64,
    pub predicted_c_max_s: f64,
    pub objective: f64,
    pub heuristic: Option<Heuristic>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleSummary {
    pub strategy: Strategy,
    pub alpha: f64,
    pub sf1_j: f64,
    pub sf2_s: f64,
    pub predicted_e_tot_j: f64,
    pub predicted_c_max_s: f64,
    pub objective: f64,
    pub heuristic_chosen: Option<Heuristic>,
    pub clusters: usize,
    pub scheduling_wall_time_s: Option<f64>,
}

impl Schedule {
    fn empty(strategy: Strategy, alpha: f64) -> Self {
        Self {
            strategy,
            assignments: Vec::new(),
            placements: Vec::new(),
            clusters: 0,
            alpha,
            sf1_j: 1.0,
            sf2_s: 1.0,
            predicted_e_tot_j: 0.0,
            predicted_c_max_s: 0.0,
            objective: 0.0,
            heuristic: None,
        }
    }

    fn assemble(problem: &Problem<'_>, strategy: Strategy, cost: &CostModel<'_>, run: GreedyRun, heuristic: Option<Heuristic>) -> Self {
        let mut slots: Vec<Option<TaskAssignment>> = vec![None; problem.tasks.len()];
        for &(u, m) in &run.placements {
            let unit = &cost.units[u];
            for &t in &unit.tasks {
                slots[t] = Some(TaskAssignment {
                    task_id: problem.tasks[t].task_id.clone(),
                    cluster_id: unit.cluster_id,
                    machine_id: cost.fleet[m].machine_id.clone(),
                });
            }
        }
        Self {
            strategy,
            assignments: slots.into_iter().map(|s| s.expect("every task belongs to a placed unit")).collect(),
            placements: run.placements.iter().map(|&(u, m)| (cost.units[u].cluster_id, m)).collect(),
            clusters: cost.units.len(),
            alpha: cost.weights.alpha,
            sf1_j: cost.weights.sf1_j,
            sf2_s: cost.weights.sf2_s,
            predicted_e_tot_j: run.evaluation.e_tot_j,
            predicted_c_max_s: run.evaluation.c_max_s,
            objective: run.evaluation.objective,
            heuristic,
        }
    }

    pub fn summary(&self, wall_time_s: Option<f64>) -> ScheduleSummary {
        ScheduleSummary {
            strategy: self.strategy.clone(),
            alpha: self.alpha,
            sf1_j: self.sf1_j,
            sf2_s: self.sf2_s,
            predicted_e_tot_j: self.predicted_e_tot_j,
            predicted_c_max_s: self.predicted_c_max_s,
            objective: self.objective,
            heuristic_chosen: self.heuristic,
            clusters: self.clusters,
            scheduling_wall_time_s: wall_time_s,
        }
    }

    /// Tasks per machine, in fleet order.
    pub fn counts(&self, fleet: &crate::model::Fleet) -> Vec<(String, usize)> {
        let mut counts: Vec<(String, usize)> = fleet.machines().iter().map(|m| (m.machine_id.clone(), 0)).collect();
        for a in &self.assignments {
            if let Some(p) = fleet.position(&a.machine_id) {
                counts[p].1 += 1;
            }
        }
        counts
    }
}

/// Cost model for a batch: clustered at `threshold_j`, or one unit per task
/// when `None`.
pub fn cost_model<'a>(problem: &Problem<'a>, threshold_j: Option<f64>) -> Result<CostModel<'a>> {
    problem.check()?;
    let table = PredictionTable::build(problem.tasks, problem.fleet, problem.profiles)?;
    let groups = match threshold_j {
        Some(threshold) => {
            let rows: Vec<Vec<f64>> = (0..table.rows.len()).map(|r| table.row_vector(r)).collect();
            let refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
            cluster_indices(&refs, &table.task_row, threshold)
        }
        None => (0..problem.tasks.len()).map(|t| vec![t]).collect(),
    };
    build_cost_model(problem, &table, groups)
}

fn best_of_heuristics(problem: &Problem<'_>, strategy: Strategy, cost: &CostModel<'_>) -> Schedule {
    let mut best: Option<GreedyRun> = None;
    for h in Heuristic::ALL {
        let run = greedy(cost, h);
        if best
            .as_ref()
            .is_none_or(|b| run.evaluation.objective < b.evaluation.objective)
        {
            best = Some(run);
        }
    }
    let run = best.expect("four heuristics");
    let h = run.heuristic;
    Schedule::assemble(problem, strategy, cost, run, Some(h))
}

/// Cluster MHRA with an explicit clustering threshold.
pub fn schedule_clustered(problem: &Problem<'_>, threshold_j: f64) -> Result<Schedule> {
    problem.check()?;
    if problem.tasks.is_empty() {
        return Ok(Schedule::empty(Strategy::ClusterMhra, problem.alpha));
    }
    let cost = cost_model(problem, Some(threshold_j))?;
    Ok(best_of_heuristics(problem, Strategy::ClusterMhra, &cost))
}

/// Tasks are clustered until each cluster is worth a node on the cheapest
/// batch machine, then placed cluster by cluster.
pub fn schedule_cluster_mhra(problem: &Problem<'_>) -> Result<Schedule> {
    schedule_clustered(problem, startup_energy_threshold(problem.fleet))
}

/// The same greedy search with every task as its own unit.
pub fn schedule_mhra(problem: &Problem<'_>) -> Result<Schedule> {
    problem.check()?;
    if problem.tasks.is_empty() {
        return Ok(Schedule::empty(Strategy::Mhra, problem.alpha));
    }
    let cost = cost_model(problem, None)?;
    Ok(best_of_heuristics(problem, Strategy::Mhra, &cost))
}

fn fixed(problem: &Problem<'_>, strategy: Strategy, machine_of: impl Fn(usize) -> usize) -> Result<Schedule> {
    problem.check()?;
    if problem.tasks.is_empty() {
        return Ok(Schedule::empty(strategy, problem.alpha));
    }
    let cost = cost_model(problem, None)?;
    let placements: Vec<(usize, usize)> = (0..cost.units.len()).map(|u| (u, machine_of(u))).collect();
    let evaluation = cost.evaluate(&placements)?;
    let run = GreedyRun {
        heuristic: Heuristic::ShortestRuntimeFirst,
        placements,
        evaluation,
    };
    Ok(Schedule::assemble(problem, strategy, &cost, run, None))
}

/// Task `i` goes to machine `(offset + i) mod |fleet|`. The offset lets
/// successive batches continue the rotation.
pub fn schedule_round_robin(problem: &Problem<'_>, offset: usize) -> Result<Schedule> {
    let n = problem.fleet.len().max(1);
    fixed(problem, Strategy::RoundRobin, |t| (offset + t) % n)
}

/// Everything on one machine.
pub fn schedule_single(problem: &Problem<'_>, machine_id: &str) -> Result<Schedule> {
    let m = problem
        .fleet
        .position(machine_id)
        .ok_or_else(|| Error::Config(format!("unknown machine `{machine_id}` for single-machine strategy")))?;
    fixed(problem, Strategy::Single(machine_id.to_string()), |_| m)
}

pub fn schedule(strategy: &Strategy, problem: &Problem<'_>) -> Result<Schedule> {
    match strategy {
        Strategy::ClusterMhra => schedule_cluster_mhra(problem),
        Strategy::Mhra => schedule_mhra(problem),
        Strategy::RoundRobin => schedule_round_robin(problem, 0),
        Strategy::Single(id) => schedule_single(problem, id),
    }
}
