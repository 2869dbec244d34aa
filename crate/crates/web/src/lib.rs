//! Browser bindings for the static demo page in `www/`. Each export takes and
//! returns JSON text so the page needs no generated type glue.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use enplace::power::{self, PowerModel};
use enplace::sched::Strategy;
use enplace::sim::{self, catalog, RunMetrics, SimOptions, Workload};
use enplace::transfer::TransferModel;

#[derive(Debug, Serialize)]
pub struct SweepPoint {
    pub alpha: f64,
    pub makespan_s: f64,
    pub node_energy_j: f64,
    pub transfer_energy_j: f64,
    pub edp: f64,
    /// (machine_id, tasks placed there), in fleet order.
    pub tasks: Vec<(String, usize)>,
}

#[derive(Debug, Serialize)]
pub struct PowerFit {
    pub model: PowerModel,
    pub intervals_used: usize,
    pub dropped_counter_samples: usize,
    pub dropped_power_samples: usize,
    pub intercept_clamped: bool,
}

/// Simulate a synthetic batch on the reference fleet once per alpha.
/// `tasks_per_benchmark` tasks are drawn for each built-in benchmark.
pub fn alpha_sweep(tasks_per_benchmark: usize, seed: u64, strategy: &str, alphas: &[f64]) -> enplace::Result<Vec<SweepPoint>> {
    let strategy: Strategy = strategy.parse()?;
    let fleet = catalog::reference_fleet();
    let profiles = catalog::synthetic_profiles();
    let tasks = sim::gen_synthetic_workload(&sim::benchmark_names(), tasks_per_benchmark, seed, catalog::DESKTOP)?;
    let workload = Workload::Static { tasks };
    alphas
        .iter()
        .map(|&alpha| {
            let opts = SimOptions {
                alpha,
                seed,
                ..SimOptions::default()
            };
            let r = sim::run_simulation(&workload, &strategy, &fleet, &profiles, &TransferModel::default(), &opts)?;
            Ok(SweepPoint {
                alpha,
                makespan_s: r.makespan_s,
                node_energy_j: r.node_energy_j,
                transfer_energy_j: r.transfer_energy_j,
                edp: r.edp,
                tasks: r.machines.iter().map(|m| (m.machine_id.clone(), m.tasks)).collect(),
            })
        })
        .collect()
}

pub fn fit_power(counters_csv: &str, power_csv: &str, device_id: &str, sampling_period_s: f64) -> enplace::Result<PowerFit> {
    let counters = power::read_counters_csv(counters_csv.as_bytes())?;
    let samples = power::read_power_csv(power_csv.as_bytes())?;
    let report = power::fit_power_model(&counters, &samples, device_id, sampling_period_s)?;
    Ok(PowerFit {
        model: report.model,
        intervals_used: report.intervals_used,
        dropped_counter_samples: report.dropped_counter_samples,
        dropped_power_samples: report.dropped_power_samples,
        intercept_clamped: report.intercept_clamped,
    })
}

fn to_js<T: Serialize>(value: enplace::Result<T>) -> Result<String, JsError> {
    let value = value.map_err(|e| JsError::new(&e.to_string()))?;
    serde_json::to_string(&value).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen(js_name = alphaSweep)]
pub fn alpha_sweep_js(tasks_per_benchmark: u32, seed: u32, strategy: &str, alphas: Vec<f64>) -> Result<String, JsError> {
    to_js(alpha_sweep(tasks_per_benchmark as usize, seed.into(), strategy, &alphas))
}

#[wasm_bindgen(js_name = fitPower)]
pub fn fit_power_js(counters_csv: &str, power_csv: &str, device_id: &str, sampling_period_s: f64) -> Result<String, JsError> {
    to_js(fit_power(counters_csv, power_csv, device_id, sampling_period_s))
}

/// `runs_json` is an array of `{label, makespan_s, node_energy_j, transfer_energy_j?}`.
#[wasm_bindgen(js_name = compareRuns)]
pub fn compare_runs_js(runs_json: &str) -> Result<String, JsError> {
    let runs: Vec<RunMetrics> = serde_json::from_str(runs_json).map_err(|e| JsError::new(&e.to_string()))?;
    to_js(sim::compare(&runs))
}
