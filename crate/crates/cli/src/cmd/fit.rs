use std::collections::HashMap;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use enplace::power::{self, AttributionMode, PowerModel};
use enplace::transfer;
use enplace::{ProfileStore, TaskRecord};
use serde::Deserialize;

use crate::error::{CliError, CliResult};
use crate::io::{self, f3};
use crate::Globals;

#[derive(Debug, Args)]
pub struct FitPowerArgs {
    #[arg(long)]
    counters: PathBuf,
    #[arg(long)]
    power: PathBuf,
    /// Which device's power samples to fit.
    #[arg(long)]
    device: String,
    /// Seconds between power samples; counters within half of it are paired.
    #[arg(long, default_value_t = power::DEFAULT_SAMPLING_PERIOD_S)]
    sampling_period: f64,
    /// Model file; defaults to <out-dir>/power_model.json.
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn fit_power(g: &Globals, a: FitPowerArgs) -> CliResult<()> {
    let counters = power::read_counters_csv(io::open(&a.counters)?)?;
    let samples = power::read_power_csv(io::open(&a.power)?)?;
    let report = power::fit_power_model(&counters, &samples, &a.device, a.sampling_period)?;
    let out = a.out.unwrap_or(g.out_dir()?.join("power_model.json"));
    io::write_json(&out, &report.model)?;
    let m = &report.model;
    println!("device: {}", m.device_id);
    println!("intervals_used: {}", report.intervals_used);
    println!("dropped_counter_samples: {}", report.dropped_counter_samples);
    println!("dropped_power_samples: {}", report.dropped_power_samples);
    println!("intercept_w: {}", f3(m.intercept_w));
    println!("weights: {:e} {:e} {:e} {:e}", m.weights[0], m.weights[1], m.weights[2], m.weights[3]);
    println!("r_squared: {:.6}", m.r_squared);
    if report.intercept_clamped {
        println!("note: negative intercept clamped to 0");
    }
    println!("wrote {}", out.display());
    Ok(())
}

#[derive(Debug, Args)]
pub struct FitTransferArgs {
    #[arg(long)]
    history: PathBuf,
    /// Model file; defaults to <out-dir>/transfer_model.json.
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn fit_transfer(g: &Globals, a: FitTransferArgs) -> CliResult<()> {
    let history = transfer::read_history_csv(io::open(&a.history)?)?;
    let model = transfer::fit_transfer_model(&history)?;
    let out = a.out.unwrap_or(g.out_dir()?.join("transfer_model.json"));
    io::write_atomic(&out, format!("{}\n", model.to_json()).as_bytes())?;
    println!("paths fitted: {}", model.len());
    println!("wrote {}", out.display());
    Ok(())
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Mode {
    /// Distribute the whole measured power.
    Literal,
    /// Subtract the fitted idle power first.
    DynamicOnly,
}

#[derive(Debug, Args)]
pub struct AttributeArgs {
    #[arg(long)]
    counters: PathBuf,
    #[arg(long)]
    power: PathBuf,
    /// Power model written by fit-power; its device id selects the power series.
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    tasks: PathBuf,
    #[arg(long, value_enum, default_value_t = Mode::Literal)]
    mode: Mode,
    #[arg(long, default_value_t = power::DEFAULT_SAMPLING_PERIOD_S)]
    sampling_period: f64,
    /// Fold the attributed tasks into this profiles CSV (created if absent).
    /// Needs a function_id column in the tasks file.
    #[arg(long)]
    update_profiles: Option<PathBuf>,
    /// Energy CSV; defaults to <out-dir>/task_energy.csv.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Deserialize)]
struct TaskRow {
    task_id: String,
    machine_id: String,
    worker_process_id: i64,
    start_s: f64,
    end_s: f64,
    #[serde(default)]
    function_id: Option<String>,
}

fn read_tasks(path: &Path) -> CliResult<Vec<TaskRow>> {
    let mut rdr = csv::Reader::from_reader(io::open(path)?);
    rdr.deserialize()
        .map(|r| r.map_err(|e| CliError::Core(e.into())))
        .collect()
}

pub fn attribute(g: &Globals, a: AttributeArgs) -> CliResult<()> {
    let model = PowerModel::from_json(&io::read_to_string(&a.model)?)?;
    let counters = power::read_counters_csv(io::open(&a.counters)?)?;
    let samples = power::read_power_csv(io::open(&a.power)?)?;
    let tasks = read_tasks(&a.tasks)?;
    if a.update_profiles.is_some() && tasks.iter().any(|t| t.function_id.is_none()) {
        return Err(CliError::usage("--update-profiles needs a function_id for every task"));
    }
    let alignment = power::align(&counters, &samples, &model.device_id, a.sampling_period)?;
    let mode = match a.mode {
        Mode::Literal => AttributionMode::Literal,
        Mode::DynamicOnly => AttributionMode::DynamicOnly,
    };
    let series: HashMap<i64, power::ProcessPowerSeries> = power::process_power_series(&model, &alignment, mode)
        .into_iter()
        .map(|s| (s.process_id, s))
        .collect();

    let mut profiles = match &a.update_profiles {
        Some(p) if p.exists() => Some(ProfileStore::read_csv(io::open(p)?)?),
        Some(_) => Some(ProfileStore::new()),
        None => None,
    };
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["task_id", "energy_j", "runtime_s"]).expect("in-memory write");
    let mut skipped = 0usize;
    for t in &tasks {
        let Some(s) = series.get(&t.worker_process_id) else {
            log::warn!("task `{}`: no counters for process {}; skipped", t.task_id, t.worker_process_id);
            skipped += 1;
            continue;
        };
        let energy = power::attribute_task_energy(s, t.start_s, t.end_s)?;
        w.write_record([t.task_id.clone(), f3(energy), f3(t.end_s - t.start_s)])
            .expect("in-memory write");
        if let (Some(store), Some(function)) = (profiles.as_mut(), &t.function_id) {
            let record = TaskRecord {
                task_id: t.task_id.clone(),
                machine_id: t.machine_id.clone(),
                worker_process_id: t.worker_process_id,
                start_s: t.start_s,
                end_s: t.end_s,
                attributed_energy_j: energy,
            };
            store.update_profile(&record, function)?;
        }
    }
    let out = a.out.unwrap_or(g.out_dir()?.join("task_energy.csv"));
    io::write_atomic(&out, &w.into_inner().expect("in-memory flush"))?;
    if let (Some(store), Some(path)) = (profiles, &a.update_profiles) {
        let mut buf = Vec::new();
        store.write_csv(&mut buf)?;
        io::write_atomic(path, &buf)?;
        println!("updated {}", path.display());
    }
    println!("tasks attributed: {}", tasks.len() - skipped);
    println!("tasks skipped: {skipped}");
    println!("wrote {}", out.display());
    Ok(())
}
