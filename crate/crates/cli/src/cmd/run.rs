use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, ValueEnum};
use enplace::sched::{self, Problem, Strategy};
use enplace::sim::{self, catalog, RunMetrics, SimOptions, SimulationResult, Workload};
use serde::{Deserialize, Serialize};

use crate::config::{self, FileConfig, RunConfig};
use crate::error::{CliError, CliResult};
use crate::io::{self, f3};
use crate::{Globals, RunArgs};

fn resolve(g: &Globals, run: &RunArgs) -> CliResult<RunConfig> {
    let file = match &g.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    RunConfig::resolve(file, g.overrides(run))
}

#[derive(Debug, Args)]
pub struct ScheduleArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Record scheduling wall time in the summary. Off by default so that
    /// repeated runs produce identical files.
    #[arg(long)]
    timing: bool,
}

#[derive(Serialize)]
struct ScheduleFile<'a> {
    config: &'a RunConfig,
    #[serde(flatten)]
    summary: sched::ScheduleSummary,
    tasks_per_machine: Vec<(String, usize)>,
}

pub fn schedule(g: &Globals, a: ScheduleArgs) -> CliResult<()> {
    let cfg = resolve(g, &a.run)?;
    let fleet = config::load_fleet(&cfg.fleet)?;
    let profiles = config::load_profiles(&cfg.profiles)?;
    let transfer = config::load_transfer(cfg.network.as_deref(), cfg.transfer_model.as_deref())?;
    let Workload::Static { tasks } = config::load_workload(&cfg.workload)? else {
        return Err(CliError::usage("schedule places a fixed task list; simulate dynamic workloads instead"));
    };
    let problem = Problem::new(&tasks, &fleet, &profiles, &transfer, cfg.alpha);
    let started = Instant::now();
    let placed = sched::schedule(&cfg.strategy, &problem)?;
    let wall = a.timing.then(|| started.elapsed().as_secs_f64());

    let counts = placed.counts(&fleet);
    let summary = placed.summary(wall);
    io::write_jsonl(&cfg.out_dir.join("schedule.jsonl"), &placed.assignments)?;
    io::write_json(
        &cfg.out_dir.join("schedule_summary.json"),
        &ScheduleFile {
            config: &cfg,
            summary: summary.clone(),
            tasks_per_machine: counts.clone(),
        },
    )?;
    println!("strategy: {} alpha={}", cfg.strategy, f3(cfg.alpha));
    println!("tasks: {} clusters: {}", tasks.len(), summary.clusters);
    if let Some(h) = summary.heuristic_chosen {
        println!("heuristic: {h}");
    }
    println!("predicted_energy_j: {}", f3(summary.predicted_e_tot_j));
    println!("predicted_makespan_s: {}", f3(summary.predicted_c_max_s));
    println!("objective: {}", f3(summary.objective));
    for (m, n) in &counts {
        println!("  {m}: {n}");
    }
    if let Some(w) = wall {
        println!("scheduling_wall_time_s: {w:.6}");
    }
    println!("wrote {}", cfg.out_dir.join("schedule.jsonl").display());
    Ok(())
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Repeat the run over several values, e.g. `alpha=0,0.25,0.5,0.75,1`.
    #[arg(long)]
    sweep: Option<String>,
    /// Use profile means and mean queue waits instead of sampling them.
    #[arg(long)]
    deterministic: bool,
    /// Write every simulator event as JSON Lines beside the result.
    #[arg(long)]
    trace: bool,
}

#[derive(Serialize)]
struct ResultFile<'a> {
    config: &'a RunConfig,
    options: &'a SimOptions,
    #[serde(flatten)]
    result: &'a SimulationResult,
}

fn parse_sweep(spec: &str) -> CliResult<Vec<f64>> {
    let values = spec
        .strip_prefix("alpha=")
        .ok_or_else(|| CliError::usage(format!("--sweep supports `alpha=v1,v2,...`, got `{spec}`")))?;
    let alphas = values
        .split(',')
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .ok()
                .filter(|a| (0.0..=1.0).contains(a))
                .ok_or_else(|| CliError::usage(format!("sweep value `{v}` is not an alpha in [0, 1]")))
        })
        .collect::<CliResult<Vec<_>>>()?;
    if alphas.is_empty() {
        return Err(CliError::usage("--sweep needs at least one value"));
    }
    Ok(alphas)
}

fn sweep_row(r: &SimulationResult) -> Vec<String> {
    let mut row = vec![
        f3(r.alpha),
        f3(r.makespan_s),
        f3(r.node_energy_j),
        f3(r.transfer_energy_j),
        f3(r.edp),
        f3(r.ed2p),
    ];
    row.extend(r.machines.iter().map(|m| m.tasks.to_string()));
    row
}

pub fn simulate(g: &Globals, a: SimulateArgs) -> CliResult<()> {
    let cfg = resolve(g, &a.run)?;
    let fleet = config::load_fleet(&cfg.fleet)?;
    let profiles = config::load_profiles(&cfg.profiles)?;
    let transfer = config::load_transfer(cfg.network.as_deref(), cfg.transfer_model.as_deref())?;
    let workload = config::load_workload(&cfg.workload)?;
    let alphas = match &a.sweep {
        Some(s) => parse_sweep(s)?,
        None => vec![cfg.alpha],
    };

    let mut rows = Vec::new();
    for &alpha in &alphas {
        let mut opts = if a.deterministic {
            SimOptions::deterministic(alpha)
        } else {
            SimOptions {
                alpha,
                ..SimOptions::default()
            }
        };
        opts.seed = cfg.seed;
        opts.batch_window_s = cfg.batch_window_s;
        opts.trace = a.trace;
        let result = sim::run_simulation(&workload, &cfg.strategy, &fleet, &profiles, &transfer, &opts)?;
        let run_cfg = RunConfig { alpha, ..cfg.clone() };
        let stem = if a.sweep.is_some() {
            format!("result_alpha_{alpha:.3}")
        } else {
            "result".to_string()
        };
        let path = cfg.out_dir.join(format!("{stem}.json"));
        io::write_json(
            &path,
            &ResultFile {
                config: &run_cfg,
                options: &opts,
                result: &result,
            },
        )?;
        if a.trace {
            let trace = cfg.out_dir.join(format!("{}.jsonl", stem.replacen("result", "trace", 1)));
            io::write_jsonl(&trace, &result.trace)?;
        }
        println!(
            "{} alpha={} makespan_s={} energy_j={} transfer_energy_j={} edp={} tasks={}",
            result.strategy,
            f3(alpha),
            f3(result.makespan_s),
            f3(result.node_energy_j),
            f3(result.transfer_energy_j),
            f3(result.edp),
            result.tasks_completed
        );
        println!("wrote {}", path.display());
        rows.push(result);
    }

    if a.sweep.is_some() {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header: Vec<String> = ["alpha", "makespan_s", "energy_j", "transfer_energy_j", "edp", "ed2p"]
            .map(String::from)
            .to_vec();
        header.extend(fleet.machines().iter().map(|m| format!("tasks_{}", m.machine_id)));
        w.write_record(&header).expect("in-memory write");
        for r in &rows {
            w.write_record(sweep_row(r)).expect("in-memory write");
        }
        let path = cfg.out_dir.join("sweep.csv");
        io::write_atomic(&path, &w.into_inner().expect("in-memory flush"))?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Format {
    Markdown,
    Csv,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// Result files from `simulate`, or any JSON with makespan_s and
    /// node_energy_j (plus optional label, strategy, alpha, workload_hash,
    /// transfer_energy_j).
    #[arg(required = true)]
    results: Vec<PathBuf>,
    /// Table printed to standard output; both forms are written to out-dir.
    #[arg(long, value_enum, default_value_t = Format::Markdown)]
    format: Format,
}

#[derive(Debug, Deserialize)]
struct ResultInput {
    #[serde(default)]
    label: Option<String>,
    #[serde(default)]
    strategy: Option<Strategy>,
    #[serde(default)]
    alpha: Option<f64>,
    #[serde(default)]
    workload_hash: Option<String>,
    makespan_s: f64,
    node_energy_j: f64,
    #[serde(default)]
    transfer_energy_j: f64,
}

fn read_result(path: &Path) -> CliResult<RunMetrics> {
    let r: ResultInput = serde_json::from_str(&io::read_to_string(path)?).map_err(enplace::Error::from)?;
    let label = r.label.unwrap_or_else(|| match (&r.strategy, r.alpha) {
        (Some(s @ (Strategy::ClusterMhra | Strategy::Mhra)), Some(a)) => format!("{s} alpha={}", f3(a)),
        (Some(s), _) => s.to_string(),
        (None, _) => path.file_stem().map_or_else(|| path.display().to_string(), |s| s.to_string_lossy().into_owned()),
    });
    Ok(RunMetrics {
        label,
        workload_hash: r.workload_hash,
        makespan_s: r.makespan_s,
        node_energy_j: r.node_energy_j,
        transfer_energy_j: r.transfer_energy_j,
    })
}

pub fn compare(g: &Globals, a: CompareArgs) -> CliResult<()> {
    if a.results.len() < 2 {
        return Err(CliError::usage("compare needs at least two result files"));
    }
    let runs = a.results.iter().map(|p| read_result(p)).collect::<CliResult<Vec<_>>>()?;
    let table = sim::compare(&runs)?;
    let out = g.out_dir()?;
    let (csv, md) = (table.to_csv(), table.to_markdown());
    io::write_atomic(&out.join("compare.csv"), csv.as_bytes())?;
    io::write_atomic(&out.join("compare.md"), md.as_bytes())?;
    match a.format {
        Format::Markdown => print!("{md}"),
        Format::Csv => print!("{csv}"),
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Kind {
    /// Independent invocations of the seven synthetic benchmarks (JSON Lines).
    Synthetic,
    /// Rounds of simulate, train and infer waves released as each finishes (JSON).
    Moldesign,
}

#[derive(Debug, Args)]
pub struct GenWorkloadArgs {
    #[arg(value_enum)]
    kind: Kind,
    /// Invocations of each benchmark.
    #[arg(long, default_value_t = 256)]
    count: usize,
    /// Comma-separated benchmark names; all by default.
    #[arg(long, value_delimiter = ',')]
    benchmarks: Vec<String>,
    /// Machine holding every input file.
    #[arg(long, default_value = catalog::DESKTOP)]
    data_home: String,
    #[arg(long, default_value_t = 3)]
    rounds: usize,
    /// Simulation tasks per round.
    #[arg(long, default_value_t = 64)]
    sims: usize,
    /// Inference tasks per round.
    #[arg(long, default_value_t = 64)]
    infers: usize,
    /// Defaults to <out-dir>/workload.jsonl or <out-dir>/workload.json.
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn gen_workload(g: &Globals, a: GenWorkloadArgs) -> CliResult<()> {
    let seed = g.seed()?;
    let (path, body, n) = match a.kind {
        Kind::Synthetic => {
            let names: Vec<&str> = if a.benchmarks.is_empty() {
                sim::benchmark_names()
            } else {
                a.benchmarks.iter().map(String::as_str).collect()
            };
            let tasks = sim::gen_synthetic_workload(&names, a.count, seed, &a.data_home)?;
            let path = a.out.unwrap_or(g.out_dir()?.join("workload.jsonl"));
            (path, enplace::model::write_workload(&tasks), tasks.len())
        }
        Kind::Moldesign => {
            let md = sim::gen_moldesign_workload(a.rounds, a.sims, a.infers, seed, &a.data_home)?;
            let n = md.total_tasks();
            let path = a.out.unwrap_or(g.out_dir()?.join("workload.json"));
            let doc = serde_json::to_string_pretty(&Workload::MolDesign(md)).expect("workloads serialize");
            (path, doc + "\n", n)
        }
    };
    io::write_atomic(&path, body.as_bytes())?;
    println!("tasks: {n}");
    println!("wrote {}", path.display());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sweep_syntax() {
        assert_eq!(parse_sweep("alpha=0,0.5, 1").unwrap(), vec![0.0, 0.5, 1.0]);
        assert!(parse_sweep("beta=1").is_err());
        assert!(parse_sweep("alpha=0,2").is_err());
        assert!(parse_sweep("alpha=x").is_err());
    }
}
