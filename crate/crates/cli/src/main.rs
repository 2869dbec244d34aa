//! `enplace`: fit power and transfer models, attribute task energy, place
//! task batches across a fleet, and simulate or compare placement runs.

mod cmd;
mod config;
mod error;
mod io;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::Overrides;

#[derive(Debug, Parser)]
#[command(name = "enplace", version, about, long_about = None)]
struct Cli {
    /// TOML run configuration; command-line flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for every random draw.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory for output files.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit a linear power model from counter and power traces.
    ///
    /// counters CSV: timestamp_s,process_id,llc_misses,instructions_retired,cpu_cycles,ref_cycles
    /// power CSV:    timestamp_s,device_id,power_w
    FitPower(cmd::fit::FitPowerArgs),
    /// Fit per-path transfer times on file count and bytes.
    ///
    /// history CSV: src,dst,n_files,total_bytes,seconds
    FitTransfer(cmd::fit::FitTransferArgs),
    /// Attribute measured power to worker processes and integrate task energy.
    ///
    /// tasks CSV: task_id,machine_id,worker_process_id,start_s,end_s[,function_id]
    Attribute(cmd::fit::AttributeArgs),
    /// Place one batch of tasks and write the assignment.
    Schedule(cmd::run::ScheduleArgs),
    /// Run a workload through the discrete-event simulator.
    Simulate(cmd::run::SimulateArgs),
    /// Tabulate result files with EDP and ED2P normalized to the best run.
    Compare(cmd::run::CompareArgs),
    /// Generate a synthetic or molecular-design workload.
    GenWorkload(cmd::run::GenWorkloadArgs),
}

/// Inputs shared by `schedule` and `simulate`.
#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// Fleet JSON, or builtin:reference / builtin:moldesign.
    #[arg(long)]
    fleet: Option<String>,
    /// Profiles CSV (function_id,machine_id,mean_runtime_s,mean_energy_j,sample_count),
    /// or builtin:reference / builtin:moldesign.
    #[arg(long)]
    profiles: Option<String>,
    /// Network JSON: {"src->dst": [{"class": "switch"}, {"p_max_w": 300, "bandwidth_bps": 1e10}]}.
    #[arg(long)]
    network: Option<String>,
    /// Transfer-time model JSON written by fit-transfer.
    #[arg(long)]
    transfer_model: Option<String>,
    /// Task list (JSON Lines) or workload document (.json).
    #[arg(long)]
    workload: Option<String>,
    /// cluster-mhra, mhra, round-robin or single:<machine_id>.
    #[arg(long)]
    strategy: Option<String>,
    /// Weight on energy; 1 - alpha weighs makespan.
    #[arg(long)]
    alpha: Option<f64>,
    /// Tasks submitted within this many seconds are placed together.
    #[arg(long)]
    batch_window: Option<f64>,
}

pub struct Globals {
    pub config: Option<PathBuf>,
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
}

impl Globals {
    pub fn overrides(&self, run: &RunArgs) -> Overrides {
        Overrides {
            fleet: run.fleet.clone(),
            profiles: run.profiles.clone(),
            network: run.network.clone(),
            transfer_model: run.transfer_model.clone(),
            workload: run.workload.clone(),
            strategy: run.strategy.clone(),
            alpha: run.alpha,
            seed: self.seed,
            batch_window_s: run.batch_window,
            out_dir: self.out_dir.clone(),
        }
    }

    /// Output directory for commands that do not take a run config.
    pub fn out_dir(&self) -> error::CliResult<PathBuf> {
        if let Some(d) = &self.out_dir {
            return Ok(d.clone());
        }
        match &self.config {
            Some(c) => Ok(config::FileConfig::load(c)?
                .out_dir
                .map(PathBuf::from)
                .unwrap_or_else(|| PathBuf::from("."))),
            None => Ok(PathBuf::from(".")),
        }
    }

    pub fn seed(&self) -> error::CliResult<u64> {
        if let Some(s) = self.seed {
            return Ok(s);
        }
        match &self.config {
            Some(c) => Ok(config::FileConfig::load(c)?.seed.unwrap_or(0)),
            None => Ok(0),
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let globals = Globals {
        config: cli.config,
        seed: cli.seed,
        out_dir: cli.out_dir,
    };
    let outcome = match cli.command {
        Command::FitPower(a) => cmd::fit::fit_power(&globals, a),
        Command::FitTransfer(a) => cmd::fit::fit_transfer(&globals, a),
        Command::Attribute(a) => cmd::fit::attribute(&globals, a),
        Command::Schedule(a) => cmd::run::schedule(&globals, a),
        Command::Simulate(a) => cmd::run::simulate(&globals, a),
        Command::Compare(a) => cmd::run::compare(&globals, a),
        Command::GenWorkload(a) => cmd::run::gen_workload(&globals, a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
