//! Run configuration: a TOML file overridden by command-line flags.
//!
//! ```toml
//! fleet = "fleet.json"          # or "builtin:reference" / "builtin:moldesign"
//! profiles = "profiles.csv"     # or "builtin:reference" / "builtin:moldesign"
//! network = "network.json"      # optional
//! transfer_model = "transfer.json"  # optional, from `fit-transfer`
//! workload = "workload.jsonl"   # task list, or a `.json` workload document
//! strategy = "cluster-mhra"
//! alpha = 0.5
//! seed = 42
//! batch_window_s = 1.0
//! out_dir = "out"
//! ```
//!
//! Relative paths in the file are resolved against the file's directory.

use std::path::{Path, PathBuf};

use enplace::sched::Strategy;
use enplace::sim::{catalog, Workload};
use enplace::transfer::{Network, TransferModel, TransferTimeModel};
use enplace::{Fleet, ProfileStore};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};
use crate::io;

pub const BUILTIN_REFERENCE: &str = "builtin:reference";
pub const BUILTIN_MOLDESIGN: &str = "builtin:moldesign";

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub fleet: Option<String>,
    pub profiles: Option<String>,
    pub network: Option<String>,
    pub transfer_model: Option<String>,
    pub workload: Option<String>,
    pub strategy: Option<String>,
    pub alpha: Option<f64>,
    pub seed: Option<u64>,
    pub batch_window_s: Option<f64>,
    pub out_dir: Option<String>,
}

impl FileConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = io::read_to_string(path)?;
        let mut cfg: FileConfig = toml::from_str(&text).map_err(|e| CliError::Config {
            path: path.to_path_buf(),
            message: e.message().to_string(),
        })?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [
            &mut cfg.fleet,
            &mut cfg.profiles,
            &mut cfg.network,
            &mut cfg.transfer_model,
            &mut cfg.workload,
            &mut cfg.out_dir,
        ]
        .into_iter()
        .flatten()
        {
            if !p.starts_with("builtin:") && Path::new(p.as_str()).is_relative() {
                *p = base.join(&*p).to_string_lossy().into_owned();
            }
        }
        Ok(cfg)
    }
}

/// Everything a schedule or simulate run reads, after merging.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub fleet: String,
    pub profiles: String,
    pub network: Option<String>,
    pub transfer_model: Option<String>,
    pub workload: String,
    pub strategy: Strategy,
    pub alpha: f64,
    pub seed: u64,
    pub batch_window_s: f64,
    /// Where outputs go is not an input of the run; leaving it out keeps
    /// results byte-identical wherever they are written.
    #[serde(skip)]
    pub out_dir: PathBuf,
}

/// Values given on the command line; each wins over the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub fleet: Option<String>,
    pub profiles: Option<String>,
    pub network: Option<String>,
    pub transfer_model: Option<String>,
    pub workload: Option<String>,
    pub strategy: Option<String>,
    pub alpha: Option<f64>,
    pub seed: Option<u64>,
    pub batch_window_s: Option<f64>,
    pub out_dir: Option<PathBuf>,
}

impl RunConfig {
    pub fn resolve(file: FileConfig, cli: Overrides) -> CliResult<Self> {
        let strategy: Strategy = cli
            .strategy
            .or(file.strategy)
            .unwrap_or_else(|| "cluster-mhra".into())
            .parse()?;
        let alpha = cli.alpha.or(file.alpha).unwrap_or(0.5);
        if !(0.0..=1.0).contains(&alpha) {
            return Err(CliError::usage(format!("--alpha must lie in [0, 1], got {alpha}")));
        }
        let batch_window_s = cli.batch_window_s.or(file.batch_window_s).unwrap_or(1.0);
        if !(batch_window_s >= 0.0 && batch_window_s.is_finite()) {
            return Err(CliError::usage(format!("--batch-window must be finite and >= 0, got {batch_window_s}")));
        }
        Ok(Self {
            fleet: cli.fleet.or(file.fleet).unwrap_or_else(|| BUILTIN_REFERENCE.into()),
            profiles: cli.profiles.or(file.profiles).unwrap_or_else(|| BUILTIN_REFERENCE.into()),
            network: cli.network.or(file.network),
            transfer_model: cli.transfer_model.or(file.transfer_model),
            workload: cli
                .workload
                .or(file.workload)
                .ok_or_else(|| CliError::usage("no workload given (use --workload or `workload` in the config)"))?,
            strategy,
            alpha,
            seed: cli.seed.or(file.seed).unwrap_or(0),
            batch_window_s,
            out_dir: cli.out_dir.or(file.out_dir.map(PathBuf::from)).unwrap_or_else(|| PathBuf::from(".")),
        })
    }
}

pub fn load_fleet(source: &str) -> CliResult<Fleet> {
    match source {
        BUILTIN_REFERENCE => Ok(catalog::reference_fleet()),
        BUILTIN_MOLDESIGN => Ok(catalog::moldesign_fleet()),
        s if s.starts_with("builtin:") => Err(CliError::usage(format!("unknown built-in fleet `{s}`"))),
        path => Ok(enplace::load_fleet(&io::read_to_string(Path::new(path))?)?),
    }
}

pub fn load_profiles(source: &str) -> CliResult<ProfileStore> {
    match source {
        BUILTIN_REFERENCE => Ok(catalog::synthetic_profiles()),
        BUILTIN_MOLDESIGN => Ok(catalog::moldesign_profiles()),
        s if s.starts_with("builtin:") => Err(CliError::usage(format!("unknown built-in profiles `{s}`"))),
        path => Ok(ProfileStore::read_csv(io::open(Path::new(path))?)?),
    }
}

pub fn load_transfer(network: Option<&str>, times: Option<&str>) -> CliResult<TransferModel> {
    let network = match network {
        Some(p) => Network::from_json(&io::read_to_string(Path::new(p))?)?,
        None => Network::default(),
    };
    let times = match times {
        Some(p) => TransferTimeModel::from_json(&io::read_to_string(Path::new(p))?)?,
        None => TransferTimeModel::default(),
    };
    Ok(TransferModel { network, times })
}

/// `.json` files hold a workload document (static or molecular design);
/// anything else is a JSON Lines task list.
pub fn load_workload(path: &str) -> CliResult<Workload> {
    let p = Path::new(path);
    if p.extension().is_some_and(|e| e == "json") {
        let text = io::read_to_string(p)?;
        let w: Workload = serde_json::from_str(&text).map_err(enplace::Error::from)?;
        if let Workload::Static { tasks } = &w {
            enplace::model::validate_workload(tasks)?;
        }
        Ok(w)
    } else {
        let reader = std::io::BufReader::new(io::open(p)?);
        Ok(Workload::Static {
            tasks: enplace::model::read_workload(reader)?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn with_workload() -> Overrides {
        Overrides {
            workload: Some("w.jsonl".into()),
            ..Overrides::default()
        }
    }

    #[test]
    fn flags_win_over_file() {
        let file = FileConfig {
            alpha: Some(0.2),
            seed: Some(9),
            strategy: Some("mhra".into()),
            ..FileConfig::default()
        };
        let cli = Overrides {
            alpha: Some(0.8),
            ..with_workload()
        };
        let cfg = RunConfig::resolve(file, cli).unwrap();
        assert_eq!(cfg.alpha, 0.8);
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.strategy, Strategy::Mhra);
        assert_eq!(cfg.fleet, BUILTIN_REFERENCE);
    }

    #[test]
    fn range_and_presence_checks() {
        let bad = Overrides {
            alpha: Some(1.5),
            ..with_workload()
        };
        assert_eq!(RunConfig::resolve(FileConfig::default(), bad).unwrap_err().exit_code(), 2);
        assert_eq!(RunConfig::resolve(FileConfig::default(), Overrides::default()).unwrap_err().exit_code(), 2);
        let strategy = Overrides {
            strategy: Some("fastest".into()),
            ..with_workload()
        };
        assert_eq!(RunConfig::resolve(FileConfig::default(), strategy).unwrap_err().exit_code(), 2);
    }

    #[test]
    fn config_paths_are_relative_to_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, "fleet = \"f.json\"\nprofiles = \"builtin:reference\"\nalpha = 0.3\n").unwrap();
        let cfg = FileConfig::load(&path).unwrap();
        assert_eq!(cfg.fleet.unwrap(), dir.path().join("f.json").to_string_lossy());
        assert_eq!(cfg.profiles.unwrap(), BUILTIN_REFERENCE);
        std::fs::write(&path, "colour = 1\n").unwrap();
        assert_eq!(FileConfig::load(&path).unwrap_err().exit_code(), 2);
    }
}
