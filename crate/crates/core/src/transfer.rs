//! Inter-site data movement: hop-based transfer energy, a per-path
//! regression for transfer time, and batched, cache-aware transfer plans.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linreg;
use crate::model::{FileRef, Fleet, MachineSpec, Sharing, TaskSpec};

pub const MIN_TRANSFER_OBSERVATIONS: usize = 3;

/// Maximum power and bandwidth of one network device on a path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HopDevice {
    pub p_max_w: f64,
    pub bandwidth_bps: f64,
}

impl HopDevice {
    /// Incremental energy to push one bit through the device.
    pub fn joules_per_bit(&self) -> f64 {
        self.p_max_w / self.bandwidth_bps
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HopClass {
    Core,
    Edge,
    Switch,
}

impl HopClass {
    pub fn device(self) -> HopDevice {
        match self {
            HopClass::Core => HopDevice { p_max_w: 4000.0, bandwidth_bps: 1e11 },
            HopClass::Edge => HopDevice { p_max_w: 1000.0, bandwidth_bps: 4e10 },
            HopClass::Switch => HopDevice { p_max_w: 300.0, bandwidth_bps: 1e10 },
        }
    }
}

/// A hop as written in the network file: a device class or explicit figures.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum HopSpec {
    Class { class: HopClass },
    Explicit(HopDevice),
}

impl HopSpec {
    pub fn device(self) -> HopDevice {
        match self {
            HopSpec::Class { class } => class.device(),
            HopSpec::Explicit(d) => d,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkPath {
    pub src_machine: String,
    pub dst_machine: String,
    pub hops: Vec<HopDevice>,
}

impl NetworkPath {
    pub fn hop_count(&self) -> usize {
        self.hops.len()
    }

    pub fn joules_per_bit(&self) -> f64 {
        self.hops.iter().map(HopDevice::joules_per_bit).sum()
    }

    pub fn bottleneck_bps(&self) -> Option<f64> {
        self.hops.iter().map(|h| h.bandwidth_bps).min_by(f64::total_cmp)
    }
}

/// Energy to move `size_bytes` along `path`: Σ over hops of bits × P_max / B.
pub fn transfer_energy(size_bytes: u64, path: &NetworkPath) -> f64 {
    let bits = size_bytes as f64 * 8.0;
    path.hops.iter().map(|h| bits * h.joules_per_bit()).sum()
}

/// Default path between two machines: a switch/edge/core/edge/switch WAN
/// route, plus a DTN hop (edge class) and a shared-file-system hop (switch
/// class) at each end that runs a batch scheduler.
pub fn default_path(src: &MachineSpec, dst: &MachineSpec) -> NetworkPath {
    let mut hops = Vec::new();
    if src.machine_id != dst.machine_id {
        let site = |m: &MachineSpec| {
            if m.has_batch_scheduler {
                vec![HopClass::Switch.device(), HopClass::Edge.device()]
            } else {
                Vec::new()
            }
        };
        hops.extend(site(src).into_iter().rev());
        hops.extend([HopClass::Switch, HopClass::Edge, HopClass::Core, HopClass::Edge, HopClass::Switch].map(HopClass::device));
        hops.extend(site(dst));
    }
    NetworkPath {
        src_machine: src.machine_id.clone(),
        dst_machine: dst.machine_id.clone(),
        hops,
    }
}

/// Explicit paths from a network file, with defaults for every other pair.
/// Entries are directional; `a->b` says nothing about `b->a`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Network {
    explicit: BTreeMap<(String, String), Vec<HopDevice>>,
}

impl Network {
    pub fn from_json(doc: &str) -> Result<Self> {
        let raw: BTreeMap<String, Vec<HopSpec>> = serde_json::from_str(doc)?;
        let mut explicit = BTreeMap::new();
        for (key, hops) in raw {
            let (src, dst) = key.split_once("->").ok_or_else(|| Error::Parse {
                field: Some(key.clone()),
                message: "network keys must look like `src->dst`".into(),
            })?;
            let hops: Vec<HopDevice> = hops.into_iter().map(HopSpec::device).collect();
            if let Some(h) = hops.iter().find(|h| !(h.bandwidth_bps > 0.0) || h.p_max_w < 0.0) {
                return Err(Error::validation(key.clone(), format!("invalid hop device {h:?}")));
            }
            explicit.insert((src.trim().to_string(), dst.trim().to_string()), hops);
        }
        Ok(Self { explicit })
    }

    pub fn set_path(&mut self, src: &str, dst: &str, hops: Vec<HopDevice>) {
        self.explicit.insert((src.to_string(), dst.to_string()), hops);
    }

    pub fn path(&self, fleet: &Fleet, src: &str, dst: &str) -> Result<NetworkPath> {
        if let Some(hops) = self.explicit.get(&(src.to_string(), dst.to_string())) {
            return Ok(NetworkPath {
                src_machine: src.to_string(),
                dst_machine: dst.to_string(),
                hops: hops.clone(),
            });
        }
        let s = fleet.get(src).ok_or_else(|| Error::Lookup(format!("unknown machine `{src}`")))?;
        let d = fleet.get(dst).ok_or_else(|| Error::Lookup(format!("unknown machine `{dst}`")))?;
        Ok(default_path(s, d))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransferCoefficients {
    pub intercept_s: f64,
    pub seconds_per_file: f64,
    pub seconds_per_byte: f64,
}

impl TransferCoefficients {
    pub fn predict(&self, n_files: u64, total_bytes: u64) -> f64 {
        (self.intercept_s + self.seconds_per_file * n_files as f64 + self.seconds_per_byte * total_bytes as f64).max(0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferObservation {
    pub src: String,
    pub dst: String,
    pub n_files: u64,
    pub total_bytes: u64,
    pub seconds: f64,
}

/// Fitted transfer-time coefficients per directed path.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TransferTimeModel {
    paths: BTreeMap<(String, String), TransferCoefficients>,
}

#[derive(Serialize, Deserialize)]
struct PathCoefficients {
    src: String,
    dst: String,
    #[serde(flatten)]
    coefficients: TransferCoefficients,
}

impl TransferTimeModel {
    pub fn insert(&mut self, src: &str, dst: &str, c: TransferCoefficients) {
        self.paths.insert((src.to_string(), dst.to_string()), c);
    }

    pub fn get(&self, src: &str, dst: &str) -> Option<&TransferCoefficients> {
        self.paths.get(&(src.to_string(), dst.to_string()))
    }

    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    pub fn to_json(&self) -> String {
        let rows: Vec<PathCoefficients> = self
            .paths
            .iter()
            .map(|((src, dst), c)| PathCoefficients { src: src.clone(), dst: dst.clone(), coefficients: *c })
            .collect();
        serde_json::to_string_pretty(&rows).expect("coefficients serialize")
    }

    pub fn from_json(doc: &str) -> Result<Self> {
        let rows: Vec<PathCoefficients> = serde_json::from_str(doc)?;
        let mut m = Self::default();
        for r in rows {
            m.insert(&r.src, &r.dst, r.coefficients);
        }
        Ok(m)
    }
}

/// Per-path least squares of seconds on (file count, total bytes).
pub fn fit_transfer_model(history: &[TransferObservation]) -> Result<TransferTimeModel> {
    let mut by_path: BTreeMap<(&str, &str), Vec<&TransferObservation>> = BTreeMap::new();
    for o in history {
        by_path.entry((o.src.as_str(), o.dst.as_str())).or_default().push(o);
    }
    let mut model = TransferTimeModel::default();
    for ((src, dst), obs) in by_path {
        if obs.len() < MIN_TRANSFER_OBSERVATIONS {
            return Err(Error::InsufficientData(format!(
                "path {src}->{dst} has {} observations, need at least {MIN_TRANSFER_OBSERVATIONS}",
                obs.len()
            )));
        }
        let files: Vec<f64> = obs.iter().map(|o| o.n_files as f64).collect();
        let bytes: Vec<f64> = obs.iter().map(|o| o.total_bytes as f64).collect();
        let secs: Vec<f64> = obs.iter().map(|o| o.seconds).collect();
        let fit = linreg::fit_with_intercept(&["n_files", "total_bytes"], &[files, bytes], &secs)?;
        model.insert(
            src,
            dst,
            TransferCoefficients {
                intercept_s: fit.intercept,
                seconds_per_file: fit.coefficients[0],
                seconds_per_byte: fit.coefficients[1],
            },
        );
    }
    Ok(model)
}

pub fn predict_transfer_time(model: &TransferTimeModel, src: &str, dst: &str, n_files: u64, total_bytes: u64) -> Result<f64> {
    model
        .get(src, dst)
        .map(|c| c.predict(n_files, total_bytes))
        .ok_or_else(|| Error::Lookup(format!("no transfer model for path {src}->{dst}")))
}

pub fn read_history_csv(reader: impl Read) -> Result<Vec<TransferObservation>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let expected = ["src", "dst", "n_files", "total_bytes", "seconds"];
    if rdr.headers()?.iter().ne(expected) {
        return Err(Error::Parse {
            field: None,
            message: format!("transfer history header must be `{}`", expected.join(",")),
        });
    }
    rdr.deserialize().map(|r| r.map_err(Error::from)).collect()
}

/// Network topology plus fitted transfer times: everything needed to cost a
/// batch of files moving between two machines.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TransferModel {
    pub network: Network,
    pub times: TransferTimeModel,
}

impl TransferModel {
    /// Predicted seconds for a batch. Paths without fitted coefficients fall
    /// back to size over the path's bottleneck bandwidth.
    pub fn estimate_time(&self, path: &NetworkPath, n_files: u64, total_bytes: u64) -> f64 {
        if n_files == 0 && total_bytes == 0 {
            return 0.0;
        }
        match self.times.get(&path.src_machine, &path.dst_machine) {
            Some(c) => c.predict(n_files, total_bytes),
            None => path
                .bottleneck_bps()
                .map(|bps| total_bytes as f64 * 8.0 / bps)
                .unwrap_or(0.0),
        }
    }
}

/// Shared files known to be resident on a machine.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheLedger {
    entries: BTreeSet<(String, String)>,
}

impl CacheLedger {
    pub fn contains(&self, machine_id: &str, logical_path: &str) -> bool {
        self.entries.contains(&(machine_id.to_string(), logical_path.to_string()))
    }

    pub fn insert(&mut self, machine_id: &str, logical_path: &str) -> bool {
        self.entries.insert((machine_id.to_string(), logical_path.to_string()))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferBatch {
    pub src: String,
    pub dst: String,
    pub files: Vec<FileRef>,
    pub total_bytes: u64,
    pub predicted_time_s: f64,
    pub predicted_energy_j: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TransferPlan {
    pub batches: Vec<TransferBatch>,
    /// For each task, the indices of the batches carrying its inputs.
    pub task_batches: BTreeMap<String, Vec<usize>>,
}

impl TransferPlan {
    pub fn total_bytes(&self) -> u64 {
        self.batches.iter().map(|b| b.total_bytes).sum()
    }

    pub fn total_energy_j(&self) -> f64 {
        self.batches.iter().map(|b| b.predicted_energy_j).sum()
    }
}

/// Group every non-local input of the assigned tasks into one batch per
/// (source, destination) pair. Shared files already in `ledger` for the
/// destination are skipped; newly shipped shared files are added to it.
pub fn plan_batch_transfers(
    assignments: &[(&TaskSpec, &str)],
    fleet: &Fleet,
    model: &TransferModel,
    ledger: &mut CacheLedger,
) -> Result<TransferPlan> {
    let mut groups: BTreeMap<(String, String), Vec<FileRef>> = BTreeMap::new();
    let mut needs: Vec<(String, (String, String))> = Vec::new();
    for (task, dst) in assignments {
        fleet.require(dst)?;
        for f in &task.input_files {
            if fleet.position(&f.home_machine).is_none() {
                return Err(Error::Planning {
                    file: f.logical_path.clone(),
                    home: f.home_machine.clone(),
                });
            }
            if f.home_machine == *dst {
                continue;
            }
            let key = (f.home_machine.clone(), dst.to_string());
            let ship = match f.sharing {
                Sharing::Exclusive => true,
                Sharing::Shared => {
                    let in_plan = groups
                        .get(&key)
                        .is_some_and(|fs| fs.iter().any(|g| g.sharing == Sharing::Shared && g.logical_path == f.logical_path));
                    if in_plan {
                        needs.push((task.task_id.clone(), key.clone()));
                    }
                    ledger.insert(dst, &f.logical_path)
                }
            };
            if ship {
                groups.entry(key.clone()).or_default().push(f.clone());
                needs.push((task.task_id.clone(), key));
            }
        }
    }

    let mut index = BTreeMap::new();
    let mut batches = Vec::with_capacity(groups.len());
    for ((src, dst), files) in groups {
        let path = model.network.path(fleet, &src, &dst)?;
        let total_bytes: u64 = files.iter().map(|f| f.size_bytes).sum();
        index.insert((src.clone(), dst.clone()), batches.len());
        batches.push(TransferBatch {
            predicted_time_s: model.estimate_time(&path, files.len() as u64, total_bytes),
            predicted_energy_j: transfer_energy(total_bytes, &path),
            src,
            dst,
            files,
            total_bytes,
        });
    }
    let mut task_batches: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (task, key) in needs {
        let b = index[&key];
        let list = task_batches.entry(task).or_default();
        if !list.contains(&b) {
            list.push(b);
        }
    }
    Ok(TransferPlan { batches, task_batches })
}
