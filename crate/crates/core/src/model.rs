//! Domain values shared by every stage: machines, tasks, their input files,
//! and the execution records produced by endpoints.

use std::collections::{HashMap, HashSet};
use std::io::BufRead;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One compute endpoint. A machine is a homogeneous class of nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MachineSpec {
    pub machine_id: String,
    pub cores_per_node: u32,
    /// Idle draw of one allocated node (all sockets), Watts.
    pub idle_power_w: f64,
    #[serde(default)]
    pub tdp_w: f64,
    /// Mean wait between requesting a node and the node starting, seconds.
    pub avg_queue_s: f64,
    /// Startup + release accounting span charged per node allocation.
    /// Falls back to `avg_queue_s` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provisioning_overhead_s: Option<f64>,
    pub has_batch_scheduler: bool,
    pub max_nodes: u32,
}

impl MachineSpec {
    pub fn overhead_s(&self) -> f64 {
        self.provisioning_overhead_s.unwrap_or(self.avg_queue_s)
    }

    /// Energy to bring up and release one node.
    pub fn startup_energy_j(&self) -> f64 {
        self.idle_power_w * self.overhead_s()
    }

    fn validate(&self) -> Result<()> {
        let field = |name: &str| format!("{}.{name}", self.machine_id);
        if self.machine_id.is_empty() {
            return Err(Error::validation("machine_id", "must not be empty"));
        }
        if self.cores_per_node < 1 {
            return Err(Error::validation(field("cores_per_node"), "must be at least 1"));
        }
        if self.max_nodes < 1 {
            return Err(Error::validation(field("max_nodes"), "must be at least 1"));
        }
        for (name, v) in [
            ("idle_power_w", self.idle_power_w),
            ("avg_queue_s", self.avg_queue_s),
            ("tdp_w", self.tdp_w),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::validation(field(name), format!("must be finite and >= 0, got {v}")));
            }
        }
        if let Some(o) = self.provisioning_overhead_s {
            if !(o.is_finite() && o >= 0.0) {
                return Err(Error::validation(field("provisioning_overhead_s"), "must be finite and >= 0"));
            }
        }
        Ok(())
    }
}

/// An ordered, validated set of machines. Order is significant: it is the
/// embedding order and the scheduler's tie-break order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Fleet {
    machines: Vec<MachineSpec>,
    index: HashMap<String, usize>,
}

impl Fleet {
    pub fn new(machines: Vec<MachineSpec>) -> Result<Self> {
        let mut index = HashMap::with_capacity(machines.len());
        for (i, m) in machines.iter().enumerate() {
            m.validate()?;
            if index.insert(m.machine_id.clone(), i).is_some() {
                return Err(Error::validation(
                    "machine_id",
                    format!("duplicate machine id `{}`", m.machine_id),
                ));
            }
        }
        Ok(Self { machines, index })
    }

    pub fn machines(&self) -> &[MachineSpec] {
        &self.machines
    }

    pub fn len(&self) -> usize {
        self.machines.len()
    }

    pub fn is_empty(&self) -> bool {
        self.machines.is_empty()
    }

    pub fn position(&self, machine_id: &str) -> Option<usize> {
        self.index.get(machine_id).copied()
    }

    pub fn get(&self, machine_id: &str) -> Option<&MachineSpec> {
        self.position(machine_id).map(|i| &self.machines[i])
    }

    pub fn require(&self, machine_id: &str) -> Result<usize> {
        self.position(machine_id)
            .ok_or_else(|| Error::Lookup(format!("unknown machine `{machine_id}`")))
    }

    /// A fleet holding only the named machine.
    pub fn subset(&self, machine_id: &str) -> Result<Fleet> {
        let i = self.require(machine_id)?;
        Fleet::new(vec![self.machines[i].clone()])
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.machines).expect("machine specs serialize")
    }
}

impl std::ops::Index<usize> for Fleet {
    type Output = MachineSpec;
    fn index(&self, i: usize) -> &MachineSpec {
        &self.machines[i]
    }
}

/// Parse and validate a fleet document (a JSON array of machine specs).
pub fn load_fleet(document: &str) -> Result<Fleet> {
    let machines: Vec<MachineSpec> = serde_json::from_str(document)?;
    Fleet::new(machines)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sharing {
    /// Transferred for every task that reads it.
    Exclusive,
    /// May be cached on a destination endpoint and reused by later tasks.
    Shared,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FileRef {
    pub logical_path: String,
    pub size_bytes: u64,
    pub home_machine: String,
    pub sharing: Sharing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub task_id: String,
    pub function_id: String,
    #[serde(default)]
    pub input_files: Vec<FileRef>,
    #[serde(default)]
    pub submit_time_s: f64,
}

/// What an endpoint reports for one finished task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskRecord {
    pub task_id: String,
    pub machine_id: String,
    pub worker_process_id: i64,
    pub start_s: f64,
    pub end_s: f64,
    #[serde(default)]
    pub attributed_energy_j: f64,
}

impl TaskRecord {
    pub fn runtime_s(&self) -> f64 {
        self.end_s - self.start_s
    }
}

pub fn validate_workload(tasks: &[TaskSpec]) -> Result<()> {
    let mut seen = HashSet::with_capacity(tasks.len());
    for t in tasks {
        if !seen.insert(t.task_id.as_str()) {
            return Err(Error::validation("task_id", format!("duplicate task id `{}`", t.task_id)));
        }
        if !(t.submit_time_s.is_finite() && t.submit_time_s >= 0.0) {
            return Err(Error::validation(
                format!("{}.submit_time_s", t.task_id),
                "must be finite and >= 0",
            ));
        }
    }
    Ok(())
}

/// Read a JSON Lines workload; blank lines are skipped.
pub fn read_workload(reader: impl BufRead) -> Result<Vec<TaskSpec>> {
    let mut tasks = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io("workload", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let task: TaskSpec = serde_json::from_str(&line).map_err(|e| {
            let mut err = Error::from(e);
            if let Error::Parse { message, .. } = &mut err {
                *message = format!("line {}: {message}", n + 1);
            }
            err
        })?;
        tasks.push(task);
    }
    validate_workload(&tasks)?;
    Ok(tasks)
}

pub fn write_workload(tasks: &[TaskSpec]) -> String {
    let mut out = String::new();
    for t in tasks {
        out.push_str(&serde_json::to_string(t).expect("task specs serialize"));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const FOUR_SITES: &str = r#"[
      {"machine_id":"desktop","cores_per_node":16,"idle_power_w":6.51,"tdp_w":65,"avg_queue_s":0,"has_batch_scheduler":false,"max_nodes":1},
      {"machine_id":"theta","cores_per_node":64,"idle_power_w":110,"tdp_w":215,"avg_queue_s":32,"has_batch_scheduler":true,"max_nodes":1},
      {"machine_id":"ic","cores_per_node":48,"idle_power_w":136,"tdp_w":205,"avg_queue_s":24,"has_batch_scheduler":true,"max_nodes":1},
      {"machine_id":"faster","cores_per_node":64,"idle_power_w":205,"tdp_w":205,"avg_queue_s":22,"has_batch_scheduler":true,"max_nodes":1}
    ]"#;

    #[test]
    fn loads_four_site_fleet() {
        let fleet = load_fleet(FOUR_SITES).unwrap();
        assert_eq!(fleet.len(), 4);
        let desktop = fleet.get("desktop").unwrap();
        assert_eq!(desktop.cores_per_node, 16);
        assert_eq!(desktop.idle_power_w, 6.51);
        assert_eq!(desktop.avg_queue_s, 0.0);
        let theta = fleet.get("theta").unwrap();
        assert_eq!((theta.cores_per_node, theta.idle_power_w, theta.avg_queue_s), (64, 110.0, 32.0));
        // overhead defaults to the queue wait
        assert_eq!(theta.overhead_s(), 32.0);
    }

    #[test]
    fn empty_fleet_is_fine() {
        assert!(load_fleet("[]").unwrap().is_empty());
    }

    #[test]
    fn zero_cores_rejected() {
        let doc = FOUR_SITES.replace("\"cores_per_node\":16", "\"cores_per_node\":0");
        match load_fleet(&doc) {
            Err(Error::Validation { field, .. }) => assert_eq!(field, "desktop.cores_per_node"),
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn duplicate_ids_rejected() {
        let doc = FOUR_SITES.replace("\"theta\"", "\"desktop\"");
        assert!(matches!(load_fleet(&doc), Err(Error::Validation { .. })));
    }

    #[test]
    fn malformed_document_names_field() {
        let doc = FOUR_SITES.replace("\"idle_power_w\":6.51", "\"idle_power_w\":\"lots\"");
        let err = load_fleet(&doc).unwrap_err();
        assert!(matches!(err, Error::Parse { .. }), "{err:?}");
        let doc = r#"[{"machine_id":"x","idle_power_w":1,"avg_queue_s":0,"has_batch_scheduler":false,"max_nodes":1}]"#;
        match load_fleet(doc) {
            Err(Error::Parse { field, .. }) => assert_eq!(field.as_deref(), Some("cores_per_node")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn loading_is_idempotent() {
        assert_eq!(load_fleet(FOUR_SITES).unwrap(), load_fleet(FOUR_SITES).unwrap());
        let fleet = load_fleet(FOUR_SITES).unwrap();
        assert_eq!(load_fleet(&fleet.to_json()).unwrap(), fleet);
    }

    #[test]
    fn workload_jsonl_reads_inline_files() {
        let doc = concat!(
            r#"{"task_id":"t1","function_id":"bfs","input_files":[{"logical_path":"/g","size_bytes":10,"home_machine":"desktop","sharing":"shared"}],"submit_time_s":0}"#,
            "\n\n",
            r#"{"task_id":"t2","function_id":"bfs"}"#,
            "\n"
        );
        let tasks = read_workload(doc.as_bytes()).unwrap();
        assert_eq!(tasks.len(), 2);
        assert_eq!(tasks[0].input_files[0].sharing, Sharing::Shared);
        assert_eq!(read_workload(write_workload(&tasks).as_bytes()).unwrap(), tasks);
    }

    #[test]
    fn duplicate_task_ids_rejected() {
        let doc = "{\"task_id\":\"a\",\"function_id\":\"f\"}\n{\"task_id\":\"a\",\"function_id\":\"f\"}\n";
        assert!(matches!(read_workload(doc.as_bytes()), Err(Error::Validation { .. })));
    }
}
