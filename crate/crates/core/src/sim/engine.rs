//! Discrete-event execution of a workload under a placement strategy.
//!
//! Events at equal times are processed in kind order (submit, batch close,
//! node ready, transfer done, task start, task end, node release) and then by
//! insertion order, so a run is a pure function of its inputs and seed.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap, VecDeque};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use serde::{Deserialize, Serialize};

use super::workload::Workload;
use super::{edp, ed2p, MachineResult, SimOptions, SimTaskRecord, SimulationResult, TraceEvent};
use crate::error::{Error, Result};
use crate::model::{Fleet, TaskSpec};
use crate::profile::ProfileStore;
use crate::sched::{self, MachineState, Problem, Strategy};
use crate::transfer::{plan_batch_transfers, CacheLedger, TransferModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    TaskSubmit,
    BatchClose,
    NodeReady,
    TransferDone,
    TaskStart,
    TaskEnd,
    NodeRelease,
}

#[derive(Debug, Clone, Copy)]
enum Payload {
    Task(usize),
    Node(usize),
    Machine(usize),
    None,
}

#[derive(Debug, Clone, Copy)]
struct Event {
    time: f64,
    kind: EventKind,
    seq: u64,
    payload: Payload,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Event {}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Event {
    // Reversed: BinaryHeap is a max-heap and the earliest event must pop first.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .time
            .total_cmp(&self.time)
            .then(other.kind.cmp(&self.kind))
            .then(other.seq.cmp(&self.seq))
    }
}

#[derive(Debug, Clone)]
struct Node {
    machine: usize,
    ready: bool,
    ready_s: f64,
    free: u32,
    running: u32,
    released: bool,
}

#[derive(Debug, Default)]
struct MachineSim {
    /// Ready to run, FIFO.
    queue: VecDeque<usize>,
    /// Assigned but waiting for inputs: (inputs ready at, task).
    waiting: Vec<(f64, usize)>,
    running: usize,
    nodes: Vec<usize>,
    nodes_allocated: usize,
    idle_j: f64,
    dynamic_j: f64,
    tasks: usize,
}

#[derive(Debug, Clone)]
struct TaskState {
    spec: TaskSpec,
    machine: usize,
    node: usize,
    predicted_s: f64,
    submit_s: f64,
    scheduled_s: f64,
    ready_s: f64,
    start_s: f64,
    end_s: f64,
    energy_j: f64,
}

struct Engine<'a> {
    fleet: &'a Fleet,
    profiles: &'a ProfileStore,
    transfer: &'a TransferModel,
    strategy: &'a Strategy,
    opts: &'a SimOptions,
    heap: BinaryHeap<Event>,
    seq: u64,
    now: f64,
    tasks: Vec<TaskState>,
    pending: Vec<usize>,
    batch_open: bool,
    batches: usize,
    rr_offset: usize,
    machines: Vec<MachineSim>,
    nodes: Vec<Node>,
    ledger: CacheLedger,
    /// When each (machine, logical path) lands or landed.
    arrivals: HashMap<(usize, String), f64>,
    transfer_j: f64,
    transferred_bytes: u64,
    queue_rng: Vec<ChaCha8Rng>,
    predictions: HashMap<(String, usize), (f64, f64)>,
    trace: Vec<TraceEvent>,
}

/// Stable 64-bit FNV-1a, used to derive per-task random streams.
fn fnv1a(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

impl<'a> Engine<'a> {
    fn push(&mut self, time: f64, kind: EventKind, payload: Payload) {
        self.seq += 1;
        self.heap.push(Event {
            time,
            kind,
            seq: self.seq,
            payload,
        });
    }

    fn record(&mut self, kind: EventKind, task: Option<usize>, machine: Option<usize>, node: Option<usize>) {
        if !self.opts.trace {
            return;
        }
        self.trace.push(TraceEvent {
            time_s: self.now,
            kind,
            task_id: task.map(|t| self.tasks[t].spec.task_id.clone()),
            machine_id: machine.map(|m| self.fleet[m].machine_id.clone()),
            node,
        });
    }

    fn prediction(&mut self, function: &str, m: usize) -> Result<(f64, f64)> {
        if let Some(p) = self.predictions.get(&(function.to_string(), m)) {
            return Ok(*p);
        }
        let p = self.profiles.lookup_prediction(self.fleet, function, &self.fleet[m].machine_id)?;
        let v = (p.runtime_s, p.energy_j);
        self.predictions.insert((function.to_string(), m), v);
        Ok(v)
    }

    fn submit(&mut self, spec: TaskSpec) {
        let t = self.tasks.len();
        let at = spec.submit_time_s.max(self.now);
        self.tasks.push(TaskState {
            spec,
            machine: usize::MAX,
            node: usize::MAX,
            predicted_s: 0.0,
            submit_s: at,
            scheduled_s: f64::NAN,
            ready_s: f64::NAN,
            start_s: f64::NAN,
            end_s: f64::NAN,
            energy_j: 0.0,
        });
        self.push(at, EventKind::TaskSubmit, Payload::Task(t));
    }

    fn on_submit(&mut self, t: usize) {
        self.record(EventKind::TaskSubmit, Some(t), None, None);
        self.pending.push(t);
        if !self.batch_open {
            self.batch_open = true;
            let close = self.now + self.opts.batch_window_s;
            self.push(close, EventKind::BatchClose, Payload::None);
        }
    }

    fn machine_state(&self) -> Vec<MachineState> {
        self.machines
            .iter()
            .enumerate()
            .map(|(m, ms)| {
                let live: Vec<&Node> = ms.nodes.iter().map(|&n| &self.nodes[n]).filter(|n| !n.released).collect();
                let node_ready_in_s = live
                    .iter()
                    .map(|n| if n.ready { 0.0 } else { (n.ready_s - self.now).max(0.0) })
                    .reduce(f64::min);
                let queued: f64 = ms
                    .queue
                    .iter()
                    .chain(ms.waiting.iter().map(|(_, t)| t))
                    .map(|&t| self.tasks[t].predicted_s)
                    .sum();
                let running: f64 = self
                    .tasks
                    .iter()
                    .filter(|t| t.machine == m && t.start_s <= self.now && t.end_s.is_nan())
                    .map(|t| (t.start_s + t.predicted_s - self.now).max(0.0))
                    .sum();
                MachineState {
                    node_ready_in_s,
                    backlog_core_s: queued + running,
                }
            })
            .collect()
    }

    fn on_batch_close(&mut self) -> Result<()> {
        self.record(EventKind::BatchClose, None, None, None);
        self.batch_open = false;
        let batch = std::mem::take(&mut self.pending);
        if batch.is_empty() {
            return Ok(());
        }
        self.batches += 1;
        let specs: Vec<TaskSpec> = batch.iter().map(|&t| self.tasks[t].spec.clone()).collect();
        let state = self.machine_state();
        let problem = Problem::new(&specs, self.fleet, self.profiles, self.transfer, self.opts.alpha)
            .with_state(&state)
            .with_ledger(&self.ledger);
        let schedule = match self.strategy {
            Strategy::RoundRobin => sched::schedule_round_robin(&problem, self.rr_offset)?,
            other => sched::schedule(other, &problem)?,
        };
        self.rr_offset += batch.len();

        let mut placed = Vec::with_capacity(batch.len());
        for (&t, a) in batch.iter().zip(&schedule.assignments) {
            let m = self
                .fleet
                .position(&a.machine_id)
                .ok_or_else(|| Error::Simulation(format!("task `{}` placed on unknown machine", a.machine_id)))?;
            placed.push((t, m));
        }

        let pairs: Vec<(&TaskSpec, &str)> = placed
            .iter()
            .map(|&(t, m)| (&self.tasks[t].spec, self.fleet[m].machine_id.as_str()))
            .collect();
        let plan = plan_batch_transfers(&pairs, self.fleet, self.transfer, &mut self.ledger)?;
        let mut done_at: Vec<(usize, f64)> = Vec::new();
        for b in &plan.batches {
            let dst = self.fleet.require(&b.dst)?;
            let at = self.now + b.predicted_time_s;
            for f in &b.files {
                let e = self.arrivals.entry((dst, f.logical_path.clone())).or_insert(at);
                *e = e.min(at);
            }
            self.transfer_j += b.predicted_energy_j;
            self.transferred_bytes += b.total_bytes;
            done_at.push((dst, at));
        }
        for (dst, at) in done_at {
            self.push(at, EventKind::TransferDone, Payload::Machine(dst));
        }

        let mut touched = Vec::new();
        for (t, m) in placed {
            let function = self.tasks[t].spec.function_id.clone();
            let (predicted, _) = self.prediction(&function, m)?;
            let mut ready = self.now;
            for f in &self.tasks[t].spec.input_files {
                if self.fleet.position(&f.home_machine) == Some(m) {
                    continue;
                }
                if let Some(&at) = self.arrivals.get(&(m, f.logical_path.clone())) {
                    ready = ready.max(at);
                }
            }
            let task = &mut self.tasks[t];
            task.machine = m;
            task.predicted_s = predicted;
            task.scheduled_s = self.now;
            task.ready_s = ready;
            if ready <= self.now {
                self.machines[m].queue.push_back(t);
            } else {
                self.machines[m].waiting.push((ready, t));
            }
            if !touched.contains(&m) {
                touched.push(m);
            }
        }
        touched.sort_unstable();
        for m in touched {
            self.provision(m);
            self.dispatch(m);
        }
        Ok(())
    }

    fn on_transfer_done(&mut self, m: usize) {
        self.record(EventKind::TransferDone, None, Some(m), None);
        let now = self.now;
        let ms = &mut self.machines[m];
        let mut arrived: Vec<(f64, usize)> = Vec::new();
        ms.waiting.retain(|&(at, t)| {
            if at <= now {
                arrived.push((at, t));
                false
            } else {
                true
            }
        });
        arrived.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        ms.queue.extend(arrived.into_iter().map(|(_, t)| t));
        self.dispatch(m);
    }

    /// Request nodes until the machine's outstanding work fits, up to its cap.
    fn provision(&mut self, m: usize) {
        let spec = &self.fleet[m];
        let ms = &self.machines[m];
        let demand = ms.queue.len() + ms.waiting.len() + ms.running;
        let live = ms.nodes.iter().filter(|&&n| !self.nodes[n].released).count();
        let wanted = demand.div_ceil(spec.cores_per_node as usize).min(spec.max_nodes as usize);
        for _ in live..wanted {
            let wait = if self.opts.stochastic_queue && spec.avg_queue_s > 0.0 {
                Exp::new(1.0 / spec.avg_queue_s)
                    .expect("positive rate")
                    .sample(&mut self.queue_rng[m])
            } else {
                spec.avg_queue_s
            };
            let n = self.nodes.len();
            self.nodes.push(Node {
                machine: m,
                ready: false,
                ready_s: self.now + wait,
                free: spec.cores_per_node,
                running: 0,
                released: false,
            });
            self.machines[m].nodes.push(n);
            self.machines[m].nodes_allocated += 1;
            self.push(self.now + wait, EventKind::NodeReady, Payload::Node(n));
        }
    }

    fn on_node_ready(&mut self, n: usize) {
        let m = self.nodes[n].machine;
        self.record(EventKind::NodeReady, None, Some(m), Some(n));
        self.nodes[n].ready = true;
        self.nodes[n].ready_s = self.now;
        self.dispatch(m);
        self.maybe_release(m);
    }

    /// Hand queued tasks to free workers, lowest node first.
    fn dispatch(&mut self, m: usize) {
        loop {
            if self.machines[m].queue.is_empty() {
                return;
            }
            let Some(n) = self.machines[m]
                .nodes
                .iter()
                .copied()
                .find(|&n| self.nodes[n].ready && !self.nodes[n].released && self.nodes[n].free > 0)
            else {
                return;
            };
            let t = self.machines[m].queue.pop_front().expect("non-empty");
            self.nodes[n].free -= 1;
            self.nodes[n].running += 1;
            self.machines[m].running += 1;
            self.tasks[t].node = n;
            self.tasks[t].start_s = self.now;
            self.push(self.now, EventKind::TaskStart, Payload::Task(t));
        }
    }

    fn on_task_start(&mut self, t: usize) -> Result<()> {
        let m = self.tasks[t].machine;
        self.record(EventKind::TaskStart, Some(t), Some(m), Some(self.tasks[t].node));
        let function = self.tasks[t].spec.function_id.clone();
        let (runtime, energy) = self.prediction(&function, m)?;
        let sigma = self.opts.duration_sigma;
        let (duration, dynamic) = if sigma > 0.0 {
            let mut rng = ChaCha8Rng::seed_from_u64(self.opts.seed);
            rng.set_stream(fnv1a(&self.tasks[t].spec.task_id));
            let z1: f64 = StandardNormal.sample(&mut rng);
            let z2: f64 = StandardNormal.sample(&mut rng);
            let shift = -sigma * sigma / 2.0;
            (runtime * (sigma * z1 + shift).exp(), energy * (sigma * z2 + shift).exp())
        } else {
            (runtime, energy)
        };
        self.tasks[t].energy_j = dynamic;
        self.push(self.now + duration, EventKind::TaskEnd, Payload::Task(t));
        Ok(())
    }

    fn on_task_end(&mut self, t: usize, source: &mut dyn super::workload::TaskSource) {
        let (m, n) = (self.tasks[t].machine, self.tasks[t].node);
        self.record(EventKind::TaskEnd, Some(t), Some(m), Some(n));
        self.tasks[t].end_s = self.now;
        self.nodes[n].free += 1;
        self.nodes[n].running -= 1;
        let ms = &mut self.machines[m];
        ms.running -= 1;
        ms.dynamic_j += self.tasks[t].energy_j;
        ms.tasks += 1;
        for spec in source.completed(self.now) {
            self.submit(spec);
        }
        self.dispatch(m);
        self.maybe_release(m);
    }

    /// Queue a release for every idle node of a batch machine with no work
    /// left. The release re-checks, since work may arrive at the same instant.
    fn maybe_release(&mut self, m: usize) {
        if !self.fleet[m].has_batch_scheduler {
            return;
        }
        let ms = &self.machines[m];
        if !ms.queue.is_empty() || !ms.waiting.is_empty() {
            return;
        }
        let idle: Vec<usize> = ms
            .nodes
            .iter()
            .copied()
            .filter(|&n| self.nodes[n].ready && !self.nodes[n].released && self.nodes[n].running == 0)
            .collect();
        for n in idle {
            self.push(self.now, EventKind::NodeRelease, Payload::Node(n));
        }
    }

    fn on_node_release(&mut self, n: usize) {
        let m = self.nodes[n].machine;
        let ms = &self.machines[m];
        let node = &self.nodes[n];
        if node.released || node.running > 0 || !ms.queue.is_empty() || !ms.waiting.is_empty() {
            return;
        }
        let ready_s = node.ready_s;
        self.record(EventKind::NodeRelease, None, Some(m), Some(n));
        let spec = &self.fleet[m];
        let held = self.now - ready_s + spec.overhead_s();
        self.machines[m].idle_j += spec.idle_power_w * held;
        self.nodes[n].released = true;
    }
}

pub fn run_simulation(
    workload: &Workload,
    strategy: &Strategy,
    fleet: &Fleet,
    profiles: &ProfileStore,
    transfer: &TransferModel,
    opts: &SimOptions,
) -> Result<SimulationResult> {
    if fleet.is_empty() && !workload.is_empty() {
        return Err(Error::Simulation("no machine can run the workload: the fleet is empty".into()));
    }
    if let Strategy::Single(id) = strategy {
        if fleet.position(id).is_none() {
            return Err(Error::Config(format!("unknown machine `{id}` for single-machine strategy")));
        }
    }
    if !(0.0..=1.0).contains(&opts.alpha) {
        return Err(Error::Config(format!("alpha must lie in [0, 1], got {}", opts.alpha)));
    }
    if !(opts.batch_window_s >= 0.0 && opts.batch_window_s.is_finite()) {
        return Err(Error::Config("batch window must be finite and >= 0".into()));
    }
    if !(opts.duration_sigma >= 0.0 && opts.duration_sigma.is_finite()) {
        return Err(Error::Config("duration sigma must be finite and >= 0".into()));
    }

    let queue_rng = (0..fleet.len())
        .map(|m| {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            rng.set_stream(u64::MAX - m as u64);
            rng
        })
        .collect();
    let mut engine = Engine {
        fleet,
        profiles,
        transfer,
        strategy,
        opts,
        heap: BinaryHeap::new(),
        seq: 0,
        now: 0.0,
        tasks: Vec::with_capacity(workload.len()),
        pending: Vec::new(),
        batch_open: false,
        batches: 0,
        rr_offset: 0,
        machines: (0..fleet.len()).map(|_| MachineSim::default()).collect(),
        nodes: Vec::new(),
        ledger: CacheLedger::default(),
        arrivals: HashMap::new(),
        transfer_j: 0.0,
        transferred_bytes: 0,
        queue_rng,
        predictions: HashMap::new(),
        trace: Vec::new(),
    };

    let mut source = workload.source();
    for spec in source.initial() {
        engine.submit(spec);
    }
    while let Some(ev) = engine.heap.pop() {
        engine.now = ev.time;
        match (ev.kind, ev.payload) {
            (EventKind::TaskSubmit, Payload::Task(t)) => engine.on_submit(t),
            (EventKind::BatchClose, _) => engine.on_batch_close()?,
            (EventKind::NodeReady, Payload::Node(n)) => engine.on_node_ready(n),
            (EventKind::TransferDone, Payload::Machine(m)) => engine.on_transfer_done(m),
            (EventKind::TaskStart, Payload::Task(t)) => engine.on_task_start(t)?,
            (EventKind::TaskEnd, Payload::Task(t)) => engine.on_task_end(t, source.as_mut()),
            (EventKind::NodeRelease, Payload::Node(n)) => engine.on_node_release(n),
            (kind, payload) => {
                return Err(Error::Contract(format!("malformed event {kind:?} with {payload:?}")));
            }
        }
    }

    let unfinished = engine.tasks.iter().filter(|t| t.end_s.is_nan()).count();
    if unfinished > 0 {
        return Err(Error::Simulation(format!("{unfinished} tasks never ran")));
    }
    let makespan = engine.tasks.iter().map(|t| t.end_s).fold(0.0, f64::max);

    // Machines without a batch scheduler hold their nodes for the whole run.
    for (m, ms) in engine.machines.iter_mut().enumerate() {
        let spec = &fleet[m];
        if spec.has_batch_scheduler {
            continue;
        }
        for &n in &ms.nodes {
            ms.idle_j += spec.idle_power_w * (makespan + spec.overhead_s());
            engine.nodes[n].released = true;
        }
    }

    let machines: Vec<MachineResult> = engine
        .machines
        .iter()
        .enumerate()
        .map(|(m, ms)| MachineResult {
            machine_id: fleet[m].machine_id.clone(),
            tasks: ms.tasks,
            nodes_allocated: ms.nodes_allocated,
            idle_energy_j: ms.idle_j,
            dynamic_energy_j: ms.dynamic_j,
            node_energy_j: ms.idle_j + ms.dynamic_j,
        })
        .collect();
    let idle: f64 = machines.iter().map(|m| m.idle_energy_j).sum();
    let dynamic: f64 = machines.iter().map(|m| m.dynamic_energy_j).sum();
    let energy = idle + dynamic;
    let records = engine
        .tasks
        .iter()
        .map(|t| SimTaskRecord {
            task_id: t.spec.task_id.clone(),
            machine_id: fleet[t.machine].machine_id.clone(),
            node: t.node,
            submit_s: t.submit_s,
            scheduled_s: t.scheduled_s,
            ready_s: t.ready_s,
            start_s: t.start_s,
            end_s: t.end_s,
            energy_j: t.energy_j,
        })
        .collect();
    Ok(SimulationResult {
        strategy: strategy.clone(),
        alpha: opts.alpha,
        rng_seed: opts.seed,
        workload_hash: workload.hash(),
        batch_window_s: opts.batch_window_s,
        makespan_s: makespan,
        node_energy_j: energy,
        idle_energy_j: idle,
        dynamic_energy_j: dynamic,
        transfer_energy_j: engine.transfer_j,
        transferred_bytes: engine.transferred_bytes,
        tasks_completed: engine.tasks.len(),
        batches: engine.batches,
        edp: edp(energy, makespan),
        ed2p: ed2p(energy, makespan),
        machines,
        records,
        trace: engine.trace,
    })
}
