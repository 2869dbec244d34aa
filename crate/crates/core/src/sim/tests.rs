use proptest::prelude::*;
use proptest::strategy::Strategy as _;
use crate::sched::Strategy;

use super::*;
use crate::model::{FileRef, Fleet, MachineSpec, Sharing, TaskSpec};
use crate::profile::{FunctionProfile, ProfileStore};
use crate::transfer::TransferModel;

fn machine(id: &str, cores: u32, idle: f64, queue: f64, batch: bool, max_nodes: u32) -> MachineSpec {
    MachineSpec {
        machine_id: id.to_string(),
        cores_per_node: cores,
        idle_power_w: idle,
        tdp_w: 0.0,
        avg_queue_s: queue,
        provisioning_overhead_s: None,
        has_batch_scheduler: batch,
        max_nodes,
    }
}

fn one_profile(function: &str, machine_id: &str, runtime: f64, energy: f64) -> FunctionProfile {
    FunctionProfile {
        function_id: function.to_string(),
        machine_id: machine_id.to_string(),
        mean_runtime_s: runtime,
        mean_energy_j: energy,
        sample_count: 1,
    }
}

fn plain_tasks(n: usize, function: &str) -> Vec<TaskSpec> {
    (0..n)
        .map(|i| TaskSpec {
            task_id: format!("t{i:03}"),
            function_id: function.to_string(),
            input_files: Vec::new(),
            submit_time_s: 0.0,
        })
        .collect()
}

fn run(tasks: Vec<TaskSpec>, strategy: &str, fleet: &Fleet, profiles: &ProfileStore, opts: &SimOptions) -> SimulationResult {
    run_simulation(
        &Workload::Static { tasks },
        &strategy.parse().unwrap(),
        fleet,
        profiles,
        &TransferModel::default(),
        opts,
    )
    .unwrap()
}

#[test]
fn single_task_on_a_desktop() {
    let fleet = Fleet::new(vec![machine("desk", 16, 6.51, 0.0, false, 1)]).unwrap();
    let mut p = ProfileStore::new();
    p.insert(one_profile("f", "desk", 10.0, 100.0));
    let r = run(plain_tasks(1, "f"), "single:desk", &fleet, &p, &SimOptions::deterministic(0.5));
    assert_eq!(r.makespan_s, 10.0);
    assert!((r.node_energy_j - 165.1).abs() < 1e-9);
    assert_eq!(r.tasks_completed, 1);
    assert_eq!(r.edp, r.node_energy_j * 10.0);
}

#[test]
fn eight_tasks_on_four_cores_take_two_waves() {
    let fleet = Fleet::new(vec![machine("m", 4, 10.0, 0.0, true, 1)]).unwrap();
    let mut p = ProfileStore::new();
    p.insert(one_profile("f", "m", 10.0, 5.0));
    let r = run(plain_tasks(8, "f"), "single:m", &fleet, &p, &SimOptions::deterministic(0.5));
    assert_eq!(r.makespan_s, 20.0);
    assert_eq!(r.machines[0].nodes_allocated, 1);
    // One node held for 20 s; overhead falls back to the zero queue time.
    assert_eq!(r.idle_energy_j, 200.0);
    assert_eq!(r.dynamic_energy_j, 40.0);
}

#[test]
fn queue_wait_delays_start_and_is_not_idle_time() {
    let fleet = Fleet::new(vec![MachineSpec {
        provisioning_overhead_s: Some(3.0),
        ..machine("hpc", 2, 100.0, 30.0, true, 1)
    }])
    .unwrap();
    let mut p = ProfileStore::new();
    p.insert(one_profile("f", "hpc", 10.0, 50.0));
    let r = run(plain_tasks(2, "f"), "single:hpc", &fleet, &p, &SimOptions::deterministic(0.5));
    assert_eq!(r.makespan_s, 40.0);
    assert_eq!(r.idle_energy_j, 100.0 * (10.0 + 3.0));
    assert!(r.records.iter().all(|t| t.start_s == 30.0));
}

#[test]
fn nodes_are_released_and_reacquired_between_batches() {
    let fleet = Fleet::new(vec![MachineSpec {
        provisioning_overhead_s: Some(0.0),
        ..machine("hpc", 1, 10.0, 5.0, true, 1)
    }])
    .unwrap();
    let mut p = ProfileStore::new();
    p.insert(one_profile("f", "hpc", 2.0, 1.0));
    let mut tasks = plain_tasks(2, "f");
    tasks[1].submit_time_s = 100.0;
    let r = run(tasks, "single:hpc", &fleet, &p, &SimOptions::deterministic(0.5));
    assert_eq!(r.batches, 2);
    assert_eq!(r.machines[0].nodes_allocated, 2);
    assert_eq!(r.makespan_s, 107.0);
    assert_eq!(r.idle_energy_j, 40.0);
}

#[test]
fn transfers_complete_before_tasks_start() {
    let fleet = Fleet::new(vec![machine("a", 4, 1.0, 0.0, false, 1), machine("b", 4, 1.0, 0.0, false, 1)]).unwrap();
    let mut p = ProfileStore::new();
    p.insert(one_profile("f", "a", 1.0, 1.0));
    p.insert(one_profile("f", "b", 1.0, 1.0));
    let mut tasks = plain_tasks(1, "f");
    tasks[0].input_files.push(FileRef {
        logical_path: "/x".into(),
        size_bytes: 1_000_000_000,
        home_machine: "a".into(),
        sharing: Sharing::Exclusive,
    });
    let r = run(tasks, "single:b", &fleet, &p, &SimOptions::deterministic(0.5));
    let t = &r.records[0];
    assert!(t.ready_s > 0.0);
    assert_eq!(t.start_s, t.ready_s);
    assert!(r.transfer_energy_j > 0.0);
    assert_eq!(r.transferred_bytes, 1_000_000_000);
    // Transfer energy is reported beside node energy, never inside it.
    assert_eq!(r.node_energy_j, r.idle_energy_j + r.dynamic_energy_j);
}

#[test]
fn configuration_errors() {
    let fleet = Fleet::new(vec![machine("m", 4, 1.0, 0.0, false, 1)]).unwrap();
    let p = ProfileStore::new();
    let w = Workload::Static { tasks: plain_tasks(1, "f") };
    let tm = TransferModel::default();
    let opts = SimOptions::deterministic(0.5);
    let single = Strategy::Single("nope".into());
    assert!(matches!(
        run_simulation(&w, &single, &fleet, &p, &tm, &opts),
        Err(crate::Error::Config(_))
    ));
    let empty = Fleet::new(Vec::new()).unwrap_or_else(|_| fleet.clone());
    if empty.is_empty() {
        assert!(matches!(
            run_simulation(&w, &Strategy::Mhra, &empty, &p, &tm, &opts),
            Err(crate::Error::Simulation(_))
        ));
    }
    let bad_alpha = SimOptions { alpha: 2.0, ..opts };
    assert!(run_simulation(&w, &Strategy::Mhra, &fleet, &p, &tm, &bad_alpha).is_err());
}

#[test]
fn moldesign_waves_run_in_order() {
    let fleet = catalog::moldesign_fleet();
    let profiles = catalog::moldesign_profiles();
    let md = gen_moldesign_workload(2, 4, 3, 1, catalog::DESKTOP).unwrap();
    let r = run_simulation(
        &Workload::MolDesign(md.clone()),
        &Strategy::ClusterMhra,
        &fleet,
        &profiles,
        &TransferModel::default(),
        &SimOptions::default(),
    )
    .unwrap();
    assert_eq!(r.tasks_completed, md.total_tasks());
    let waves = md.waves();
    let end_of = |ids: &[TaskSpec]| {
        ids.iter()
            .map(|t| r.records.iter().find(|x| x.task_id == t.task_id).unwrap().end_s)
            .fold(0.0, f64::max)
    };
    let start_of = |ids: &[TaskSpec]| {
        ids.iter()
            .map(|t| r.records.iter().find(|x| x.task_id == t.task_id).unwrap().start_s)
            .fold(f64::INFINITY, f64::min)
    };
    for pair in waves.windows(2) {
        assert!(start_of(&pair[1]) >= end_of(&pair[0]));
    }
}

fn small_fleet() -> Fleet {
    Fleet::new(vec![
        machine("desk", 2, 5.0, 0.0, false, 1),
        MachineSpec {
            provisioning_overhead_s: Some(2.0),
            ..machine("hpc", 4, 50.0, 8.0, true, 2)
        },
    ])
    .unwrap()
}

fn small_profiles() -> ProfileStore {
    let mut p = ProfileStore::new();
    for (f, d, h) in [("a", (4.0, 8.0), (2.0, 10.0)), ("b", (1.0, 2.0), (3.0, 6.0))] {
        p.insert(one_profile(f, "desk", d.0, d.1));
        p.insert(one_profile(f, "hpc", h.0, h.1));
    }
    p
}

fn arb_workload() -> impl proptest::strategy::Strategy<Value = Vec<TaskSpec>> {
    prop::collection::vec((prop::bool::ANY, 0.0f64..20.0, prop::option::of(0u64..50_000_000)), 1..30).prop_map(|v| {
        v.into_iter()
            .enumerate()
            .map(|(i, (a, at, bytes))| TaskSpec {
                task_id: format!("t{i:03}"),
                function_id: if a { "a" } else { "b" }.into(),
                input_files: bytes
                    .map(|b| FileRef {
                        logical_path: format!("/in/{}", b % 3),
                        size_bytes: b,
                        home_machine: "desk".into(),
                        sharing: if b % 2 == 0 { Sharing::Shared } else { Sharing::Exclusive },
                    })
                    .into_iter()
                    .collect(),
                submit_time_s: (at * 4.0).round() / 4.0,
            })
            .collect()
    })
}

fn arb_strategy() -> impl proptest::strategy::Strategy<Value = &'static str> {
    prop::sample::select(vec!["cluster-mhra", "mhra", "round-robin", "single:desk", "single:hpc"])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn runs_are_causal_within_capacity_and_conserve_energy(
        tasks in arb_workload(),
        strategy in arb_strategy(),
        seed in any::<u64>(),
        alpha in 0.0f64..=1.0,
    ) {
        let fleet = small_fleet();
        let opts = SimOptions { alpha, seed, ..SimOptions::default() };
        let n = tasks.len();
        let r = run(tasks.clone(), strategy, &fleet, &small_profiles(), &opts);
        prop_assert_eq!(r.tasks_completed, n);
        prop_assert_eq!(r.machines.iter().map(|m| m.tasks).sum::<usize>(), n);

        for t in &r.records {
            let spec = tasks.iter().find(|s| s.task_id == t.task_id).unwrap();
            prop_assert!(t.submit_s >= spec.submit_time_s);
            prop_assert!(t.scheduled_s >= t.submit_s);
            prop_assert!(t.ready_s >= t.scheduled_s);
            prop_assert!(t.start_s >= t.ready_s);
            prop_assert!(t.end_s > t.start_s);
            prop_assert!(t.energy_j >= 0.0);
        }
        let longest = r.records.iter().map(|t| t.end_s - t.start_s).fold(0.0, f64::max);
        prop_assert!(r.makespan_s >= longest);

        // Capacity: sweep every start instant.
        for (m, spec) in fleet.machines().iter().enumerate() {
            let on: Vec<_> = r.records.iter().filter(|t| t.machine_id == spec.machine_id).collect();
            for t in &on {
                let busy = on.iter().filter(|o| o.start_s <= t.start_s && o.end_s > t.start_s).count();
                let cap = r.machines[m].nodes_allocated.min(spec.max_nodes as usize).max(1) * spec.cores_per_node as usize;
                prop_assert!(busy <= cap, "{} running on {} (cap {})", busy, spec.machine_id, cap);
            }
        }

        let dynamic: f64 = r.records.iter().map(|t| t.energy_j).sum();
        prop_assert!((r.dynamic_energy_j - dynamic).abs() <= 1e-9 * dynamic.max(1.0));
        let idle: f64 = r.machines.iter().map(|m| m.idle_energy_j).sum();
        prop_assert!((r.node_energy_j - (idle + r.dynamic_energy_j)).abs() <= 1e-9 * r.node_energy_j.max(1.0));
        prop_assert!(r.idle_energy_j >= 0.0 && r.transfer_energy_j >= 0.0);
    }

    #[test]
    fn same_seed_same_result(tasks in arb_workload(), strategy in arb_strategy(), seed in any::<u64>()) {
        let fleet = small_fleet();
        let opts = SimOptions { seed, trace: true, ..SimOptions::default() };
        let a = run(tasks.clone(), strategy, &fleet, &small_profiles(), &opts);
        let b = run(tasks, strategy, &fleet, &small_profiles(), &opts);
        prop_assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        prop_assert_eq!(&a.records, &b.records);
        prop_assert_eq!(&a.trace, &b.trace);
    }

    #[test]
    fn events_never_go_back_in_time(tasks in arb_workload(), seed in any::<u64>()) {
        let opts = SimOptions { seed, trace: true, ..SimOptions::default() };
        let r = run(tasks, "cluster-mhra", &small_fleet(), &small_profiles(), &opts);
        prop_assert!(r.trace.windows(2).all(|w| w[0].time_s <= w[1].time_s));
    }
}
