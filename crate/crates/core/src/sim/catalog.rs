//! Built-in machines and profiles for desk-scale experiments.
//!
//! The fleet mirrors the four measured systems (cores per node, idle draw,
//! TDP, mean queue wait); each endpoint requests one node at a time. The
//! synthetic profiles are chosen so that running the seven-benchmark
//! workload on any single machine lands near the measured single-machine
//! runtimes and energies: the desktop is small but frugal, FASTER is the
//! fastest HPC system but draws the most at idle, Theta is slow.

use crate::model::{Fleet, MachineSpec};
use crate::profile::{FunctionProfile, ProfileStore};

use super::workload::{BENCHMARKS, MOLDESIGN_INFER, MOLDESIGN_SIMULATE, MOLDESIGN_TRAIN};

pub const DESKTOP: &str = "desktop";
pub const THETA: &str = "theta";
pub const IC: &str = "ic";
pub const FASTER: &str = "faster";

/// Startup plus release accounting span for an HPC node, seconds.
pub const NODE_OVERHEAD_S: f64 = 4.0;

fn machine(id: &str, cores: u32, idle_w: f64, tdp_w: f64, queue_s: f64, batch: bool) -> MachineSpec {
    MachineSpec {
        machine_id: id.to_string(),
        cores_per_node: cores,
        idle_power_w: idle_w,
        tdp_w,
        avg_queue_s: queue_s,
        provisioning_overhead_s: Some(if batch { NODE_OVERHEAD_S } else { 0.0 }),
        has_batch_scheduler: batch,
        max_nodes: 1,
    }
}

pub fn reference_fleet() -> Fleet {
    Fleet::new(vec![
        machine(DESKTOP, 16, 6.51, 65.0, 0.0, false),
        machine(THETA, 64, 110.0, 215.0, 32.0, true),
        machine(IC, 48, 136.0, 205.0, 24.0, true),
        machine(FASTER, 64, 205.0, 205.0, 22.0, true),
    ])
    .expect("reference fleet is valid")
}

/// Desktop runtime of each benchmark, seconds, in `BENCHMARKS` order.
const DESKTOP_RUNTIME_S: [f64; 7] = [3.0, 4.0, 9.0, 6.0, 8.0, 1.5, 8.5];
/// Relative compute intensity (dynamic power multiplier) per benchmark.
const INTENSITY: [f64; 7] = [1.1, 0.9, 1.0, 1.2, 0.9, 0.8, 1.1];

/// Per machine: runtime multiplier over the desktop, dynamic Watts per
/// busy core, and a per-benchmark runtime skew.
const MACHINE_TRAITS: [(&str, f64, f64, [f64; 7]); 4] = [
    (DESKTOP, 1.0, 2.9, [1.0; 7]),
    (THETA, 3.9, 0.8, [0.9, 1.1, 1.05, 0.95, 1.0, 1.1, 0.95]),
    (IC, 1.48, 2.2, [1.05, 0.95, 1.0, 1.1, 0.9, 1.0, 1.0]),
    (FASTER, 1.17, 2.0, [0.95, 1.0, 1.1, 0.9, 1.05, 1.0, 1.0]),
];

/// Mean runtime and dynamic energy of every benchmark on every reference
/// machine.
pub fn synthetic_profiles() -> ProfileStore {
    let mut store = ProfileStore::new();
    for (b, bench) in BENCHMARKS.iter().enumerate() {
        for (id, slowdown, watts_per_core, skew) in MACHINE_TRAITS {
            let runtime = DESKTOP_RUNTIME_S[b] * slowdown * skew[b];
            store.insert(FunctionProfile {
                function_id: bench.name.to_string(),
                machine_id: id.to_string(),
                mean_runtime_s: runtime,
                mean_energy_j: runtime * watts_per_core * INTENSITY[b],
                sample_count: 1,
            });
        }
    }
    store
}

/// Desktop, IC and FASTER: the systems used for the molecular-design runs.
pub fn moldesign_fleet() -> Fleet {
    let full = reference_fleet();
    Fleet::new(
        [DESKTOP, IC, FASTER]
            .iter()
            .map(|id| full.get(id).expect("reference machine").clone())
            .collect(),
    )
    .expect("subset of a valid fleet")
}

/// Simulation and inference parallelize well and run best on the big HPC
/// nodes; model training runs best on the desktop.
pub fn moldesign_profiles() -> ProfileStore {
    let table: [(&str, [(f64, f64); 3]); 3] = [
        (MOLDESIGN_SIMULATE, [(90.0, 300.0), (16.0, 55.0), (10.0, 40.0)]),
        (MOLDESIGN_TRAIN, [(30.0, 150.0), (200.0, 900.0), (150.0, 700.0)]),
        (MOLDESIGN_INFER, [(8.0, 25.0), (4.0, 10.0), (3.0, 8.0)]),
    ];
    let mut store = ProfileStore::new();
    for (function, row) in table {
        for (id, (runtime, energy)) in [DESKTOP, IC, FASTER].iter().zip(row) {
            store.insert(FunctionProfile {
                function_id: function.to_string(),
                machine_id: id.to_string(),
                mean_runtime_s: runtime,
                mean_energy_j: energy,
                sample_count: 1,
            });
        }
    }
    store
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_fleet_matches_measured_systems() {
        let f = reference_fleet();
        let rows: Vec<(u32, f64, f64, f64)> = f
            .machines()
            .iter()
            .map(|m| (m.cores_per_node, m.idle_power_w, m.tdp_w, m.avg_queue_s))
            .collect();
        assert_eq!(
            rows,
            vec![(16, 6.51, 65.0, 0.0), (64, 110.0, 215.0, 32.0), (48, 136.0, 205.0, 24.0), (64, 205.0, 205.0, 22.0)]
        );
        assert!(!f.machines()[0].has_batch_scheduler);
        assert_eq!(crate::sched::startup_energy_threshold(&f), 110.0 * NODE_OVERHEAD_S);
    }

    #[test]
    fn every_benchmark_has_a_profile_everywhere() {
        let p = synthetic_profiles();
        assert_eq!(p.len(), 7 * 4);
        let f = reference_fleet();
        for b in BENCHMARKS {
            for m in f.machines() {
                assert!(p.lookup_prediction(&f, b.name, &m.machine_id).unwrap().observed);
            }
        }
    }
}
