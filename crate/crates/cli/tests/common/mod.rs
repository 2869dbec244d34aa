#![allow(dead_code)]

use std::path::Path;
use std::process::{Command, Output};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub fn enplace(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_enplace"))
        .args(args)
        .output()
        .expect("binary runs")
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

pub fn p(path: &Path) -> &str {
    path.to_str().expect("utf-8 temp path")
}

pub const TRUE_WEIGHTS: [f64; 4] = [1e-7, 2e-9, 3e-9, 1e-9];
pub const TRUE_INTERCEPT: f64 = 100.0;

/// Counter and power CSVs for `n` one-second intervals with two busy
/// processes, power generated from the true model plus N(0, sigma) noise.
pub fn power_trace(n: usize, sigma: f64, seed: u64) -> (String, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, sigma.max(f64::MIN_POSITIVE)).expect("valid sigma");
    let mut counters = String::from("timestamp_s,process_id,llc_misses,instructions_retired,cpu_cycles,ref_cycles\n");
    let mut power = String::from("timestamp_s,device_id,power_w\n");
    for i in 1..=n {
        let t = i as f64;
        let mut total = [0.0f64; 4];
        for pid in [101, 202] {
            let c: [u64; 4] = [
                // per-second counts of a busy multi-core process
                rng.random_range(1_000_000..500_000_000),
                rng.random_range(1_000_000_000..20_000_000_000),
                rng.random_range(1_000_000_000..20_000_000_000),
                rng.random_range(1_000_000_000..20_000_000_000),
            ];
            for k in 0..4 {
                total[k] += c[k] as f64;
            }
            counters.push_str(&format!("{t},{pid},{},{},{},{}\n", c[0], c[1], c[2], c[3]));
        }
        let clean: f64 = TRUE_INTERCEPT + (0..4).map(|k| TRUE_WEIGHTS[k] * total[k]).sum::<f64>();
        let w = if sigma > 0.0 { clean + noise.sample(&mut rng) } else { clean };
        power.push_str(&format!("{t},cpu0,{w}\n"));
    }
    (counters, power)
}

/// Transfer history on two paths from `seconds = 2 + 0.1 files + 1e-8 bytes`.
pub fn transfer_history() -> String {
    let mut s = String::from("src,dst,n_files,total_bytes,seconds\n");
    for (src, dst) in [("desktop", "faster"), ("desktop", "ic")] {
        for i in 0..10u64 {
            let files = 1 + (i * 7) % 11;
            let bytes = 1_000_000 * (1 + (i * i * 13) % 29);
            let secs = 2.0 + 0.1 * files as f64 + 1e-8 * bytes as f64;
            s.push_str(&format!("{src},{dst},{files},{bytes},{secs}\n"));
        }
    }
    s
}

/// Measured strategy comparison: label, runtime s, energy kJ, transfer kJ,
/// normalized EDP, normalized W-ED2P.
pub const MEASURED: [(&str, f64, f64, f64, f64, f64); 8] = [
    ("Desktop", 640.0, 33.5, 0.0, 2.24, 11.7),
    ("Theta", 656.0, 103.0, 10.72, 7.07, 30.3),
    ("IC", 340.0, 79.3, 10.00, 2.82, 5.80),
    ("FASTER", 209.0, 66.1, 13.76, 1.45, 1.72),
    ("Round Robin", 272.0, 69.6, 8.72, 1.98, 3.19),
    ("MHRA", 707.0, 47.3, 0.0, 3.50, 19.2),
    ("Cluster MHRA alpha=1.0", 677.0, 34.6, 0.0, 2.45, 13.6),
    ("Cluster MHRA alpha=0.2", 175.0, 54.5, 4.64, 1.00, 1.00),
];

/// Write each measured row as a minimal result file; returns the paths.
pub fn measured_result_files(dir: &Path) -> Vec<String> {
    MEASURED
        .iter()
        .enumerate()
        .map(|(i, (label, t, e, tx, _, _))| {
            let path = dir.join(format!("measured_{i}.json"));
            let doc = serde_json::json!({
                "label": label,
                "makespan_s": t,
                "node_energy_j": e * 1e3,
                "transfer_energy_j": tx * 1e3,
            });
            std::fs::write(&path, doc.to_string()).unwrap();
            p(&path).to_string()
        })
        .collect()
}
