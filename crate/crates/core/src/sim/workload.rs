//! Workload generators.
//!
//! A static workload is a fixed task list. The molecular-design workload is
//! released in waves: each wave's tasks are submitted only once the previous
//! wave has finished, so the scheduler never sees the whole DAG.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::{FileRef, Sharing, TaskSpec};

/// Input layout of one synthetic benchmark.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchmarkInputs {
    pub name: &'static str,
    /// Per-task exclusive input, bytes. Zero for none.
    pub exclusive_bytes: u64,
    /// One input shared by every invocation, bytes. Zero for none.
    pub shared_bytes: u64,
}

pub const BENCHMARKS: [BenchmarkInputs; 7] = [
    BenchmarkInputs { name: "graph_bfs", exclusive_bytes: 0, shared_bytes: 20_000_000 },
    BenchmarkInputs { name: "graph_mst", exclusive_bytes: 0, shared_bytes: 20_000_000 },
    BenchmarkInputs { name: "graph_pagerank", exclusive_bytes: 0, shared_bytes: 20_000_000 },
    BenchmarkInputs { name: "compression", exclusive_bytes: 10_000_000, shared_bytes: 0 },
    BenchmarkInputs { name: "dna_visualization", exclusive_bytes: 8_000_000, shared_bytes: 0 },
    BenchmarkInputs { name: "thumbnail", exclusive_bytes: 1_000_000, shared_bytes: 0 },
    BenchmarkInputs { name: "video_processing", exclusive_bytes: 6_000_000, shared_bytes: 0 },
];

pub fn benchmark_names() -> Vec<&'static str> {
    BENCHMARKS.iter().map(|b| b.name).collect()
}

/// `count` invocations of each benchmark with inputs homed on `data_home`,
/// shuffled by `seed`. Exclusive input sizes vary by ±10 %.
pub fn gen_synthetic_workload(benchmarks: &[&str], count: usize, seed: u64, data_home: &str) -> Result<Vec<TaskSpec>> {
    let mut chosen = Vec::with_capacity(benchmarks.len());
    for b in benchmarks {
        let spec = BENCHMARKS
            .iter()
            .find(|s| s.name == *b)
            .ok_or_else(|| Error::Config(format!("unknown benchmark `{b}` (known: {})", benchmark_names().join(", "))))?;
        chosen.push(*spec);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tasks = Vec::with_capacity(count * chosen.len());
    for b in &chosen {
        for i in 0..count {
            let mut input_files = Vec::new();
            if b.shared_bytes > 0 {
                input_files.push(FileRef {
                    logical_path: format!("/data/{}/shared.bin", b.name),
                    size_bytes: b.shared_bytes,
                    home_machine: data_home.to_string(),
                    sharing: Sharing::Shared,
                });
            }
            if b.exclusive_bytes > 0 {
                let jitter: f64 = rng.random_range(0.9..1.1);
                input_files.push(FileRef {
                    logical_path: format!("/data/{}/{i:05}.in", b.name),
                    size_bytes: (b.exclusive_bytes as f64 * jitter).round() as u64,
                    home_machine: data_home.to_string(),
                    sharing: Sharing::Exclusive,
                });
            }
            tasks.push(TaskSpec {
                task_id: format!("{}-{i:05}", b.name),
                function_id: b.name.to_string(),
                input_files,
                submit_time_s: 0.0,
            });
        }
    }
    tasks.shuffle(&mut rng);
    Ok(tasks)
}

pub const MOLDESIGN_SIMULATE: &str = "simulate";
pub const MOLDESIGN_TRAIN: &str = "train";
pub const MOLDESIGN_INFER: &str = "infer";

/// Active-learning rounds of simulations, one training step, then inference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MolDesign {
    pub rounds: usize,
    pub sims_per_round: usize,
    pub infers_per_round: usize,
    pub seed: u64,
    pub data_home: String,
}

pub fn gen_moldesign_workload(rounds: usize, sims_per_round: usize, infers_per_round: usize, seed: u64, data_home: &str) -> Result<MolDesign> {
    for (field, v) in [("rounds", rounds), ("sims_per_round", sims_per_round), ("infers_per_round", infers_per_round)] {
        if v < 1 {
            return Err(Error::validation(field, "must be at least 1"));
        }
    }
    Ok(MolDesign {
        rounds,
        sims_per_round,
        infers_per_round,
        seed,
        data_home: data_home.to_string(),
    })
}

impl MolDesign {
    pub fn total_tasks(&self) -> usize {
        self.rounds * (self.sims_per_round + 1 + self.infers_per_round)
    }

    /// Every wave in release order; wave `3r` holds round `r`'s simulations.
    pub fn waves(&self) -> Vec<Vec<TaskSpec>> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut waves = Vec::with_capacity(self.rounds * 3);
        for r in 0..self.rounds {
            let sims = (0..self.sims_per_round)
                .map(|i| {
                    let size = rng.random_range(200_000..400_000u64);
                    self.task(format!("r{r:03}-sim-{i:04}"), MOLDESIGN_SIMULATE, Some((format!("/mol/r{r}/sim{i}.xyz"), size, Sharing::Exclusive)))
                })
                .collect();
            let train = vec![self.task(
                format!("r{r:03}-train"),
                MOLDESIGN_TRAIN,
                Some((format!("/mol/r{r}/training.db"), 50_000_000, Sharing::Exclusive)),
            )];
            let infers = (0..self.infers_per_round)
                .map(|i| {
                    self.task(
                        format!("r{r:03}-infer-{i:04}"),
                        MOLDESIGN_INFER,
                        Some((format!("/mol/r{r}/model.pt"), 5_000_000, Sharing::Shared)),
                    )
                })
                .collect();
            waves.push(sims);
            waves.push(train);
            waves.push(infers);
        }
        waves
    }

    fn task(&self, task_id: String, function: &str, input: Option<(String, u64, Sharing)>) -> TaskSpec {
        TaskSpec {
            task_id,
            function_id: function.to_string(),
            input_files: input
                .into_iter()
                .map(|(logical_path, size_bytes, sharing)| FileRef {
                    logical_path,
                    size_bytes,
                    home_machine: self.data_home.clone(),
                    sharing,
                })
                .collect(),
            submit_time_s: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Workload {
    Static { tasks: Vec<TaskSpec> },
    MolDesign(MolDesign),
}

impl Workload {
    /// SHA-256 of the canonical JSON form; results are comparable only when
    /// their hashes agree.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("workload serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }

    pub fn len(&self) -> usize {
        match self {
            Self::Static { tasks } => tasks.len(),
            Self::MolDesign(m) => m.total_tasks(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub(crate) fn source(&self) -> Box<dyn TaskSource> {
        match self {
            Self::Static { tasks } => Box::new(StaticSource(Some(tasks.clone()))),
            Self::MolDesign(m) => Box::new(WaveSource {
                waves: m.waves().into_iter().rev().collect(),
                outstanding: 0,
            }),
        }
    }
}

/// Feeds tasks to the simulator as they become ready.
pub(crate) trait TaskSource {
    fn initial(&mut self) -> Vec<TaskSpec>;
    /// Called once per finished task; returns newly released tasks.
    fn completed(&mut self, now_s: f64) -> Vec<TaskSpec>;
}

struct StaticSource(Option<Vec<TaskSpec>>);

impl TaskSource for StaticSource {
    fn initial(&mut self) -> Vec<TaskSpec> {
        self.0.take().unwrap_or_default()
    }

    fn completed(&mut self, _now_s: f64) -> Vec<TaskSpec> {
        Vec::new()
    }
}

struct WaveSource {
    /// Remaining waves, next one last.
    waves: Vec<Vec<TaskSpec>>,
    outstanding: usize,
}

impl WaveSource {
    fn release(&mut self, now_s: f64) -> Vec<TaskSpec> {
        while let Some(mut wave) = self.waves.pop() {
            if wave.is_empty() {
                continue;
            }
            for t in &mut wave {
                t.submit_time_s = now_s;
            }
            self.outstanding = wave.len();
            return wave;
        }
        Vec::new()
    }
}

impl TaskSource for WaveSource {
    fn initial(&mut self) -> Vec<TaskSpec> {
        self.release(0.0)
    }

    fn completed(&mut self, now_s: f64) -> Vec<TaskSpec> {
        self.outstanding = self.outstanding.saturating_sub(1);
        if self.outstanding == 0 {
            self.release(now_s)
        } else {
            Vec::new()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seven_benchmarks_of_256() {
        let w = gen_synthetic_workload(&benchmark_names(), 256, 1, "desktop").unwrap();
        assert_eq!(w.len(), 1792);
        crate::model::validate_workload(&w).unwrap();
        for b in benchmark_names() {
            assert_eq!(w.iter().filter(|t| t.function_id == b).count(), 256);
        }
    }

    #[test]
    fn empty_and_deterministic() {
        assert!(gen_synthetic_workload(&benchmark_names(), 0, 1, "d").unwrap().is_empty());
        let a = gen_synthetic_workload(&["thumbnail", "compression"], 20, 9, "d").unwrap();
        let b = gen_synthetic_workload(&["thumbnail", "compression"], 20, 9, "d").unwrap();
        assert_eq!(a, b);
        let c = gen_synthetic_workload(&["thumbnail", "compression"], 20, 10, "d").unwrap();
        assert_ne!(a, c);
        assert_eq!(
            Workload::Static { tasks: a.clone() }.hash(),
            Workload::Static { tasks: b }.hash()
        );
        assert_ne!(Workload::Static { tasks: a }.hash(), Workload::Static { tasks: c }.hash());
    }

    #[test]
    fn unknown_benchmark_is_rejected() {
        assert!(matches!(gen_synthetic_workload(&["matmul"], 1, 0, "d"), Err(Error::Config(_))));
    }

    #[test]
    fn moldesign_round_has_three_waves() {
        let m = gen_moldesign_workload(1, 2, 3, 0, "desktop").unwrap();
        let waves = m.waves();
        let sizes: Vec<usize> = waves.iter().map(Vec::len).collect();
        assert_eq!(sizes, vec![2, 1, 3]);
        assert_eq!(m.total_tasks(), 6);
        assert!(waves[1].iter().all(|t| t.function_id == MOLDESIGN_TRAIN));

        let m = gen_moldesign_workload(3, 4, 5, 0, "desktop").unwrap();
        let waves = m.waves();
        assert_eq!(waves.iter().map(Vec::len).sum::<usize>(), 3 * (4 + 1 + 5));
        let kinds: Vec<&str> = waves.iter().map(|w| w[0].function_id.as_str()).collect();
        assert_eq!(kinds, ["simulate", "train", "infer"].repeat(3));
        assert!(gen_moldesign_workload(0, 1, 1, 0, "d").is_err());
    }

    #[test]
    fn waves_release_only_after_completion() {
        let w = Workload::MolDesign(gen_moldesign_workload(2, 2, 1, 0, "d").unwrap());
        let mut src = w.source();
        assert_eq!(src.initial().len(), 2);
        assert!(src.completed(5.0).is_empty());
        let train = src.completed(6.0);
        assert_eq!(train.len(), 1);
        assert_eq!(train[0].submit_time_s, 6.0);
        let infer = src.completed(9.0);
        assert_eq!(infer[0].function_id, MOLDESIGN_INFER);
        let next = src.completed(10.0);
        assert_eq!(next.len(), 2);
        assert!(next[0].task_id.starts_with("r001-sim"));
        src.completed(11.0);
        src.completed(12.0);
        src.completed(13.0);
        assert!(src.completed(14.0).is_empty());
    }
}
