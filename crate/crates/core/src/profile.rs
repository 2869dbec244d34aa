//! Running-average performance history per (function, machine), and the
//! predictions the scheduler draws from it.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Fleet, TaskRecord};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionProfile {
    pub function_id: String,
    pub machine_id: String,
    pub mean_runtime_s: f64,
    /// Attributed dynamic energy per invocation.
    pub mean_energy_j: f64,
    pub sample_count: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub runtime_s: f64,
    pub energy_j: f64,
    /// False when the value came from the cold-start rule rather than history
    /// on this machine.
    pub observed: bool,
}

/// Profile means keyed by (function_id, machine_id). Ordered so that the CSV
/// form is stable.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ProfileStore {
    profiles: BTreeMap<(String, String), FunctionProfile>,
}

pub const PROFILE_CSV_HEADER: [&str; 5] = [
    "function_id",
    "machine_id",
    "mean_runtime_s",
    "mean_energy_j",
    "sample_count",
];

impl ProfileStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.profiles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.profiles.is_empty()
    }

    pub fn get(&self, function_id: &str, machine_id: &str) -> Option<&FunctionProfile> {
        self.profiles
            .get(&(function_id.to_string(), machine_id.to_string()))
    }

    pub fn profiles(&self) -> impl Iterator<Item = &FunctionProfile> {
        self.profiles.values()
    }

    /// Insert (or replace) a profile with the given means.
    pub fn insert(&mut self, profile: FunctionProfile) {
        self.profiles.insert(
            (profile.function_id.clone(), profile.machine_id.clone()),
            profile,
        );
    }

    /// Fold one observation into the running means.
    pub fn observe(&mut self, function_id: &str, machine_id: &str, runtime_s: f64, energy_j: f64) -> &FunctionProfile {
        let entry = self
            .profiles
            .entry((function_id.to_string(), machine_id.to_string()))
            .or_insert_with(|| FunctionProfile {
                function_id: function_id.to_string(),
                machine_id: machine_id.to_string(),
                mean_runtime_s: 0.0,
                mean_energy_j: 0.0,
                sample_count: 0,
            });
        entry.sample_count += 1;
        let n = entry.sample_count as f64;
        entry.mean_runtime_s += (runtime_s - entry.mean_runtime_s) / n;
        entry.mean_energy_j += (energy_j - entry.mean_energy_j) / n;
        entry
    }

    /// Record a finished task against its function's profile on the record's
    /// machine. The record's attributed energy is the observation.
    pub fn update_profile(&mut self, record: &TaskRecord, function_id: &str) -> Result<FunctionProfile> {
        if !(record.end_s >= record.start_s) {
            return Err(Error::Contract(format!(
                "task `{}` ends ({}) before it starts ({})",
                record.task_id, record.end_s, record.start_s
            )));
        }
        Ok(self
            .observe(function_id, &record.machine_id, record.runtime_s(), record.attributed_energy_j)
            .clone())
    }

    /// Predicted (runtime, dynamic energy) of `function_id` on `machine_id`.
    ///
    /// Without history on the machine, falls back to the mean of the
    /// function's per-machine means elsewhere; with no history anywhere, to
    /// one second at the machine's idle draw. Fallbacks are flagged.
    pub fn lookup_prediction(&self, fleet: &Fleet, function_id: &str, machine_id: &str) -> Result<Prediction> {
        let machine = fleet
            .get(machine_id)
            .ok_or_else(|| Error::Lookup(format!("unknown machine `{machine_id}`")))?;
        if let Some(p) = self.get(function_id, machine_id).filter(|p| p.sample_count > 0) {
            return Ok(Prediction {
                runtime_s: p.mean_runtime_s.max(0.0),
                energy_j: p.mean_energy_j.max(0.0),
                observed: true,
            });
        }
        let (mut rt, mut en, mut n) = (0.0, 0.0, 0usize);
        for p in self
            .profiles
            .range((function_id.to_string(), String::new())..)
            .take_while(|((f, _), _)| f == function_id)
            .map(|(_, p)| p)
            .filter(|p| p.sample_count > 0)
        {
            rt += p.mean_runtime_s;
            en += p.mean_energy_j;
            n += 1;
        }
        if n > 0 {
            Ok(Prediction {
                runtime_s: (rt / n as f64).max(0.0),
                energy_j: (en / n as f64).max(0.0),
                observed: false,
            })
        } else {
            Ok(Prediction {
                runtime_s: 1.0,
                energy_j: machine.idle_power_w,
                observed: false,
            })
        }
    }

    pub fn read_csv(reader: impl Read) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.iter().ne(PROFILE_CSV_HEADER) {
            return Err(Error::Parse {
                field: None,
                message: format!("profiles header must be `{}`", PROFILE_CSV_HEADER.join(",")),
            });
        }
        let mut store = Self::new();
        for row in rdr.deserialize() {
            let p: FunctionProfile = row?;
            if p.sample_count > 0 && !(p.mean_runtime_s > 0.0 && p.mean_energy_j >= 0.0) {
                return Err(Error::validation(
                    format!("{}@{}", p.function_id, p.machine_id),
                    "profiles with samples need mean_runtime_s > 0 and mean_energy_j >= 0",
                ));
            }
            store.insert(p);
        }
        Ok(store)
    }

    pub fn write_csv(&self, writer: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(PROFILE_CSV_HEADER)?;
        for p in self.profiles.values() {
            w.write_record([
                p.function_id.clone(),
                p.machine_id.clone(),
                format!("{:.6}", p.mean_runtime_s),
                format!("{:.6}", p.mean_energy_j),
                p.sample_count.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("profiles", e))?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::MachineSpec;

    fn fleet() -> Fleet {
        let m = |id: &str, idle: f64| MachineSpec {
            machine_id: id.into(),
            cores_per_node: 4,
            idle_power_w: idle,
            tdp_w: 0.0,
            avg_queue_s: 0.0,
            provisioning_overhead_s: None,
            has_batch_scheduler: false,
            max_nodes: 1,
        };
        Fleet::new(vec![m("a", 10.0), m("b", 20.0)]).unwrap()
    }

    fn record(machine: &str, start: f64, end: f64, energy: f64) -> TaskRecord {
        TaskRecord {
            task_id: "t".into(),
            machine_id: machine.into(),
            worker_process_id: 1,
            start_s: start,
            end_s: end,
            attributed_energy_j: energy,
        }
    }

    #[test]
    fn second_observation_averages() {
        let mut s = ProfileStore::new();
        s.update_profile(&record("a", 0.0, 10.0, 0.0), "f").unwrap();
        let p = s.update_profile(&record("a", 0.0, 20.0, 0.0), "f").unwrap();
        assert_eq!(p.mean_runtime_s, 15.0);
        assert_eq!(p.sample_count, 2);
    }

    #[test]
    fn first_observation_creates_profile() {
        let mut s = ProfileStore::new();
        let p = s.update_profile(&record("a", 1.0, 6.0, 100.0), "f").unwrap();
        assert_eq!((p.mean_runtime_s, p.mean_energy_j, p.sample_count), (5.0, 100.0, 1));
    }

    #[test]
    fn thousand_observations_match_sum_formula() {
        let mut s = ProfileStore::new();
        for i in 1..=1000 {
            s.observe("f", "a", i as f64, 0.0);
        }
        // n(n+1)/2 / n
        let expected = 1000.0 * 1001.0 / 2.0 / 1000.0;
        let got = s.get("f", "a").unwrap().mean_runtime_s;
        assert!((got - expected).abs() <= 1e-9 * expected, "{got}");
    }

    #[test]
    fn reversed_span_is_rejected() {
        let mut s = ProfileStore::new();
        assert!(matches!(s.update_profile(&record("a", 5.0, 4.0, 0.0), "f"), Err(Error::Contract(_))));
    }

    #[test]
    fn lookup_known_profile() {
        let mut s = ProfileStore::new();
        s.observe("f", "a", 12.0, 30.0);
        let p = s.lookup_prediction(&fleet(), "f", "a").unwrap();
        assert_eq!((p.runtime_s, p.energy_j, p.observed), (12.0, 30.0, true));
    }

    #[test]
    fn cold_start_uses_other_machines() {
        let mut s = ProfileStore::new();
        s.observe("f", "a", 10.0, 50.0);
        let p = s.lookup_prediction(&fleet(), "f", "b").unwrap();
        assert_eq!((p.runtime_s, p.energy_j, p.observed), (10.0, 50.0, false));
    }

    #[test]
    fn cold_start_without_history_uses_idle_second() {
        let s = ProfileStore::new();
        let p = s.lookup_prediction(&fleet(), "g", "b").unwrap();
        assert_eq!((p.runtime_s, p.energy_j, p.observed), (1.0, 20.0, false));
    }

    #[test]
    fn unknown_machine_is_a_lookup_error() {
        let s = ProfileStore::new();
        assert!(matches!(s.lookup_prediction(&fleet(), "f", "zz"), Err(Error::Lookup(_))));
    }

    #[test]
    fn csv_round_trip() {
        let mut s = ProfileStore::new();
        s.observe("f", "a", 1.5, 2.25);
        s.observe("g", "b", 3.0, 4.0);
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("function_id,machine_id,mean_runtime_s,mean_energy_j,sample_count\n"));
        assert_eq!(ProfileStore::read_csv(buf.as_slice()).unwrap(), s);
    }

    #[test]
    fn bad_header_rejected() {
        let doc = "function,machine,rt,en,n\n";
        assert!(matches!(ProfileStore::read_csv(doc.as_bytes()), Err(Error::Parse { .. })));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn mean_is_order_independent(
                obs in prop::collection::vec((0.01f64..1e4, 0.0f64..1e5), 1..60),
                seed in any::<u64>(),
            ) {
                let mut shuffled = obs.clone();
                // deterministic Fisher-Yates from the seed
                let mut x = seed | 1;
                for i in (1..shuffled.len()).rev() {
                    x ^= x << 13; x ^= x >> 7; x ^= x << 17;
                    shuffled.swap(i, (x % (i as u64 + 1)) as usize);
                }
                let mut a = ProfileStore::new();
                let mut b = ProfileStore::new();
                for (r, e) in &obs { a.observe("f", "a", *r, *e); }
                for (r, e) in &shuffled { b.observe("f", "a", *r, *e); }
                let (pa, pb) = (a.get("f", "a").unwrap(), b.get("f", "a").unwrap());
                prop_assert!((pa.mean_runtime_s - pb.mean_runtime_s).abs() <= 1e-9 * pa.mean_runtime_s.abs().max(1e-12));
                prop_assert!((pa.mean_energy_j - pb.mean_energy_j).abs() <= 1e-9 * pa.mean_energy_j.abs().max(1e-9));
            }

            #[test]
            fn predictions_never_negative(rt in -10f64..10.0, en in -10f64..10.0) {
                let mut s = ProfileStore::new();
                s.insert(FunctionProfile { function_id: "f".into(), machine_id: "a".into(), mean_runtime_s: rt, mean_energy_j: en, sample_count: 1 });
                for m in ["a", "b"] {
                    let p = s.lookup_prediction(&fleet(), "f", m).unwrap();
                    prop_assert!(p.runtime_s >= 0.0 && p.energy_j >= 0.0);
                }
            }
        }
    }
}
