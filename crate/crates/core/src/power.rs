//! Per-device linear power models fitted from hardware-counter traces, the
//! proportional correction that makes per-process estimates sum to the
//! measured device power, and per-task energy integration.
//!
//! A device's power is modelled as `P ≈ W · X + B` where `X` is the four
//! counter vector summed over every observed process and `B` is the idle
//! draw. A process's raw share is `W · X_i` (no idle share); the corrected
//! share rescales raw shares so they add up to the measurement.

use std::collections::BTreeMap;
use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linreg;

pub const COUNTER_NAMES: [&str; 4] = ["llc_misses", "instructions_retired", "cpu_cycles", "ref_cycles"];
pub const MIN_FIT_INTERVALS: usize = 5;
pub const DEFAULT_SAMPLING_PERIOD_S: f64 = 1.0;

/// Counter deltas for one process over the sampling interval ending at
/// `timestamp_s`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CounterSample {
    pub timestamp_s: f64,
    pub process_id: i64,
    pub llc_misses: u64,
    pub instructions_retired: u64,
    pub cpu_cycles: u64,
    pub ref_cycles: u64,
}

impl CounterSample {
    pub fn counts(&self) -> [f64; 4] {
        [
            self.llc_misses as f64,
            self.instructions_retired as f64,
            self.cpu_cycles as f64,
            self.ref_cycles as f64,
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerSample {
    pub timestamp_s: f64,
    pub device_id: String,
    pub power_w: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerModel {
    pub device_id: String,
    /// Watts per count, in `COUNTER_NAMES` order.
    pub weights: [f64; 4],
    /// Estimated idle power.
    pub intercept_w: f64,
    pub r_squared: f64,
}

impl PowerModel {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("power model serializes")
    }

    pub fn from_json(doc: &str) -> Result<Self> {
        Ok(serde_json::from_str(doc)?)
    }

    /// Node-level prediction for an aggregated counter vector.
    pub fn predict_node(&self, counts: [f64; 4]) -> f64 {
        dot(&self.weights, &counts) + self.intercept_w
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    pub model: PowerModel,
    pub intervals_used: usize,
    pub dropped_counter_samples: usize,
    pub dropped_power_samples: usize,
    /// The least-squares intercept came out negative and was clamped to zero.
    pub intercept_clamped: bool,
}

/// One power measurement together with the per-process counters that fell
/// within half a sampling period of it.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignedInterval {
    pub timestamp_s: f64,
    pub measured_w: f64,
    /// Sorted by process id; one entry per process (duplicates are summed).
    pub processes: Vec<(i64, [f64; 4])>,
}

impl AlignedInterval {
    pub fn aggregate(&self) -> [f64; 4] {
        let mut total = [0.0; 4];
        for (_, c) in &self.processes {
            for k in 0..4 {
                total[k] += c[k];
            }
        }
        total
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Alignment {
    pub intervals: Vec<AlignedInterval>,
    pub dropped_counter_samples: usize,
    pub dropped_power_samples: usize,
}

/// Pair counter samples with the nearest power sample of `device_id`.
pub fn align(
    counters: &[CounterSample],
    power: &[PowerSample],
    device_id: &str,
    sampling_period_s: f64,
) -> Result<Alignment> {
    if !(sampling_period_s > 0.0) {
        return Err(Error::Contract("sampling period must be positive".into()));
    }
    let mut device: Vec<&PowerSample> = power.iter().filter(|p| p.device_id == device_id).collect();
    check_power(&device)?;
    check_counters(counters)?;
    device.sort_by(|a, b| a.timestamp_s.total_cmp(&b.timestamp_s));

    let half = sampling_period_s / 2.0;
    let mut buckets: Vec<BTreeMap<i64, [f64; 4]>> = vec![BTreeMap::new(); device.len()];
    let mut dropped_counters = 0;
    for c in counters {
        let idx = device.partition_point(|p| p.timestamp_s < c.timestamp_s);
        let nearest = [idx.checked_sub(1), (idx < device.len()).then_some(idx)]
            .into_iter()
            .flatten()
            .min_by(|&a, &b| {
                let da = (device[a].timestamp_s - c.timestamp_s).abs();
                let db = (device[b].timestamp_s - c.timestamp_s).abs();
                da.total_cmp(&db)
            });
        match nearest {
            Some(i) if (device[i].timestamp_s - c.timestamp_s).abs() <= half => {
                let slot = buckets[i].entry(c.process_id).or_insert([0.0; 4]);
                for (k, v) in c.counts().iter().enumerate() {
                    slot[k] += v;
                }
            }
            _ => dropped_counters += 1,
        }
    }

    let mut intervals = Vec::new();
    let mut dropped_power = 0;
    for (p, bucket) in device.iter().zip(buckets) {
        if bucket.is_empty() {
            dropped_power += 1;
            continue;
        }
        intervals.push(AlignedInterval {
            timestamp_s: p.timestamp_s,
            measured_w: p.power_w,
            processes: bucket.into_iter().collect(),
        });
    }
    Ok(Alignment {
        intervals,
        dropped_counter_samples: dropped_counters,
        dropped_power_samples: dropped_power,
    })
}

fn check_power(samples: &[&PowerSample]) -> Result<()> {
    for w in samples.windows(2) {
        if !(w[1].timestamp_s > w[0].timestamp_s) {
            return Err(Error::validation(
                "timestamp_s",
                format!("power timestamps for `{}` must strictly increase", w[0].device_id),
            ));
        }
    }
    for s in samples {
        if !(s.power_w >= 0.0 && s.power_w.is_finite()) {
            return Err(Error::validation("power_w", format!("negative or non-finite power at t={}", s.timestamp_s)));
        }
    }
    Ok(())
}

fn check_counters(samples: &[CounterSample]) -> Result<()> {
    let mut last: BTreeMap<i64, f64> = BTreeMap::new();
    for s in samples {
        if let Some(prev) = last.insert(s.process_id, s.timestamp_s) {
            if !(s.timestamp_s > prev) {
                return Err(Error::validation(
                    "timestamp_s",
                    format!("counter timestamps for process {} must strictly increase", s.process_id),
                ));
            }
        }
    }
    Ok(())
}

/// Least-squares fit of measured power on the aggregated counters.
pub fn fit_power_model(
    counters: &[CounterSample],
    power: &[PowerSample],
    device_id: &str,
    sampling_period_s: f64,
) -> Result<FitReport> {
    let alignment = align(counters, power, device_id, sampling_period_s)?;
    fit_aligned(&alignment, device_id)
}

pub fn fit_aligned(alignment: &Alignment, device_id: &str) -> Result<FitReport> {
    let n = alignment.intervals.len();
    if n < MIN_FIT_INTERVALS {
        return Err(Error::InsufficientData(format!(
            "{n} aligned intervals for `{device_id}`, need at least {MIN_FIT_INTERVALS}"
        )));
    }
    let mut columns: Vec<Vec<f64>> = (0..4).map(|_| Vec::with_capacity(n)).collect();
    let mut y = Vec::with_capacity(n);
    for iv in &alignment.intervals {
        let agg = iv.aggregate();
        for k in 0..4 {
            columns[k].push(agg[k]);
        }
        y.push(iv.measured_w);
    }
    let fit = linreg::fit_with_intercept(&COUNTER_NAMES, &columns, &y)?;
    let mut intercept = fit.intercept;
    let clamped = intercept < 0.0;
    if clamped {
        log::warn!("fitted idle power for `{device_id}` is negative ({intercept:.3} W); clamping to 0");
        intercept = 0.0;
    }
    let weights = [fit.coefficients[0], fit.coefficients[1], fit.coefficients[2], fit.coefficients[3]];
    let model = PowerModel {
        device_id: device_id.to_string(),
        weights,
        intercept_w: intercept,
        r_squared: if clamped { refit_r_squared(&columns, &y, &weights, intercept) } else { fit.r_squared },
    };
    Ok(FitReport {
        model,
        intervals_used: n,
        dropped_counter_samples: alignment.dropped_counter_samples,
        dropped_power_samples: alignment.dropped_power_samples,
        intercept_clamped: clamped,
    })
}

fn refit_r_squared(columns: &[Vec<f64>], y: &[f64], w: &[f64; 4], b: f64) -> f64 {
    let mean = linreg::mean(y);
    let mut sse = 0.0;
    let mut sst = 0.0;
    for i in 0..y.len() {
        let pred = b + (0..4).map(|k| w[k] * columns[k][i]).sum::<f64>();
        sse += (y[i] - pred).powi(2);
        sst += (y[i] - mean).powi(2);
    }
    linreg::r_squared(sse, sst)
}

/// A constant-only model: intercept = mean measured power, zero weights.
/// This is what a trace without counter activity supports.
pub fn fit_idle_only(power: &[PowerSample], device_id: &str) -> Result<PowerModel> {
    let values: Vec<f64> = power
        .iter()
        .filter(|p| p.device_id == device_id)
        .map(|p| p.power_w)
        .collect();
    if values.is_empty() {
        return Err(Error::NoData(format!("no power samples for `{device_id}`")));
    }
    let mean = linreg::mean(&values);
    let sse = values.iter().map(|v| (v - mean).powi(2)).sum();
    Ok(PowerModel {
        device_id: device_id.to_string(),
        weights: [0.0; 4],
        intercept_w: mean.max(0.0),
        r_squared: linreg::r_squared(sse, sse),
    })
}

fn dot(a: &[f64; 4], b: &[f64; 4]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Raw per-process power: the model's weights applied to the process's
/// counters. Idle power is not attributed to processes.
pub fn estimate_process_power(model: &PowerModel, sample: &CounterSample) -> f64 {
    dot(&model.weights, &sample.counts())
}

/// Rescale raw per-process powers so they sum to `measured_w`.
pub fn correct_attribution(measured_w: f64, raw: &[f64]) -> Result<Vec<f64>> {
    if raw.iter().any(|r| *r < 0.0 || !r.is_finite()) {
        return Err(Error::Contract("raw process powers must be finite and non-negative".into()));
    }
    let total: f64 = raw.iter().sum();
    if !(total > 0.0) {
        return Err(Error::AttributionUndefined);
    }
    Ok(raw.iter().map(|r| measured_w * r / total).collect())
}

/// How much of the measured power the correction distributes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttributionMode {
    /// Distribute the whole measurement, idle component included.
    #[default]
    Literal,
    /// Subtract the model intercept first and distribute only the remainder.
    DynamicOnly,
}

/// Corrected power over time for one worker process.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProcessPowerSeries {
    pub process_id: i64,
    pub samples: Vec<(f64, f64)>,
}

/// Build corrected per-process power series from an aligned trace. Raw
/// process powers are clamped at zero (fitted weights may be negative).
/// Intervals where every raw power is zero assign zero to every process.
pub fn process_power_series(model: &PowerModel, alignment: &Alignment, mode: AttributionMode) -> Vec<ProcessPowerSeries> {
    let mut series: BTreeMap<i64, Vec<(f64, f64)>> = BTreeMap::new();
    for iv in &alignment.intervals {
        let raw: Vec<f64> = iv
            .processes
            .iter()
            .map(|(_, c)| dot(&model.weights, c).max(0.0))
            .collect();
        let budget = match mode {
            AttributionMode::Literal => iv.measured_w,
            AttributionMode::DynamicOnly => (iv.measured_w - model.intercept_w).max(0.0),
        };
        let corrected = match correct_attribution(budget, &raw) {
            Ok(c) => c,
            Err(_) => vec![0.0; raw.len()],
        };
        for ((pid, _), p) in iv.processes.iter().zip(corrected) {
            series.entry(*pid).or_default().push((iv.timestamp_s, p));
        }
    }
    series
        .into_iter()
        .map(|(process_id, samples)| ProcessPowerSeries { process_id, samples })
        .collect()
}

/// Energy of a task that ran on the series' process over `[start_s, end_s]`:
/// the integral of the piecewise-linear power curve, held constant beyond the
/// first and last samples.
pub fn attribute_task_energy(series: &ProcessPowerSeries, start_s: f64, end_s: f64) -> Result<f64> {
    if end_s < start_s {
        return Err(Error::Contract(format!("task ends ({end_s}) before it starts ({start_s})")));
    }
    let s = &series.samples;
    let (Some(&(t_first, p_first)), Some(&(t_last, p_last))) = (s.first(), s.last()) else {
        return Err(Error::NoData(format!("no power samples for process {}", series.process_id)));
    };
    let mut energy = 0.0;
    if start_s < t_first {
        energy += p_first * (end_s.min(t_first) - start_s);
    }
    if end_s > t_last {
        energy += p_last * (end_s - start_s.max(t_last));
    }
    let lo_t = start_s.max(t_first);
    let hi_t = end_s.min(t_last);
    if hi_t > lo_t {
        // first segment whose right end lies past lo_t
        let first = s.partition_point(|&(t, _)| t <= lo_t).max(1);
        for i in first..s.len() {
            let (t0, p0) = s[i - 1];
            let (t1, p1) = s[i];
            if t0 >= hi_t {
                break;
            }
            let a = lo_t.max(t0);
            let b = hi_t.min(t1);
            if b > a {
                let at = |t: f64| p0 + (p1 - p0) * (t - t0) / (t1 - t0);
                energy += 0.5 * (at(a) + at(b)) * (b - a);
            }
        }
    }
    Ok(energy)
}

fn check_header(rdr: &mut csv::Reader<impl Read>, expected: &[&str], what: &str) -> Result<()> {
    let headers = rdr.headers()?;
    if headers.iter().ne(expected.iter().copied()) {
        return Err(Error::Parse {
            field: None,
            message: format!("{what} header must be `{}`", expected.join(",")),
        });
    }
    Ok(())
}

pub fn read_counters_csv(reader: impl Read) -> Result<Vec<CounterSample>> {
    let mut rdr = csv::Reader::from_reader(reader);
    check_header(
        &mut rdr,
        &["timestamp_s", "process_id", "llc_misses", "instructions_retired", "cpu_cycles", "ref_cycles"],
        "counters",
    )?;
    rdr.deserialize().map(|r| r.map_err(Error::from)).collect()
}

pub fn read_power_csv(reader: impl Read) -> Result<Vec<PowerSample>> {
    let mut rdr = csv::Reader::from_reader(reader);
    check_header(&mut rdr, &["timestamp_s", "device_id", "power_w"], "power")?;
    rdr.deserialize().map(|r| r.map_err(Error::from)).collect()
}

pub fn write_counters_csv(samples: &[CounterSample]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for s in samples {
        w.serialize(s).expect("in-memory csv");
    }
    String::from_utf8(w.into_inner().expect("in-memory csv")).expect("utf8")
}

pub fn write_power_csv(samples: &[PowerSample]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for s in samples {
        w.serialize(s).expect("in-memory csv");
    }
    String::from_utf8(w.into_inner().expect("in-memory csv")).expect("utf8")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model(weights: [f64; 4]) -> PowerModel {
        PowerModel {
            device_id: "cpu0".into(),
            weights,
            intercept_w: 100.0,
            r_squared: 1.0,
        }
    }

    fn sample(pid: i64, t: f64, c: [u64; 4]) -> CounterSample {
        CounterSample {
            timestamp_s: t,
            process_id: pid,
            llc_misses: c[0],
            instructions_retired: c[1],
            cpu_cycles: c[2],
            ref_cycles: c[3],
        }
    }

    fn series(points: &[(f64, f64)]) -> ProcessPowerSeries {
        ProcessPowerSeries {
            process_id: 1,
            samples: points.to_vec(),
        }
    }

    #[test]
    fn single_term_dot_product() {
        let m = model([1e-7, 0.0, 0.0, 0.0]);
        assert_eq!(estimate_process_power(&m, &sample(1, 0.0, [100_000_000, 0, 0, 0])), 10.0);
        assert_eq!(estimate_process_power(&m, &sample(1, 0.0, [0; 4])), 0.0);
    }

    #[test]
    fn four_term_dot_product() {
        let m = model([1e-7, 2e-9, 3e-9, 1e-9]);
        let p = estimate_process_power(&m, &sample(1, 0.0, [10_000_000, 1_000_000_000, 2_000_000_000, 2_000_000_000]));
        assert!((p - 11.0).abs() < 1e-12, "{p}");
    }

    #[test]
    fn proportional_correction() {
        assert_eq!(correct_attribution(100.0, &[30.0, 10.0]).unwrap(), vec![75.0, 25.0]);
        assert_eq!(correct_attribution(50.0, &[50.0]).unwrap(), vec![50.0]);
        assert_eq!(correct_attribution(80.0, &[1.0, 1.0, 2.0]).unwrap(), vec![20.0, 20.0, 40.0]);
    }

    #[test]
    fn correction_with_all_zero_raw_is_undefined() {
        assert!(matches!(correct_attribution(80.0, &[0.0, 0.0]), Err(Error::AttributionUndefined)));
        assert!(matches!(correct_attribution(80.0, &[]), Err(Error::AttributionUndefined)));
    }

    #[test]
    fn integrates_constant_power() {
        let s = series(&[(0.0, 50.0), (5.0, 50.0), (10.0, 50.0)]);
        assert_eq!(attribute_task_energy(&s, 0.0, 10.0).unwrap(), 500.0);
    }

    #[test]
    fn integrates_trapezoid() {
        let s = series(&[(0.0, 0.0), (2.0, 100.0)]);
        assert_eq!(attribute_task_energy(&s, 0.0, 2.0).unwrap(), 100.0);
    }

    #[test]
    fn interpolates_endpoints_inside_samples() {
        let pts: Vec<(f64, f64)> = (0..=10).map(|t| (t as f64, t as f64)).collect();
        // ∫ t dt over [2.5, 7.5] = (7.5² - 2.5²) / 2
        let expected = (7.5f64.powi(2) - 2.5f64.powi(2)) / 2.0;
        let got = attribute_task_energy(&series(&pts), 2.5, 7.5).unwrap();
        assert!((got - expected).abs() < 1e-12);
        assert_eq!(expected, 25.0);
    }

    #[test]
    fn extends_constantly_outside_span() {
        let s = series(&[(10.0, 20.0), (12.0, 40.0)]);
        // [5, 10] at 20 W, [10, 12] trapezoid 60 J, [12, 15] at 40 W
        assert_eq!(attribute_task_energy(&s, 5.0, 15.0).unwrap(), 100.0 + 60.0 + 120.0);
        assert_eq!(attribute_task_energy(&s, 0.0, 1.0).unwrap(), 20.0);
        assert_eq!(attribute_task_energy(&s, 20.0, 21.0).unwrap(), 40.0);
    }

    #[test]
    fn zero_length_span_has_zero_energy() {
        let s = series(&[(0.0, 10.0), (1.0, 20.0)]);
        assert_eq!(attribute_task_energy(&s, 0.5, 0.5).unwrap(), 0.0);
    }

    #[test]
    fn empty_series_and_reversed_span_are_errors() {
        assert!(matches!(attribute_task_energy(&series(&[]), 0.0, 1.0), Err(Error::NoData(_))));
        let s = series(&[(0.0, 1.0)]);
        assert!(matches!(attribute_task_energy(&s, 2.0, 1.0), Err(Error::Contract(_))));
    }

    #[test]
    fn zero_activity_trace_is_degenerate_but_idle_fit_works() {
        let counters: Vec<_> = (0..10).map(|t| sample(1, t as f64, [0; 4])).collect();
        let power: Vec<_> = (0..10)
            .map(|t| PowerSample { timestamp_s: t as f64, device_id: "cpu0".into(), power_w: 110.0 })
            .collect();
        match fit_power_model(&counters, &power, "cpu0", 1.0) {
            Err(Error::DegenerateFit { columns }) => assert_eq!(columns, COUNTER_NAMES.map(String::from).to_vec()),
            other => panic!("{other:?}"),
        }
        let idle = fit_idle_only(&power, "cpu0").unwrap();
        assert_eq!(idle.intercept_w, 110.0);
        assert_eq!(idle.weights, [0.0; 4]);
        // zero counters predict exactly the intercept at node level
        assert_eq!(idle.predict_node([0.0; 4]), 110.0);
    }

    #[test]
    fn fewer_than_five_intervals_is_insufficient() {
        let counters: Vec<_> = (0..4).map(|t| sample(1, t as f64, [t, t * 2, t * 3 + 1, t * t])).collect();
        let power: Vec<_> = (0..4)
            .map(|t| PowerSample { timestamp_s: t as f64, device_id: "cpu0".into(), power_w: 100.0 + t as f64 })
            .collect();
        assert!(matches!(fit_power_model(&counters, &power, "cpu0", 1.0), Err(Error::InsufficientData(_))));
        assert!(matches!(fit_power_model(&[], &[], "cpu0", 1.0), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn alignment_drops_far_samples() {
        let counters = vec![sample(1, 0.1, [1; 4]), sample(1, 3.0, [1; 4]), sample(2, 0.0, [2; 4])];
        let power = vec![
            PowerSample { timestamp_s: 0.0, device_id: "d".into(), power_w: 1.0 },
            PowerSample { timestamp_s: 1.0, device_id: "d".into(), power_w: 1.0 },
            PowerSample { timestamp_s: 5.0, device_id: "other".into(), power_w: 1.0 },
        ];
        let a = align(&counters, &power, "d", 1.0).unwrap();
        assert_eq!(a.intervals.len(), 1);
        assert_eq!(a.intervals[0].processes.len(), 2);
        assert_eq!(a.intervals[0].aggregate(), [3.0; 4]);
        assert_eq!(a.dropped_counter_samples, 1);
        assert_eq!(a.dropped_power_samples, 1);
    }

    #[test]
    fn non_monotone_timestamps_rejected() {
        let counters = vec![sample(1, 1.0, [1; 4]), sample(1, 1.0, [1; 4])];
        assert!(matches!(align(&counters, &[], "d", 1.0), Err(Error::Validation { .. })));
    }

    #[test]
    fn dynamic_only_mode_subtracts_intercept() {
        let m = PowerModel { device_id: "d".into(), weights: [1.0, 0.0, 0.0, 0.0], intercept_w: 20.0, r_squared: 1.0 };
        let alignment = Alignment {
            intervals: vec![AlignedInterval {
                timestamp_s: 0.0,
                measured_w: 100.0,
                processes: vec![(1, [3.0, 0.0, 0.0, 0.0]), (2, [1.0, 0.0, 0.0, 0.0])],
            }],
            dropped_counter_samples: 0,
            dropped_power_samples: 0,
        };
        let lit = process_power_series(&m, &alignment, AttributionMode::Literal);
        assert_eq!((lit[0].samples[0].1, lit[1].samples[0].1), (75.0, 25.0));
        let dynamic = process_power_series(&m, &alignment, AttributionMode::DynamicOnly);
        assert_eq!((dynamic[0].samples[0].1, dynamic[1].samples[0].1), (60.0, 20.0));
    }

    #[test]
    fn csv_readers_check_headers() {
        let bad = "t,pid,a,b,c,d\n";
        assert!(matches!(read_counters_csv(bad.as_bytes()), Err(Error::Parse { .. })));
        let counters = vec![sample(7, 1.5, [1, 2, 3, 4])];
        assert_eq!(read_counters_csv(write_counters_csv(&counters).as_bytes()).unwrap(), counters);
        let power = vec![PowerSample { timestamp_s: 1.0, device_id: "d".into(), power_w: 2.5 }];
        assert_eq!(read_power_csv(write_power_csv(&power).as_bytes()).unwrap(), power);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn arb_series() -> impl Strategy<Value = ProcessPowerSeries> {
            prop::collection::vec((0.01f64..3.0, 0.0f64..500.0), 1..30).prop_map(|steps| {
                let mut t = 0.0;
                let samples = steps
                    .into_iter()
                    .map(|(dt, p)| {
                        t += dt;
                        (t, p)
                    })
                    .collect();
                ProcessPowerSeries { process_id: 1, samples }
            })
        }

        proptest! {
            #[test]
            fn correction_conserves_measured_power(
                measured in 0.0f64..2000.0,
                raw in prop::collection::vec(0.0f64..300.0, 1..16),
            ) {
                prop_assume!(raw.iter().sum::<f64>() > 0.0);
                let c = correct_attribution(measured, &raw).unwrap();
                let total: f64 = c.iter().sum();
                prop_assert!((total - measured).abs() <= 1e-9 * measured.max(1e-12));
                prop_assert!(c.iter().all(|p| *p >= 0.0));
            }

            #[test]
            fn energy_is_additive_over_adjacent_spans(
                s in arb_series(),
                a in -5.0f64..60.0, d1 in 0.0f64..30.0, d2 in 0.0f64..30.0,
            ) {
                let (b, c) = (a + d1, a + d1 + d2);
                let left = attribute_task_energy(&s, a, b).unwrap();
                let right = attribute_task_energy(&s, b, c).unwrap();
                let whole = attribute_task_energy(&s, a, c).unwrap();
                prop_assert!(left >= 0.0 && right >= 0.0);
                prop_assert!((left + right - whole).abs() <= 1e-9 * whole.max(1e-9));
            }
        }
    }
}
