//! Post-processing of traces: frequency metrics, converter peaks, metric
//! comparison and static SVG plots.

mod plot;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::machines::UnitSpec;
use crate::sim::{roster, Scenario, Trace};

pub use plot::{plot_traces, PlotQuantity};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricOptions {
    /// Half-width of the settling band around the final value, pu.
    pub band: f64,
    /// Length of the least-squares ROCOF window, s.
    pub rocof_window: f64,
    /// Tail of the trace averaged to obtain the settled value, s.
    pub settle_window: f64,
}

impl Default for MetricOptions {
    fn default() -> Self {
        Self {
            band: 5e-4,
            rocof_window: 0.5,
            settle_window: 5.0,
        }
    }
}

/// Frequency metrics of one trace. Times are seconds after the trip.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyMetrics {
    pub initial: f64,
    pub nadir: f64,
    pub nadir_time: f64,
    /// Largest magnitude of the windowed least-squares slope, pu/s.
    pub max_rocof: f64,
    pub rocof_time: f64,
    pub settled: f64,
    /// Permanent entry into the band; `None` if the trace never settles.
    pub duration: Option<f64>,
    /// First entry into the band after leaving it.
    pub first_entry: Option<f64>,
}

/// Least-squares slope of `y` against `t`.
fn ls_slope(t: &[f64], y: &[f64]) -> f64 {
    let n = t.len() as f64;
    let tm = t.iter().sum::<f64>() / n;
    let ym = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (a, b) in t.iter().zip(y) {
        sxy += (a - tm) * (b - ym);
        sxx += (a - tm) * (a - tm);
    }
    if sxx > 0.0 {
        sxy / sxx
    } else {
        0.0
    }
}

pub fn compute_metrics(t: &[f64], f: &[f64], trip_time: f64, opts: &MetricOptions) -> Result<FrequencyMetrics> {
    if t.len() != f.len() || t.len() < 2 {
        return Err(Error::Domain("metrics need at least two aligned samples".into()));
    }
    if !(opts.band > 0.0 && opts.rocof_window > 0.0 && opts.settle_window >= 0.0) {
        return Err(Error::Domain("band and ROCOF window must be positive".into()));
    }
    let start = t.iter().position(|&x| x >= trip_time - 1e-9).ok_or_else(|| {
        Error::Domain(format!("trace ends before the trip at {trip_time} s"))
    })?;
    let initial = if start > 0 { f[start - 1] } else { f[0] };
    let (tt, ff) = (&t[start..], &f[start..]);

    let (k_nadir, nadir) = ff
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (k, &v)| if v < acc.1 { (k, v) } else { acc });
    let nadir = nadir.min(initial);

    // Sliding regression windows anchored at each post-trip sample.
    let mut max_rocof = 0.0f64;
    let mut rocof_time = 0.0;
    let mut hi = 0;
    for lo in 0..tt.len() {
        while hi < tt.len() && tt[hi] <= tt[lo] + opts.rocof_window + 1e-9 {
            hi += 1;
        }
        if hi - lo < 2 || tt[hi - 1] - tt[lo] < opts.rocof_window - 1e-9 {
            break;
        }
        let s = ls_slope(&tt[lo..hi], &ff[lo..hi]);
        if s.abs() > max_rocof {
            max_rocof = s.abs();
            rocof_time = tt[lo] - trip_time;
        }
    }

    let t_end = *t.last().expect("nonempty");
    let tail: Vec<f64> = tt
        .iter()
        .zip(ff)
        .filter(|(x, _)| **x >= t_end - opts.settle_window - 1e-9)
        .map(|(_, v)| *v)
        .collect();
    let settled = tail.iter().sum::<f64>() / tail.len() as f64;
    let inside = |v: f64| (v - settled).abs() <= opts.band;
    let tail_ok = tail.iter().all(|v| inside(*v));

    let duration = if !tail_ok {
        None
    } else {
        match ff.iter().rposition(|v| !inside(*v)) {
            None => Some(0.0),
            Some(k) => Some(tt[k + 1] - trip_time),
        }
    };
    let first_entry = match ff.iter().position(|v| !inside(*v)) {
        None => Some(0.0),
        Some(k0) => ff[k0..].iter().position(|v| inside(*v)).map(|k| tt[k0 + k] - trip_time),
    };
    Ok(FrequencyMetrics {
        initial,
        nadir,
        nadir_time: tt[k_nadir] - trip_time,
        max_rocof,
        rocof_time,
        settled,
        duration,
        first_entry,
    })
}

/// Frequency and converter metrics of a simulated trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceMetrics {
    pub trip_time: f64,
    pub frequency: FrequencyMetrics,
    /// Largest converter reactive output magnitude after the trip, pu of rating.
    pub conv_q_peak: Option<f64>,
    /// Largest converter active output after the trip, pu of rating.
    pub conv_p_peak: Option<f64>,
    /// Largest PCC voltage deviation from its pre-trip value, pu (signed).
    pub pcc_v_peak_dev: Option<f64>,
    pub soc_final: Option<f64>,
}

fn peak_after(t: &[f64], y: &[f64], t0: f64, baseline: f64, abs: bool) -> Option<f64> {
    let mut best: Option<f64> = None;
    for (x, v) in t.iter().zip(y) {
        if *x < t0 - 1e-9 || v.is_nan() {
            continue;
        }
        let d = v - baseline;
        let key = if abs { d.abs() } else { d };
        if best.map_or(true, |b: f64| key > if abs { b.abs() } else { b }) {
            best = Some(d);
        }
    }
    best
}

fn baseline(t: &[f64], y: &[f64], t0: f64) -> f64 {
    let k = t.iter().position(|&x| x >= t0 - 1e-9).unwrap_or(0);
    y[k.saturating_sub(1)]
}

pub fn trace_metrics(trace: &Trace, trip_time: f64, opts: &MetricOptions) -> Result<TraceMetrics> {
    let t = trace.time()?;
    let f = trace.frequency()?;
    let frequency = compute_metrics(t, f, trip_time, opts)?;
    let present = |name: &str| trace.column(name).filter(|c| c.iter().any(|v| !v.is_nan()));
    let conv_q_peak = present("conv_q_pu").and_then(|q| peak_after(t, q, trip_time, 0.0, true)).map(f64::abs);
    let conv_p_peak = present("conv_p_pu").and_then(|p| peak_after(t, p, trip_time, 0.0, false));
    let pcc_v_peak_dev = present("pcc_v_pu").and_then(|v| peak_after(t, v, trip_time, baseline(t, v, trip_time), true));
    let soc_final = present("soc").and_then(|s| s.last().copied());
    Ok(TraceMetrics {
        trip_time,
        frequency,
        conv_q_peak,
        conv_p_peak,
        pcc_v_peak_dev,
        soc_final,
    })
}

impl TraceMetrics {
    /// Flat `key -> value` view with fixed key names; absent values are NaN.
    pub fn entries(&self) -> Vec<(&'static str, f64)> {
        let f = &self.frequency;
        let o = |v: Option<f64>| v.unwrap_or(f64::NAN);
        vec![
            ("trip_time_s", self.trip_time),
            ("initial_pu", f.initial),
            ("nadir_pu", f.nadir),
            ("nadir_time_s", f.nadir_time),
            ("max_rocof_pu_per_s", f.max_rocof),
            ("rocof_time_s", f.rocof_time),
            ("settled_pu", f.settled),
            ("transient_duration_s", o(f.duration)),
            ("first_band_entry_s", o(f.first_entry)),
            ("conv_q_peak_pu", o(self.conv_q_peak)),
            ("conv_p_peak_pu", o(self.conv_p_peak)),
            ("pcc_v_peak_dev_pu", o(self.pcc_v_peak_dev)),
            ("soc_final", o(self.soc_final)),
        ]
    }

    pub fn to_json(&self) -> String {
        let map: serde_json::Map<String, serde_json::Value> = self
            .entries()
            .into_iter()
            .map(|(k, v)| {
                let val = if v.is_nan() {
                    serde_json::Value::String("unsettled_or_absent".into())
                } else {
                    serde_json::json!(v)
                };
                (k.to_string(), val)
            })
            .collect();
        serde_json::to_string_pretty(&map).expect("metrics serialize")
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("metric,value\n");
        for (k, v) in self.entries() {
            if v.is_nan() {
                s.push_str(&format!("{k},\n"));
            } else {
                s.push_str(&format!("{k},{v}\n"));
            }
        }
        s
    }
}

/// One row of a comparison: both values and `a - b`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Delta {
    pub metric: &'static str,
    pub a: f64,
    pub b: f64,
    pub delta: f64,
}

/// Metric-by-metric differences `a - b`; swapping the inputs negates
/// every delta.
pub fn compare(a: &TraceMetrics, b: &TraceMetrics) -> Vec<Delta> {
    a.entries()
        .into_iter()
        .zip(b.entries())
        .map(|((k, x), (_, y))| Delta {
            metric: k,
            a: x,
            b: y,
            delta: x - y,
        })
        .collect()
}

pub fn format_comparison(rows: &[Delta]) -> String {
    let mut s = format!("{:<24} {:>14} {:>14} {:>14}\n", "metric", "a", "b", "a - b");
    for r in rows {
        s.push_str(&format!("{:<24} {:>14.6} {:>14.6} {:>14.6}\n", r.metric, r.a, r.b, r.delta));
    }
    s
}

/// Sum of the in-service synchronous machines' inertia constants on the
/// 100 MVA base. Wind plants and the battery contribute nothing.
pub fn aggregate_inertia(scenario: &Scenario) -> Result<f64> {
    Ok(total_inertia(&roster(scenario)?.units))
}

pub fn total_inertia(units: &[UnitSpec]) -> f64 {
    units.iter().map(|u| u.machine.h).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::Configuration;

    fn grid(dt: f64, t_end: f64) -> Vec<f64> {
        (0..=((t_end / dt).round() as usize)).map(|k| k as f64 * dt).collect()
    }

    #[test]
    fn constant_trace() {
        let t = grid(0.01, 20.0);
        let f = vec![1.0; t.len()];
        let m = compute_metrics(&t, &f, 5.0, &MetricOptions::default()).unwrap();
        assert_eq!(m.nadir, 1.0);
        assert_eq!(m.max_rocof, 0.0);
        assert_eq!(m.duration, Some(0.0));
    }

    #[test]
    fn exponential_decay_rocof() {
        // f = 1 - 0.05 (1 - exp(-t/2)): slope magnitude 0.025 exp(-t/2).
        let t = grid(1e-3, 60.0);
        let f: Vec<f64> = t.iter().map(|x| 1.0 - 0.05 * (1.0 - (-x / 2.0).exp())).collect();
        let opts = MetricOptions {
            rocof_window: 0.01,
            ..Default::default()
        };
        let m = compute_metrics(&t, &f, 0.0, &opts).unwrap();
        assert!((m.max_rocof - 0.025).abs() < 1e-4, "{}", m.max_rocof);
        assert_eq!(m.rocof_time, 0.0);
        assert!((m.nadir - (1.0 - 0.05 * (1.0 - (-30.0f64).exp()))).abs() < 1e-12);
        // Default window: slope of the least-squares line through the
        // exponential over [0, 0.5], computed from its moments.
        let m = compute_metrics(&t, &f, 0.0, &MetricOptions::default()).unwrap();
        let w: f64 = 0.5;
        let a: f64 = 0.5; // 1/tau
        let mean_t = w / 2.0;
        // int_0^w t e^{-a t} dt and int_0^w e^{-a t} dt
        let i0 = (1.0 - (-a * w).exp()) / a;
        let i1 = (1.0 - (-a * w).exp() * (1.0 + a * w)) / (a * a);
        let cov = (i1 - mean_t * i0) / w;
        let var = w * w / 12.0;
        let oracle = (0.05 * cov / var).abs();
        assert!((m.max_rocof - oracle).abs() < 1e-5, "{} vs {oracle}", m.max_rocof);
    }

    #[test]
    fn linear_ramp_slope_exact() {
        let t = grid(0.01, 10.0);
        let f: Vec<f64> = t.iter().map(|x| 1.0 - 0.003 * x).collect();
        let m = compute_metrics(&t, &f, 0.0, &MetricOptions::default()).unwrap();
        assert!((m.max_rocof - 0.003).abs() < 1e-12);
    }

    #[test]
    fn duration_and_first_entry() {
        // Dip, brief re-entry, overshoot out of band, then settle.
        let t = grid(0.1, 100.0);
        let f: Vec<f64> = t
            .iter()
            .map(|&x| match x {
                x if x < 5.0 => 1.0,
                x if x < 10.0 => 0.99,
                x if x < 12.0 => 0.9999,
                x if x < 20.0 => 0.998,
                _ => 0.9998,
            })
            .collect();
        let m = compute_metrics(&t, &f, 5.0, &MetricOptions::default()).unwrap();
        assert!((m.settled - 0.9998).abs() < 1e-12);
        assert!((m.first_entry.unwrap() - 5.0).abs() < 1e-9);
        assert!((m.duration.unwrap() - 15.0).abs() < 1e-9);
    }

    #[test]
    fn unsettled_trace_reports_none() {
        let t = grid(0.01, 30.0);
        let f: Vec<f64> = t.iter().map(|x| 1.0 - 0.01 * (x * 2.0).sin()).collect();
        let m = compute_metrics(&t, &f, 1.0, &MetricOptions::default()).unwrap();
        assert_eq!(m.duration, None);
        assert!(m.duration.map_or(true, |d| d >= 0.0));
    }

    #[test]
    fn compare_is_antisymmetric() {
        let t = grid(0.01, 30.0);
        let f1: Vec<f64> = t.iter().map(|x| 1.0 - 0.01 * (1.0 - (-x).exp())).collect();
        let f2: Vec<f64> = t.iter().map(|x| 1.0 - 0.02 * (1.0 - (-x / 3.0).exp())).collect();
        let mk = |f: &[f64]| {
            let mut tr = Trace::new(vec!["t_s".into(), "f_coi_pu".into()]);
            for (a, b) in t.iter().zip(f) {
                tr.push_row(&[*a, *b]);
            }
            trace_metrics(&tr, 0.0, &MetricOptions::default()).unwrap()
        };
        let (a, b) = (mk(&f1), mk(&f2));
        for (x, y) in compare(&a, &b).iter().zip(compare(&b, &a)) {
            if x.delta.is_nan() {
                assert!(y.delta.is_nan());
            } else {
                assert_eq!(x.delta, -y.delta, "{}", x.metric);
            }
        }
    }

    #[test]
    fn inertia_totals() {
        let h1 = aggregate_inertia(&Scenario::new("a", Configuration::Config1)).unwrap();
        let h2 = aggregate_inertia(&Scenario::new("b", Configuration::Config2)).unwrap();
        assert!((h1 - 782.7).abs() < 1e-9, "{h1}");
        assert!((h1 - 784.7).abs() / 784.7 < 0.003);
        assert!((h2 - 197.9).abs() < 1e-9, "{h2}");
        assert_eq!(total_inertia(&[]), 0.0);
    }
}
