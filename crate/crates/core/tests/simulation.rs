use gridsim39::analysis::{trace_metrics, MetricOptions};
use gridsim39::loads::LoadParams;
use gridsim39::sim::{init_equilibrium, run, Configuration, Event, Scenario, Trace};

fn short_trip(config: Configuration, target: &str, duration: f64) -> Scenario {
    Scenario::new("short", config)
        .with_events(vec![Event::trip(5.0, target)])
        .with_duration(duration)
}

fn assert_bit_identical(a: &Trace, b: &Trace) {
    assert_eq!(a.columns, b.columns);
    for (name, (x, y)) in a.columns.iter().zip(a.data.iter().zip(&b.data)) {
        assert_eq!(x.len(), y.len(), "{name}");
        for (k, (p, q)) in x.iter().zip(y).enumerate() {
            assert_eq!(p.to_bits(), q.to_bits(), "{name}[{k}]: {p} vs {q}");
        }
    }
}

#[test]
fn identical_scenario_and_seed_give_identical_traces() {
    let sc = short_trip(Configuration::Config2Bess, "G6", 6.0);
    let a = run(&sc).unwrap();
    let b = run(&sc).unwrap();
    assert_bit_identical(&a.trace, &b.trace);
}

#[test]
fn second_trip_of_same_unit_is_a_no_op() {
    let once = short_trip(Configuration::Config2, "G6", 7.0);
    let twice = once.clone().with_events(vec![Event::trip(5.0, "G6"), Event::trip(6.0, "G6")]);
    let a = run(&once).unwrap();
    let b = run(&twice).unwrap();
    assert_bit_identical(&a.trace, &b.trace);
    assert!(a.summary.warnings.is_empty());
    assert_eq!(b.summary.warnings.len(), 1, "{:?}", b.summary.warnings);
    assert!(b.summary.warnings[0].contains("G6"));
}

#[test]
fn trip_losses_match_dispatch() {
    for (target, mw) in [("G6", 816.0), ("G4", 545.0)] {
        let mut sim = init_equilibrium(&short_trip(Configuration::Config2, target, 5.01)).unwrap();
        sim.run_to_end().unwrap();
        let ev = &sim.events()[0];
        assert!((ev.time - 5.0).abs() < 1e-12);
        let lost = ev.mw.unwrap();
        assert!((lost - mw).abs() < 1e-6, "{target}: {lost} MW");
    }
}

#[test]
fn zero_coefficient_loads_match_constant_pq_bit_for_bit() {
    let mut loadsyn = short_trip(Configuration::Config1, "G6", 6.0);
    loadsyn.loads.model = LoadParams::constant_power();
    let mut pq = short_trip(Configuration::Config1, "G6", 6.0);
    pq.loads.constant_pq = true;
    let a = run(&loadsyn).unwrap();
    let b = run(&pq).unwrap();
    assert_bit_identical(&a.trace, &b.trace);
}

#[test]
fn no_event_runs_hold_nominal_frequency() {
    for config in [Configuration::Config1, Configuration::Config2, Configuration::Config2Bess] {
        let out = run(&Scenario::new("steady", config).with_duration(10.0)).unwrap();
        let f = out.trace.frequency().unwrap();
        let dev = f.iter().map(|x| (x - 1.0).abs()).fold(0.0, f64::max);
        assert!(dev < 1e-4, "{config:?}: {dev:e}");
        assert!(out.summary.max_power_balance_pu < 1e-6);
    }
}

#[test]
fn metrics_survive_decimation_to_20_ms() {
    let mut sc = short_trip(Configuration::Config2, "G6", 16.0);
    sc.record_interval = 1e-3;
    let out = run(&sc).unwrap();
    let opts = MetricOptions::default();
    let fine = trace_metrics(&out.trace, 5.0, &opts).unwrap();
    let coarse = trace_metrics(&out.trace.decimate(20), 5.0, &opts).unwrap();
    assert!((fine.frequency.nadir - coarse.frequency.nadir).abs() < 2e-4);
    let r = (fine.frequency.max_rocof - coarse.frequency.max_rocof).abs() / fine.frequency.max_rocof;
    assert!(r < 0.05, "ROCOF changed by {:.2}%", 100.0 * r);
}

#[test]
fn recording_cadence_does_not_change_dynamics() {
    let mut fine = short_trip(Configuration::Config1, "G6", 5.5);
    fine.record_interval = 1e-3;
    let coarse = short_trip(Configuration::Config1, "G6", 5.5);
    let a = run(&fine).unwrap().trace;
    let b = run(&coarse).unwrap().trace;
    assert_bit_identical(&a.decimate(10), &b);
}
