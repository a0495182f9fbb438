//! Runs a shipped contingency scenario and prints its frequency metrics.
//!
//! `cargo run --release --example contingency -- case1_config2`

use std::time::Instant;

use gridsim39::analysis::{trace_metrics, MetricOptions};
use gridsim39::sim::{run, Scenario};

fn main() -> gridsim39::Result<()> {
    let name = std::env::args().nth(1).unwrap_or_else(|| "case1_config1".into());
    let scenario = Scenario::resolve(&name)?;
    let started = Instant::now();
    let out = run(&scenario)?;
    let trip = out.summary.trip_time.unwrap_or(0.0);
    if let Ok(p) = std::env::var("GRIDSIM_TRACE") {
        out.trace.write_csv(p)?;
    }
    let m = trace_metrics(&out.trace, trip, &MetricOptions::default())?;
    println!("{name}: simulated {} s in {:.1} s", scenario.duration, started.elapsed().as_secs_f64());
    for e in &out.summary.events {
        println!("  event t={:.3} {} ({:.1} MW)", e.time, e.description, e.mw.unwrap_or(0.0));
    }
    for (k, v) in m.entries() {
        println!("  {k:<24} {v:.6}");
    }
    println!("  max power balance residual {:.2e} pu", out.summary.max_power_balance_pu);
    Ok(())
}
