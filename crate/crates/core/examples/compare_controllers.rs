//! Case 1 with the grid-following and the grid-forming battery: metric
//! comparison and overlaid SVG plots.
//!
//! `cargo run --release --example compare_controllers -- [out_dir]`

use std::path::PathBuf;

use gridsim39::analysis::{compare, format_comparison, plot_traces, trace_metrics, MetricOptions};
use gridsim39::converter::ControllerKind;
use gridsim39::sim::{run, Scenario};

fn main() -> gridsim39::Result<()> {
    let out_dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "out".into()));
    let opts = MetricOptions::default();
    let mut traces = Vec::new();
    let mut metrics = Vec::new();
    for kind in [ControllerKind::Following, ControllerKind::Forming] {
        let sc = Scenario::builtin("case1_bess_following")?.with_controller(kind).with_duration(40.0);
        let out = run(&sc)?;
        metrics.push(trace_metrics(&out.trace, 5.0, &opts)?);
        traces.push((format!("{kind:?}").to_lowercase(), out.trace));
    }
    print!("{}", format_comparison(&compare(&metrics[0], &metrics[1])));
    for p in plot_traces(&traces, &out_dir, "case1")? {
        println!("wrote {}", p.display());
    }
    Ok(())
}
