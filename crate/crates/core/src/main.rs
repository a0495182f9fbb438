use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use gridsim39::analysis::{compare, format_comparison, plot_traces, trace_metrics, MetricOptions, TraceMetrics};
use gridsim39::converter::ControllerKind;
use gridsim39::sim::{run, RunSummary, Scenario, Trace};
use gridsim39::{Error, Result};

/// Trip time assumed when a trace has no metadata sidecar, s.
const DEFAULT_TRIP_TIME: f64 = 5.0;

#[derive(Parser)]
#[command(name = "gridsim39", version, about = "Phasor dynamics of the IEEE 39-bus system with wind and battery storage")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Copy)]
struct MetricArgs {
    /// Half-width of the settling band, pu
    #[arg(long, default_value_t = MetricOptions::default().band)]
    band: f64,
    /// ROCOF least-squares window, s
    #[arg(long = "rocof-window", default_value_t = MetricOptions::default().rocof_window)]
    rocof_window: f64,
}

impl MetricArgs {
    fn options(self) -> MetricOptions {
        MetricOptions {
            band: self.band,
            rocof_window: self.rocof_window,
            ..MetricOptions::default()
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a builtin scenario or a scenario TOML file
    Run {
        /// Builtin name or path
        name: Option<String>,
        #[arg(long)]
        scenario: Option<String>,
        #[arg(long = "out-dir", default_value = "out")]
        out_dir: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Integration step, s
        #[arg(long)]
        step: Option<f64>,
        #[arg(long)]
        controller: Option<ControllerKind>,
        #[command(flatten)]
        metrics: MetricArgs,
    },
    /// Frequency and converter metrics of a trace CSV
    Metrics {
        trace: PathBuf,
        /// Overrides the trip time from the metadata sidecar, s
        #[arg(long = "trip-time")]
        trip_time: Option<f64>,
        #[arg(long)]
        json: bool,
        #[command(flatten)]
        metrics: MetricArgs,
    },
    /// SVG plots overlaying one or more traces
    Plot {
        #[arg(required = true)]
        traces: Vec<PathBuf>,
        #[arg(long = "out-dir", default_value = "out")]
        out_dir: PathBuf,
        #[arg(long, default_value = "plot")]
        prefix: String,
    },
    /// Metric-by-metric difference of two traces
    Compare {
        a: PathBuf,
        b: PathBuf,
        #[command(flatten)]
        metrics: MetricArgs,
    },
    /// List the builtin scenarios
    List,
}

fn sidecar(trace: &Path) -> PathBuf {
    trace.with_extension("meta.json")
}

fn trip_time_of(trace: &Path) -> f64 {
    std::fs::read_to_string(sidecar(trace))
        .ok()
        .and_then(|s| serde_json::from_str::<serde_json::Value>(&s).ok())
        .and_then(|v| v.get("trip_time").and_then(|t| t.as_f64()))
        .unwrap_or(DEFAULT_TRIP_TIME)
}

fn metrics_of(path: &Path, trip_time: Option<f64>, opts: &MetricOptions) -> Result<TraceMetrics> {
    let trace = Trace::read_csv(path)?;
    trace_metrics(&trace, trip_time.unwrap_or_else(|| trip_time_of(path)), opts)
}

fn print_metrics(m: &TraceMetrics) {
    for (k, v) in m.entries() {
        if v.is_nan() {
            println!("{k:<24} -");
        } else {
            println!("{k:<24} {v:.6}");
        }
    }
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn cmd_run(
    name: Option<String>,
    flag: Option<String>,
    out_dir: &Path,
    seed: Option<u64>,
    step: Option<f64>,
    controller: Option<ControllerKind>,
    opts: &MetricOptions,
) -> Result<()> {
    let spec = match (name, flag) {
        (Some(a), Some(b)) if a != b => {
            return Err(Error::schema("scenario", format!("conflicting scenarios `{a}` and `{b}`")));
        }
        (Some(s), _) | (None, Some(s)) => s,
        (None, None) => return Err(Error::schema("scenario", "no scenario given")),
    };
    let mut sc = Scenario::resolve(&spec)?;
    if let Some(s) = seed {
        sc.seed = s;
    }
    if let Some(h) = step {
        sc.step = h;
    }
    if let Some(c) = controller {
        sc.controller = c;
    }
    sc.validate()?;
    let out = run(&sc)?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let csv = out_dir.join(format!("{}.csv", sc.name));
    out.trace.write_csv(&csv)?;
    write(&sidecar(&csv), &meta_json(&out.summary))?;
    eprintln!("wrote {}", csv.display());
    for w in &out.summary.warnings {
        eprintln!("warning: {w}");
    }
    if let Some(t) = out.summary.trip_time {
        let m = trace_metrics(&out.trace, t, opts)?;
        write(&out_dir.join(format!("{}.metrics.json", sc.name)), &m.to_json())?;
        print_metrics(&m);
    }
    Ok(())
}

fn meta_json(s: &RunSummary) -> String {
    serde_json::to_string_pretty(s).expect("summary serializes")
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run {
            name,
            scenario,
            out_dir,
            seed,
            step,
            controller,
            metrics,
        } => cmd_run(name, scenario, &out_dir, seed, step, controller, &metrics.options()),
        Command::Metrics {
            trace,
            trip_time,
            json,
            metrics,
        } => {
            let m = metrics_of(&trace, trip_time, &metrics.options())?;
            if json {
                println!("{}", m.to_json());
            } else {
                print_metrics(&m);
            }
            Ok(())
        }
        Command::Plot { traces, out_dir, prefix } => {
            let mut loaded = Vec::new();
            for p in &traces {
                let label = p.file_stem().map_or_else(|| p.display().to_string(), |s| s.to_string_lossy().into_owned());
                loaded.push((label, Trace::read_csv(p)?));
            }
            for p in plot_traces(&loaded, &out_dir, &prefix)? {
                println!("{}", p.display());
            }
            Ok(())
        }
        Command::Compare { a, b, metrics } => {
            let opts = metrics.options();
            let ma = metrics_of(&a, None, &opts)?;
            let mb = metrics_of(&b, None, &opts)?;
            print!("{}", format_comparison(&compare(&ma, &mb)));
            Ok(())
        }
        Command::List => {
            for n in Scenario::builtin_names() {
                println!("{n}");
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
