//! Calibrated pre-contingency operating point of each configuration.

use gridsim39::sim::{init_equilibrium, Configuration, Scenario};

fn main() -> gridsim39::Result<()> {
    for config in [Configuration::Config1, Configuration::Config2, Configuration::Config2Bess] {
        let sim = init_equilibrium(&Scenario::new(config.as_str(), config))?;
        let r = sim.init_report();
        println!(
            "{:<13} P {:8.2} MW  Q {:7.2} MVar  wind {:7.1} MW  kP {:.4} kQ {:.4}  slack {} {:.1} MW  max dx/dt {:.1e} ({})",
            config.as_str(),
            r.p_total_mw,
            r.q_total_mvar,
            r.wind_mw,
            r.load_scale_p,
            r.load_scale_q,
            r.slack_unit,
            r.slack_mw,
            r.max_derivative,
            r.max_derivative_device,
        );
        for (name, p, q) in &r.sources {
            println!("    {name:<5} {p:8.1} MW {q:8.1} MVar");
        }
    }
    Ok(())
}
