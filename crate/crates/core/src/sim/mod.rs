//! Scenario assembly, equilibrium initialization and fixed-step
//! integration of the full system.
//!
//! Each step integrates every device with the bus voltages held, then
//! re-solves the network (`Y_aug V = I(V)`) for the new states. Sampled
//! blocks (PLLs, load measurements, battery) tick every millisecond.

mod devices;
mod dispatch;
mod engine;
mod scenario;
mod trace;

pub use devices::{Bess, ConverterCtrl, ConverterState, LoadDevice, SystemState, Unit, UnitState, WindDevice};
pub use dispatch::{Dispatch, DispatchEntry, WindRoster};
pub use engine::{
    init_equilibrium, roster, stack_row, EventRecord, InitReport, Roster, RunOutput, RunSummary, Simulation,
    EQUILIBRIUM_TOLERANCE, SAMPLE_PERIOD,
};
pub use scenario::{
    BessSettings, Calibration, Configuration, DataFiles, Event, EventKind, Integrator, LoadSettings, ProfileKind,
    Scenario, WindSettings,
};
pub use trace::{Trace, LEADING_COLUMNS};

use crate::error::Result;

/// Initializes and runs a scenario to its end.
pub fn run(scenario: &Scenario) -> Result<RunOutput> {
    let mut sim = init_equilibrium(scenario)?;
    sim.run_to_end()?;
    Ok(sim.into_output())
}
