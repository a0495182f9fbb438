use std::collections::{HashMap, HashSet};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;

use super::devices::{Bess, ConverterCtrl, ConverterState, LoadDevice, SystemState, Unit, UnitState, WindDevice};
use super::dispatch::{Dispatch, WindRoster};
use super::scenario::{Event, EventKind, Integrator, ProfileKind, Scenario};
use super::trace::{Trace, LEADING_COLUMNS};
use crate::converter::{ControllerKind, FollowingCtrl, FormingCtrl};
use crate::error::{Error, Result};
use crate::loads::{synthetic_profile, LoadProfile, WindowedMeasurement};
use crate::machines::{init_machine, machine_derivatives, terminal_current, to_dq, MachineDataset, UnitSpec};
use crate::network::{
    build_admittance, solve_power_flow, wrap_angle, AlgebraicOptions, BusKind, InjectionTargets, NetworkData,
    NetworkSolver, PowerFlowOptions, BASE_MVA, C64, OMEGA_NOMINAL,
};
use crate::ode::Continuous;
use crate::storage::{
    battery_step, dc_current_for_power, dc_power_from_ac, soc_update, stack_parameter_scaling, terminal_voltage,
    BatteryParams, BatteryRow,
};
use crate::wind::{resample_profile, WindPlant, WindProfile};

/// Sampling period of the discrete blocks (PLL, measurements, battery).
pub const SAMPLE_PERIOD: f64 = 1e-3;

/// Largest state derivative tolerated at the initial equilibrium.
pub const EQUILIBRIUM_TOLERANCE: f64 = 1e-8;

/// Devices of a configuration before any power flow.
#[derive(Debug, Clone)]
pub struct Roster {
    pub network: NetworkData,
    pub units: Vec<UnitSpec>,
    pub winds: Vec<WindPlant>,
    pub battery: Option<BatteryParams>,
    pub dispatch: Dispatch,
}

/// Loads the datasets a scenario names and selects the devices of its
/// configuration.
pub fn roster(sc: &Scenario) -> Result<Roster> {
    let network = match &sc.data.network {
        Some(p) => NetworkData::load(sc.resolve_path(p))?,
        None => NetworkData::ieee39(),
    };
    network.validate()?;
    let machines = match &sc.data.machines {
        Some(p) => MachineDataset::load(sc.resolve_path(p))?,
        None => MachineDataset::ieee39(),
    };
    let dispatch = match &sc.data.dispatch {
        Some(p) => Dispatch::load(sc.resolve_path(p))?,
        None => Dispatch::shipped(),
    };
    let wind = match &sc.data.wind_plants {
        Some(p) => WindRoster::load(sc.resolve_path(p))?,
        None => WindRoster::shipped(),
    };
    let (units, winds) = if sc.config.has_wind() {
        let replaced: HashSet<&str> = wind.replaced().collect();
        for r in &replaced {
            if machines.unit(r).is_none() {
                return Err(Error::Structural(format!("wind plant replaces unknown unit {r}")));
            }
        }
        let units = machines
            .units
            .iter()
            .filter(|u| !replaced.contains(u.machine.name.as_str()))
            .cloned()
            .collect();
        let winds = wind
            .plants
            .iter()
            .map(|(p, _)| WindPlant {
                current_limit: sc.wind.current_limit,
                tau: sc.wind.tau,
                ..p.clone()
            })
            .collect();
        (units, winds)
    } else {
        (machines.units.clone(), Vec::new())
    };
    let battery = if sc.config.has_bess() {
        Some(match &sc.data.battery {
            Some(p) => BatteryParams::load(sc.resolve_path(p))?,
            None => BatteryParams::shipped(),
        })
    } else {
        None
    };
    Ok(Roster {
        network,
        units,
        winds,
        battery,
        dispatch,
    })
}

/// Stack-level parameter row for the current SOC.
pub fn stack_row(params: &BatteryParams, soc: f64) -> Result<BatteryRow> {
    let row = params.lookup(soc)?;
    match params.stack.series {
        1 => Ok(*row),
        2 => Ok(stack_parameter_scaling(row)),
        n => Err(Error::Domain(format!("unsupported series pack count {n}"))),
    }
}

/// Outcome of the calibrated power flow and equilibrium back-solve.
#[derive(Debug, Clone, Serialize)]
pub struct InitReport {
    pub p_total_mw: f64,
    pub q_total_mvar: f64,
    pub wind_mw: f64,
    pub load_scale_p: f64,
    pub load_scale_q: f64,
    pub power_flow_iterations: usize,
    pub slack_unit: String,
    pub slack_mw: f64,
    /// Largest initial state derivative and the device it belongs to.
    pub max_derivative: f64,
    pub max_derivative_device: String,
    /// Per-source pre-contingency output, MW / MVar.
    pub sources: Vec<(String, f64, f64)>,
}

#[derive(Debug, Clone, Serialize)]
pub struct EventRecord {
    pub time: f64,
    pub description: String,
    /// Generation or load lost, MW.
    pub mw: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub name: String,
    pub config: String,
    pub controller: Option<String>,
    pub step: f64,
    pub duration: f64,
    pub seed: u64,
    pub trip_time: Option<f64>,
    pub init: InitReport,
    pub events: Vec<EventRecord>,
    pub warnings: Vec<String>,
    pub max_power_balance_pu: f64,
    pub max_network_iterations: usize,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub trace: Trace,
    pub summary: RunSummary,
}

#[derive(Debug, Clone)]
struct Pending {
    step: usize,
    event: Event,
    done: bool,
}

/// An initialized system and its integration state.
#[derive(Debug, Clone)]
pub struct Simulation {
    scenario: Scenario,
    network: NetworkData,
    y_net: DMatrix<C64>,
    solver: NetworkSolver,
    opts: AlgebraicOptions,
    units: Vec<Unit>,
    loads: Vec<LoadDevice>,
    demand: Vec<C64>,
    winds: Vec<WindDevice>,
    bess: Option<Bess>,
    state: SystemState,
    v: Vec<C64>,
    prev_angle: Vec<f64>,
    step_index: usize,
    events: Vec<Pending>,
    report: InitReport,
    log: Vec<EventRecord>,
    warnings: Vec<String>,
    max_balance: f64,
    max_iterations: usize,
    trace: Trace,
}

/// Builds the scenario's system at its calibrated pre-contingency
/// equilibrium.
pub fn init_equilibrium(sc: &Scenario) -> Result<Simulation> {
    Simulation::new(sc.clone())
}

fn init_error(device: &str, e: Error) -> Error {
    Error::Initialization {
        device: format!("{device} ({e})"),
        residual: f64::INFINITY,
    }
}

impl Simulation {
    pub fn new(sc: Scenario) -> Result<Self> {
        sc.validate()?;
        let Roster {
            network,
            units: unit_specs,
            winds: wind_plants,
            battery,
            dispatch,
        } = roster(&sc)?;
        let n = network.buses.len();
        let index = network.bus_index();
        let slack = network.slack_index();
        let key = sc.config.dispatch_key();
        let bus_of = |id: u32, what: &str| {
            index
                .get(&id)
                .copied()
                .ok_or_else(|| Error::Structural(format!("{what} at unknown bus {id}")))
        };

        // Sources and their dispatch.
        let mut source_at: HashMap<usize, String> = HashMap::new();
        let mut gen_p = vec![0.0; n];
        let mut place = |name: &str, bus: usize| -> Result<()> {
            if let Some(other) = source_at.insert(bus, name.to_string()) {
                return Err(Error::Structural(format!("{name} and {other} share bus index {bus}")));
            }
            Ok(())
        };
        for u in &unit_specs {
            place(&u.machine.name, bus_of(u.machine.bus, &u.machine.name)?)?;
        }
        let mut wind_buses = Vec::new();
        for w in &wind_plants {
            let bus = bus_of(w.bus, &w.name)?;
            place(&w.name, bus)?;
            wind_buses.push(bus);
        }
        let slack_unit = source_at
            .get(&slack)
            .cloned()
            .ok_or_else(|| Error::Structural("no synchronous unit at the slack bus".into()))?;
        for (&bus, name) in &source_at {
            if bus == slack {
                continue;
            }
            let e = dispatch
                .entry(key, name)
                .ok_or_else(|| Error::schema(format!("dispatch.{key}.{name}"), "missing dispatch entry"))?;
            gen_p[bus] += e.p_mw / BASE_MVA;
        }
        let bess_bus = if sc.config.has_bess() {
            Some(bus_of(sc.bess.bus, "battery").map_err(|e| Error::schema("bess.bus", e.to_string()))?)
        } else {
            None
        };
        let bess_s = C64::new(sc.bess.p_mw, sc.bess.q_mvar) / BASE_MVA;
        // Wind buses are PQ: the reported reactive output comes from fixed
        // capacitors, so it is a dispatch quantity, not a voltage control.
        let mut dev_q = vec![0.0; n];
        for &bus in &wind_buses {
            let name = &source_at[&bus];
            let e = dispatch
                .entry(key, name)
                .ok_or_else(|| Error::schema(format!("dispatch.{key}.{name}"), "missing dispatch entry"))?;
            dev_q[bus] += e.q_mvar / BASE_MVA;
        }
        if let Some(b) = bess_bus {
            gen_p[b] += bess_s.re;
            dev_q[b] += bess_s.im;
        }

        // Network and aggregated demand.
        let mut adm = build_admittance(&network.buses, &network.branches)?;
        for sh in &network.shunts {
            adm.add_shunt(index[&sh.bus], C64::new(sh.g_mw, sh.b_mvar) / BASE_MVA);
        }
        let mut pl = vec![0.0; n];
        let mut ql = vec![0.0; n];
        for l in &network.loads {
            pl[index[&l.bus]] += l.p_mw / BASE_MVA;
            ql[index[&l.bus]] += l.q_mvar / BASE_MVA;
        }
        let (pl_tot, ql_tot): (f64, f64) = (pl.iter().sum(), ql.iter().sum());
        let (p_goal, q_goal) = match sc.calibration {
            Some(c) => (c.p_total_mw, c.q_total_mvar),
            None => dispatch.totals[key],
        };
        let kinds: Vec<BusKind> = (0..n)
            .map(|i| {
                if i == slack {
                    BusKind::Slack
                } else if source_at.contains_key(&i) && !wind_buses.contains(&i) {
                    BusKind::Pv
                } else {
                    BusKind::Pq
                }
            })
            .collect();

        // Load scaling so realized generation totals meet the targets.
        let (mut kp, mut kq) = (1.0, 1.0);
        let mut targets = InjectionTargets::flat(kinds);
        for (i, b) in network.buses.iter().enumerate() {
            targets.vm[i] = b.voltage_setpoint;
        }
        let pf_opts = PowerFlowOptions::default();
        let mut converged = false;
        let mut pf = None;
        for _ in 0..200 {
            for i in 0..n {
                targets.p[i] = gen_p[i] - kp * pl[i];
                targets.q[i] = dev_q[i] - kq * ql[i];
            }
            let sol = solve_power_flow(&adm, &targets, &pf_opts)?;
            let p_gen: f64 = sol.injections.iter().map(|s| s.re).sum::<f64>() + kp * pl_tot;
            let q_gen: f64 = sol.injections.iter().map(|s| s.im).sum::<f64>() + kq * ql_tot;
            let dkp = (p_goal / BASE_MVA - p_gen) / pl_tot;
            let dkq = (q_goal / BASE_MVA - q_gen) / ql_tot;
            pf = Some(sol);
            if dkp.abs() < 1e-13 && dkq.abs() < 1e-13 {
                converged = true;
                break;
            }
            kp += dkp;
            kq += dkq;
        }
        let pf = pf.expect("at least one power flow");
        if !converged {
            return Err(Error::NonConvergence {
                iterations: 200,
                mismatch: pf.max_mismatch,
            });
        }
        let v0 = pf.voltages.clone();
        let source_s = |bus: usize| -> C64 {
            let mut s = pf.injections[bus] + C64::new(kp * pl[bus], kq * ql[bus]);
            if Some(bus) == bess_bus {
                s -= bess_s;
            }
            s
        };
        let mut sources = Vec::new();

        // Synchronous units.
        let mut units = Vec::new();
        let mut unit_states = Vec::new();
        for spec in unit_specs {
            let name = spec.machine.name.clone();
            let bus = index[&spec.machine.bus];
            let s = source_s(bus);
            sources.push((name.clone(), s.re * BASE_MVA, s.im * BASE_MVA));
            spec.machine.validate().map_err(|e| init_error(&name, e))?;
            let eq = init_machine(&spec.machine, v0[bus], s);
            let (exciter, vref) = spec.exciter.init(eq.efd, v0[bus].norm()).map_err(|e| init_error(&name, e))?;
            let pm = eq.pm / spec.machine.power_scale();
            let governor = spec.governor.init(pm).map_err(|e| init_error(&name, e))?;
            unit_states.push(UnitState {
                machine: eq.state,
                exciter,
                governor,
                secondary: 0.0,
            });
            let y = spec.machine.norton_impedance().inv();
            units.push(Unit {
                spec,
                bus,
                in_service: true,
                vref,
                pref: pm,
                y,
            });
        }

        // Wind plants: active current source plus a capacitor for the
        // reactive output.
        let mut winds = Vec::new();
        let mut wind_states = Vec::new();
        let mut wind_mw = 0.0;
        for (k, plant) in wind_plants.into_iter().enumerate() {
            let bus = index[&plant.bus];
            let s = source_s(bus);
            sources.push((plant.name.clone(), s.re * BASE_MVA, s.im * BASE_MVA));
            wind_mw += s.re * BASE_MVA;
            let p = s.re * BASE_MVA / plant.rating_mva;
            if !(0.0..=1.0).contains(&p) {
                return Err(init_error(
                    &plant.name,
                    Error::Domain(format!("dispatch {p:.3} pu of rating outside [0, 1]")),
                ));
            }
            let vm = v0[bus].norm();
            let profile = wind_profile(&sc, &plant, k, p)?;
            winds.push(WindDevice {
                bus,
                profile,
                available: p,
                override_available: None,
                shunt: C64::new(0.0, s.im / (vm * vm)),
                in_service: true,
                plant,
            });
            wind_states.push(p);
        }

        // Loads, with the initial voltage as the reference of the
        // exponential model.
        let mut loads = Vec::new();
        for l in &network.loads {
            let bus = index[&l.bus];
            let vm = v0[bus].norm();
            let p = kp * l.p_mw / BASE_MVA;
            let q = kq * l.q_mvar / BASE_MVA;
            let mut params = sc.loads.model;
            params.v0 = vm;
            params.f0 = 1.0;
            loads.push(LoadDevice {
                bus_id: l.bus,
                bus,
                p0: p,
                q0: q,
                p_init: p,
                q_init: q,
                params,
                profile: load_profile(&sc, l.bus, p * BASE_MVA, q * BASE_MVA)?,
                y0: C64::new(p, -q) / (vm * vm),
                freq: WindowedMeasurement::frequency(1.0),
                volt: WindowedMeasurement::rms(vm),
                constant_pq: sc.loads.constant_pq,
                in_service: true,
            });
        }

        // Battery converter.
        let mut converter = None;
        let bess = match (bess_bus, battery) {
            (Some(bus), Some(battery)) => {
                let rating = battery.stack.rating_mva;
                let scale = rating / BASE_MVA;
                let s = bess_s / scale;
                sources.push(("BESS".into(), bess_s.re * BASE_MVA, bess_s.im * BASE_MVA));
                let (ctrl, x, y_c) = match sc.controller {
                    ControllerKind::Following => {
                        let (c, x) = FollowingCtrl::init(sc.bess.following, v0[bus], s);
                        (ConverterCtrl::Following(c), ConverterState::Following(x), C64::new(0.0, 0.0))
                    }
                    ControllerKind::Forming => {
                        let (c, x) = FormingCtrl::init(sc.bess.forming, v0[bus], s);
                        let y_c = (c.params.impedance() / scale).inv();
                        (ConverterCtrl::Forming(c), ConverterState::Forming(x), y_c)
                    }
                };
                converter = Some(x);
                let cell = crate::storage::BatteryState::rested(sc.bess.initial_soc);
                let row = stack_row(&battery, cell.soc).map_err(|e| init_error("BESS", e))?;
                let dc_voltage = terminal_voltage(&cell, 0.0, &row, battery.stack.parallel);
                Some(Bess {
                    bus,
                    scale,
                    ctrl,
                    y_c,
                    battery,
                    cell,
                    dc_voltage,
                    dc_current: 0.0,
                    soc_clamped: false,
                    in_service: true,
                })
            }
            _ => None,
        };

        let y_net = adm.into_matrix();
        let state = SystemState {
            units: unit_states,
            wind: wind_states,
            converter,
        };
        let total_steps = sc.total_steps();
        let events = sc
            .events
            .iter()
            .map(|e| Pending {
                step: ((e.time / sc.step).round() as usize).min(total_steps),
                event: e.clone(),
                done: false,
            })
            .collect();
        let demand = loads.iter().map(LoadDevice::demand).collect();
        let p_total: f64 = sources.iter().map(|s| s.1).sum();
        let q_total: f64 = sources.iter().map(|s| s.2).sum();
        let slack_mw = sources.iter().find(|s| s.0 == slack_unit).map_or(0.0, |s| s.1);
        let report = InitReport {
            p_total_mw: p_total,
            q_total_mvar: q_total,
            wind_mw,
            load_scale_p: kp,
            load_scale_q: kq,
            power_flow_iterations: pf.iterations,
            slack_unit,
            slack_mw,
            max_derivative: 0.0,
            max_derivative_device: String::new(),
            sources,
        };
        let placeholder = NetworkSolver::new(DMatrix::identity(1, 1))?;
        let mut sim = Self {
            trace: Trace::new(Vec::new()),
            scenario: sc,
            network,
            y_net,
            solver: placeholder,
            opts: AlgebraicOptions::default(),
            units,
            loads,
            demand,
            winds,
            bess,
            state,
            prev_angle: v0.iter().map(|v| v.arg()).collect(),
            v: v0.clone(),
            step_index: 0,
            events,
            report,
            log: Vec::new(),
            warnings: Vec::new(),
            max_balance: 0.0,
            max_iterations: 0,
        };
        sim.validate_events()?;
        sim.solver = NetworkSolver::new(sim.augmented_matrix())?;
        sim.trace = Trace::new(sim.trace_columns());

        // The dynamic network must reproduce the power-flow voltages.
        let (v, _) = sim.solve(&sim.state, &v0)?;
        let dv = v.iter().zip(&v0).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        if dv > 1e-6 {
            return Err(Error::Initialization {
                device: "network".into(),
                residual: dv,
            });
        }
        sim.v = v;
        let (device, worst) = sim.largest_derivative();
        sim.report.max_derivative = worst;
        sim.report.max_derivative_device = device.clone();
        if !(worst < EQUILIBRIUM_TOLERANCE) {
            return Err(Error::Initialization { device, residual: worst });
        }
        Ok(sim)
    }

    fn validate_events(&self) -> Result<()> {
        for (i, p) in self.events.iter().enumerate() {
            let ok = match &p.event.kind {
                EventKind::TripGenerator { target } | EventKind::SetReference { target, .. } => {
                    self.units.iter().any(|u| u.name() == target)
                        || self.winds.iter().any(|w| &w.plant.name == target)
                        || (target == "BESS" && self.bess.is_some())
                }
                EventKind::TripLoad { bus } => self.loads.iter().any(|l| l.bus_id == *bus),
            };
            if !ok {
                let field = match p.event.kind {
                    EventKind::TripLoad { .. } => format!("events[{i}].bus"),
                    _ => format!("events[{i}].target"),
                };
                return Err(Error::schema(field, "no such device in this configuration"));
            }
        }
        Ok(())
    }

    fn largest_derivative(&self) -> (String, f64) {
        let d = self.derivatives(&self.state, &self.v);
        let mut worst = (String::from("none"), 0.0f64);
        let mut consider = |name: &str, vals: &[f64]| {
            for v in vals {
                if !(v.abs() <= worst.1) {
                    worst = (name.to_string(), v.abs());
                }
            }
        };
        for (u, x) in self.units.iter().zip(&d.units) {
            let m = &x.machine;
            let e = &x.exciter;
            let mut vals = vec![m.delta, m.dw, m.eq1, m.ed1, m.eq2, m.ed2, e.vm, e.vr, e.efd, e.rf, x.secondary];
            vals.extend(governor_values(&x.governor));
            consider(u.name(), &vals);
        }
        for (w, x) in self.winds.iter().zip(&d.wind) {
            consider(&w.plant.name, &[*x]);
        }
        if let Some(c) = &d.converter {
            let vals = match c {
                ConverterState::Following(s) => vec![s.id, s.iq, s.v_meas],
                ConverterState::Forming(s) => vec![s.lead_lag, s.p_filt, s.theta, s.vm],
            };
            consider("BESS", &vals);
        }
        worst
    }

    fn augmented_matrix(&self) -> DMatrix<C64> {
        let mut y = self.y_net.clone();
        for u in self.units.iter().filter(|u| u.in_service) {
            y[(u.bus, u.bus)] += u.y;
        }
        for l in self.loads.iter().filter(|l| l.in_service) {
            y[(l.bus, l.bus)] += l.y0;
        }
        for w in self.winds.iter().filter(|w| w.in_service) {
            y[(w.bus, w.bus)] += w.shunt;
        }
        if let Some(b) = self.bess.as_ref().filter(|b| b.in_service) {
            y[(b.bus, b.bus)] += b.y_c;
        }
        y
    }

    /// Norton current injections beyond the matrix terms.
    fn inject(&self, x: &SystemState, v: &[C64], out: &mut [C64]) {
        for (u, s) in self.units.iter().zip(&x.units) {
            if u.in_service {
                out[u.bus] += u.injection(s, v[u.bus]);
            }
        }
        for (l, s) in self.loads.iter().zip(&self.demand) {
            if l.in_service {
                let vb = v[l.bus];
                out[l.bus] += l.y0 * vb - l.current(*s, vb);
            }
        }
        for (w, p) in self.winds.iter().zip(&x.wind) {
            if w.in_service {
                out[w.bus] += w.plant.current(*p, v[w.bus]).current;
            }
        }
        if let (Some(b), Some(c)) = (&self.bess, &x.converter) {
            if b.in_service {
                out[b.bus] += b.injection(c, v[b.bus]);
            }
        }
    }

    fn solve(&self, x: &SystemState, guess: &[C64]) -> Result<(Vec<C64>, usize)> {
        let sol = self
            .solver
            .solve_with(guess, &self.opts, |v, out| self.inject(x, v, out))?;
        Ok((sol.voltages, sol.iterations))
    }

    fn derivatives(&self, x: &SystemState, v: &[C64]) -> SystemState {
        let units = self
            .units
            .iter()
            .zip(&x.units)
            .map(|(u, s)| {
                if !u.in_service {
                    return s.combine(&[(-1.0, s)]);
                }
                let vb = v[u.bus];
                let spec = &u.spec;
                let pm = spec.governor.pm(&s.governor) * spec.machine.power_scale();
                let offset = spec.secondary.as_ref().map_or(0.0, |c| c.offset(s.secondary));
                UnitState {
                    machine: machine_derivatives(
                        &s.machine,
                        &spec.machine,
                        to_dq(vb, s.machine.delta),
                        s.exciter.efd,
                        pm,
                    ),
                    exciter: spec.exciter.derivatives(&s.exciter, vb.norm(), u.vref),
                    governor: spec.governor.derivatives(&s.governor, s.machine.dw, u.pref, offset),
                    secondary: spec.secondary.as_ref().map_or(0.0, |c| c.derivative(s.machine.dw)),
                }
            })
            .collect();
        let wind = self
            .winds
            .iter()
            .zip(&x.wind)
            .map(|(w, p)| {
                if w.in_service {
                    w.plant.derivative(*p, w.available)
                } else {
                    0.0
                }
            })
            .collect();
        let converter = match (&self.bess, &x.converter) {
            (Some(b), Some(c)) if b.in_service => Some(b.derivatives(c, v[b.bus])),
            (_, Some(c)) => Some(c.combine(&[(-1.0, c)])),
            _ => None,
        };
        SystemState {
            units,
            wind,
            converter,
        }
    }

    fn project(&self, x: &mut SystemState) {
        for (u, s) in self.units.iter().zip(x.units.iter_mut()) {
            u.spec.exciter.project(&mut s.exciter);
            u.spec.governor.project(&mut s.governor);
        }
    }

    fn abort(&self, e: Error) -> Error {
        Error::Aborted {
            time: self.time(),
            source: Box::new(e),
        }
    }

    fn solve_tracked(&mut self, x: &SystemState, guess: &[C64]) -> Result<Vec<C64>> {
        let (v, it) = self.solve(x, guess).map_err(|e| self.abort(e))?;
        self.max_iterations = self.max_iterations.max(it);
        Ok(v)
    }

    fn integrate(&mut self) -> Result<()> {
        let dt = self.scenario.step;
        let x0 = self.state.clone();
        let v0 = self.v.clone();
        let k1 = self.derivatives(&x0, &v0);
        let (mut x1, v1) = match self.scenario.integrator {
            Integrator::Heun => {
                let mut xp = x0.combine(&[(dt, &k1)]);
                self.project(&mut xp);
                let vp = self.solve_tracked(&xp, &v0)?;
                let k2 = self.derivatives(&xp, &vp);
                (x0.combine(&[(0.5 * dt, &k1), (0.5 * dt, &k2)]), vp)
            }
            Integrator::Rk4 => {
                let mut x2 = x0.combine(&[(0.5 * dt, &k1)]);
                self.project(&mut x2);
                let v2 = self.solve_tracked(&x2, &v0)?;
                let k2 = self.derivatives(&x2, &v2);
                let mut x3 = x0.combine(&[(0.5 * dt, &k2)]);
                self.project(&mut x3);
                let v3 = self.solve_tracked(&x3, &v2)?;
                let k3 = self.derivatives(&x3, &v3);
                let mut x4 = x0.combine(&[(dt, &k3)]);
                self.project(&mut x4);
                let v4 = self.solve_tracked(&x4, &v3)?;
                let k4 = self.derivatives(&x4, &v4);
                (
                    x0.combine(&[(dt / 6.0, &k1), (dt / 3.0, &k2), (dt / 3.0, &k3), (dt / 6.0, &k4)]),
                    v4,
                )
            }
        };
        self.project(&mut x1);
        let v = self.solve_tracked(&x1, &v1)?;
        self.state = x1;
        self.v = v;
        self.max_balance = self.max_balance.max(self.power_balance());
        Ok(())
    }

    /// Largest per-bus complex power mismatch between the device currents
    /// and the network, pu.
    pub fn power_balance(&self) -> f64 {
        let n = self.v.len();
        let x = &self.state;
        let mut dev = vec![C64::new(0.0, 0.0); n];
        for (u, s) in self.units.iter().zip(&x.units) {
            if u.in_service {
                dev[u.bus] += terminal_current(&s.machine, &u.spec.machine, self.v[u.bus]);
            }
        }
        for (l, s) in self.loads.iter().zip(&self.demand) {
            if l.in_service {
                dev[l.bus] -= l.current(*s, self.v[l.bus]);
            }
        }
        for (w, p) in self.winds.iter().zip(&x.wind) {
            if w.in_service {
                let vb = self.v[w.bus];
                dev[w.bus] += w.plant.current(*p, vb).current - w.shunt * vb;
            }
        }
        if let (Some(b), Some(c)) = (&self.bess, &x.converter) {
            if b.in_service {
                dev[b.bus] += b.current(c, self.v[b.bus]).0;
            }
        }
        let v = DVector::from_column_slice(&self.v);
        let i_net = &self.y_net * &v;
        (0..n)
            .map(|i| (self.v[i] * (dev[i] - i_net[i]).conj()).norm())
            .fold(0.0, f64::max)
    }

    /// One tick of every sampled block, then a network re-solve so the held
    /// algebraic state matches the new discrete inputs.
    fn sample(&mut self) -> Result<()> {
        let t = self.time();
        for (i, v) in self.v.iter().enumerate() {
            let a = v.arg();
            let raw = 1.0 + wrap_angle(a - self.prev_angle[i]) / (OMEGA_NOMINAL * SAMPLE_PERIOD);
            self.prev_angle[i] = a;
            // Frequency samples feed the loads at this bus below.
            for l in self.loads.iter_mut().filter(|l| l.bus == i) {
                l.freq.push(raw);
                l.volt.push(v.norm());
            }
        }
        for l in &mut self.loads {
            if let Some(p) = &l.profile {
                let (pm, qm) = p.at(t);
                l.p0 = pm / BASE_MVA;
                l.q0 = qm / BASE_MVA;
            }
        }
        self.demand = self.loads.iter().map(LoadDevice::demand).collect();
        for w in &mut self.winds {
            w.available = w.override_available.unwrap_or_else(|| w.profile.at(t));
        }
        if let (Some(b), Some(x)) = (&mut self.bess, &self.state.converter) {
            if b.in_service {
                let vb = self.v[b.bus];
                let p_ac = b.power(x, vb).re * b.scale * BASE_MVA * 1e6;
                if let ConverterCtrl::Following(c) = &mut b.ctrl {
                    c.sample(vb, SAMPLE_PERIOD);
                }
                let stack = b.battery.stack;
                let row = stack_row(&b.battery, b.cell.soc).map_err(|e| Error::Aborted {
                    time: t,
                    source: Box::new(e),
                })?;
                let p_dc = dc_power_from_ac(p_ac, stack.efficiency);
                let (i, capped) = dc_current_for_power(&b.cell, p_dc, &row, stack.parallel);
                let (mut next, y) = battery_step(&b.cell, i, SAMPLE_PERIOD, &row, stack.parallel);
                let (soc, clamped) = soc_update(b.cell.soc, i, stack.ts, stack.cnom_ah);
                next.soc = soc;
                b.cell = next;
                b.dc_voltage = y;
                b.dc_current = i;
                if (clamped && !b.soc_clamped) || capped {
                    let msg = if capped {
                        format!("t={t:.3}: battery discharge capped at its maximum power point")
                    } else {
                        format!("t={t:.3}: state of charge reached a limit")
                    };
                    if !self.warnings.contains(&msg) {
                        self.warnings.push(msg);
                    }
                }
                b.soc_clamped = clamped;
            }
        }
        let x = self.state.clone();
        let v0 = self.v.clone();
        self.v = self.solve_tracked(&x, &v0)?;
        Ok(())
    }

    fn apply_due_events(&mut self) -> Result<()> {
        let n = self.step_index;
        let due: Vec<usize> = (0..self.events.len())
            .filter(|&i| !self.events[i].done && self.events[i].step <= n)
            .collect();
        if due.is_empty() {
            return Ok(());
        }
        let applied = self.log.len();
        for i in due {
            self.events[i].done = true;
            let ev = self.events[i].event.clone();
            self.apply_event(&ev)?;
        }
        // Ignored events leave the network untouched.
        if self.log.len() == applied {
            return Ok(());
        }
        self.solver = NetworkSolver::new(self.augmented_matrix()).map_err(|e| self.abort(e))?;
        let x = self.state.clone();
        let v0 = self.v.clone();
        self.v = self.solve_tracked(&x, &v0)?;
        Ok(())
    }

    /// Applies an event now. Tripping an already disconnected device is a
    /// no-op reported as a warning.
    pub fn apply_event(&mut self, ev: &Event) -> Result<()> {
        let t = self.time();
        let warn = |sim: &mut Self, what: &str| {
            sim.warnings.push(format!("t={t:.3}: {what} already out of service; event ignored"));
        };
        match &ev.kind {
            EventKind::TripGenerator { target } => {
                if let Some(k) = self.units.iter().position(|u| u.name() == target) {
                    if !self.units[k].in_service {
                        warn(self, target);
                        return Ok(());
                    }
                    let u = &self.units[k];
                    let vb = self.v[u.bus];
                    let s = vb * terminal_current(&self.state.units[k].machine, &u.spec.machine, vb).conj();
                    self.units[k].in_service = false;
                    self.log.push(EventRecord {
                        time: t,
                        description: format!("trip {target}"),
                        mw: Some(s.re * BASE_MVA),
                    });
                } else if let Some(k) = self.winds.iter().position(|w| &w.plant.name == target) {
                    if !self.winds[k].in_service {
                        warn(self, target);
                        return Ok(());
                    }
                    let w = &self.winds[k];
                    let vb = self.v[w.bus];
                    let s = vb * w.plant.current(self.state.wind[k], vb).current.conj();
                    self.winds[k].in_service = false;
                    self.log.push(EventRecord {
                        time: t,
                        description: format!("trip {target}"),
                        mw: Some(s.re * BASE_MVA),
                    });
                } else if target == "BESS" {
                    let (Some(b), Some(x)) = (&self.bess, &self.state.converter) else {
                        return Err(Error::schema("events.target", "no battery in this configuration"));
                    };
                    if !b.in_service {
                        warn(self, target);
                        return Ok(());
                    }
                    let mw = b.power(x, self.v[b.bus]).re * b.scale * BASE_MVA;
                    self.bess.as_mut().expect("checked").in_service = false;
                    self.log.push(EventRecord {
                        time: t,
                        description: "trip BESS".into(),
                        mw: Some(mw),
                    });
                } else {
                    return Err(Error::schema("events.target", format!("unknown device `{target}`")));
                }
            }
            EventKind::TripLoad { bus } => {
                let mut mw = 0.0;
                let mut any = false;
                for (l, s) in self.loads.iter_mut().zip(&self.demand) {
                    if l.bus_id == *bus && l.in_service {
                        l.in_service = false;
                        mw += s.re * BASE_MVA;
                        any = true;
                    }
                }
                if !any {
                    warn(self, &format!("load at bus {bus}"));
                    return Ok(());
                }
                self.log.push(EventRecord {
                    time: t,
                    description: format!("trip load at bus {bus}"),
                    mw: Some(mw),
                });
            }
            EventKind::SetReference { target, value } => {
                if let Some(u) = self.units.iter_mut().find(|u| u.name() == target) {
                    u.pref = *value;
                } else if let Some(w) = self.winds.iter_mut().find(|w| &w.plant.name == target) {
                    w.override_available = Some(value.clamp(0.0, 1.0));
                } else if let (Some(b), true) = (self.bess.as_mut(), target == "BESS") {
                    b.set_p_ref(*value);
                } else {
                    return Err(Error::schema("events.target", format!("unknown device `{target}`")));
                }
                self.log.push(EventRecord {
                    time: t,
                    description: format!("set {target} reference to {value}"),
                    mw: None,
                });
            }
        }
        Ok(())
    }

    fn trace_columns(&self) -> Vec<String> {
        let mut cols: Vec<String> = LEADING_COLUMNS.iter().map(|s| s.to_string()).collect();
        cols.extend(self.units.iter().map(|u| format!("f_{}", u.name())));
        cols.extend(self.network.buses.iter().map(|b| format!("v_{}", b.id)));
        cols
    }

    fn record(&mut self) {
        let mut row = Vec::with_capacity(self.trace.columns.len());
        row.push(self.time());
        row.push(self.frequency_coi());
        match (&self.bess, &self.state.converter) {
            (Some(b), Some(x)) => {
                let vb = self.v[b.bus];
                let s = if b.in_service { b.power(x, vb) } else { C64::new(0.0, 0.0) };
                row.extend([s.re, s.im, vb.norm(), b.dc_voltage, b.dc_current, b.cell.soc]);
            }
            _ => row.extend([f64::NAN; 6]),
        }
        for (u, s) in self.units.iter().zip(&self.state.units) {
            row.push(if u.in_service { 1.0 + s.machine.dw } else { f64::NAN });
        }
        row.extend(self.v.iter().map(|v| v.norm()));
        self.trace.push_row(&row);
    }

    /// Advances one integration step, applying due events and sampled
    /// blocks first.
    pub fn step(&mut self) -> Result<()> {
        self.apply_due_events()?;
        let n = self.step_index;
        if n % self.scenario.steps_per_ms() == 0 {
            self.sample()?;
        }
        if n % self.scenario.record_every() == 0 {
            self.record();
        }
        self.integrate()?;
        self.step_index += 1;
        Ok(())
    }

    /// Runs to the scenario's end. On a network-solve failure the error
    /// carries the abort time and the partial trace stays available.
    pub fn run_to_end(&mut self) -> Result<()> {
        let total = self.scenario.total_steps();
        while self.step_index < total {
            self.step()?;
        }
        self.apply_due_events()?;
        if total % self.scenario.record_every() == 0 && self.trace.time().map_or(true, |t| t.last() != Some(&self.time())) {
            self.record();
        }
        Ok(())
    }

    pub fn into_output(self) -> RunOutput {
        let summary = self.summary();
        RunOutput {
            trace: self.trace,
            summary,
        }
    }

    pub fn summary(&self) -> RunSummary {
        let sc = &self.scenario;
        RunSummary {
            name: sc.name.clone(),
            config: sc.config.as_str().into(),
            controller: sc.config.has_bess().then(|| match sc.controller {
                ControllerKind::Following => "following".into(),
                ControllerKind::Forming => "forming".into(),
            }),
            step: sc.step,
            duration: sc.duration,
            seed: sc.seed,
            trip_time: sc.trip_time(),
            init: self.report.clone(),
            events: self.log.clone(),
            warnings: self.warnings.clone(),
            max_power_balance_pu: self.max_balance,
            max_network_iterations: self.max_iterations,
        }
    }

    pub fn time(&self) -> f64 {
        self.step_index as f64 * self.scenario.step
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn init_report(&self) -> &InitReport {
        &self.report
    }

    pub fn trace(&self) -> &Trace {
        &self.trace
    }

    pub fn voltages(&self) -> &[C64] {
        &self.v
    }

    pub fn state(&self) -> &SystemState {
        &self.state
    }

    pub fn units(&self) -> &[Unit] {
        &self.units
    }

    pub fn loads(&self) -> &[LoadDevice] {
        &self.loads
    }

    pub fn winds(&self) -> &[WindDevice] {
        &self.winds
    }

    pub fn bess(&self) -> Option<&Bess> {
        self.bess.as_ref()
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn events(&self) -> &[EventRecord] {
        &self.log
    }

    pub fn max_power_balance(&self) -> f64 {
        self.max_balance
    }

    /// Inertia-weighted mean speed of the in-service machines, pu.
    pub fn frequency_coi(&self) -> f64 {
        let (num, den) = self
            .units
            .iter()
            .zip(&self.state.units)
            .filter(|(u, _)| u.in_service)
            .fold((0.0, 0.0), |(n, d), (u, s)| {
                (n + u.spec.machine.h * (1.0 + s.machine.dw), d + u.spec.machine.h)
            });
        if den > 0.0 {
            num / den
        } else {
            f64::NAN
        }
    }

    /// Complex power delivered by a synchronous unit, MW / MVar.
    pub fn unit_output(&self, name: &str) -> Option<C64> {
        let k = self.units.iter().position(|u| u.name() == name)?;
        let u = &self.units[k];
        if !u.in_service {
            return Some(C64::new(0.0, 0.0));
        }
        let vb = self.v[u.bus];
        Some(vb * terminal_current(&self.state.units[k].machine, &u.spec.machine, vb).conj() * BASE_MVA)
    }
}

fn governor_values(g: &crate::machines::GovernorState) -> Vec<f64> {
    use crate::machines::GovernorState;
    match g {
        GovernorState::Hydro(h) => vec![h.integ, h.gate, h.water],
        GovernorState::Steam(s) => vec![s.relay, s.servo, s.hp, s.rh, s.lp],
    }
}

fn anchored_load(mut prof: LoadProfile, p_mw: f64, q_mvar: f64) -> LoadProfile {
    let (p0, q0) = (prof.p_mw[0], prof.q_mvar[0]);
    for v in &mut prof.p_mw {
        *v = if p0 != 0.0 { *v / p0 * p_mw } else { p_mw };
    }
    for v in &mut prof.q_mvar {
        *v = if q0 != 0.0 { *v / q0 * q_mvar } else { q_mvar };
    }
    prof
}

fn load_profile(sc: &Scenario, bus: u32, p_mw: f64, q_mvar: f64) -> Result<Option<LoadProfile>> {
    if let Some(dir) = &sc.data.load_profiles {
        let path = sc.resolve_path(dir).join(format!("load_{bus}.csv"));
        if path.exists() {
            let prof = LoadProfile::read_csv(&path)?;
            prof.validate()?;
            return Ok(Some(anchored_load(prof, p_mw, q_mvar)));
        }
    }
    Ok(match sc.loads.profile {
        ProfileKind::Constant => None,
        ProfileKind::Synthetic => Some(anchored_load(
            synthetic_profile(p_mw, q_mvar, sc.duration, sc.loads.amplitude, sc.seed.wrapping_add(bus as u64)),
            p_mw,
            q_mvar,
        )),
    })
}

fn anchored_wind(mut prof: WindProfile, p: f64) -> WindProfile {
    let off = p - prof.values[0];
    for v in &mut prof.values {
        *v = (*v + off).clamp(0.0, 1.0);
    }
    prof.values[0] = p;
    prof
}

fn wind_profile(sc: &Scenario, plant: &WindPlant, k: usize, p: f64) -> Result<WindProfile> {
    if let Some(dir) = &sc.data.wind_profiles {
        let path: std::path::PathBuf = sc.resolve_path(dir).join(format!("{}.csv", plant.name));
        if Path::new(&path).exists() {
            let prof = WindProfile::read_csv(&path)?;
            prof.validate()?;
            return Ok(anchored_wind(prof, p));
        }
    }
    Ok(match sc.wind.profile {
        ProfileKind::Constant => WindProfile::constant(p),
        ProfileKind::Synthetic => {
            let seed = sc.seed.wrapping_mul(31).wrapping_add(1000 + k as u64);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let step = Normal::new(0.0, 0.03).expect("finite sigma");
            let minutes = (sc.duration / 60.0).ceil() as usize + 2;
            let mut series = vec![p];
            for _ in 1..minutes {
                let last = *series.last().expect("nonempty");
                series.push((last + step.sample(&mut rng)).clamp(0.0, 1.0));
            }
            anchored_wind(resample_profile(&series, sc.wind.sigma, seed)?, p)
        }
    })
}
