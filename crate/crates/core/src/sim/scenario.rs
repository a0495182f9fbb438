use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::converter::{ControllerKind, FollowingParams, FormingParams};
use crate::error::{Error, Result};
use crate::loads::LoadParams;

/// Which of the three system configurations to assemble.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Configuration {
    /// Ten synchronous machines.
    Config1,
    /// G1, G5, G8 and G9 replaced by four wind plants.
    Config2,
    /// Config2 plus the battery converter at bus 17.
    Config2Bess,
}

impl Configuration {
    pub fn has_wind(self) -> bool {
        !matches!(self, Configuration::Config1)
    }

    pub fn has_bess(self) -> bool {
        matches!(self, Configuration::Config2Bess)
    }

    /// Key of the dispatch table section.
    pub fn dispatch_key(self) -> &'static str {
        if self.has_wind() {
            "config2"
        } else {
            "config1"
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Configuration::Config1 => "config1",
            Configuration::Config2 => "config2",
            Configuration::Config2Bess => "config2_bess",
        }
    }
}

impl std::str::FromStr for Configuration {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "config1" => Ok(Self::Config1),
            "config2" => Ok(Self::Config2),
            "config2_bess" => Ok(Self::Config2Bess),
            other => Err(format!("unknown configuration `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Integrator {
    /// Explicit trapezoidal rule.
    #[default]
    #[serde(alias = "trapezoidal")]
    Heun,
    Rk4,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProfileKind {
    #[default]
    Constant,
    /// Seeded synthetic variability around the dispatch point.
    Synthetic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EventKind {
    /// Opens a synchronous unit, wind plant or the battery (`BESS`).
    TripGenerator { target: String },
    /// Disconnects the load at a bus.
    TripLoad { bus: u32 },
    /// New reference: unit power (pu of rating), battery active power
    /// (pu of rating) or wind available power (pu of rating).
    SetReference { target: String, value: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub time: f64,
    #[serde(flatten)]
    pub kind: EventKind,
}

impl Event {
    pub fn trip(time: f64, target: &str) -> Self {
        Self {
            time,
            kind: EventKind::TripGenerator { target: target.into() },
        }
    }
}

/// Optional replacements for the shipped dataset files; relative paths
/// resolve against the scenario file's directory.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataFiles {
    pub network: Option<PathBuf>,
    pub machines: Option<PathBuf>,
    pub battery: Option<PathBuf>,
    pub dispatch: Option<PathBuf>,
    pub wind_plants: Option<PathBuf>,
    /// Directory of per-bus load profiles `load_<bus>.csv`.
    pub load_profiles: Option<PathBuf>,
    /// Directory of per-plant wind profiles `<name>.csv`.
    pub wind_profiles: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LoadSettings {
    pub model: LoadParams,
    pub profile: ProfileKind,
    /// Relative amplitude of synthetic demand variability.
    pub amplitude: f64,
    /// Loads draw their base demand at the instantaneous voltage,
    /// bypassing the sensitivity model and its measurements.
    pub constant_pq: bool,
}

impl Default for LoadSettings {
    fn default() -> Self {
        Self {
            model: LoadParams::default(),
            profile: ProfileKind::Constant,
            amplitude: 0.01,
            constant_pq: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WindSettings {
    pub profile: ProfileKind,
    /// Noise added when resampling minute data to 1 s, pu of rating.
    pub sigma: f64,
    pub current_limit: f64,
    pub tau: f64,
}

impl Default for WindSettings {
    fn default() -> Self {
        Self {
            profile: ProfileKind::Constant,
            sigma: 0.01,
            current_limit: 1.1,
            tau: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BessSettings {
    pub bus: u32,
    pub initial_soc: f64,
    /// Pre-contingency active and reactive output, MW / MVar.
    pub p_mw: f64,
    pub q_mvar: f64,
    pub following: FollowingParams,
    pub forming: FormingParams,
}

impl Default for BessSettings {
    fn default() -> Self {
        Self {
            bus: 17,
            initial_soc: 0.5,
            p_mw: 0.0,
            q_mvar: 0.0,
            following: FollowingParams::default(),
            forming: FormingParams::default(),
        }
    }
}

/// Realized generation totals the load scaling aims for.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Calibration {
    pub p_total_mw: f64,
    pub q_total_mvar: f64,
}

fn default_name() -> String {
    "scenario".into()
}
fn default_duration() -> f64 {
    100.0
}
fn default_step() -> f64 {
    1e-3
}
fn default_record() -> f64 {
    0.01
}

/// A complete run description, read from TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default = "default_name")]
    pub name: String,
    pub config: Configuration,
    #[serde(default = "default_controller")]
    pub controller: ControllerKind,
    #[serde(default = "default_duration")]
    pub duration: f64,
    #[serde(default = "default_step")]
    pub step: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub integrator: Integrator,
    /// Trace cadence, s; must be a multiple of `step`.
    #[serde(default = "default_record")]
    pub record_interval: f64,
    #[serde(default)]
    pub events: Vec<Event>,
    #[serde(default)]
    pub data: DataFiles,
    #[serde(default)]
    pub loads: LoadSettings,
    #[serde(default)]
    pub wind: WindSettings,
    #[serde(default)]
    pub bess: BessSettings,
    /// Overrides the dataset's totals for the configuration.
    #[serde(default)]
    pub calibration: Option<Calibration>,
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

fn default_controller() -> ControllerKind {
    ControllerKind::Following
}

const BUILTIN: &[(&str, &str)] = &[
    ("steady_config1", include_str!("../../data/scenarios/steady_config1.toml")),
    ("steady_config2", include_str!("../../data/scenarios/steady_config2.toml")),
    ("steady_bess", include_str!("../../data/scenarios/steady_bess.toml")),
    ("case1_config1", include_str!("../../data/scenarios/case1_config1.toml")),
    ("case1_config2", include_str!("../../data/scenarios/case1_config2.toml")),
    ("case1_bess_following", include_str!("../../data/scenarios/case1_bess_following.toml")),
    ("case1_bess_forming", include_str!("../../data/scenarios/case1_bess_forming.toml")),
    ("case2_config2", include_str!("../../data/scenarios/case2_config2.toml")),
    ("case2_bess_following", include_str!("../../data/scenarios/case2_bess_following.toml")),
    ("case2_bess_forming", include_str!("../../data/scenarios/case2_bess_forming.toml")),
];

impl Scenario {
    /// Minimal scenario with defaults for everything but the configuration.
    pub fn new(name: &str, config: Configuration) -> Self {
        Self {
            name: name.into(),
            config,
            controller: default_controller(),
            duration: default_duration(),
            step: default_step(),
            seed: 0,
            integrator: Integrator::default(),
            record_interval: default_record(),
            events: Vec::new(),
            data: DataFiles::default(),
            loads: LoadSettings::default(),
            wind: WindSettings::default(),
            bess: BessSettings::default(),
            calibration: None,
            base_dir: None,
        }
    }

    pub fn with_events(mut self, events: Vec<Event>) -> Self {
        self.events = events;
        self
    }

    pub fn with_duration(mut self, duration: f64) -> Self {
        self.duration = duration;
        self
    }

    pub fn with_controller(mut self, controller: ControllerKind) -> Self {
        self.controller = controller;
        self
    }

    pub fn parse(text: &str, source: &str) -> Result<Self> {
        let s: Scenario = toml::from_str(text).map_err(|e| {
            let msg = e.message().to_string();
            let field = msg
                .split('`')
                .nth(1)
                .map(str::to_string)
                .unwrap_or_else(|| source.to_string());
            Error::schema(field, msg)
        })?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut s = Self::parse(&text, &path.display().to_string())?;
        s.base_dir = path.parent().map(Path::to_path_buf);
        Ok(s)
    }

    /// One of the shipped scenarios, by name.
    pub fn builtin(name: &str) -> Result<Self> {
        let (_, text) = BUILTIN
            .iter()
            .find(|(n, _)| *n == name)
            .ok_or_else(|| Error::schema("scenario", format!("no built-in scenario `{name}`")))?;
        Self::parse(text, name)
    }

    pub fn builtin_names() -> impl Iterator<Item = &'static str> {
        BUILTIN.iter().map(|(n, _)| *n)
    }

    /// A file path if it exists, otherwise a built-in name.
    pub fn resolve(spec: &str) -> Result<Self> {
        let p = Path::new(spec);
        if p.exists() {
            Self::load(p)
        } else if BUILTIN.iter().any(|(n, _)| *n == spec) {
            Self::builtin(spec)
        } else {
            Err(Error::io(p, std::io::Error::new(std::io::ErrorKind::NotFound, "no such scenario file or built-in")))
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("scenario serializes")
    }

    /// Integration steps per millisecond.
    pub fn steps_per_ms(&self) -> usize {
        (1e-3 / self.step).round() as usize
    }

    /// Integration steps between trace records.
    pub fn record_every(&self) -> usize {
        ((self.record_interval / self.step).round() as usize).max(1)
    }

    pub fn total_steps(&self) -> usize {
        (self.duration / self.step).round() as usize
    }

    /// Time of the first generator trip, if any.
    pub fn trip_time(&self) -> Option<f64> {
        self.events
            .iter()
            .filter(|e| matches!(e.kind, EventKind::TripGenerator { .. }))
            .map(|e| e.time)
            .fold(None, |acc: Option<f64>, t| Some(acc.map_or(t, |a| a.min(t))))
    }

    pub fn resolve_path(&self, p: &Path) -> PathBuf {
        match &self.base_dir {
            Some(base) if p.is_relative() => base.join(p),
            _ => p.to_path_buf(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.duration > 0.0) || !self.duration.is_finite() {
            return Err(Error::schema("duration", "must be positive"));
        }
        if !(self.step > 0.0) || self.step > 1e-3 {
            return Err(Error::schema("step", "must be in (0, 0.001] s"));
        }
        let per_ms = 1e-3 / self.step;
        if (per_ms - per_ms.round()).abs() > 1e-9 {
            return Err(Error::schema("step", "must divide the 1 ms sampling period"));
        }
        let rec = self.record_interval / self.step;
        if !(self.record_interval > 0.0) || (rec - rec.round()).abs() > 1e-6 {
            return Err(Error::schema("record_interval", "must be a positive multiple of step"));
        }
        for (i, e) in self.events.iter().enumerate() {
            if !(e.time >= 0.0 && e.time <= self.duration) {
                return Err(Error::schema(format!("events[{i}].time"), "outside [0, duration]"));
            }
        }
        self.loads
            .model
            .validate()
            .map_err(|e| Error::schema("loads.model", e.to_string()))?;
        if !(0.0..=1.0).contains(&self.bess.initial_soc) {
            return Err(Error::schema("bess.initial_soc", "must be within [0, 1]"));
        }
        if !(self.wind.tau > 0.0 && self.wind.current_limit > 0.0 && self.wind.sigma >= 0.0) {
            return Err(Error::schema("wind", "tau and current_limit must be positive, sigma non-negative"));
        }
        if !(self.loads.amplitude >= 0.0) {
            return Err(Error::schema("loads.amplitude", "must be non-negative"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtins_parse() {
        for name in Scenario::builtin_names() {
            let s = Scenario::builtin(name).unwrap();
            assert_eq!(s.name, name);
        }
    }

    #[test]
    fn minimal_toml_defaults() {
        let s = Scenario::parse("config = \"config2_bess\"\ncontroller = \"forming\"\n", "t").unwrap();
        assert_eq!(s.step, 1e-3);
        assert_eq!(s.duration, 100.0);
        assert_eq!(s.controller, ControllerKind::Forming);
        assert_eq!(s.integrator, Integrator::Heun);
        assert_eq!(s.steps_per_ms(), 1);
        assert_eq!(s.record_every(), 10);
    }

    #[test]
    fn events_round_trip() {
        let text = r#"
config = "config2"
[[events]]
time = 5.0
kind = "trip_generator"
target = "G6"
[[events]]
time = 7.0
kind = "set_reference"
target = "BESS"
value = 0.2
[[events]]
time = 8.0
kind = "trip_load"
bus = 20
"#;
        let s = Scenario::parse(text, "t").unwrap();
        assert_eq!(s.events.len(), 3);
        assert_eq!(s.trip_time(), Some(5.0));
        assert_eq!(s.events[2].kind, EventKind::TripLoad { bus: 20 });
        let back = Scenario::parse(&s.to_toml(), "t").unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn schema_errors_name_field() {
        let e = Scenario::parse("config = \"config1\"\nstep = 0.0007\n", "t").unwrap_err();
        assert!(matches!(e, Error::Schema { ref field, .. } if field == "step"), "{e}");
        let e = Scenario::parse("config = \"config1\"\nduration = 10\n[[events]]\ntime = 11.0\nkind = \"trip_load\"\nbus = 3\n", "t")
            .unwrap_err();
        assert!(matches!(e, Error::Schema { ref field, .. } if field == "events[0].time"), "{e}");
        let e = Scenario::parse("config = \"config1\"\nstepp = 0.001\n", "t").unwrap_err();
        assert!(e.to_string().contains("stepp"), "{e}");
        let e = Scenario::parse("duration = 1.0\n", "t").unwrap_err();
        assert!(e.to_string().contains("config"), "{e}");
    }

    #[test]
    fn sub_millisecond_steps_accepted() {
        let s = Scenario::parse("config = \"config1\"\nstep = 0.0005\n", "t").unwrap();
        assert_eq!(s.steps_per_ms(), 2);
        assert_eq!(s.record_every(), 20);
    }
}
