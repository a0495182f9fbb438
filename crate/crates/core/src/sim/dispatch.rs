use std::collections::HashMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::table::Tables;
use crate::wind::WindPlant;

const SHIPPED_DISPATCH: &str = include_str!("../../data/dispatch.txt");
const SHIPPED_WIND: &str = include_str!("../../data/wind_plants.txt");

#[derive(Debug, Clone, PartialEq)]
pub struct DispatchEntry {
    pub unit: String,
    pub p_mw: f64,
    pub q_mvar: f64,
}

/// Per-configuration unit dispatch and the realized totals to calibrate to.
#[derive(Debug, Clone, PartialEq)]
pub struct Dispatch {
    pub entries: HashMap<String, Vec<DispatchEntry>>,
    pub totals: HashMap<String, (f64, f64)>,
}

impl Dispatch {
    pub fn shipped() -> Self {
        Self::parse(SHIPPED_DISPATCH, "dispatch.txt").expect("shipped dispatch parses")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn parse(text: &str, source: &str) -> Result<Self> {
        let t = Tables::parse(text, source)?;
        let mut entries = HashMap::new();
        for key in ["config1", "config2"] {
            let mut list = Vec::new();
            for row in t.section(key)? {
                t.expect_width(row, 3)?;
                list.push(DispatchEntry {
                    unit: t.field(row, 0, "unit")?,
                    p_mw: t.field(row, 1, "p_mw")?,
                    q_mvar: t.field(row, 2, "q_mvar")?,
                });
            }
            entries.insert(key.to_string(), list);
        }
        let mut totals = HashMap::new();
        for row in t.section("totals")? {
            t.expect_width(row, 3)?;
            let key: String = t.field(row, 0, "config")?;
            totals.insert(key, (t.field(row, 1, "p_mw")?, t.field(row, 2, "q_mvar")?));
        }
        for key in ["config1", "config2"] {
            if !totals.contains_key(key) {
                return Err(Error::parse(source, 0, format!("[totals] lacks `{key}`")));
            }
        }
        Ok(Self { entries, totals })
    }

    pub fn entry(&self, key: &str, unit: &str) -> Option<&DispatchEntry> {
        self.entries.get(key)?.iter().find(|e| e.unit == unit)
    }
}

/// Wind plants and the synchronous units they displace.
#[derive(Debug, Clone, PartialEq)]
pub struct WindRoster {
    pub plants: Vec<(WindPlant, String)>,
}

impl WindRoster {
    pub fn shipped() -> Self {
        Self::parse(SHIPPED_WIND, "wind_plants.txt").expect("shipped wind roster parses")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn parse(text: &str, source: &str) -> Result<Self> {
        let t = Tables::parse(text, source)?;
        let mut plants = Vec::new();
        for row in t.section("plants")? {
            t.expect_width(row, 4)?;
            let name: String = t.field(row, 0, "name")?;
            let plant = WindPlant::new(&name, t.field(row, 1, "bus")?, t.field(row, 3, "rating_mva")?);
            plant.validate().map_err(|e| Error::parse(source, row.line, e.to_string()))?;
            plants.push((plant, t.field(row, 2, "replaces")?));
        }
        Ok(Self { plants })
    }

    pub fn replaced(&self) -> impl Iterator<Item = &str> {
        self.plants.iter().map(|(_, r)| r.as_str())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipped_dispatch() {
        let d = Dispatch::shipped();
        assert_eq!(d.totals["config1"], (7129.0, 295.0));
        assert_eq!(d.totals["config2"], (7147.0, 206.0));
        assert_eq!(d.entry("config2", "G6").unwrap().p_mw, 816.0);
        assert_eq!(d.entry("config2", "G4").unwrap().p_mw, 545.0);
        assert!(d.entry("config2", "G1").is_none());
        let wind: f64 = ["WP1", "WP2", "WP3", "WP4"]
            .iter()
            .map(|w| d.entry("config2", w).unwrap().p_mw)
            .sum();
        assert_eq!(wind, 3784.0);
    }

    #[test]
    fn shipped_wind_roster() {
        let w = WindRoster::shipped();
        let mut r: Vec<&str> = w.replaced().collect();
        r.sort();
        assert_eq!(r, ["G1", "G5", "G8", "G9"]);
    }
}
