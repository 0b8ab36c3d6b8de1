//! Run configuration from a flat JSON file of dotted keys plus overrides.
//!
//! Every key names `section.field`, e.g. `{"motor.max_speed": 12000,
//! "run.seed": 3}`. Sections are `vehicle`, `motor`, `guards`, `solver`,
//! `migp`, `ratio` and `run`.

use std::path::Path;

use anyhow::{bail, Context, Result};
use migp_core::cycle::{GuardSpec, VehicleParams};
use migp_core::migp::MigpOptions;
use migp_core::powertrain::{MotorParams, DEFAULT_RATIO_BOUNDS};
use migp_core::SolverOptions;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioBounds {
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSection {
    /// Number of clustered scenarios; all steps when absent.
    pub k: Option<usize>,
    pub seed: u64,
    /// kg per W of motor power; enables the variable-mass model.
    pub specific_mass: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub vehicle: VehicleParams,
    pub motor: MotorParams,
    pub guards: GuardSpec,
    pub solver: SolverOptions,
    pub migp: MigpOptions,
    pub ratio: RatioBounds,
    pub run: RunSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            vehicle: VehicleParams::default(),
            motor: MotorParams::default(),
            guards: GuardSpec::default(),
            solver: SolverOptions::default(),
            migp: MigpOptions::default(),
            ratio: RatioBounds {
                min: DEFAULT_RATIO_BOUNDS.0,
                max: DEFAULT_RATIO_BOUNDS.1,
            },
            run: RunSection {
                k: None,
                seed: 0,
                specific_mass: None,
            },
        }
    }
}

impl RunConfig {
    fn to_tree(&self) -> Result<Map<String, Value>> {
        let mut m = Map::new();
        m.insert("vehicle".into(), serde_json::to_value(&self.vehicle)?);
        m.insert("motor".into(), serde_json::to_value(&self.motor)?);
        m.insert("guards".into(), serde_json::to_value(self.guards)?);
        m.insert("solver".into(), serde_json::to_value(&self.solver)?);
        m.insert("migp".into(), serde_json::to_value(&self.migp)?);
        m.insert("ratio".into(), serde_json::to_value(&self.ratio)?);
        m.insert("run".into(), serde_json::to_value(&self.run)?);
        Ok(m)
    }

    fn from_tree(mut m: Map<String, Value>) -> Result<Self> {
        let mut take = |k: &str| m.remove(k).unwrap_or(Value::Null);
        let section = |k: &str, v: Value| format!("invalid `{k}` section: {v}");
        let vehicle = take("vehicle");
        let motor = take("motor");
        let guards = take("guards");
        let solver = take("solver");
        let migp = take("migp");
        let ratio = take("ratio");
        let run = take("run");
        let solver: SolverOptions =
            serde_json::from_value(solver.clone()).with_context(|| section("solver", solver))?;
        let mut migp: MigpOptions = serde_json::from_value(migp.clone()).with_context(|| section("migp", migp))?;
        migp.solver = solver.clone();
        Ok(RunConfig {
            vehicle: serde_json::from_value(vehicle.clone()).with_context(|| section("vehicle", vehicle))?,
            motor: serde_json::from_value(motor.clone()).with_context(|| section("motor", motor))?,
            guards: serde_json::from_value(guards.clone()).with_context(|| section("guards", guards))?,
            solver,
            migp,
            ratio: serde_json::from_value(ratio.clone()).with_context(|| section("ratio", ratio))?,
            run: serde_json::from_value(run.clone()).with_context(|| section("run", run))?,
        })
    }

    /// Apply `section.field = value` pairs; unknown keys are errors.
    pub fn with_overrides<'a>(&self, pairs: impl IntoIterator<Item = (&'a str, Value)>) -> Result<Self> {
        let mut tree = self.to_tree()?;
        for (key, value) in pairs {
            let Some((sec, field)) = key.split_once('.') else {
                bail!("config key `{key}` must have the form section.field");
            };
            let Some(Value::Object(fields)) = tree.get_mut(sec) else {
                bail!("unknown config section `{sec}` in `{key}`");
            };
            let Some(slot) = fields.get_mut(field) else {
                bail!("unknown config key `{key}`");
            };
            *slot = value;
        }
        Self::from_tree(tree)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let map: Map<String, Value> =
            serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        Self::default().with_overrides(map.iter().map(|(k, v)| (k.as_str(), v.clone())))
    }

    pub fn bounds(&self) -> (f64, f64) {
        (self.ratio.min, self.ratio.max)
    }
}

/// Parse `key=value`; the value is read as JSON and falls back to a string.
pub fn parse_assignment(s: &str) -> Result<(String, Value)> {
    let Some((k, v)) = s.split_once('=') else {
        bail!("expected key=value, got `{s}`");
    };
    let value = serde_json::from_str(v).unwrap_or_else(|_| Value::String(v.to_string()));
    Ok((k.trim().to_string(), value))
}
