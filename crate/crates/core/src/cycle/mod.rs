//! Driving cycles, the longitudinal vehicle model and load scenarios.

mod cluster;
mod fixtures;

use std::f64::consts::PI;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use cluster::cluster_scenarios;
pub use fixtures::{fixture_names, load_fixture, FIXTURE_DIR_ENV};

/// Lower clamp for wheel torque and speed so every scenario stays positive.
pub const EPS_POS: f64 = 1e-6;

/// Wheel speed of the launch guard, rpm.
pub const LAUNCH_WHEEL_SPEED_RPM: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub t: f64,
    /// m/s
    pub v: f64,
    /// m/s²
    pub a: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrivingCycle {
    pub name: String,
    pub samples: Vec<Sample>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VelocityUnit {
    #[default]
    MetersPerSecond,
    KilometersPerHour,
}

impl VelocityUnit {
    fn to_si(self, v: f64) -> f64 {
        match self {
            VelocityUnit::MetersPerSecond => v,
            VelocityUnit::KilometersPerHour => v / 3.6,
        }
    }
}

impl std::str::FromStr for VelocityUnit {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "m/s" | "mps" | "ms" => Ok(VelocityUnit::MetersPerSecond),
            "km/h" | "kmh" | "kph" => Ok(VelocityUnit::KilometersPerHour),
            _ => Err(Error::InvalidInput(format!(
                "unknown velocity unit `{s}` (use m/s or km/h)"
            ))),
        }
    }
}

impl DrivingCycle {
    pub fn new(name: impl Into<String>, samples: Vec<Sample>) -> Result<Self> {
        let c = DrivingCycle {
            name: name.into(),
            samples,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        for (i, s) in self.samples.iter().enumerate() {
            if !(s.v >= 0.0 && s.v.is_finite()) {
                return Err(Error::InvalidCycle(format!(
                    "sample {i}: velocity {} is negative or not finite",
                    s.v
                )));
            }
            if !s.t.is_finite() {
                return Err(Error::InvalidCycle(format!("sample {i}: time is not finite")));
            }
            if i > 0 && s.t <= self.samples[i - 1].t {
                return Err(Error::InvalidCycle(format!(
                    "time not strictly increasing at sample {i} ({} after {})",
                    s.t,
                    self.samples[i - 1].t
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Parse a `t,v[,a]` CSV with a header row.
pub fn parse_cycle<R: Read>(reader: R, name: &str, unit: VelocityUnit) -> Result<DrivingCycle> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::Parse {
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    let col = |n: &str| headers.iter().position(|h| h == n);
    let (Some(it), Some(iv)) = (col("t"), col("v")) else {
        return Err(Error::Parse {
            line: 1,
            message: "header must contain columns `t` and `v`".into(),
        });
    };
    let ia = col("a");
    let mut samples = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| Error::Parse {
            line,
            message: e.to_string(),
        })?;
        let field = |k: usize, what: &str| -> Result<f64> {
            let raw = rec.get(k).ok_or_else(|| Error::Parse {
                line,
                message: format!("missing column `{what}`"),
            })?;
            raw.parse::<f64>().map_err(|_| Error::Parse {
                line,
                message: format!("`{raw}` is not a number in column `{what}`"),
            })
        };
        let a = match ia {
            Some(k) if rec.get(k).is_some_and(|s| !s.is_empty()) => Some(field(k, "a")?),
            _ => None,
        };
        samples.push(Sample {
            t: field(it, "t")?,
            v: unit.to_si(field(iv, "v")?),
            a,
        });
    }
    DrivingCycle::new(name, samples)
}

pub fn load_cycle(path: &Path, unit: VelocityUnit) -> Result<DrivingCycle> {
    let f = std::fs::File::open(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "cycle".into());
    parse_cycle(f, &name, unit)
}

/// Fill accelerations by central differences; endpoints use one-sided
/// first-order differences.
pub fn central_difference(cycle: &DrivingCycle) -> Result<DrivingCycle> {
    let s = &cycle.samples;
    let n = s.len();
    if n < 3 {
        return Err(Error::InvalidCycle(format!(
            "central difference needs at least 3 samples, got {n}"
        )));
    }
    let mut out = s.clone();
    out[0].a = Some((s[1].v - s[0].v) / (s[1].t - s[0].t));
    for i in 1..n - 1 {
        out[i].a = Some((s[i + 1].v - s[i - 1].v) / (s[i + 1].t - s[i - 1].t));
    }
    out[n - 1].a = Some((s[n - 1].v - s[n - 2].v) / (s[n - 1].t - s[n - 2].t));
    Ok(DrivingCycle {
        name: cycle.name.clone(),
        samples: out,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleParams {
    /// kg
    pub base_mass: f64,
    pub driver_mass: f64,
    pub aux_mass: f64,
    pub battery_mass: f64,
    /// m/s²
    pub gravity: f64,
    /// rad
    pub slope_angle: f64,
    /// kg/m³
    pub air_density: f64,
    pub drag_coeff: f64,
    /// m²
    pub frontal_area: f64,
    pub rolling_coeff: f64,
    /// m
    pub wheel_radius: f64,
    pub inertia_factor: f64,
    pub gearbox_eff: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        VehicleParams {
            base_mass: 1100.0,
            driver_mass: 75.0,
            aux_mass: 75.0,
            battery_mass: 550.0,
            gravity: 9.81,
            slope_angle: 0.0,
            air_density: 1.2041,
            drag_coeff: 0.3,
            frontal_area: 2.2,
            rolling_coeff: 0.01,
            wheel_radius: 0.3,
            inertia_factor: 1.0,
            gearbox_eff: 0.98,
        }
    }
}

/// Speed, acceleration and road slope of one operating point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Kinematics {
    pub v: f64,
    pub a: f64,
    pub slope: f64,
}

impl VehicleParams {
    pub fn total_mass(&self) -> f64 {
        self.base_mass + self.driver_mass + self.aux_mass + self.battery_mass
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("base_mass", self.base_mass),
            ("driver_mass", self.driver_mass),
            ("aux_mass", self.aux_mass),
            ("battery_mass", self.battery_mass),
            ("gravity", self.gravity),
            ("air_density", self.air_density),
            ("drag_coeff", self.drag_coeff),
            ("frontal_area", self.frontal_area),
            ("rolling_coeff", self.rolling_coeff),
            ("wheel_radius", self.wheel_radius),
            ("inertia_factor", self.inertia_factor),
            ("gearbox_eff", self.gearbox_eff),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "vehicle `{name}` must be positive, got {v}"
                )));
            }
        }
        if !(self.slope_angle >= 0.0) {
            return Err(Error::InvalidInput("vehicle `slope_angle` must be ≥ 0".into()));
        }
        if self.gearbox_eff > 1.0 {
            return Err(Error::InvalidInput("vehicle `gearbox_eff` must be in (0, 1]".into()));
        }
        Ok(())
    }

    /// Mass-proportional part of the wheel torque, N·m/kg.
    pub fn torque_per_mass(&self, k: Kinematics) -> f64 {
        (self.inertia_factor * k.a + self.gravity * (k.slope.sin() + self.rolling_coeff)) * self.wheel_radius
    }

    /// Aerodynamic part of the wheel torque, N·m.
    pub fn aero_torque(&self, k: Kinematics) -> f64 {
        0.5 * self.air_density * self.drag_coeff * self.frontal_area * k.v * k.v * self.wheel_radius
    }

    /// Wheel torque at mass `m`, N·m.
    pub fn wheel_torque_at_mass(&self, k: Kinematics, m: f64) -> f64 {
        self.torque_per_mass(k) * m + self.aero_torque(k)
    }

    pub fn wheel_torque(&self, k: Kinematics) -> f64 {
        self.wheel_torque_at_mass(k, self.total_mass())
    }

    /// Wheel speed for a vehicle speed in m/s, rpm.
    pub fn wheel_speed(&self, v: f64) -> f64 {
        60.0 * v / (2.0 * PI * self.wheel_radius)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadScenario {
    /// N·m
    pub wheel_torque: f64,
    /// rpm
    pub wheel_speed: f64,
    pub weight: f64,
    pub is_guard: bool,
    /// Operating point the load was derived from, if known.
    pub kinematics: Option<Kinematics>,
}

impl LoadScenario {
    pub fn new(wheel_torque: f64, wheel_speed: f64, weight: f64) -> Self {
        LoadScenario {
            wheel_torque,
            wheel_speed,
            weight,
            is_guard: false,
            kinematics: None,
        }
    }

    pub fn from_kinematics(vp: &VehicleParams, k: Kinematics, weight: f64) -> Self {
        LoadScenario {
            wheel_torque: vp.wheel_torque(k).max(EPS_POS),
            wheel_speed: vp.wheel_speed(k.v).max(EPS_POS),
            weight,
            is_guard: false,
            kinematics: Some(k),
        }
    }
}

/// Keep steps with `v > 0` and `a > 0` and map them to wheel loads with
/// uniform weights.
pub fn to_wheel_loads(cycle: &DrivingCycle, vp: &VehicleParams) -> Result<Vec<LoadScenario>> {
    vp.validate()?;
    let mut kept = Vec::new();
    for (i, s) in cycle.samples.iter().enumerate() {
        let a = s.a.ok_or_else(|| {
            Error::InvalidCycle(format!("sample {i} has no acceleration; run central_difference first"))
        })?;
        if s.v > 0.0 && a > 0.0 {
            kept.push(Kinematics {
                v: s.v,
                a,
                slope: vp.slope_angle,
            });
        }
    }
    if kept.is_empty() {
        return Err(Error::NoPositivePowerSteps(cycle.name.clone()));
    }
    let w = 1.0 / kept.len() as f64;
    Ok(kept
        .into_iter()
        .map(|k| LoadScenario::from_kinematics(vp, k, w))
        .collect())
}

/// Gradeability and top-speed requirements as zero-weight loads.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GuardSpec {
    /// Slope as rise over run.
    pub grade: f64,
    /// m/s
    pub top_speed: f64,
    /// m/s² held at top speed.
    pub top_accel: f64,
}

impl Default for GuardSpec {
    fn default() -> Self {
        GuardSpec {
            grade: 0.66,
            top_speed: 160.0 / 3.6,
            top_accel: 0.3,
        }
    }
}

/// Launch on `grade` from standstill, then `top_speed` while accelerating
/// with `top_accel`.
pub fn guard_scenarios(vp: &VehicleParams, spec: GuardSpec) -> Result<Vec<LoadScenario>> {
    vp.validate()?;
    if !(spec.grade > 0.0 && spec.grade.is_finite()) {
        return Err(Error::InvalidInput(format!("grade must be > 0, got {}", spec.grade)));
    }
    if !(spec.top_speed > 0.0 && spec.top_speed.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "top speed must be > 0, got {}",
            spec.top_speed
        )));
    }
    if !(spec.top_accel >= 0.0) {
        return Err(Error::InvalidInput("top acceleration must be ≥ 0".into()));
    }
    let launch = Kinematics {
        v: 0.0,
        a: 0.0,
        slope: spec.grade.atan(),
    };
    let top = Kinematics {
        v: spec.top_speed,
        a: spec.top_accel,
        slope: vp.slope_angle,
    };
    Ok(vec![
        LoadScenario {
            wheel_torque: vp.wheel_torque(launch).max(EPS_POS),
            wheel_speed: LAUNCH_WHEEL_SPEED_RPM,
            weight: 0.0,
            is_guard: true,
            kinematics: Some(launch),
        },
        LoadScenario {
            wheel_torque: vp.wheel_torque(top).max(EPS_POS),
            wheel_speed: vp.wheel_speed(top.v).max(EPS_POS),
            weight: 0.0,
            is_guard: true,
            kinematics: Some(top),
        },
    ])
}

/// Check positivity and that non-guard weights sum to one.
pub fn validate_scenarios(s: &[LoadScenario]) -> Result<()> {
    if s.is_empty() {
        return Err(Error::InvalidInput("no scenarios".into()));
    }
    let mut total = 0.0;
    for (i, l) in s.iter().enumerate() {
        if !(l.wheel_torque > 0.0 && l.wheel_speed > 0.0) || !l.wheel_torque.is_finite() || !l.wheel_speed.is_finite() {
            return Err(Error::InvalidInput(format!(
                "scenario {i}: torque and speed must be positive"
            )));
        }
        if l.is_guard {
            if l.weight != 0.0 {
                return Err(Error::InvalidInput(format!("guard scenario {i} must have zero weight")));
            }
        } else {
            if !(l.weight >= 0.0) {
                return Err(Error::InvalidInput(format!("scenario {i}: negative weight")));
            }
            total += l.weight;
        }
    }
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidInput(format!(
            "non-guard weights sum to {total}, expected 1"
        )));
    }
    Ok(())
}

pub fn write_scenarios_csv<W: Write>(s: &[LoadScenario], mut w: W) -> std::io::Result<()> {
    writeln!(w, "torque_nm,speed_rpm,weight,is_guard")?;
    for l in s {
        writeln!(
            w,
            "{},{},{},{}",
            fmt_sig(l.wheel_torque),
            fmt_sig(l.wheel_speed),
            fmt_sig(l.weight),
            l.is_guard
        )?;
    }
    Ok(())
}

/// Read a scenario CSV written by [`write_scenarios_csv`].
pub fn read_scenarios_csv<R: Read>(r: R) -> Result<Vec<LoadScenario>> {
    let mut rdr = csv::Reader::from_reader(r);
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| Error::Parse {
            line,
            message: e.to_string(),
        })?;
        let num = |k: usize| -> Result<f64> {
            rec.get(k)
                .and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| Error::Parse {
                    line,
                    message: format!("bad number in column {k}"),
                })
        };
        let is_guard = match rec.get(3).map(str::trim) {
            Some("true") => true,
            Some("false") => false,
            _ => {
                return Err(Error::Parse {
                    line,
                    message: "is_guard must be true or false".into(),
                })
            }
        };
        out.push(LoadScenario {
            wheel_torque: num(0)?,
            wheel_speed: num(1)?,
            weight: num(2)?,
            is_guard,
            kinematics: None,
        });
    }
    Ok(out)
}

/// 12 significant digits, shortest round-trip form of that rounding.
pub fn fmt_sig(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let rounded: f64 = format!("{x:.11e}").parse().unwrap_or(x);
    format!("{rounded}")
}
