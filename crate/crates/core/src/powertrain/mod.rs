//! Motor and transmission sizing as a geometric program.
//!
//! One model covers single-speed, CVT and fixed gear assignments; the
//! motor's loss map is a sum of monomials scaled with the design power.

mod design;
mod effmap;
mod mass;
mod model;

use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use design::{solve_design, DesignResult, OperatingPoint, SolverStats, Tightness, TIGHTNESS_TOL};
pub use effmap::{efficiency_at, efficiency_map, write_efficiency_csv, MapGrid, MapPoint};
pub use mass::{mass_split, variable_mass_extension, MassModel};
pub use model::{build_design_model, DesignModel};

/// rpm to rad/s.
pub const RPM_TO_RAD: f64 = 2.0 * PI / 60.0;

/// Reference motor and its loss fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotorParams {
    /// Corner speed as a fraction of the maximum speed.
    pub hyperbola_const: f64,
    /// rpm
    pub max_speed: f64,
    /// W
    pub ref_power: f64,
    /// W, loss growing with torque and speed.
    pub speed_loss_ref: f64,
    /// W, loss linear in relative torque.
    pub linear_loss_ref: f64,
    /// W, loss quadratic in relative torque.
    pub quadratic_loss_ref: f64,
    /// W
    pub constant_loss_ref: f64,
    pub speed_exponent: f64,
    /// W, cap on input power drawn per step.
    pub power_cap: f64,
}

impl Default for MotorParams {
    fn default() -> Self {
        MotorParams {
            hyperbola_const: 0.4161,
            max_speed: 10_000.0,
            ref_power: 100_000.0,
            speed_loss_ref: 787.35,
            linear_loss_ref: 1566.67,
            quadratic_loss_ref: 9904.85,
            constant_loss_ref: 1059.34,
            speed_exponent: 3.93,
            power_cap: 8_000_000.0,
        }
    }
}

/// Per-step loss terms in W.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub speed: f64,
    pub linear: f64,
    pub quadratic: f64,
    pub constant: f64,
}

impl LossBreakdown {
    pub fn total(&self) -> f64 {
        self.speed + self.linear + self.quadratic + self.constant
    }
}

impl MotorParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.hyperbola_const > 0.0 && self.hyperbola_const <= 1.0) {
            return Err(Error::InvalidInput(format!(
                "hyperbola constant must lie in (0, 1], got {}",
                self.hyperbola_const
            )));
        }
        let positive = [
            ("max_speed", self.max_speed),
            ("ref_power", self.ref_power),
            ("speed_loss_ref", self.speed_loss_ref),
            ("linear_loss_ref", self.linear_loss_ref),
            ("quadratic_loss_ref", self.quadratic_loss_ref),
            ("constant_loss_ref", self.constant_loss_ref),
            ("speed_exponent", self.speed_exponent),
            ("power_cap", self.power_cap),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidInput(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    /// Speed at which the torque limit meets the power hyperbola, rpm.
    pub fn corner_speed(&self) -> f64 {
        self.hyperbola_const * self.max_speed
    }

    /// Maximum torque of a motor with maximum power `power`.
    pub fn torque_for_power(&self, power: f64) -> f64 {
        power / (self.corner_speed() * RPM_TO_RAD)
    }

    /// Maximum power of a motor with maximum torque `torque`.
    pub fn power_for_torque(&self, torque: f64) -> f64 {
        self.corner_speed() * RPM_TO_RAD * torque
    }

    /// Losses at torque `t` and speed `n` for a motor with power factor `k`
    /// and maximum torque `max_torque`.
    pub fn losses(&self, k: f64, max_torque: f64, t: f64, n: f64) -> LossBreakdown {
        let rel = t / max_torque;
        LossBreakdown {
            speed: k * self.speed_loss_ref * rel * (n / self.corner_speed()).powf(self.speed_exponent),
            linear: k * self.linear_loss_ref * rel,
            quadratic: k * self.quadratic_loss_ref * rel * rel,
            constant: k * self.constant_loss_ref,
        }
    }
}

/// Gear per non-guard scenario, numbered from 1.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GearAssignment {
    gears: Vec<usize>,
    gear_count: usize,
}

impl GearAssignment {
    pub fn new(gears: Vec<usize>, gear_count: usize) -> Result<Self> {
        if gear_count == 0 {
            return Err(Error::InvalidInput("gear count must be at least 1".into()));
        }
        if let Some((t, g)) = gears.iter().enumerate().find(|(_, g)| **g == 0 || **g > gear_count) {
            return Err(Error::InvalidInput(format!(
                "scenario {t}: gear {g} outside 1..={gear_count}"
            )));
        }
        Ok(GearAssignment { gears, gear_count })
    }

    /// Every scenario on gear 1 of a `gear_count`-speed box.
    pub fn uniform(n: usize, gear_count: usize) -> Self {
        GearAssignment {
            gears: vec![1; n],
            gear_count: gear_count.max(1),
        }
    }

    /// Two-speed assignment from a bit mask; bit `n-1-t` set puts scenario
    /// `t` on gear 2, so numeric order is lexicographic order of digits.
    pub fn from_mask(mask: u64, n: usize) -> Self {
        let gears = (0..n).map(|t| 1 + ((mask >> (n - 1 - t)) & 1) as usize).collect();
        GearAssignment { gears, gear_count: 2 }
    }

    pub fn gears(&self) -> &[usize] {
        &self.gears
    }

    pub fn gear_count(&self) -> usize {
        self.gear_count
    }

    pub fn len(&self) -> usize {
        self.gears.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gears.is_empty()
    }

    pub fn gear(&self, t: usize) -> usize {
        self.gears[t]
    }

    /// Swap the labels of a two-speed assignment.
    pub fn complement(&self) -> Self {
        GearAssignment {
            gears: self.gears.iter().map(|g| self.gear_count + 1 - g).collect(),
            gear_count: self.gear_count,
        }
    }

    /// Two-speed normal form with scenario 0 on gear 1.
    pub fn canonical(&self) -> Self {
        if self.gear_count == 2 && self.gears.first() == Some(&2) {
            self.complement()
        } else {
            self.clone()
        }
    }

    /// Number of scenarios on each gear.
    pub fn counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.gear_count];
        for g in &self.gears {
            c[g - 1] += 1;
        }
        c
    }
}

impl fmt::Display for GearAssignment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sep = if self.gear_count > 9 { "," } else { "" };
        let s: Vec<String> = self.gears.iter().map(|g| g.to_string()).collect();
        write!(f, "{}", s.join(sep))
    }
}

/// How scenario ratios relate to the design ratios.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transmission {
    SingleSpeed,
    /// A free ratio per scenario.
    Cvt,
    /// Each non-guard scenario uses the ratio of its gear directly.
    Fixed(GearAssignment),
    /// Each non-guard scenario has its own ratio, tied to its gear ratio by
    /// a labeled equality `gear_link[t]` when a gear is given and free
    /// otherwise.
    Linked {
        gears: Vec<Option<usize>>,
        gear_count: usize,
    },
}

/// Which gear carries the largest ratio.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GearLabeling {
    /// `i_1 ≥ i_2 ≥ …`; launch guards on gear 1, top-speed guards on the last gear.
    #[default]
    Descending,
    /// `i_1 ≤ i_2 ≤ …`; launch guards on the last gear, top-speed guards on gear 1.
    Ascending,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Topology {
    pub transmission: Transmission,
    pub ratio_bounds: (f64, f64),
    pub labeling: GearLabeling,
}

pub const DEFAULT_RATIO_BOUNDS: (f64, f64) = (1.0, 18.0);

impl Topology {
    pub fn new(transmission: Transmission) -> Self {
        Topology {
            transmission,
            ratio_bounds: DEFAULT_RATIO_BOUNDS,
            labeling: GearLabeling::Descending,
        }
    }

    pub fn single_speed() -> Self {
        Self::new(Transmission::SingleSpeed)
    }

    pub fn cvt() -> Self {
        Self::new(Transmission::Cvt)
    }

    pub fn fixed(assignment: GearAssignment) -> Self {
        Self::new(Transmission::Fixed(assignment))
    }

    pub fn with_bounds(mut self, lo: f64, hi: f64) -> Self {
        self.ratio_bounds = (lo, hi);
        self
    }

    pub fn with_labeling(mut self, labeling: GearLabeling) -> Self {
        self.labeling = labeling;
        self
    }

    /// Number of design ratios shared between scenarios (0 for a CVT).
    pub fn gear_count(&self) -> usize {
        match &self.transmission {
            Transmission::SingleSpeed => 1,
            Transmission::Cvt => 0,
            Transmission::Fixed(a) => a.gear_count(),
            Transmission::Linked { gear_count, .. } => *gear_count,
        }
    }

    /// Check the topology against `n` non-guard scenarios.
    pub fn validate(&self, n: usize) -> Result<()> {
        let (lo, hi) = self.ratio_bounds;
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "ratio bounds must satisfy 0 < lo ≤ hi, got [{lo}, {hi}]"
            )));
        }
        match &self.transmission {
            Transmission::Fixed(a) if a.len() != n => Err(Error::InvalidInput(format!(
                "assignment covers {} scenarios, expected {n}",
                a.len()
            ))),
            Transmission::Linked { gears, gear_count } => {
                if gears.len() != n {
                    return Err(Error::InvalidInput(format!(
                        "assignment covers {} scenarios, expected {n}",
                        gears.len()
                    )));
                }
                if *gear_count == 0 {
                    return Err(Error::InvalidInput("gear count must be at least 1".into()));
                }
                match gears.iter().flatten().find(|g| **g == 0 || **g > *gear_count) {
                    Some(g) => Err(Error::InvalidInput(format!("gear {g} outside 1..={gear_count}"))),
                    None => Ok(()),
                }
            }
            _ => Ok(()),
        }
    }

    /// Gear that serves a guard load: launch-like guards (no faster than the
    /// fastest regular load) take the largest ratio, top-speed guards the
    /// smallest.
    pub(crate) fn guard_gear(&self, guard_speed: f64, max_regular_speed: f64) -> usize {
        let g = self.gear_count().max(1);
        let top = guard_speed > max_regular_speed;
        match (self.labeling, top) {
            (GearLabeling::Descending, false) | (GearLabeling::Ascending, true) => 1,
            _ => g,
        }
    }
}
