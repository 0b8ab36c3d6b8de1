//! Vehicle mass as a design variable.
//!
//! Wheel torque is affine in mass, `T = δ·m + γ`, so each load becomes a
//! posynomial lower bound on a per-step wheel-torque variable, and the motor
//! adds `ρ·p_max` to the fixed masses.

use serde::{Deserialize, Serialize};

use crate::cycle::{Kinematics, VehicleParams};
use crate::error::{Error, Result};

use super::model::{build, DesignModel};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MassModel {
    /// kg per W of maximum motor power; 0 keeps the mass at its fixed parts.
    pub specific_mass: f64,
}

impl MassModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.specific_mass >= 0.0 && self.specific_mass.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "specific motor mass must be ≥ 0, got {}",
                self.specific_mass
            )));
        }
        Ok(())
    }
}

/// `(δ, γ)` with wheel torque `δ·m + γ` at mass `m`.
pub fn mass_split(vp: &VehicleParams, k: Kinematics) -> (f64, f64) {
    (vp.torque_per_mass(k), vp.aero_torque(k))
}

/// Rebuild `base` with a variable vehicle mass and a motor mass of
/// `specific_mass · p_max`.
pub fn variable_mass_extension(base: &DesignModel, specific_mass: f64) -> Result<DesignModel> {
    build(
        &base.scenarios,
        &base.vehicle,
        &base.motor,
        &base.topology,
        Some(MassModel { specific_mass }),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cycle::LoadScenario;
    use crate::powertrain::{build_design_model, MotorParams, Topology};

    #[test]
    fn split_reproduces_wheel_torque() {
        let vp = VehicleParams::default();
        let k = Kinematics {
            v: 10.0,
            a: 1.0,
            slope: 0.0,
        };
        let (d, g) = mass_split(&vp, k);
        assert!((d - 0.3294).abs() < 1e-4);
        assert!((g - 11.92).abs() < 0.01);
        let direct = vp.wheel_torque(k);
        assert!((d * vp.total_mass() + g - direct).abs() <= 1e-9 * direct);
    }

    #[test]
    fn missing_kinematics_rejected() {
        let vp = VehicleParams::default();
        let l = vec![LoadScenario::new(100.0, 300.0, 1.0)];
        let m = build_design_model(&l, &vp, &MotorParams::default(), &Topology::single_speed()).unwrap();
        assert!(variable_mass_extension(&m, 0.001).is_err());
    }

    #[test]
    fn negative_specific_mass_rejected() {
        assert!(MassModel { specific_mass: -1.0 }.validate().is_err());
    }
}
