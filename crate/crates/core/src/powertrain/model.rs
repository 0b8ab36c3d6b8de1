use crate::cycle::{validate_scenarios, LoadScenario, VehicleParams};
use crate::error::{Error, Result};
use crate::gp::{GpModel, GpModelBuilder, Monomial, Posynomial, VarId};

use super::mass::{mass_split, MassModel};
use super::{GearLabeling, MotorParams, Topology, Transmission, RPM_TO_RAD};

/// Box for variables the physics leaves unbounded.
pub(crate) const VAR_MIN: f64 = 1e-30;
pub(crate) const VAR_MAX: f64 = 1e30;
/// Box for the vehicle mass in kg.
const MASS_MIN: f64 = 1.0;
const MASS_MAX: f64 = 1e6;

#[derive(Debug, Clone, Copy)]
pub(crate) struct ScenarioVars {
    pub torque: VarId,
    pub speed: VarId,
    pub shaft: VarId,
    pub input: VarId,
    pub losses: [VarId; 4],
    pub ratio: VarId,
    /// Gear whose ratio the scenario uses, if any.
    pub gear: Option<usize>,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct MassVars {
    pub total: VarId,
    pub motor: Option<VarId>,
}

/// A built design program plus the handles needed to read a solution.
#[derive(Debug, Clone)]
pub struct DesignModel {
    pub model: GpModel,
    pub(crate) scenarios: Vec<LoadScenario>,
    pub(crate) vehicle: VehicleParams,
    pub(crate) motor: MotorParams,
    pub(crate) topology: Topology,
    pub(crate) mass_model: Option<MassModel>,
    pub(crate) vars: Vec<ScenarioVars>,
    /// One per gear; empty for a CVT.
    pub(crate) gear_ratios: Vec<VarId>,
    pub(crate) max_torque: VarId,
    pub(crate) max_power: VarId,
    pub(crate) power_factor: VarId,
    pub(crate) avg_power: VarId,
    pub(crate) mass: Option<MassVars>,
}

impl DesignModel {
    pub fn scenarios(&self) -> &[LoadScenario] {
        &self.scenarios
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn motor(&self) -> &MotorParams {
        &self.motor
    }

    pub fn vehicle(&self) -> &VehicleParams {
        &self.vehicle
    }

    pub fn mass_model(&self) -> Option<MassModel> {
        self.mass_model
    }
}

/// Build the sizing program for `scenarios` under `topo`.
pub fn build_design_model(
    scenarios: &[LoadScenario],
    vp: &VehicleParams,
    mp: &MotorParams,
    topo: &Topology,
) -> Result<DesignModel> {
    build(scenarios, vp, mp, topo, None)
}

pub(crate) fn build(
    scenarios: &[LoadScenario],
    vp: &VehicleParams,
    mp: &MotorParams,
    topo: &Topology,
    mass_model: Option<MassModel>,
) -> Result<DesignModel> {
    validate_scenarios(scenarios)?;
    vp.validate()?;
    mp.validate()?;
    let regular: Vec<usize> = (0..scenarios.len()).filter(|&t| !scenarios[t].is_guard).collect();
    if regular.is_empty() {
        return Err(Error::InvalidInput(
            "at least one non-guard scenario is required".into(),
        ));
    }
    topo.validate(regular.len())?;
    if let Some(mm) = mass_model {
        mm.validate()?;
        if let Some(t) = scenarios.iter().position(|s| s.kinematics.is_none()) {
            return Err(Error::InvalidInput(format!(
                "scenario {t} has no kinematics; the variable-mass model needs speed and acceleration"
            )));
        }
    }

    let (ilo, ihi) = topo.ratio_bounds;
    let max_regular_speed = regular.iter().map(|&t| scenarios[t].wheel_speed).fold(0.0, f64::max);
    let mut b = GpModelBuilder::new();

    let gear_count = topo.gear_count();
    let gear_ratios: Vec<VarId> = match gear_count {
        0 => Vec::new(),
        1 => vec![b.var("i", ilo, ihi)],
        g => (1..=g).map(|k| b.var(format!("i_{k}"), ilo, ihi)).collect(),
    };
    let max_torque = b.var("t_max", VAR_MIN, VAR_MAX);
    let max_power = b.var("p_max", VAR_MIN, VAR_MAX);
    let power_factor = b.var("k_p", VAR_MIN, VAR_MAX);
    let avg_power = b.var("p_avg", VAR_MIN, VAR_MAX);
    let mass = mass_model.map(|mm| MassVars {
        total: b.var("m", MASS_MIN, MASS_MAX),
        motor: (mm.specific_mass > 0.0).then(|| b.var("m_motor", VAR_MIN, VAR_MAX)),
    });

    // regular scenario index of each scenario
    let mut regular_pos = vec![None; scenarios.len()];
    for (j, &t) in regular.iter().enumerate() {
        regular_pos[t] = Some(j);
    }

    let mut vars = Vec::with_capacity(scenarios.len());
    for (t, s) in scenarios.iter().enumerate() {
        let guard_gear = || topo.guard_gear(s.wheel_speed, max_regular_speed);
        let (ratio, gear, link) = match &topo.transmission {
            Transmission::SingleSpeed => (gear_ratios[0], Some(1), None),
            Transmission::Cvt => (b.local_var(format!("i[{t}]"), ilo, ihi, t), None, None),
            Transmission::Fixed(a) => {
                let g = regular_pos[t].map_or_else(guard_gear, |j| a.gear(j));
                (gear_ratios[g - 1], Some(g), None)
            }
            Transmission::Linked { gears, .. } => match regular_pos[t] {
                None => {
                    let g = guard_gear();
                    (gear_ratios[g - 1], Some(g), None)
                }
                Some(j) => {
                    let it = b.local_var(format!("i[{t}]"), ilo, ihi, t);
                    (it, gears[j], gears[j])
                }
            },
        };
        if let Some(g) = link {
            b.eq(
                format!("gear_link[{t}]"),
                Monomial::var(ratio) / Monomial::var(gear_ratios[g - 1]),
                Monomial::constant(1.0),
            );
        }

        let torque = b.local_var(format!("t_m[{t}]"), VAR_MIN, VAR_MAX, t);
        let speed = b.local_var(format!("n_m[{t}]"), VAR_MIN, VAR_MAX, t);
        let shaft = b.local_var(format!("p_shaft[{t}]"), VAR_MIN, VAR_MAX, t);
        let input = b.local_var(format!("p_in[{t}]"), VAR_MIN, VAR_MAX, t);
        let losses = [
            b.local_var(format!("p_loss_speed[{t}]"), VAR_MIN, VAR_MAX, t),
            b.local_var(format!("p_loss_linear[{t}]"), VAR_MIN, VAR_MAX, t),
            b.local_var(format!("p_loss_quadratic[{t}]"), VAR_MIN, VAR_MAX, t),
            b.local_var(format!("p_loss_const[{t}]"), VAR_MIN, VAR_MAX, t),
        ];

        // transmission
        let gearbox_out = Monomial::new(vp.gearbox_eff, [(torque, 1.0), (ratio, 1.0)]);
        match mass {
            None => {
                b.eq(
                    format!("torque_link[{t}]"),
                    gearbox_out,
                    Monomial::constant(s.wheel_torque),
                );
            }
            Some(mv) => {
                let tw = b.local_var(format!("t_wheel[{t}]"), VAR_MIN, VAR_MAX, t);
                b.eq(format!("torque_link[{t}]"), gearbox_out, Monomial::var(tw));
                let k = s.kinematics.expect("checked above");
                let (delta, gamma) = mass_split(vp, k);
                let mut demand = vec![Monomial::new(delta, [(mv.total, 1.0)])];
                if gamma > 0.0 {
                    demand.push(Monomial::constant(gamma));
                }
                b.le(format!("wheel_demand[{t}]"), Posynomial::new(demand), Monomial::var(tw));
            }
        }
        b.eq(
            format!("speed_link[{t}]"),
            Monomial::var(speed),
            Monomial::new(s.wheel_speed, [(ratio, 1.0)]),
        );

        // motor operating domain
        b.le(
            format!("power_hyperbola[{t}]"),
            Monomial::new(RPM_TO_RAD, [(speed, 1.0), (torque, 1.0)]),
            Monomial::var(max_power),
        );
        b.le(
            format!("speed_cap[{t}]"),
            Monomial::var(speed),
            Monomial::constant(mp.max_speed),
        );
        b.le(
            format!("torque_cap[{t}]"),
            Monomial::var(torque),
            Monomial::var(max_torque),
        );

        // losses scaled by the power factor
        let rel = Monomial::new(1.0, [(power_factor, 1.0), (torque, 1.0), (max_torque, -1.0)]);
        b.eq(
            format!("loss_speed[{t}]"),
            Monomial::var(losses[0]),
            rel.clone()
                .scale(mp.speed_loss_ref * mp.corner_speed().powf(-mp.speed_exponent))
                * Monomial::new(1.0, [(speed, mp.speed_exponent)]),
        );
        b.eq(
            format!("loss_linear[{t}]"),
            Monomial::var(losses[1]),
            rel.clone().scale(mp.linear_loss_ref),
        );
        b.eq(
            format!("loss_quadratic[{t}]"),
            Monomial::var(losses[2]),
            Monomial::new(
                mp.quadratic_loss_ref,
                [(power_factor, 1.0), (torque, 2.0), (max_torque, -2.0)],
            ),
        );
        b.eq(
            format!("loss_const[{t}]"),
            Monomial::var(losses[3]),
            Monomial::new(mp.constant_loss_ref, [(power_factor, 1.0)]),
        );
        b.eq(
            format!("shaft_power[{t}]"),
            Monomial::var(shaft),
            Monomial::new(RPM_TO_RAD, [(torque, 1.0), (speed, 1.0)]),
        );
        let drawn: Vec<Monomial> = std::iter::once(shaft).chain(losses).map(Monomial::var).collect();
        b.ge(
            format!("battery_balance[{t}]"),
            Monomial::var(input),
            Posynomial::new(drawn),
        );
        b.le(
            format!("input_cap[{t}]"),
            Monomial::var(input),
            Monomial::constant(mp.power_cap),
        );

        vars.push(ScenarioVars {
            torque,
            speed,
            shaft,
            input,
            losses,
            ratio,
            gear,
        });
    }

    // design power and scaling
    b.eq(
        "max_power",
        Monomial::var(max_power),
        Monomial::new(mp.corner_speed() * RPM_TO_RAD, [(max_torque, 1.0)]),
    );
    b.eq(
        "power_factor",
        Monomial::var(power_factor),
        Monomial::new(1.0 / mp.ref_power, [(max_power, 1.0)]),
    );

    if gear_ratios.len() > 1 {
        for g in 1..gear_ratios.len() {
            let (hi, lo) = match topo.labeling {
                GearLabeling::Descending => (gear_ratios[g - 1], gear_ratios[g]),
                GearLabeling::Ascending => (gear_ratios[g], gear_ratios[g - 1]),
            };
            b.le(format!("gear_order[{g}]"), Monomial::var(lo), Monomial::var(hi));
        }
    }

    if let (Some(mm), Some(mv)) = (mass_model, mass) {
        let mut parts = vec![Monomial::constant(vp.total_mass())];
        if let Some(mm_var) = mv.motor {
            b.eq(
                "motor_mass",
                Monomial::var(mm_var),
                Monomial::new(mm.specific_mass, [(max_power, 1.0)]),
            );
            parts.push(Monomial::var(mm_var));
        }
        b.le("mass_balance", Posynomial::new(parts), Monomial::var(mv.total));
    }

    let avg_terms: Vec<Monomial> = regular
        .iter()
        .filter(|&&t| scenarios[t].weight > 0.0)
        .map(|&t| Monomial::new(scenarios[t].weight, [(vars[t].input, 1.0)]))
        .collect();
    b.le("average_power", Posynomial::new(avg_terms), Monomial::var(avg_power));
    b.minimize(Monomial::var(avg_power));

    Ok(DesignModel {
        model: b.build()?,
        scenarios: scenarios.to_vec(),
        vehicle: vp.clone(),
        motor: mp.clone(),
        topology: topo.clone(),
        mass_model,
        vars,
        gear_ratios,
        max_torque,
        max_power,
        power_factor,
        avg_power,
        mass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cycle::{guard_scenarios, GuardSpec, Kinematics};
    use crate::powertrain::GearAssignment;

    fn small_loads() -> Vec<LoadScenario> {
        let vp = VehicleParams::default();
        let pts = [(5.0, 1.2), (12.0, 0.8), (20.0, 0.5), (30.0, 0.2)];
        let mut l: Vec<LoadScenario> = pts
            .iter()
            .map(|&(v, a)| LoadScenario::from_kinematics(&vp, Kinematics { v, a, slope: 0.0 }, 0.25))
            .collect();
        l.extend(guard_scenarios(&vp, GuardSpec::default()).unwrap());
        l
    }

    #[test]
    fn single_speed_counts() {
        let vp = VehicleParams::default();
        let l = small_loads();
        let m = build_design_model(&l, &vp, &MotorParams::default(), &Topology::single_speed()).unwrap();
        let n = l.len();
        assert_eq!(m.model.num_variables(), 8 * n + 5);
        assert_eq!(m.model.num_equalities(), 7 * n + 2);
        assert_eq!(m.model.num_inequalities(), 5 * n + 1);
        assert_eq!(m.model.num_finite_bounds(), 2 * (8 * n + 5));
    }

    #[test]
    fn cvt_has_ratio_per_scenario() {
        let vp = VehicleParams::default();
        let l = small_loads();
        let m = build_design_model(&l, &vp, &MotorParams::default(), &Topology::cvt()).unwrap();
        assert_eq!(m.model.num_variables(), 9 * l.len() + 4);
        assert!(m.model.var_id("i[0]").is_some());
        assert!(m.model.var_id("i").is_none());
    }

    #[test]
    fn fixed_assignment_routes_guards() {
        let vp = VehicleParams::default();
        let l = small_loads();
        let a = GearAssignment::new(vec![1, 1, 2, 2], 2).unwrap();
        let m = build_design_model(&l, &vp, &MotorParams::default(), &Topology::fixed(a)).unwrap();
        assert_eq!(m.vars[4].gear, Some(1));
        assert_eq!(m.vars[5].gear, Some(2));
        assert!(m.model.constraint_index("gear_order[1]").is_some());
    }

    #[test]
    fn incomplete_assignment_rejected() {
        let vp = VehicleParams::default();
        let l = small_loads();
        let a = GearAssignment::new(vec![1, 2], 2).unwrap();
        let err = build_design_model(&l, &vp, &MotorParams::default(), &Topology::fixed(a));
        assert!(err.is_err());
    }

    #[test]
    fn nonpositive_load_rejected() {
        let vp = VehicleParams::default();
        let mut l = small_loads();
        l[0].wheel_torque = 0.0;
        assert!(build_design_model(&l, &vp, &MotorParams::default(), &Topology::single_speed()).is_err());
    }
}
