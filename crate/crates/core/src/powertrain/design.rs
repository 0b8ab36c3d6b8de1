use log::warn;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::solve::{solve_model, GpSolution, KktResiduals, SolveStatus, SolverOptions};

use super::model::DesignModel;
use super::LossBreakdown;

/// Relative slack allowed on the averaging and balance constraints.
pub const TIGHTNESS_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Serialize)]
pub struct OperatingPoint {
    /// N·m
    pub torque: f64,
    /// rpm
    pub speed: f64,
    /// W
    pub shaft_power: f64,
    /// W
    pub input_power: f64,
    pub losses: LossBreakdown,
    pub ratio: f64,
    pub gear: Option<usize>,
    pub weight: f64,
    pub is_guard: bool,
}

/// Relative slack of the relaxed posynomial constraints at the optimum.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Tightness {
    /// `(p_avg − Σ π·p_in) / p_avg`.
    pub average: f64,
    /// Largest `(p_in − p_shaft − Σ loss) / p_in` over non-guard steps.
    pub balance: f64,
}

impl Tightness {
    pub fn holds(&self, tol: f64) -> bool {
        self.average.abs() <= tol && self.balance.abs() <= tol
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SolverStats {
    pub status: SolveStatus,
    pub iterations: usize,
    pub duality_gap: f64,
    pub kkt: KktResiduals,
}

#[derive(Debug, Clone, Serialize)]
pub struct DesignResult {
    /// One per gear, or one per scenario for a CVT.
    pub ratios: Vec<f64>,
    /// N·m
    pub motor_max_torque: f64,
    /// W
    pub motor_max_power: f64,
    pub power_factor: f64,
    /// W
    pub avg_input_power: f64,
    pub log_objective: f64,
    /// kg, when the mass is a design variable.
    pub vehicle_mass: Option<f64>,
    pub points: Vec<OperatingPoint>,
    pub tightness: Tightness,
    pub warnings: Vec<String>,
    pub stats: SolverStats,
    #[serde(skip)]
    pub solution: GpSolution,
}

/// Solve a design program and read back the design.
pub fn solve_design(dm: &DesignModel, options: &SolverOptions) -> Result<DesignResult> {
    let sol = solve_model(&dm.model, options)?;
    if sol.status != SolveStatus::Optimal {
        return Err(Error::NotOptimal(format!(
            "design program ended with status {:?}",
            sol.status
        )));
    }
    Ok(unpack(dm, sol))
}

fn unpack(dm: &DesignModel, sol: GpSolution) -> DesignResult {
    let x = |v: crate::gp::VarId| sol.primal[v.index()];
    let tbar = x(dm.max_torque);
    let k = x(dm.power_factor);
    let mp = &dm.motor;

    let points: Vec<OperatingPoint> = dm
        .scenarios
        .iter()
        .zip(&dm.vars)
        .map(|(s, v)| {
            let (t, n) = (x(v.torque), x(v.speed));
            OperatingPoint {
                torque: t,
                speed: n,
                shaft_power: x(v.shaft),
                input_power: x(v.input),
                losses: LossBreakdown {
                    speed: x(v.losses[0]),
                    linear: x(v.losses[1]),
                    quadratic: x(v.losses[2]),
                    constant: x(v.losses[3]),
                },
                ratio: x(v.ratio),
                gear: v.gear,
                weight: s.weight,
                is_guard: s.is_guard,
            }
        })
        .collect();

    let ratios = if dm.gear_ratios.is_empty() {
        dm.vars.iter().map(|v| x(v.ratio)).collect()
    } else {
        dm.gear_ratios.iter().map(|&g| x(g)).collect()
    };

    let avg = x(dm.avg_power);
    let weighted: f64 = points
        .iter()
        .filter(|p| !p.is_guard)
        .map(|p| p.weight * p.input_power)
        .sum();
    let balance = points
        .iter()
        .filter(|p| !p.is_guard)
        .map(|p| (p.input_power - p.shaft_power - p.losses.total()) / p.input_power)
        .fold(0.0, |a: f64, r| if r.abs() > a.abs() { r } else { a });
    let tightness = Tightness {
        average: (avg - weighted) / avg,
        balance,
    };

    let mut warnings = Vec::new();
    if !tightness.holds(TIGHTNESS_TOL) {
        let msg = format!(
            "relaxed constraints not tight: average slack {:.3e}, balance slack {:.3e}",
            tightness.average, tightness.balance
        );
        warn!("{msg}");
        warnings.push(msg);
    }
    let domain_tol = 1e-6;
    for (t, p) in points.iter().enumerate() {
        let hyper = p.torque * p.speed * super::RPM_TO_RAD;
        if p.speed > mp.max_speed * (1.0 + domain_tol)
            || p.torque > tbar * (1.0 + domain_tol)
            || hyper > x(dm.max_power) * (1.0 + domain_tol)
        {
            let msg = format!("operating point {t} lies outside the motor domain");
            warn!("{msg}");
            warnings.push(msg);
        }
    }

    DesignResult {
        ratios,
        motor_max_torque: tbar,
        motor_max_power: x(dm.max_power),
        power_factor: k,
        avg_input_power: avg,
        log_objective: sol.log_objective,
        vehicle_mass: dm.mass.map(|m| x(m.total)),
        points,
        tightness,
        warnings,
        stats: SolverStats {
            status: sol.status,
            iterations: sol.iterations,
            duality_gap: sol.duality_gap,
            kkt: sol.kkt,
        },
        solution: sol,
    }
}
