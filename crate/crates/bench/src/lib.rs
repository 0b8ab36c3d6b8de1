//! Inputs shared by the benchmarks in `benches/`.

use migp_core::cycle::{
    cluster_scenarios, guard_scenarios, load_fixture, to_wheel_loads, GuardSpec, LoadScenario, VehicleParams,
};
use migp_core::migp::MigpProblem;
use migp_core::powertrain::MotorParams;
use migp_core::Result;

/// `k` clustered loads of a built-in cycle plus the two guards; every step
/// when `k` is `None`.
pub fn scenarios(cycle: &str, k: Option<usize>, seed: u64) -> Result<Vec<LoadScenario>> {
    let vp = VehicleParams::default();
    let loads = to_wheel_loads(&load_fixture(cycle)?, &vp)?;
    let mut s = match k {
        Some(k) => cluster_scenarios(&loads, k, seed, &vp)?,
        None => loads,
    };
    s.extend(guard_scenarios(&vp, GuardSpec::default())?);
    Ok(s)
}

pub fn problem(cycle: &str, k: usize, seed: u64) -> Result<MigpProblem> {
    Ok(MigpProblem::new(
        scenarios(cycle, Some(k), seed)?,
        VehicleParams::default(),
        MotorParams::default(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inputs_build() {
        assert_eq!(scenarios("wltc", None, 0).unwrap().len(), 793);
        assert_eq!(problem("us06", 6, 1).unwrap().scenarios.len(), 8);
    }
}
