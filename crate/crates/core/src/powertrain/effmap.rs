//! Efficiency of the scaled loss model over a torque-speed grid.

use std::io::Write;

use serde::Serialize;

use crate::cycle::fmt_sig;
use crate::error::{Error, Result};

use super::{MotorParams, RPM_TO_RAD};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MapGrid {
    pub torque_steps: usize,
    pub speed_steps: usize,
}

impl Default for MapGrid {
    fn default() -> Self {
        MapGrid {
            torque_steps: 50,
            speed_steps: 50,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MapPoint {
    pub torque: f64,
    pub speed: f64,
    pub efficiency: f64,
    /// Inside the torque, speed and power limits.
    pub feasible: bool,
}

/// Efficiency at one point for power factor `k`.
pub fn efficiency_at(mp: &MotorParams, k: f64, torque: f64, speed: f64) -> MapPoint {
    let tbar = mp.torque_for_power(k * mp.ref_power);
    let shaft = torque * speed * RPM_TO_RAD;
    let loss = mp.losses(k, tbar, torque, speed).total();
    let tol = 1e-12;
    let feasible =
        torque <= tbar * (1.0 + tol) && speed <= mp.max_speed * (1.0 + tol) && shaft <= k * mp.ref_power * (1.0 + tol);
    MapPoint {
        torque,
        speed,
        efficiency: shaft / (shaft + loss),
        feasible,
    }
}

/// Evaluate a uniform grid up to the maximum torque and speed of a motor
/// with power factor `k`; points above the power hyperbola are marked
/// infeasible.
pub fn efficiency_map(mp: &MotorParams, k: f64, grid: MapGrid) -> Result<Vec<MapPoint>> {
    mp.validate()?;
    if !(k > 0.0 && k.is_finite()) {
        return Err(Error::InvalidInput(format!("power factor must be > 0, got {k}")));
    }
    if grid.torque_steps == 0 || grid.speed_steps == 0 {
        return Err(Error::InvalidInput("grid needs at least one step per axis".into()));
    }
    let tbar = mp.torque_for_power(k * mp.ref_power);
    let mut out = Vec::with_capacity(grid.torque_steps * grid.speed_steps);
    for i in 1..=grid.torque_steps {
        let t = tbar * i as f64 / grid.torque_steps as f64;
        for j in 1..=grid.speed_steps {
            let n = mp.max_speed * j as f64 / grid.speed_steps as f64;
            out.push(efficiency_at(mp, k, t, n));
        }
    }
    Ok(out)
}

pub fn write_efficiency_csv<W: Write>(points: &[MapPoint], mut w: W) -> std::io::Result<()> {
    writeln!(w, "torque_nm,speed_rpm,efficiency,feasible")?;
    for p in points {
        writeln!(
            w,
            "{},{},{},{}",
            fmt_sig(p.torque),
            fmt_sig(p.speed),
            fmt_sig(p.efficiency),
            p.feasible
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corner_point_of_reference_motor() {
        let mp = MotorParams::default();
        let tbar = mp.torque_for_power(mp.ref_power);
        let p = efficiency_at(&mp, 1.0, tbar, mp.corner_speed());
        assert!(p.feasible);
        // shaft power equals the reference power at the corner
        let expected = 100_000.0 / (100_000.0 + 13318.21);
        assert!((p.efficiency - expected).abs() < 1e-12);
        assert!((p.efficiency - 0.8824).abs() < 1e-4);
    }

    #[test]
    fn losses_scale_linearly_in_power_factor() {
        let mp = MotorParams::default();
        let t1 = mp.torque_for_power(mp.ref_power);
        let t2 = mp.torque_for_power(2.0 * mp.ref_power);
        let a = mp.losses(1.0, t1, 0.6 * t1, 3000.0);
        let b = mp.losses(2.0, t2, 0.6 * t2, 3000.0);
        for (x, y) in [
            (a.speed, b.speed),
            (a.linear, b.linear),
            (a.quadratic, b.quadratic),
            (a.constant, b.constant),
        ] {
            assert!((y - 2.0 * x).abs() <= 1e-12 * y);
        }
        let ea = efficiency_at(&mp, 1.0, 0.6 * t1, 3000.0).efficiency;
        let eb = efficiency_at(&mp, 2.0, 0.6 * t2, 3000.0).efficiency;
        assert!((ea - eb).abs() < 1e-14);
    }

    #[test]
    fn overspeed_is_infeasible() {
        let mp = MotorParams::default();
        assert!(!efficiency_at(&mp, 1.0, 10.0, 10_500.0).feasible);
        assert!(!efficiency_at(&mp, 1.0, 200.0, 9_000.0).feasible);
    }

    #[test]
    fn grid_shape_and_csv() {
        let mp = MotorParams::default();
        let g = efficiency_map(
            &mp,
            1.5,
            MapGrid {
                torque_steps: 4,
                speed_steps: 5,
            },
        )
        .unwrap();
        assert_eq!(g.len(), 20);
        assert!(g.iter().all(|p| p.efficiency > 0.0 && p.efficiency < 1.0));
        let mut buf = Vec::new();
        write_efficiency_csv(&g, &mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.starts_with("torque_nm,speed_rpm,efficiency,feasible\n"));
        assert_eq!(s.lines().count(), 21);
        assert!(efficiency_map(&mp, 0.0, MapGrid::default()).is_err());
    }
}
