use migp_core::cycle::{
    cluster_scenarios, guard_scenarios, load_fixture, to_wheel_loads, GuardSpec, LoadScenario, VehicleParams,
};
use migp_core::migp::{brute_force, MigpOptions, MigpProblem};
use migp_core::powertrain::{
    build_design_model, solve_design, variable_mass_extension, DesignResult, GearAssignment, MotorParams, Topology,
    RPM_TO_RAD,
};
use migp_core::{sensitivities, SolverOptions};

fn solve(s: &[LoadScenario], topo: &Topology) -> DesignResult {
    let vp = VehicleParams::default();
    let m = build_design_model(s, &vp, &MotorParams::default(), topo).unwrap();
    solve_design(&m, &SolverOptions::default()).unwrap()
}

fn wltc(k: usize, seed: u64, guards: bool) -> Vec<LoadScenario> {
    let vp = VehicleParams::default();
    let loads = to_wheel_loads(&load_fixture("wltc").unwrap(), &vp).unwrap();
    let mut s = cluster_scenarios(&loads, k, seed, &vp).unwrap();
    if guards {
        s.extend(guard_scenarios(&vp, GuardSpec::default()).unwrap());
    }
    s
}

fn golden(lo: f64, hi: f64, f: impl Fn(f64) -> f64) -> (f64, f64) {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    for _ in 0..200 {
        let c = b - r * (b - a);
        let d = a + r * (b - a);
        if f(c) < f(d) {
            b = d;
        } else {
            a = c;
        }
    }
    let x = 0.5 * (a + b);
    (x, f(x))
}

/// Input power at ratio `i` with the motor size chosen optimally.
fn input_at_ratio(mp: &MotorParams, eta: f64, s: &LoadScenario, i: f64) -> f64 {
    let t = s.wheel_torque / (eta * i);
    let n = s.wheel_speed * i;
    assert!(n <= mp.max_speed);
    let shaft = t * n * RPM_TO_RAD;
    let corner = mp.corner_speed() * RPM_TO_RAD;
    let tmin = t.max(shaft / corner);
    let p = |tmax: f64| {
        let k = corner * tmax / mp.ref_power;
        shaft + mp.losses(k, tmax, t, n).total()
    };
    let (_, v) = golden(tmin.ln(), (tmin * 1e3).ln(), |y| p(y.exp()));
    v
}

#[test]
fn cvt_single_load_matches_sweep() {
    let vp = VehicleParams::default();
    let mp = MotorParams::default();
    let s = vec![LoadScenario::new(300.0, 450.0, 1.0)];
    let d = solve(&s, &Topology::cvt());
    let (li, v) = golden(0.0, 18f64.ln(), |y| input_at_ratio(&mp, vp.gearbox_eff, &s[0], y.exp()));
    assert!(
        (d.avg_input_power - v).abs() <= 1e-6 * v,
        "{} vs {v}",
        d.avg_input_power
    );
    assert!((d.ratios[0].ln() - li).abs() < 1e-3, "{} vs {}", d.ratios[0], li.exp());
}

#[test]
fn cvt_fast_load_matches_sweep_within_bounds() {
    let vp = VehicleParams::default();
    let mp = MotorParams::default();
    let s = vec![LoadScenario::new(40.0, 1100.0, 1.0)];
    let d = solve(&s, &Topology::cvt().with_bounds(2.0, 9.0));
    let (li, v) = golden(2f64.ln(), 9f64.ln(), |y| {
        input_at_ratio(&mp, vp.gearbox_eff, &s[0], y.exp())
    });
    assert!(
        (d.avg_input_power - v).abs() <= 1e-6 * v,
        "{} vs {v}",
        d.avg_input_power
    );
    assert!((d.ratios[0].ln() - li).abs() < 1e-3, "{} vs {}", d.ratios[0], li.exp());
}

#[test]
fn one_gear_assignment_equals_single_speed() {
    let s = wltc(8, 3, true);
    let a = solve(&s, &Topology::single_speed());
    let b = solve(&s, &Topology::fixed(GearAssignment::uniform(8, 1)));
    assert!((a.log_objective - b.log_objective).abs() <= 1e-9);
    assert!((a.ratios[0] - b.ratios[0]).abs() <= 1e-9 * a.ratios[0]);
}

#[test]
fn more_freedom_never_hurts() {
    let s = wltc(6, 1, true);
    let single = solve(&s, &Topology::single_speed()).log_objective;
    let cvt = solve(&s, &Topology::cvt()).log_objective;
    let p = MigpProblem::new(s, VehicleParams::default(), MotorParams::default());
    let two = brute_force(&p, &MigpOptions::default()).unwrap().log_objective;
    assert!(cvt <= two + 1e-6, "{cvt} {two}");
    assert!(two <= single + 1e-6, "{two} {single}");
}

#[test]
fn designs_are_tight_and_feasible() {
    let mp = MotorParams::default();
    let s = wltc(8, 2, true);
    let a = GearAssignment::new(vec![1, 1, 2, 1, 2, 2, 1, 2], 2).unwrap();
    for topo in [Topology::single_speed(), Topology::cvt(), Topology::fixed(a)] {
        let d = solve(&s, &topo);
        assert!(d.tightness.holds(1e-6), "{:?}", d.tightness);
        assert!(d.warnings.is_empty(), "{:?}", d.warnings);
        let tol = 1e-6;
        for p in &d.points {
            assert!(p.speed <= mp.max_speed * (1.0 + tol));
            assert!(p.torque <= d.motor_max_torque * (1.0 + tol));
            assert!(p.torque * p.speed * RPM_TO_RAD <= d.motor_max_power * (1.0 + tol));
        }
        let p_max = mp.max_speed * RPM_TO_RAD * mp.hyperbola_const * d.motor_max_torque;
        assert!((d.motor_max_power - p_max).abs() <= 1e-9 * p_max);
    }
}

#[test]
fn zero_specific_mass_matches_fixed_mass() {
    let vp = VehicleParams::default();
    let s = wltc(6, 4, true);
    let base = build_design_model(&s, &vp, &MotorParams::default(), &Topology::single_speed()).unwrap();
    let fixed = solve_design(&base, &SolverOptions::default()).unwrap();
    let ext = variable_mass_extension(&base, 0.0).unwrap();
    let var = solve_design(&ext, &SolverOptions::default()).unwrap();
    assert!((fixed.log_objective - var.log_objective).abs() <= 1e-8);
    let m = var.vehicle_mass.unwrap();
    assert!((m - vp.total_mass()).abs() <= 1e-6 * m, "{m}");
}

#[test]
fn heavier_motor_raises_the_objective() {
    let vp = VehicleParams::default();
    let s = wltc(6, 4, true);
    let base = build_design_model(&s, &vp, &MotorParams::default(), &Topology::single_speed()).unwrap();
    let light = solve_design(&variable_mass_extension(&base, 0.0).unwrap(), &SolverOptions::default()).unwrap();
    let heavy = solve_design(
        &variable_mass_extension(&base, 1e-3).unwrap(),
        &SolverOptions::default(),
    )
    .unwrap();
    assert!(heavy.log_objective > light.log_objective);
    let m = heavy.vehicle_mass.unwrap();
    assert!((m - vp.total_mass() - 1e-3 * heavy.motor_max_power).abs() <= 1e-6 * m);
}

#[test]
fn torque_sensitivity_matches_finite_difference() {
    let vp = VehicleParams::default();
    let mp = MotorParams::default();
    let s = wltc(6, 5, true);
    let topo = Topology::single_speed();
    let m = build_design_model(&s, &vp, &mp, &topo).unwrap();
    let d = solve_design(&m, &SolverOptions::default()).unwrap();
    let sens = sensitivities(&d.solution).unwrap();
    for t in 0..s.len() {
        let nu = sens[&format!("torque_link[{t}]")];
        // scaling the wheel torque by c scales the link's left side by 1/c
        let c: f64 = 1.01;
        let mut s2 = s.clone();
        s2[t].wheel_torque *= c;
        let d2 = solve(&s2, &topo);
        let fd = (d2.log_objective - d.log_objective) / c.ln();
        let predicted = -nu;
        if predicted.abs() > 1e-3 {
            assert!(
                (fd - predicted).abs() <= 0.05 * predicted.abs(),
                "{t}: {fd} vs {predicted}"
            );
        } else {
            assert!(fd.abs() < 2e-3, "{t}: {fd}");
        }
    }
}

#[test]
fn interior_guards_leave_objective_unchanged() {
    let vp = VehicleParams::default();
    let mut with = wltc(6, 6, false);
    let without = solve(&with, &Topology::single_speed());
    let mild = GuardSpec {
        grade: 0.01,
        top_speed: 15.0,
        top_accel: 0.0,
    };
    with.extend(guard_scenarios(&vp, mild).unwrap());
    let guarded = solve(&with, &Topology::single_speed());
    assert!((without.log_objective - guarded.log_objective).abs() <= 1e-6);
}

#[test]
fn solves_are_deterministic() {
    let s = wltc(8, 7, true);
    let a = solve(&s, &Topology::cvt());
    let b = solve(&s, &Topology::cvt());
    assert_eq!(a.log_objective.to_bits(), b.log_objective.to_bits());
    assert_eq!(a.ratios, b.ratios);
}
