use migp_core::cycle::{GuardSpec, LoadScenario, VehicleParams};
use migp_core::migp::{
    benders, brute_force, compare, enumerate_assignments, generate_instances, heuristic, stirling2,
    write_comparison_csv, write_comparison_markdown, BendersCut, Cell, Engine, MigpOptions, MigpProblem, MigpTrace,
};
use migp_core::powertrain::{
    build_design_model, solve_design, GearAssignment, GearLabeling, MotorParams, Topology, DEFAULT_RATIO_BOUNDS,
};
use migp_core::{Error, SolverOptions};

fn instance(cycle: &str, k: usize, seed: u64) -> MigpProblem {
    let vp = VehicleParams::default();
    let inst = generate_instances(&[cycle], &[k], &[seed], &vp, GuardSpec::default()).unwrap();
    MigpProblem::new(inst[0].scenarios.clone(), vp, MotorParams::default())
}

/// Objective of every labeled two-speed assignment, indexed by gear-2 mask.
fn all_labeled(p: &MigpProblem, n: usize) -> Vec<(GearAssignment, Option<f64>)> {
    let opts = SolverOptions::default();
    (1..(1u64 << n) - 1)
        .map(|m| {
            let a = GearAssignment::from_mask(m, n);
            let v = p.solve_assignment(&a, &opts).unwrap().map(|d| d.log_objective);
            (a, v)
        })
        .collect()
}

#[test]
fn brute_force_finds_global_minimum() {
    let p = instance("wltc", 6, 11);
    let r = brute_force(&p, &MigpOptions::default()).unwrap();
    assert_eq!(r.iterations as u128, stirling2(6, 2));
    let best = all_labeled(&p, 6)
        .into_iter()
        .filter_map(|(_, v)| v)
        .fold(f64::INFINITY, f64::min);
    assert!((r.log_objective - best).abs() <= 1e-12, "{} vs {best}", r.log_objective);
}

#[test]
fn brute_force_identical_pair() {
    let vp = VehicleParams::default();
    let s = vec![
        LoadScenario::new(150.0, 600.0, 0.5),
        LoadScenario::new(150.0, 600.0, 0.5),
    ];
    let p = MigpProblem::new(s, vp, MotorParams::default());
    let r = brute_force(&p, &MigpOptions::default()).unwrap();
    assert_eq!(r.iterations, 1);
    assert_eq!(r.best_assignment.to_string(), "12");
    let flipped = p
        .solve_assignment(&r.best_assignment.complement(), &SolverOptions::default())
        .unwrap()
        .unwrap();
    assert!((flipped.log_objective - r.log_objective).abs() <= 1e-9);
}

#[test]
fn brute_force_cap_refuses() {
    let vp = VehicleParams::default();
    let s: Vec<LoadScenario> = (0..17)
        .map(|i| LoadScenario::new(50.0 + i as f64, 300.0 + 20.0 * i as f64, 1.0 / 17.0))
        .collect();
    let p = MigpProblem::new(s, vp, MotorParams::default());
    match brute_force(&p, &MigpOptions::default()) {
        Err(e @ Error::BruteForceCap { .. }) => assert!(e.to_string().contains("benders")),
        other => panic!("expected cap error, got {other:?}"),
    }
}

#[test]
fn engines_need_two_scenarios() {
    let p = MigpProblem::new(
        vec![LoadScenario::new(100.0, 500.0, 1.0)],
        VehicleParams::default(),
        MotorParams::default(),
    );
    let o = MigpOptions::default();
    assert!(brute_force(&p, &o).is_err());
    assert!(benders(&p, &o, None).is_err());
    assert!(heuristic(&p, &o).is_err());
}

#[test]
fn every_cut_is_valid() {
    let p = instance("us06", 6, 3);
    let n = 6;
    let regular = p.regular();
    let big_m = (DEFAULT_RATIO_BOUNDS.1 / DEFAULT_RATIO_BOUNDS.0).ln();
    let values = all_labeled(&p, n);
    let opts = SolverOptions::default();
    for (a, _) in values.iter().step_by(5) {
        let Some(d) = p.solve_assignment(a, &opts).unwrap() else {
            continue;
        };
        let cut = BendersCut::from_design(a, &d, &regular, big_m).unwrap();
        assert!((cut.value(a) - cut.source_objective).abs() <= 1e-12);
        for (b, v) in &values {
            if let Some(v) = v {
                assert!(cut.value(b) <= v + 1e-6, "cut from {a} at {b}: {} > {v}", cut.value(b));
            }
        }
    }
}

#[test]
fn cut_slope_matches_perturbed_load() {
    // moving a load to a ratio e^u times larger acts like scaling its
    // torque by e^-u and its speed by e^u
    let p = instance("wltc", 6, 1);
    let opts = SolverOptions::default();
    let a = GearAssignment::new(vec![1, 1, 2, 1, 2, 2], 2).unwrap();
    let d = p.solve_assignment(&a, &opts).unwrap().unwrap();
    let u: f64 = 1e-4;
    for (j, &t) in p.regular().iter().enumerate() {
        let slope = d.solution.dual(&format!("torque_link[{t}]")).unwrap()
            - d.solution.dual(&format!("speed_link[{t}]")).unwrap();
        let mut q = p.clone();
        q.scenarios[t].wheel_torque *= (-u).exp();
        q.scenarios[t].wheel_speed *= u.exp();
        let v = q.solve_assignment(&a, &opts).unwrap().unwrap().log_objective;
        let fd = (v - d.log_objective) / u;
        assert!(
            (fd - slope).abs() <= 1e-3 * slope.abs().max(1e-2),
            "{j}: {fd} vs {slope}"
        );
    }
}

#[test]
fn benders_matches_brute_force() {
    let o = MigpOptions::default();
    for (cycle, k, seed) in [("wltc", 6, 1), ("hwfet", 8, 1), ("ftp75", 7, 2), ("us06", 8, 5)] {
        let p = instance(cycle, k, seed);
        let bf = brute_force(&p, &o).unwrap();
        let b = benders(&p, &o, None).unwrap();
        assert!((bf.log_objective - b.log_objective).abs() <= 1e-6, "{cycle} {k} {seed}");
        assert!(b.gap.unwrap() <= 1e-6);
        if k >= 8 {
            assert!(b.iterations < bf.iterations);
        }
        let MigpTrace::Cuts(rows) = &b.trace else {
            panic!("no cut log")
        };
        assert_eq!(rows.len(), b.iterations);
        for w in rows.windows(2) {
            assert!(w[1].lower_bound >= w[0].lower_bound);
            assert!(w[1].upper_bound <= w[0].upper_bound);
        }
        for r in rows {
            assert!(r.lower_bound <= r.upper_bound + 1e-12);
        }
    }
}

#[test]
fn benders_two_scenario_toy() {
    let s = vec![
        LoadScenario::new(400.0, 150.0, 0.5),
        LoadScenario::new(60.0, 1200.0, 0.5),
    ];
    let p = MigpProblem::new(s, VehicleParams::default(), MotorParams::default());
    let o = MigpOptions::default();
    let b = benders(&p, &o, None).unwrap();
    let bf = brute_force(&p, &o).unwrap();
    assert!(b.iterations <= 2);
    assert_eq!(b.gap, Some(0.0));
    assert!((b.log_objective - bf.log_objective).abs() <= 1e-9);
}

#[test]
fn warm_started_benders_evaluates_seed_first() {
    let p = instance("wltc", 8, 2);
    let o = MigpOptions::default();
    let h = heuristic(&p, &o).unwrap();
    let b = benders(&p, &o, Some(&h.best_assignment)).unwrap();
    let MigpTrace::Cuts(rows) = &b.trace else { panic!() };
    assert_eq!(rows[0].assignment, h.best_assignment.canonical().to_string());
    assert!(rows[0].upper_bound <= h.log_objective + 1e-12);
    let bf = brute_force(&p, &o).unwrap();
    assert!((b.log_objective - bf.log_objective).abs() <= 1e-6);
}

#[test]
fn cut_log_csv() {
    let p = instance("wltc", 6, 1);
    let b = benders(&p, &MigpOptions::default(), None).unwrap();
    let mut buf = Vec::new();
    b.write_trace_csv(&mut buf).unwrap();
    let s = String::from_utf8(buf).unwrap();
    assert!(s.starts_with("iter,lower_bound,upper_bound,assignment\n"));
    assert_eq!(s.lines().count(), b.iterations + 1);
}

#[test]
fn results_match_fresh_solves() {
    let p = instance("ftp75", 7, 4);
    let o = MigpOptions::default();
    for r in [
        brute_force(&p, &o).unwrap(),
        benders(&p, &o, None).unwrap(),
        heuristic(&p, &o).unwrap(),
    ] {
        let d = p.solve_assignment(&r.best_assignment, &o.solver).unwrap().unwrap();
        assert!((d.log_objective - r.log_objective).abs() <= 1e-9);
    }
}

#[test]
fn label_swap_keeps_objective() {
    let p = instance("wltc", 7, 9);
    let opts = SolverOptions::default();
    let topo = |a: GearAssignment, l: GearLabeling| Topology::fixed(a).with_labeling(l);
    for m in [5u64, 19, 37, 60] {
        let a = GearAssignment::from_mask(m, 7);
        let desc = build_design_model(
            &p.scenarios,
            &p.vehicle,
            &p.motor,
            &topo(a.clone(), GearLabeling::Descending),
        )
        .unwrap();
        let asc = build_design_model(
            &p.scenarios,
            &p.vehicle,
            &p.motor,
            &topo(a.complement(), GearLabeling::Ascending),
        )
        .unwrap();
        let x = solve_design(&desc, &opts).unwrap();
        let y = solve_design(&asc, &opts).unwrap();
        assert!((x.log_objective - y.log_objective).abs() <= 1e-9, "{a}");
        assert!((x.ratios[0] - y.ratios[1]).abs() <= 1e-6 * x.ratios[0]);
        assert!((x.ratios[1] - y.ratios[0]).abs() <= 1e-6 * x.ratios[1]);
    }
}

#[test]
fn heuristic_trace_is_monotone() {
    let o = MigpOptions::default();
    for (cycle, k, seed) in [("wltc", 10, 1), ("us06", 8, 3), ("hwfet", 12, 2)] {
        let p = instance(cycle, k, seed);
        let h = heuristic(&p, &o).unwrap();
        assert!(h.iterations <= k, "{} rounds for {k} loads", h.iterations);
        let MigpTrace::Heuristic(rows) = &h.trace else { panic!() };
        assert_eq!(rows[0].iteration, 0);
        assert_eq!(rows.len(), h.iterations + 1);
        for w in rows.windows(2) {
            let before = w[0].gears.iter().flatten().count();
            let after = w[1].gears.iter().flatten().count();
            assert!(after > before || w[1].backtracked);
            if !w[1].backtracked {
                for (x, y) in w[0].gears.iter().zip(&w[1].gears) {
                    if x.is_some() {
                        assert_eq!(x, y);
                    }
                }
            }
        }
        assert!(rows.last().unwrap().gears.iter().all(Option::is_some));
        assert_eq!(rows[1].gears.iter().flatten().count(), 2);
    }
}

#[test]
fn heuristic_is_close_to_optimal() {
    let o = MigpOptions::default();
    for (cycle, k, seed) in [("wltc", 8, 1), ("ftp75", 8, 2), ("us06", 6, 4)] {
        let p = instance(cycle, k, seed);
        let h = heuristic(&p, &o).unwrap();
        let bf = brute_force(&p, &o).unwrap();
        assert!(h.log_objective >= bf.log_objective - 1e-9);
        assert!(h.log_objective - bf.log_objective <= 0.05);
    }
}

#[test]
fn heuristic_on_identical_loads_needs_one_batch() {
    let s: Vec<LoadScenario> = (0..5).map(|_| LoadScenario::new(120.0, 700.0, 0.2)).collect();
    let p = MigpProblem::new(s, VehicleParams::default(), MotorParams::default());
    let h = heuristic(&p, &MigpOptions::default()).unwrap();
    let MigpTrace::Heuristic(rows) = &h.trace else { panic!() };
    // CVT row, seeding round, one threshold batch
    assert_eq!(rows.len(), 3);
    assert_eq!(rows[2].assigned.len(), 3);
    // the split costs nothing, so both gears sit at the single-speed ratio
    let single = build_design_model(&p.scenarios, &p.vehicle, &p.motor, &Topology::single_speed()).unwrap();
    let single = solve_design(&single, &SolverOptions::default()).unwrap();
    assert!((h.log_objective - single.log_objective).abs() <= 1e-7);
    for r in &h.design.ratios {
        assert!((r / single.ratios[0]).ln().abs() <= 1e-3, "{r} vs {}", single.ratios[0]);
    }
}

#[test]
fn heuristic_trace_csv() {
    let p = instance("wltc", 6, 2);
    let h = heuristic(&p, &MigpOptions::default()).unwrap();
    let mut buf = Vec::new();
    h.write_trace_csv(&mut buf).unwrap();
    let s = String::from_utf8(buf).unwrap();
    let mut lines = s.lines();
    assert_eq!(
        lines.next(),
        Some("iteration,threshold,log_objective,i_1,i_2,assigned,state")
    );
    assert!(lines.next().unwrap().ends_with(",0,000000"));
    assert_eq!(s.lines().count(), h.iterations + 2);
}

#[test]
fn instance_generation() {
    let vp = VehicleParams::default();
    let set = generate_instances(
        &["wltc", "ftp75", "hwfet", "us06"],
        &[6, 8],
        &[1, 2, 3],
        &vp,
        GuardSpec::default(),
    )
    .unwrap();
    assert_eq!(set.len(), 24);
    assert!(set.iter().enumerate().all(|(i, x)| x.id == i + 1));
    let first = &set[0];
    assert_eq!(first.scenarios.len(), 8);
    assert_eq!(first.scenarios.iter().filter(|s| s.is_guard).count(), 2);
    let again = generate_instances(&["wltc"], &[6], &[1], &vp, GuardSpec::default()).unwrap();
    assert_eq!(again[0].scenarios, first.scenarios);

    let wide = generate_instances(&["wltc"], &[4, 13], &[1], &vp, GuardSpec::default()).unwrap();
    assert!(wide.iter().all(|x| !x.in_reference_range));
    assert!(set.iter().all(|x| x.in_reference_range));

    match generate_instances(&["nycc"], &[6], &[1], &vp, GuardSpec::default()) {
        Err(Error::UnknownFixture { available, .. }) => assert!(available.contains("wltc")),
        other => panic!("expected fixture error, got {other:?}"),
    }
}

#[test]
fn comparison_table() {
    let vp = VehicleParams::default();
    let mut set = generate_instances(&["wltc", "us06"], &[6], &[1], &vp, GuardSpec::default()).unwrap();
    // a single regular load cannot be split; its cells fail, the rest run
    let mut broken = set[0].clone();
    broken.id = 3;
    broken.scenarios.retain(|s| s.is_guard);
    broken.scenarios.insert(0, LoadScenario::new(100.0, 500.0, 1.0));
    set.push(broken);
    let base = MigpProblem::new(Vec::new(), vp, MotorParams::default());
    let engines = [
        Engine::BruteForce,
        Engine::Benders,
        Engine::BendersHeuristic,
        Engine::Heuristic,
    ];
    let rows = compare(&set, &engines, &base, &MigpOptions::default()).unwrap();
    assert_eq!(rows.len(), 3);
    for r in &rows[..2] {
        let bf = r.brute_force.objective().unwrap();
        assert!((bf - r.benders.objective().unwrap()).abs() <= 1e-6);
        assert!((bf - r.benders_heuristic.objective().unwrap()).abs() <= 1e-6);
        let h = r.heuristic.objective().unwrap();
        assert!(h >= bf - 1e-9 && h - bf <= 0.05);
        assert_eq!(r.brute_force.iterations(), Some(31));
    }
    assert!(matches!(rows[2].brute_force, Cell::Failed(_)));
    assert!(matches!(rows[2].heuristic, Cell::Failed(_)));

    let mut csv = Vec::new();
    write_comparison_csv(&rows, &mut csv).unwrap();
    let csv = String::from_utf8(csv).unwrap();
    assert!(csv.starts_with("ID,BF/P,B/P,B+H/P,H/P,B/#it,B+H/#it,BF/#it,CYCLE\n"));
    assert!(csv.lines().nth(3).unwrap().contains("ERR"));
    let mut md = Vec::new();
    write_comparison_markdown(&rows, &mut md).unwrap();
    let md = String::from_utf8(md).unwrap();
    assert!(md.starts_with("| ID | BF/P | B/P | B+H/P | H/P | B/#it | B+H/#it | BF/#it | CYCLE |\n|---|"));
    assert!(compare(&set, &[], &base, &MigpOptions::default()).is_err());
}

#[test]
fn enumeration_counts() {
    for (n, c) in [(6, 31), (8, 127), (10, 511), (12, 2047)] {
        assert_eq!(enumerate_assignments(n, 2).unwrap().count(), c);
        assert_eq!(stirling2(n as u32, 2), c as u128);
    }
}
