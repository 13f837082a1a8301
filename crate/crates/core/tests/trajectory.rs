use proptest::prelude::*;

use cognitive_uav::model::{average_interference, check_feasibility, Point, PowerAllocation, Trajectory};
use cognitive_uav::oracle::{bound_gap, grid_search_waypoint, WaypointInstance};
use cognitive_uav::power::solve_power;
use cognitive_uav::trajectory::{build_p31, linearized_sq_distance, sca_trajectory, solve_p31};
use cognitive_uav::{Scenario, SolverOptions};

fn two_slot(gamma_scale: f64, powers: [f64; 2], reference: [Point; 3]) -> (Scenario, WaypointInstance) {
    let mut s = Scenario::reference();
    s.num_slots = 2;
    s.duration = 2.0;
    s.pr_positions = vec![Point::new(-150.0, 120.0), Point::new(160.0, -90.0)];
    s.q_init = reference[0];
    s.q_final = reference[2];
    let traj = Trajectory { points: reference.to_vec() };
    let usage = average_interference(&traj, &PowerAllocation { powers: powers.to_vec() }, &s).unwrap();
    s.it_limits = usage.iter().map(|u| u * gamma_scale).collect();
    let inst = WaypointInstance { scenario: s.clone(), powers, reference, t_floor: 1.0 };
    (s, inst)
}

#[test]
fn single_waypoint_matches_grid_oracle_under_tight_caps() {
    let opts = SolverOptions::default();
    let cases = [
        (1.05, [1.0, 1.0], [Point::new(-80.0, 60.0), Point::new(-60.0, 30.0), Point::new(-30.0, 20.0)]),
        (1.02, [0.6, 1.4], [Point::new(90.0, 40.0), Point::new(70.0, 10.0), Point::new(40.0, 30.0)]),
        (1.03, [1.8, 0.2], [Point::new(-20.0, -60.0), Point::new(0.0, -40.0), Point::new(30.0, -50.0)]),
    ];
    for (scale, powers, reference) in cases {
        let (s, inst) = two_slot(scale, powers, reference);
        let power = PowerAllocation { powers: powers.to_vec() };
        let model = build_p31(&power, &Trajectory { points: reference.to_vec() }, &s, &opts).unwrap();
        let sol = solve_p31(&model, &opts).unwrap();
        let oracle = grid_search_waypoint(&inst, 0.25).expect("reference is feasible");
        let q = sol.trajectory.points[1];
        assert!((q - oracle).norm() <= 0.5, "solver {q:?} oracle {oracle:?}");
        assert!(sol.objective >= inst.objective(&oracle) - 1e-9);
        // at least one cap is active, so the case exercises the constraint
        let worst = model.cap_usage(&sol.trajectory).into_iter().flatten().fold(0.0, f64::max);
        assert!(worst > 0.999, "caps slack: {worst}");
    }
}

#[test]
fn sca_is_monotone_and_feasible_on_reference() {
    let s = Scenario::reference();
    let opts = SolverOptions::default();
    let line = Trajectory::straight_line(&s);
    let power = solve_power(&line, &s, &opts).unwrap().power;
    let out = sca_trajectory(&power, &line, &s, &opts).unwrap();
    assert!(out.history.windows(2).all(|w| w[1] >= w[0] * (1.0 - 1e-9)));
    assert!(check_feasibility(&out.trajectory, &power, &s, 1e-6).is_feasible());
    assert!(out.history.last().unwrap() > &out.history[0]);
}

#[test]
fn tight_caps_do_not_pull_the_path_toward_receivers() {
    let mut s = Scenario::reference();
    s.it_limits = vec![1e-12; 2];
    let opts = SolverOptions::default();
    let line = Trajectory::straight_line(&s);
    let power = solve_power(&line, &s, &opts).unwrap().power;
    let out = sca_trajectory(&power, &line, &s, &opts).unwrap();
    for w in &s.pr_positions {
        let d = |t: &Trajectory| t.points.iter().map(|q| (q - w).norm()).fold(f64::INFINITY, f64::min);
        assert!(d(&out.trajectory) >= d(&line) - 1e-9);
    }
}

#[test]
fn infeasible_start_is_reported() {
    let s = Scenario::reference();
    let opts = SolverOptions::default();
    let mut bad = Trajectory::straight_line(&s);
    bad.points[5].x += 200.0;
    let power = PowerAllocation::zeros(200);
    assert!(sca_trajectory(&power, &bad, &s, &opts).is_err());
}

fn point() -> impl Strategy<Value = Point> {
    (-3e3f64..3e3, -3e3f64..3e3).prop_map(|(x, y)| Point::new(x, y))
}

proptest! {
    #[test]
    fn rate_bound_is_global_minorant(p in 0.0f64..10.0, q in point(), q_ref in point()) {
        let s = Scenario::reference();
        prop_assert!(bound_gap(p, &q, &q_ref, &s) >= -1e-12);
        prop_assert!(bound_gap(p, &q_ref, &q_ref, &s).abs() <= 1e-12);
    }

    #[test]
    fn distance_minorant_gap_is_exact(q in point(), q_ref in point(), w in point()) {
        let lin = linearized_sq_distance(&q, &q_ref, &w);
        let exact = (q - w).norm_squared();
        prop_assert!(lin <= exact);
        let gap = (q - q_ref).norm_squared();
        prop_assert!(((exact - lin) - gap).abs() <= 1e-9 * exact.max(gap).max((q_ref - w).norm_squared()).max(1.0));
    }
}
