use cognitive_uav::alternating::{optimize_joint_from, straight_line_trajectory};
use cognitive_uav::model::{Point, SolverFlag, Stage, Trajectory};
use cognitive_uav::oracle::random_instance;
use cognitive_uav::{optimize_joint, Scenario, SolveError, SolverOptions};

#[test]
fn reference_solution_converges_cleanly() {
    let s = Scenario::reference();
    let sol = optimize_joint(&s, &SolverOptions::default()).unwrap();
    assert!(sol.flags.is_empty(), "{:?}", sol.flags);
    assert!(sol.feasibility(&s, 1e-6).is_feasible());
    assert_eq!(sol.trajectory.points.len(), 201);
    assert_eq!(sol.power.powers.len(), 200);
    let h = &sol.objective_history;
    assert!(h.windows(2).all(|w| w[1] >= w[0] * (1.0 - 1e-9)));
    // each round records a power half-step and a trajectory half-step
    assert_eq!(h.len(), 2 * sol.iterations.outer);
    assert!(sol.convergence.iter().any(|r| r.stage == Stage::Sca));
    assert!(sol.avg_rate > 2.0);
}

#[test]
fn joint_never_loses_to_its_own_start() {
    let opts = SolverOptions::default();
    let mut solved = 0;
    for seed in 0..6 {
        let (mut s, _) = random_instance(seed, 30, 2);
        s.duration = 60.0;
        let Ok(line) = straight_line_trajectory(&s) else { continue };
        let start = cognitive_uav::power::solve_power(&line, &s, &opts).unwrap().objective;
        let sol = optimize_joint(&s, &opts).unwrap();
        assert!(sol.avg_rate >= start - 1e-9, "seed {seed}");
        assert!(sol.feasibility(&s, 1e-6).is_feasible(), "seed {seed}");
        solved += 1;
    }
    assert!(solved >= 3, "only {solved} reachable instances");
}

#[test]
fn custom_start_is_accepted() {
    let s = Scenario::reference();
    let mut init = Trajectory::straight_line(&s);
    for (i, q) in init.points.iter_mut().enumerate().take(200).skip(1) {
        *q += Point::new(1.0, 1.0) * (30.0 * (std::f64::consts::PI * i as f64 / 200.0).sin());
    }
    let sol = optimize_joint_from(&s, &SolverOptions::default(), &init).unwrap();
    assert!(sol.feasibility(&s, 1e-6).is_feasible());
}

#[test]
fn outer_cap_is_flagged() {
    let s = Scenario::reference();
    let opts = SolverOptions { max_outer_iters: 1, ..SolverOptions::default() };
    let sol = optimize_joint(&s, &opts).unwrap();
    assert!(sol.flags.contains(&SolverFlag::OuterIterationCap));
}

#[test]
fn bad_inputs_are_rejected() {
    let mut s = Scenario::reference();
    s.duration = 10.0;
    assert!(matches!(optimize_joint(&s, &SolverOptions::default()), Err(SolveError::Model(_))));
    let opts = SolverOptions { outer_tol: -1.0, ..SolverOptions::default() };
    assert!(matches!(optimize_joint(&Scenario::reference(), &opts), Err(SolveError::Options(_))));
}

#[test]
fn translation_moves_the_solution_rigidly() {
    let s = Scenario::reference();
    let offset = Point::new(-250.0, 4000.0);
    let opts = SolverOptions::default();
    let a = optimize_joint(&s, &opts).unwrap();
    let b = optimize_joint(&s.translated(offset), &opts).unwrap();
    assert!((a.avg_rate - b.avg_rate).abs() <= 1e-8 * a.avg_rate);
    for (p, q) in a.trajectory.points.iter().zip(&b.trajectory.points) {
        assert!((q - p - offset).norm() < 1e-3);
    }
}
