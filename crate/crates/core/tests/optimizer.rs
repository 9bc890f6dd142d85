use mabeam::metrics::{eval_gain, eval_pattern, eval_slot_leakage, evaluate};
use mabeam::model::{check_geometry, Trajectory};
use mabeam::optimizer::{
    initial_trajectory, optimize_apv_block, optimize_awv_slot, optimize_common_apv, run, Termination,
};
use mabeam::qcqp::InteriorPoint;
use mabeam::{OptimizerConfig, Preset, Scenario, ScenarioConfig, Scheme};

fn desk() -> (Scenario, ScenarioConfig) {
    let cfg = ScenarioConfig::preset(Preset::Desk);
    (Scenario::build(&cfg).unwrap(), cfg)
}

fn solver(cfg: &OptimizerConfig) -> InteriorPoint {
    InteriorPoint { settings: cfg.solver }
}

#[test]
fn infinite_tolerance_runs_one_iteration() {
    let (sc, cfg) = desk();
    for scheme in [Scheme::Ma, Scheme::LcMa, Scheme::UpaOptimized] {
        let oc = OptimizerConfig { tolerance: f64::INFINITY, ..cfg.optimizer_config(scheme) };
        let out = run(&sc.problem, &oc).unwrap();
        assert_eq!(out.log.iterations(), 1, "{scheme}");
        assert_eq!(out.log.termination, Termination::Converged);
    }
}

#[test]
fn steering_baseline_matches_initialization() {
    let (sc, cfg) = desk();
    let oc = cfg.optimizer_config(Scheme::UpaSteering);
    let out = run(&sc.problem, &oc).unwrap();
    let init = initial_trajectory(&sc.problem, &oc.limits).unwrap();
    assert_eq!(out.trajectory, init);
    assert_eq!(out.log.final_leakage(), evaluate(&sc.problem, &init).leakage);
    assert_eq!(out.log.termination, Termination::NotOptimized);
}

#[test]
fn optimized_phases_beat_steering() {
    let (sc, cfg) = desk();
    let steer = run(&sc.problem, &cfg.optimizer_config(Scheme::UpaSteering)).unwrap();
    assert!(evaluate(&sc.problem, &steer.trajectory).min_gain() >= cfg.gain_threshold());
    let opt = run(&sc.problem, &cfg.optimizer_config(Scheme::UpaOptimized)).unwrap();
    assert!(opt.log.final_leakage() <= steer.log.final_leakage());
    assert!(opt.trajectory.positions == steer.trajectory.positions, "positions must stay frozen");
}

#[test]
fn single_slot_common_equals_free() {
    let mut cfg = ScenarioConfig::preset(Preset::Desk);
    cfg.grid.time_slots = 1;
    cfg.optimizer.block_slots = 1;
    let sc = Scenario::build(&cfg).unwrap();
    let ma = run(&sc.problem, &cfg.optimizer_config(Scheme::Ma)).unwrap();
    let lc = run(&sc.problem, &cfg.optimizer_config(Scheme::LcMa)).unwrap();
    let (a, b) = (ma.log.final_leakage(), lc.log.final_leakage());
    assert!((a - b).abs() <= 1e-6 * a.max(1.0), "ma {a} vs lc-ma {b}");
}

#[test]
fn subproblem_updates_descend_and_stay_feasible() {
    let (sc, cfg) = desk();
    let p = &sc.problem;
    let oc = cfg.optimizer_config(Scheme::Ma);
    let s = solver(&oc);
    let eta = oc.gain_threshold;
    let mut traj = initial_trajectory(p, &oc.limits).unwrap();

    for m in 0..p.slots() {
        let upd = optimize_awv_slot(p, &traj, m, &oc, &s, false).unwrap();
        let phases = upd.value.expect("phase update accepted");
        let mut cand = traj.clone();
        cand.phases[m] = phases;
        assert!(eval_slot_leakage(p, &cand, m) <= eval_slot_leakage(p, &traj, m));
        assert!(eval_gain(p, &cand, m) >= eta - 1e-9);
        traj = cand;
    }

    let block = 0..oc.block_slots;
    let upd = optimize_apv_block(p, &traj, block.clone(), &oc, &s).unwrap();
    let new = upd.value.expect("position update accepted");
    let mut cand = traj.clone();
    for (j, m) in block.clone().enumerate() {
        cand.positions[m] = new[j].clone();
    }
    let before: f64 = block.clone().map(|m| eval_slot_leakage(p, &traj, m)).sum();
    let after: f64 = block.clone().map(|m| eval_slot_leakage(p, &cand, m)).sum();
    assert!(after <= before);
    assert!(check_geometry(&cand, &oc.limits).within(1e-9));
    for m in block {
        assert!(eval_gain(p, &cand, m) >= eta - 1e-9);
    }

    let lc = cfg.optimizer_config(Scheme::LcMa);
    let upd = optimize_common_apv(p, &traj, &lc, &s).unwrap();
    let common = upd.value.expect("common update accepted");
    let shared = Trajectory { positions: vec![common; p.slots()], phases: traj.phases.clone() };
    assert!(check_geometry(&shared, &lc.limits).within(1e-9));
}

#[test]
fn fixed_point_is_kept() {
    // Starting from a converged trajectory, another phase update changes nothing.
    let (sc, cfg) = desk();
    let oc = OptimizerConfig { tolerance: 1e-12, max_iterations: 200, ..cfg.optimizer_config(Scheme::UpaOptimized) };
    let out = run(&sc.problem, &oc).unwrap();
    let traj = out.trajectory;
    let s = solver(&oc);
    for m in 0..sc.problem.slots() {
        let before = eval_slot_leakage(&sc.problem, &traj, m);
        if let Some(p) = optimize_awv_slot(&sc.problem, &traj, m, &oc, &s, false).unwrap().value {
            let mut cand = traj.clone();
            cand.phases[m] = p;
            let after = eval_slot_leakage(&sc.problem, &cand, m);
            assert!((before - after).abs() <= 1e-6 * before, "slot {m}: {before} -> {after}");
        }
    }
}

#[test]
fn first_and_last_patterns_mirror() {
    // The pass is symmetric about the mid-interval, so slot M sees slot 1's
    // geometry reflected through the coverage center.
    let (sc, cfg) = desk();
    let out = run(&sc.problem, &cfg.optimizer_config(Scheme::Ma)).unwrap();
    let last = sc.problem.slots() - 1;
    let (first, _) = eval_pattern(&sc, &out.trajectory, 0).unwrap();
    let (mirror, _) = eval_pattern(&sc, &out.trajectory, last).unwrap();
    let (le, la) = (sc.angular_grid.elevation_cells, sc.angular_grid.azimuth_cells);
    let (mut diff, mut mass) = (0.0, 0.0);
    for (i, s) in first.iter().enumerate() {
        let (e, a) = (i / la, i % la);
        let r = &mirror[(le - 1 - e) * la + (la - 1 - a)];
        assert!((r.point.elevation + s.point.elevation).abs() < 1e-12);
        assert!((r.point.azimuth + s.point.azimuth).abs() < 1e-12);
        if s.tag.as_str() != "invisible" {
            diff += (s.gain - r.gain).abs();
            mass += s.gain;
        }
    }
    let dev = diff / mass;
    assert!(dev <= 0.10, "mean relative deviation {dev}");
}
