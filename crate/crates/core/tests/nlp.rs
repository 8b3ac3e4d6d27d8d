use otto_core::*;

const RATIO: f64 = 1.0 / 3.0;

fn cfg(ga: f64, gp: f64, t: f64) -> EngineConfig {
    EngineConfig::new(RATIO, NoiseParams::new(ga, gp).unwrap(), t).unwrap()
}

fn quick(starts: usize) -> SolveOptions {
    SolveOptions {
        multistart_count: starts,
        ..Default::default()
    }
}

#[test]
fn tolerances_outside_the_open_interval_are_rejected() {
    let p = transcribe(&cfg(0.0, 0.0, 3.0), 8).unwrap();
    for bad in [0.0, -1e-8, 1e-2, 0.5] {
        let o = SolveOptions {
            constraint_tolerance: bad,
            ..Default::default()
        };
        assert!(solve(&p, &o).is_err());
    }
    let o = SolveOptions {
        multistart_count: 0,
        ..Default::default()
    };
    assert!(solve(&p, &o).is_err());
}

#[test]
fn noiseless_stroke_reaches_ideal_transfer() {
    let r = optimize(&cfg(0.0, 0.0, 3.0), 30, &quick(2)).unwrap();
    assert_eq!(r.status, SolveStatus::Optimal);
    assert!(r.max_violation < 1e-8);
    assert!(r.delta().abs() < 1e-3, "{}", r.delta());
}

#[test]
fn dephasing_optimum_beats_the_reference_profile() {
    let t1 = t_n(1, RATIO).unwrap();
    let c = cfg(0.0, 0.01, t1);
    let r = optimize(&c, 30, &quick(2)).unwrap();
    let base = score_control(&c, &omega_profile(1, RATIO).unwrap(), &IntegrationOptions::default()).unwrap();
    assert_eq!(r.status, SolveStatus::Optimal);
    assert!(r.delta() < base.delta, "{} vs {}", r.delta(), base.delta);
    assert!(r.parasitic().unwrap() <= base.parasitic);
}

#[test]
fn too_short_amplitude_noise_stroke_is_infeasible() {
    let r = optimize(&cfg(0.02, 0.0, 1.5), 30, &quick(2)).unwrap();
    assert_eq!(r.status, SolveStatus::Infeasible);
    assert!(r.resimulated.is_none());
    assert!(r.max_violation > 1e-6);
}

#[test]
fn fixed_seed_gives_identical_reports() {
    let c = cfg(0.02, 0.0, 4.0);
    let o = quick(4);
    let a = optimize(&c, 24, &o).unwrap().without_timing();
    let b = optimize(&c, 24, &o).unwrap().without_timing();
    assert_eq!(a, b);
    let js = serde_json::to_string(&a).unwrap();
    let back: SolveReport = serde_json::from_str(&js).unwrap();
    assert_eq!(back, a);
}

#[test]
fn resimulation_agrees_with_the_nodal_objective() {
    for (ga, gp, t) in [(0.0, 0.01, 4.0), (0.02, 0.0, 3.0), (0.0, 0.0, 2.5)] {
        let r = optimize(&cfg(ga, gp, t), 30, &quick(2)).unwrap();
        assert!(r.is_feasible(), "{ga} {gp} {t}: {}", r.status);
        let res = r.resimulated.unwrap();
        assert!((res.energy_ratio - r.nodal_energy_ratio).abs() < 5e-3);
        assert!(res.parasitic.is_finite() && res.parasitic >= 0.0);
    }
}

#[test]
fn short_strokes_put_the_control_on_its_bounds() {
    let c = cfg(0.02, 0.0, 1.98);
    let r = optimize(&c, 40, &quick(3)).unwrap();
    assert!(r.is_feasible(), "{}", r.status);
    let lo = c.u_min();
    let on = r
        .u
        .iter()
        .filter(|&&u| (u - lo).abs() < 1e-3 || (u - 1.0).abs() < 1e-3)
        .count();
    assert!(on as f64 >= 0.3 * r.u.len() as f64, "{on}/{}", r.u.len());
}

#[test]
fn warm_start_transfers_between_orders() {
    let c = cfg(0.0, 0.01, 3.0);
    let coarse = optimize(&c, 16, &quick(1)).unwrap();
    let p = transcribe(&c, 30).unwrap();
    let r = solve_with_warm_start(&p, &quick(1), Some(&coarse.warm_start())).unwrap();
    assert!(r.warm_started);
    assert_eq!(r.starts[0].label, "warm");
    assert_eq!(r.status, SolveStatus::Optimal);
}

#[test]
fn sweeps_require_ascending_durations() {
    let c = cfg(0.0, 0.01, 3.0);
    assert!(sweep_duration(&c, 12, &[3.0, 2.0], &quick(1), false).is_err());
    let pts = sweep_duration(&c, 16, &[2.5, 3.5], &quick(1), true).unwrap();
    assert_eq!(pts.len(), 2);
    assert!(pts[1].warm_started);
    let cold = sweep_duration(&c, 16, &[2.5, 3.5], &quick(1), false).unwrap();
    assert!(!cold[1].warm_started);
}

#[test]
fn minimum_time_search_brackets_the_boundary() {
    let search = TimeSearch {
        lower: 1.6,
        upper: 2.1,
        width: 0.02,
        ..Default::default()
    };
    let r = min_feasible_time(&cfg(0.0, 0.0, 1.0), 24, &quick(2), &search).unwrap();
    assert!(r.duration - r.lower <= 0.02 + 1e-12);
    assert!(r.solution.is_feasible());
    assert!((r.duration - 1.79).abs() < 0.08, "{}", r.duration);
    let bad = TimeSearch {
        lower: 2.0,
        upper: 1.0,
        ..Default::default()
    };
    assert!(min_feasible_time(&cfg(0.0, 0.0, 1.0), 24, &quick(1), &bad).is_err());
}
