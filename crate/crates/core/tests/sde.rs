use otto_core::*;

fn opts(n: usize, dt: f64, seed: u64, samples: usize) -> SdeOptions {
    SdeOptions {
        ensemble_size: n,
        time_step: dt,
        seed,
        samples,
        ..Default::default()
    }
}

fn reference(cfg: &EngineConfig, c: &ControlProfile, s: &EnsembleSeries) -> Trajectory {
    integrate_at(cfg, c, &IntegrationOptions::default(), &s.times).unwrap()
}

#[test]
fn amplitude_noise_heats_at_the_predicted_rate() {
    // At u = 1 and L = 0, dE/dt = γ_a (E − L) = γ_a E_h initially.
    let cfg = EngineConfig::new(1.0 / 3.0, NoiseParams::amplitude(0.02).unwrap(), 1.0).unwrap();
    let c = ControlProfile::constant(1.0, 1.0).unwrap();
    let s = simulate_ensemble(&cfg, &c, &opts(100_000, 1e-3, 11, 11)).unwrap();
    let k = 3;
    let (mut stt, mut ste) = (0.0, 0.0);
    let tm = s.times[..=k].iter().sum::<f64>() / (k + 1) as f64;
    let em = s.energy[..=k].iter().sum::<f64>() / (k + 1) as f64;
    for i in 0..=k {
        stt += (s.times[i] - tm).powi(2);
        ste += (s.times[i] - tm) * (s.energy[i] - em);
    }
    let slope = ste / stt;
    assert!((slope - 0.02).abs() < 0.006, "slope {slope}");
}

#[test]
fn dephasing_ensemble_matches_moment_equations() {
    let ratio = 1.0 / 3.0;
    let t1 = t_n(1, ratio).unwrap();
    let cfg = EngineConfig::new(ratio, NoiseParams::dephasing(0.01).unwrap(), t1).unwrap();
    let c = omega_profile(1, ratio).unwrap();
    let s = simulate_ensemble(&cfg, &c, &opts(20_000, 1e-3, 4, 21)).unwrap();
    let m = compare_moments(&s, &reference(&cfg, &c, &s)).unwrap();
    assert!(m.overall_max_z() < 4.5, "{m:?}");
    assert!(s.diverged == 0);
}

#[test]
fn common_noise_path_is_detected() {
    let cfg = EngineConfig::new(0.5, NoiseParams::new(0.05, 0.05).unwrap(), 2.0).unwrap();
    let c = ControlProfile::constant(1.0, 2.0).unwrap();
    let good = simulate_ensemble(&cfg, &c, &opts(50_000, 1e-3, 8, 11)).unwrap();
    let bad = simulate_ensemble(
        &cfg,
        &c,
        &SdeOptions {
            coupling: NoiseCoupling::Common,
            ..opts(50_000, 1e-3, 8, 11)
        },
    )
    .unwrap();
    let traj = reference(&cfg, &c, &good);
    let g = compare_moments(&good, &traj).unwrap();
    let b = compare_moments(&bad, &traj).unwrap();
    assert!(g.overall_max_z() < 4.5, "{g:?}");
    assert!(b.overall_max_z() > 5.0, "{b:?}");
}

#[test]
fn ito_reading_without_correction_misses_the_dephasing_drift() {
    let cfg = EngineConfig::new(0.5, NoiseParams::dephasing(0.05).unwrap(), 2.0).unwrap();
    let c = ControlProfile::constant(0.7, 2.0).unwrap();
    let bad = simulate_ensemble(
        &cfg,
        &c,
        &SdeOptions {
            scheme: Scheme::EulerIto,
            ..opts(50_000, 1e-3, 9, 11)
        },
    )
    .unwrap();
    let b = compare_moments(&bad, &reference(&cfg, &c, &bad)).unwrap();
    assert!(b.final_z[0] > 5.0, "{b:?}");
}

#[test]
fn csv_has_the_documented_columns() {
    let cfg = EngineConfig::new(0.5, NoiseParams::NONE, 1.0).unwrap();
    let c = ControlProfile::constant(1.0, 1.0).unwrap();
    let s = simulate_ensemble(&cfg, &c, &opts(100, 1e-3, 0, 3)).unwrap();
    let mut buf = Vec::new();
    s.write_csv(&reference(&cfg, &c, &s), &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(
        text.lines().next().unwrap(),
        "t,E_mc,L_mc,C_mc,se_E,se_L,se_C,E_ode,L_ode,C_ode"
    );
    assert_eq!(text.lines().count(), 4);
}

#[test]
fn ensemble_starts_thermal_even_when_the_control_starts_low() {
    let cfg = EngineConfig::new(0.5, NoiseParams::dephasing(0.01).unwrap(), 1.0).unwrap();
    let c = ControlProfile::piecewise_constant(vec![0.5], vec![0.25, 0.6], 1.0).unwrap();
    let s = simulate_ensemble(&cfg, &c, &opts(20_000, 1e-3, 2, 11)).unwrap();
    let m = compare_moments(&s, &reference(&cfg, &c, &s)).unwrap();
    assert!(m.overall_max_z() < 4.5, "{m:?}");
}
