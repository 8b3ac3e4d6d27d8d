//! Shared fixtures for the benchmarks under `benches/`.

use otto_core::{omega_profile, t_n, ControlProfile, EngineConfig, NoiseParams};

pub const RATIO: f64 = 1.0 / 3.0;

/// Dephasing stroke over the first reference duration, with its
/// reference control.
pub fn dephasing_stroke() -> (EngineConfig, ControlProfile) {
    let t1 = t_n(1, RATIO).expect("valid ratio");
    let cfg = EngineConfig::new(RATIO, NoiseParams::dephasing(0.01).expect("valid noise"), t1)
        .expect("valid config");
    (cfg, omega_profile(1, RATIO).expect("valid profile"))
}

/// A state vector on the collocation layout of `order`, filled from the
/// thermal state with a linear control ramp.
pub fn ramp_point(cfg: &EngineConfig, order: usize) -> Vec<f64> {
    let n = order + 1;
    let lo = cfg.u_min();
    let mut z = vec![0.0; 4 * n];
    for k in 0..n {
        let s = k as f64 / order as f64;
        z[k] = 1.0 + s * (1.0 / RATIO - 1.0);
        z[n + k] = 1.0 + s * (RATIO - 1.0);
        z[2 * n + k] = 0.1 * (std::f64::consts::PI * s).sin();
        z[3 * n + k] = 1.0 + s * (lo - 1.0);
    }
    z
}
