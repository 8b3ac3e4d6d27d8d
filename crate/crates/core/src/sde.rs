//! Monte-Carlo check of the moment equations with an ensemble of classical
//! oscillators under stiffness noise and phase noise:
//!
//! ```text
//! dp = −u q (dt + ∘dw_a + ∘dw_p),   dq = p (dt + ∘dw_p),
//! ```
//!
//! with `dw_a ~ N(0, 2γ_a dt)` and `dw_p ~ N(0, 2γ_p dt)` independent.

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::controls::{fmt, ControlProfile};
use crate::dynamics::EngineConfig;
use crate::error::{domain, Error, Result};
use crate::integrator::Trajectory;

/// Time-stepping scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    /// Stratonovich-consistent predictor–corrector.
    Heun,
    /// Euler–Maruyama read in the Itô sense without drift correction.
    /// Only useful as a negative control.
    EulerIto,
}

/// How the two Wiener processes are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseCoupling {
    Independent,
    /// Both increments driven by the same normal draw. Negative control.
    Common,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SdeOptions {
    pub ensemble_size: usize,
    pub time_step: f64,
    pub seed: u64,
    pub scheme: Scheme,
    pub coupling: NoiseCoupling,
    /// Evenly spaced output samples, endpoints included.
    pub samples: usize,
}

impl Default for SdeOptions {
    fn default() -> Self {
        Self {
            ensemble_size: 100_000,
            time_step: 1e-4,
            seed: 0,
            scheme: Scheme::Heun,
            coupling: NoiseCoupling::Independent,
            samples: 101,
        }
    }
}

impl SdeOptions {
    pub fn validate(&self, config: &EngineConfig) -> Result<()> {
        if self.ensemble_size < 2 {
            return Err(domain("ensemble_size must be at least 2"));
        }
        if self.samples < 2 {
            return Err(domain("at least two samples are needed"));
        }
        let dt = self.time_step;
        let gamma = config.noise.gamma_a.max(config.noise.gamma_p);
        // u ≤ 1, so dt itself bounds dt·u.
        if !(dt > 0.0 && dt <= 1e-2 && dt * gamma <= 1e-3) {
            return Err(domain(format!(
                "time step {dt} too coarse; need dt <= 1e-2 and dt·γ <= 1e-3"
            )));
        }
        Ok(())
    }
}

/// Ensemble means of `E, L, C` with their standard errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSeries {
    pub times: Vec<f64>,
    pub energy: Vec<f64>,
    pub lagrangian: Vec<f64>,
    pub correlation: Vec<f64>,
    pub se_energy: Vec<f64>,
    pub se_lagrangian: Vec<f64>,
    pub se_correlation: Vec<f64>,
    pub ensemble_size: usize,
    pub diverged: usize,
    pub time_step: f64,
}

impl EnsembleSeries {
    /// Noise-free series built from a deterministic trajectory, with zero
    /// standard errors.
    pub fn from_trajectory(traj: &Trajectory) -> Result<Self> {
        let phys = traj.physical()?;
        let n = phys.len();
        Ok(Self {
            times: traj.times.clone(),
            energy: phys.iter().map(|p| p.energy).collect(),
            lagrangian: phys.iter().map(|p| p.lagrangian_mean).collect(),
            correlation: phys.iter().map(|p| p.correlation).collect(),
            se_energy: vec![0.0; n],
            se_lagrangian: vec![0.0; n],
            se_correlation: vec![0.0; n],
            ensemble_size: 0,
            diverged: 0,
            time_step: 0.0,
        })
    }

    /// Columns `t, E_mc, L_mc, C_mc, se_E, se_L, se_C, E_ode, L_ode, C_ode`.
    pub fn write_csv<W: Write>(&self, reference: &Trajectory, writer: W) -> Result<()> {
        check_alignment(self, reference)?;
        let phys = reference.physical()?;
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            "t", "E_mc", "L_mc", "C_mc", "se_E", "se_L", "se_C", "E_ode", "L_ode", "C_ode",
        ])?;
        for (i, p) in phys.iter().enumerate() {
            w.write_record([
                fmt(self.times[i]),
                fmt(self.energy[i]),
                fmt(self.lagrangian[i]),
                fmt(self.correlation[i]),
                fmt(self.se_energy[i]),
                fmt(self.se_lagrangian[i]),
                fmt(self.se_correlation[i]),
                fmt(p.energy),
                fmt(p.lagrangian_mean),
                fmt(p.correlation),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

const CHUNK: usize = 1024;
const BLOWUP: f64 = 1e8;

/// Per-chunk accumulators: for every sample and channel, the sum and the
/// sum of squares, plus the number of diverged paths.
struct Accum {
    sums: Vec<[f64; 6]>,
    diverged: usize,
}

fn step_count(duration: f64, dt: f64) -> usize {
    ((duration / dt).round() as usize).max(1)
}

/// Runs the ensemble from the thermal state and returns the mean moments
/// at `opts.samples` evenly spaced times, aligned to the step grid.
pub fn simulate_ensemble(
    config: &EngineConfig,
    control: &ControlProfile,
    opts: &SdeOptions,
) -> Result<EnsembleSeries> {
    opts.validate(config)?;
    let duration = config.duration;
    if (control.duration() - duration).abs() > 1e-9 * duration.max(1.0) {
        return Err(domain("control and stroke durations differ"));
    }
    let steps = step_count(duration, opts.time_step);
    let dt = duration / steps as f64;
    let lo = config.u_min();
    let u: Vec<f64> = (0..=steps)
        .map(|k| control.clamped(k as f64 * dt, lo, 1.0).map(|v| v.0))
        .collect::<Result<_>>()?;
    let sample_steps: Vec<usize> = (0..opts.samples)
        .map(|j| ((j as f64) * steps as f64 / (opts.samples - 1) as f64).round() as usize)
        .collect();
    if sample_steps.windows(2).any(|w| w[0] == w[1]) {
        return Err(domain("more samples than time steps"));
    }

    let noise = config.noise;
    let sa = (2.0 * noise.gamma_a * dt).sqrt();
    let sp = (2.0 * noise.gamma_p * dt).sqrt();
    let n = opts.ensemble_size;
    let chunks = n.div_ceil(CHUNK);

    let run_chunk = |c: usize| -> Accum {
        let mut acc = Accum {
            sums: vec![[0.0; 6]; sample_steps.len()],
            diverged: 0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        rng.set_stream(c as u64);
        let mut normal = || -> f64 { StandardNormal.sample(&mut rng) };
        for _ in (c * CHUNK)..((c + 1) * CHUNK).min(n) {
            // Thermal state at ω_h, whatever the control does at t = 0.
            let mut q = normal();
            let mut p = normal();
            let mut next = 0;
            let mut alive = true;
            let mut record: Vec<[f64; 3]> = Vec::with_capacity(sample_steps.len());
            for k in 0..=steps {
                if k == sample_steps[next] {
                    let uk = u[k];
                    let (p2, uq2) = (p * p, uk * q * q);
                    record.push([0.5 * (p2 + uq2), 0.5 * (p2 - uq2), uk.sqrt() * q * p]);
                    next += 1;
                    if next == sample_steps.len() {
                        break;
                    }
                }
                let xi_a = normal();
                let xi_p = match opts.coupling {
                    NoiseCoupling::Independent => normal(),
                    NoiseCoupling::Common => xi_a,
                };
                let (dwa, dwp) = (sa * xi_a, sp * xi_p);
                let (u0, u1) = (u[k], u[k + 1]);
                // Increment of (q, p) for the frozen noise of this step.
                let incr = |q: f64, p: f64, uu: f64| -> (f64, f64) {
                    (p * (dt + dwp), -uu * q * (dt + dwa + dwp))
                };
                let (dq0, dp0) = incr(q, p, u0);
                match opts.scheme {
                    Scheme::Heun => {
                        let (dq1, dp1) = incr(q + dq0, p + dp0, u1);
                        q += 0.5 * (dq0 + dq1);
                        p += 0.5 * (dp0 + dp1);
                    }
                    Scheme::EulerIto => {
                        q += dq0;
                        p += dp0;
                    }
                }
                if !(q.abs() < BLOWUP && p.abs() < BLOWUP) {
                    alive = false;
                    break;
                }
            }
            if !alive {
                acc.diverged += 1;
                continue;
            }
            for (s, r) in acc.sums.iter_mut().zip(&record) {
                for ch in 0..3 {
                    s[ch] += r[ch];
                    s[ch + 3] += r[ch] * r[ch];
                }
            }
        }
        acc
    };

    let parts: Vec<Accum> = (0..chunks).into_par_iter().map(run_chunk).collect();
    let mut total = vec![[0.0; 6]; sample_steps.len()];
    let mut diverged = 0;
    for part in &parts {
        diverged += part.diverged;
        for (t, s) in total.iter_mut().zip(&part.sums) {
            for ch in 0..6 {
                t[ch] += s[ch];
            }
        }
    }
    if diverged * 1000 > n {
        return Err(Error::NoiseTooStrong { diverged, total: n });
    }
    let m = (n - diverged) as f64;
    let mut series = EnsembleSeries {
        times: sample_steps.iter().map(|&k| k as f64 * dt).collect(),
        energy: Vec::new(),
        lagrangian: Vec::new(),
        correlation: Vec::new(),
        se_energy: Vec::new(),
        se_lagrangian: Vec::new(),
        se_correlation: Vec::new(),
        ensemble_size: n,
        diverged,
        time_step: dt,
    };
    for s in &total {
        let stat = |ch: usize| {
            let mean = s[ch] / m;
            let var = ((s[ch + 3] / m - mean * mean) * m / (m - 1.0)).max(0.0);
            (mean, (var / m).sqrt())
        };
        let (e, se_e) = stat(0);
        let (l, se_l) = stat(1);
        let (c, se_c) = stat(2);
        series.energy.push(e);
        series.lagrangian.push(l);
        series.correlation.push(c);
        series.se_energy.push(se_e);
        series.se_lagrangian.push(se_l);
        series.se_correlation.push(se_c);
    }
    Ok(series)
}

/// Per-channel z-score summary, channels ordered `E, L, C`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentComparison {
    pub max_z: [f64; 3],
    pub fraction_above_3: [f64; 3],
    pub final_z: [f64; 3],
    pub samples: usize,
}

impl MomentComparison {
    pub fn overall_max_z(&self) -> f64 {
        self.max_z.iter().cloned().fold(0.0, f64::max)
    }

    pub fn overall_fraction_above_3(&self) -> f64 {
        self.fraction_above_3.iter().sum::<f64>() / 3.0
    }
}

fn check_alignment(series: &EnsembleSeries, traj: &Trajectory) -> Result<()> {
    if series.times.len() != traj.times.len() {
        return Err(Error::Alignment(format!(
            "{} ensemble samples against {} trajectory samples",
            series.times.len(),
            traj.times.len()
        )));
    }
    let scale = traj.duration().max(1.0);
    for (a, b) in series.times.iter().zip(&traj.times) {
        if (a - b).abs() > 1e-9 * scale {
            return Err(Error::Alignment(format!("sample time {a} against {b}")));
        }
    }
    Ok(())
}

/// `z = |mean − ode| / se` per sample and channel.
pub fn compare_moments(series: &EnsembleSeries, reference: &Trajectory) -> Result<MomentComparison> {
    check_alignment(series, reference)?;
    let phys = reference.physical()?;
    let mut max_z = [0.0f64; 3];
    let mut above = [0usize; 3];
    let mut final_z = [0.0; 3];
    let z = |mean: f64, se: f64, exact: f64| {
        let d = (mean - exact).abs();
        if d == 0.0 {
            0.0
        } else if se > 0.0 {
            d / se
        } else {
            f64::INFINITY
        }
    };
    for (i, p) in phys.iter().enumerate() {
        let zs = [
            z(series.energy[i], series.se_energy[i], p.energy),
            z(series.lagrangian[i], series.se_lagrangian[i], p.lagrangian_mean),
            z(series.correlation[i], series.se_correlation[i], p.correlation),
        ];
        for ch in 0..3 {
            max_z[ch] = max_z[ch].max(zs[ch]);
            if zs[ch] > 3.0 {
                above[ch] += 1;
            }
        }
        final_z = zs;
    }
    let n = phys.len() as f64;
    Ok(MomentComparison {
        max_z,
        fraction_above_3: above.map(|a| a as f64 / n),
        final_z,
        samples: phys.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::NoiseParams;
    use crate::integrator::{integrate_at, IntegrationOptions};

    fn small(seed: u64) -> SdeOptions {
        SdeOptions {
            ensemble_size: 4000,
            time_step: 1e-3,
            seed,
            samples: 11,
            ..Default::default()
        }
    }

    #[test]
    fn noiseless_equilibrium_keeps_zero_mean_l_and_c() {
        let cfg = EngineConfig::new(0.5, NoiseParams::NONE, 2.0).unwrap();
        let s = simulate_ensemble(&cfg, &ControlProfile::constant(1.0, 2.0).unwrap(), &small(3)).unwrap();
        for i in 0..s.times.len() {
            assert!(s.lagrangian[i].abs() < 5.0 * s.se_lagrangian[i], "{i} {} {}", s.lagrangian[i], s.se_lagrangian[i]);
            assert!(s.correlation[i].abs() < 5.0 * s.se_correlation[i], "{i} {} {}", s.correlation[i], s.se_correlation[i]);
            assert!((s.energy[i] - s.energy[0]).abs() < 1e-6);
        }
    }

    #[test]
    fn fixed_seed_is_reproducible_and_seeds_differ() {
        let cfg = EngineConfig::new(0.5, NoiseParams::dephasing(0.01).unwrap(), 1.0).unwrap();
        let c = ControlProfile::constant(0.7, 1.0).unwrap();
        let a = simulate_ensemble(&cfg, &c, &small(1)).unwrap();
        let b = simulate_ensemble(&cfg, &c, &small(1)).unwrap();
        let d = simulate_ensemble(&cfg, &c, &small(2)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.energy, d.energy);
    }

    #[test]
    fn self_comparison_gives_zero_scores() {
        let cfg = EngineConfig::new(0.5, NoiseParams::amplitude(0.02).unwrap(), 1.0).unwrap();
        let c = ControlProfile::constant(0.6, 1.0).unwrap();
        let times: Vec<f64> = (0..5).map(|i| i as f64 * 0.25).collect();
        let traj = integrate_at(&cfg, &c, &IntegrationOptions::default(), &times).unwrap();
        let series = EnsembleSeries::from_trajectory(&traj).unwrap();
        let cmp = compare_moments(&series, &traj).unwrap();
        assert_eq!(cmp.max_z, [0.0; 3]);
        let short = integrate_at(&cfg, &c, &IntegrationOptions::default(), &times[..4]).unwrap();
        assert!(matches!(compare_moments(&series, &short), Err(Error::Alignment(_))));
    }

    #[test]
    fn standard_errors_shrink_with_ensemble_size() {
        let cfg = EngineConfig::new(0.5, NoiseParams::dephasing(0.02).unwrap(), 0.5).unwrap();
        let c = ControlProfile::constant(1.0, 0.5).unwrap();
        let mut o = small(5);
        o.ensemble_size = 1000;
        let a = simulate_ensemble(&cfg, &c, &o).unwrap();
        o.ensemble_size = 100_000;
        o.samples = 2;
        let b = simulate_ensemble(&cfg, &c, &o).unwrap();
        let ratio = a.se_energy[10] / b.se_energy[1];
        assert!((ratio - 10.0).abs() < 1.5, "{ratio}");
    }

    #[test]
    fn coarse_steps_are_rejected() {
        let cfg = EngineConfig::new(0.5, NoiseParams::NONE, 1.0).unwrap();
        let c = ControlProfile::constant(1.0, 1.0).unwrap();
        let o = SdeOptions {
            time_step: 0.1,
            ..small(0)
        };
        assert!(simulate_ensemble(&cfg, &c, &o).is_err());
    }
}
