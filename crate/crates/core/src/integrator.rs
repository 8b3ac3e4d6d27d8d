//! Adaptive integration of the moment equations under a control profile.
//!
//! This is the independent scorer for every candidate control: a solution
//! of the discrete program is only trusted after its interpolated control
//! has been re-simulated here.

use std::cell::Cell;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::controls::{fmt, ControlProfile};
use crate::dynamics::{
    casimir_companion, delta_measure, parasitic_energy, rhs_unchecked, to_physical, EngineConfig,
    MomentState, PhysicalState,
};
use crate::error::{domain, Error, Result};
use crate::ode::{self, OdeSolution, StepControl, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegrationOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_step: f64,
    /// Number of evenly spaced output samples, endpoints included.
    pub dense_output_samples: usize,
}

impl Default for IntegrationOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-9,
            abs_tol: 1e-11,
            max_step: 1.0,
            dense_output_samples: 1001,
        }
    }
}

impl IntegrationOptions {
    pub fn validate(&self) -> Result<()> {
        let in_unit = |v: f64| v > 0.0 && v < 1.0;
        if !in_unit(self.rel_tol) || !in_unit(self.abs_tol) {
            return Err(domain("integration tolerances must lie in (0, 1)"));
        }
        if !(self.max_step > 0.0) {
            return Err(domain("max_step must be positive"));
        }
        Ok(())
    }

    pub(crate) fn step_control(&self) -> StepControl {
        StepControl {
            rel_tol: self.rel_tol,
            abs_tol: self.abs_tol,
            max_step: self.max_step,
            max_steps: 2_000_000,
        }
    }
}

/// Sampled solution of the moment equations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<MomentState>,
    /// Clamped control at each sample.
    pub controls: Vec<f64>,
    /// Control evaluations that fell outside `[u_min, 1]` and were clamped.
    pub clamp_events: usize,
    pub rhs_evaluations: usize,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
    /// End-of-integration state (not interpolated).
    pub final_state: MomentState,
    /// Clamped control at the final time.
    pub final_control: f64,
}

impl Trajectory {
    pub fn duration(&self) -> f64 {
        *self.times.last().unwrap_or(&0.0)
    }

    /// Physical view of the final state at the final control value.
    pub fn final_physical(&self) -> Result<PhysicalState> {
        to_physical(&self.final_state, self.final_control)
    }

    pub fn casimir(&self) -> Vec<f64> {
        self.states.iter().map(casimir_companion).collect()
    }

    pub fn physical(&self) -> Result<Vec<PhysicalState>> {
        self.states
            .iter()
            .zip(&self.controls)
            .map(|(s, &u)| to_physical(s, u))
            .collect()
    }

    /// Columns `t, x1, x2, x3, u, E, L, C, X`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["t", "x1", "x2", "x3", "u", "E", "L", "C", "X"])?;
        for ((&t, s), &u) in self.times.iter().zip(&self.states).zip(&self.controls) {
            let p = to_physical(s, u)?;
            w.write_record([
                fmt(t),
                fmt(s.x1),
                fmt(s.x2),
                fmt(s.x3),
                fmt(u),
                fmt(p.energy),
                fmt(p.lagrangian_mean),
                fmt(p.correlation),
                fmt(casimir_companion(s)),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Integrates from the thermal state `(1, 1, 0)` over `[0, duration]`.
pub fn integrate(
    config: &EngineConfig,
    control: &ControlProfile,
    opts: &IntegrationOptions,
) -> Result<Trajectory> {
    let n = opts.dense_output_samples.max(2);
    let times: Vec<f64> = (0..n)
        .map(|i| config.duration * i as f64 / (n - 1) as f64)
        .collect();
    integrate_at(config, control, opts, &times)
}

/// Like [`integrate`] but sampled at caller-supplied ascending times.
pub fn integrate_at(
    config: &EngineConfig,
    control: &ControlProfile,
    opts: &IntegrationOptions,
    sample_times: &[f64],
) -> Result<Trajectory> {
    opts.validate()?;
    let duration = config.duration;
    if (control.duration() - duration).abs() > 1e-9 * duration.max(1.0) {
        return Err(domain(format!(
            "control spans {} but the stroke lasts {duration}",
            control.duration()
        )));
    }
    if sample_times
        .iter()
        .any(|&t| !(t >= 0.0 && t <= duration * (1.0 + 1e-12)))
        || sample_times.windows(2).any(|w| w[0] >= w[1])
    {
        return Err(domain("sample times must be ascending within [0, duration]"));
    }
    let lo = config.u_min();
    let clamps = Cell::new(0usize);
    let mut first_error: Option<Error> = None;
    let u_at = |t: f64| -> Result<f64> {
        let (u, clamped) = control.clamped(t, lo, 1.0)?;
        if clamped {
            clamps.set(clamps.get() + 1);
        }
        Ok(u)
    };

    let mut edges = vec![0.0];
    edges.extend(control.breakpoints());
    edges.push(duration);

    let ctl = opts.step_control();
    let mut y: Vec3 = MomentState::INITIAL.to_array();
    let mut segments: Vec<OdeSolution> = Vec::with_capacity(edges.len() - 1);
    for w in edges.windows(2) {
        let (a, b) = (w[0], w[1]);
        // Piecewise controls are sampled strictly inside the segment so the
        // right-continuous value of the current piece is used throughout.
        let mid_guard = 1e-12 * (b - a);
        let sol = ode::solve(
            |t, x: &Vec3| {
                let tt = t.clamp(a + mid_guard, b - mid_guard);
                let u = u_at(tt)?;
                Ok(rhs_unchecked(*x, u, &config.noise))
            },
            a,
            y,
            b,
            &ctl,
            None::<fn(f64, &Vec3) -> f64>,
        )?;
        for s in &sol.steps {
            let end = s.eval(s.t0 + s.h);
            if !(end[0] > 0.0 && end[1] > 0.0) {
                first_error.get_or_insert(Error::Domain(format!(
                    "positivity of x1, x2 violated at t = {}",
                    s.t0 + s.h
                )));
            }
        }
        y = sol.y_end;
        segments.push(sol);
    }
    if let Some(e) = first_error {
        return Err(e);
    }

    let mut states = Vec::with_capacity(sample_times.len());
    let mut controls = Vec::with_capacity(sample_times.len());
    let mut seg = 0;
    for &t in sample_times {
        while seg + 1 < segments.len() && t >= edges[seg + 1] {
            seg += 1;
        }
        states.push(MomentState::from_array(segments[seg].eval(t)));
        controls.push(control.clamped(t, lo, 1.0)?.0);
    }
    let final_control = control.clamped(duration, lo, 1.0)?.0;
    Ok(Trajectory {
        times: sample_times.to_vec(),
        states,
        controls,
        clamp_events: clamps.get(),
        rhs_evaluations: segments.iter().map(|s| s.evaluations).sum(),
        accepted_steps: segments.iter().map(|s| s.steps.len()).sum(),
        rejected_steps: segments.iter().map(|s| s.rejected).sum(),
        final_state: MomentState::from_array(y),
        final_control,
    })
}

/// Figures of merit of one control.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Score {
    pub delta: f64,
    pub parasitic: f64,
    /// Final moments evaluated at `u(T) = (ω_c/ω_h)²`.
    pub final_physical: PhysicalState,
    pub final_state: MomentState,
    pub clamp_events: usize,
}

/// Integrates and evaluates `δ` and the parasitic energy at the end of the
/// stroke, taking `u(T) = (ω_c/ω_h)²`.
pub fn score_control(
    config: &EngineConfig,
    control: &ControlProfile,
    opts: &IntegrationOptions,
) -> Result<Score> {
    let traj = integrate(config, control, opts)?;
    score_final(config, &traj.final_state, traj.clamp_events)
}

pub(crate) fn score_final(
    config: &EngineConfig,
    final_state: &MomentState,
    clamp_events: usize,
) -> Result<Score> {
    let final_physical = to_physical(final_state, config.u_min())?;
    Ok(Score {
        delta: delta_measure(final_physical.energy, config.freq_ratio)?,
        parasitic: parasitic_energy(&final_physical),
        final_physical,
        final_state: *final_state,
        clamp_events,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::controls::{omega_profile, t_n};
    use crate::dynamics::NoiseParams;
    use approx::assert_abs_diff_eq;

    const R: f64 = 1.0 / 3.0;

    #[test]
    fn equilibrium_is_preserved() {
        let cfg = EngineConfig::new(R, NoiseParams::NONE, 7.0).unwrap();
        let traj = integrate(&cfg, &ControlProfile::constant(1.0, 7.0).unwrap(), &Default::default()).unwrap();
        assert_eq!(traj.times[0], 0.0);
        assert_eq!(*traj.times.last().unwrap(), 7.0);
        assert_eq!(traj.states[0], MomentState::INITIAL);
        for v in traj.final_state.to_array().iter().zip([1.0, 1.0, 0.0]) {
            assert_abs_diff_eq!(*v.0, v.1, epsilon = 1e-14);
        }
    }

    #[test]
    fn reference_profile_closes_without_noise() {
        let cfg = EngineConfig::new(R, NoiseParams::NONE, t_n(1, R).unwrap()).unwrap();
        let traj = integrate(&cfg, &omega_profile(1, R).unwrap(), &Default::default()).unwrap();
        let p = traj.final_physical().unwrap();
        assert!(p.lagrangian_mean.abs() < 1e-6);
        assert!(p.correlation.abs() < 1e-6);
        assert_abs_diff_eq!(p.energy, R, epsilon = 1e-6);
        let s = score_control(&cfg, &omega_profile(1, R).unwrap(), &Default::default()).unwrap();
        assert!(s.delta.abs() < 3e-6);
    }

    #[test]
    fn mismatched_durations_are_rejected() {
        let cfg = EngineConfig::new(R, NoiseParams::NONE, 2.0).unwrap();
        let c = ControlProfile::constant(0.5, 3.0).unwrap();
        assert!(integrate(&cfg, &c, &Default::default()).is_err());
    }

    #[test]
    fn overshooting_controls_are_clamped_and_counted() {
        let cfg = EngineConfig::new(R, NoiseParams::NONE, 1.0).unwrap();
        let c = ControlProfile::constant(1.5, 1.0).unwrap();
        let traj = integrate(&cfg, &c, &Default::default()).unwrap();
        assert!(traj.clamp_events > 0);
        assert!(traj.controls.iter().all(|&u| u == 1.0));
        assert_abs_diff_eq!(traj.final_state.x1, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn csv_has_expected_columns() {
        let cfg = EngineConfig::new(R, NoiseParams::NONE, 1.0).unwrap();
        let opts = IntegrationOptions {
            dense_output_samples: 3,
            ..Default::default()
        };
        let traj = integrate(&cfg, &ControlProfile::constant(1.0, 1.0).unwrap(), &opts).unwrap();
        let mut buf = Vec::new();
        traj.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "t,x1,x2,x3,u,E,L,C,X");
        assert_eq!(lines.count(), 3);
    }
}
