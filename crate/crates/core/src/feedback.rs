//! Adiabatic feedback protocols.
//!
//! Both protocols first hold `u` at its lower bound until `x3` reaches a
//! small target `ε`, then steer with a state feedback law that keeps
//! `ẋ3 = 0` until the law itself reaches the lower bound:
//!
//! * noiseless: `u = x2/x1`, preserving `x1 x2 = 1 + ε²`;
//! * pure dephasing: `u = x2/(x1 + 4γ_p x3)`, preserving
//!   `x1 x2 + 4γ_p ε x2`.
//!
//! The closed loop is integrated directly; the recorded control is
//! returned as an open-loop profile for replay.

use serde::{Deserialize, Serialize};

use crate::controls::ControlProfile;
use crate::dynamics::{rhs_unchecked, EngineConfig, MomentState, NoiseParams};
use crate::error::{domain, Error, Result};
use crate::integrator::{score_final, IntegrationOptions, Score, Trajectory};
use crate::ode::{self, OdeSolution, Vec3};

pub const DEFAULT_EPSILON: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum FeedbackMode {
    Noiseless,
    Dephasing { gamma_p: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeedbackProtocol {
    pub epsilon: f64,
    pub mode: FeedbackMode,
}

impl FeedbackProtocol {
    pub fn noiseless(epsilon: f64) -> Result<Self> {
        check_epsilon(epsilon)?;
        Ok(Self {
            epsilon,
            mode: FeedbackMode::Noiseless,
        })
    }

    pub fn dephasing(epsilon: f64, gamma_p: f64) -> Result<Self> {
        check_epsilon(epsilon)?;
        if !(gamma_p > 0.0 && gamma_p.is_finite()) {
            return Err(domain("dephasing feedback needs gamma_p > 0"));
        }
        Ok(Self {
            epsilon,
            mode: FeedbackMode::Dephasing { gamma_p },
        })
    }

    /// The protocol matching a noise setting: dephasing when only `γ_p`
    /// is present, noiseless when there is no noise.
    pub fn for_noise(epsilon: f64, noise: &NoiseParams) -> Result<Self> {
        if noise.gamma_a != 0.0 {
            return Err(domain("feedback protocols require gamma_a = 0"));
        }
        if noise.gamma_p > 0.0 {
            Self::dephasing(epsilon, noise.gamma_p)
        } else {
            Self::noiseless(epsilon)
        }
    }

    pub fn noise(&self) -> NoiseParams {
        match self.mode {
            FeedbackMode::Noiseless => NoiseParams::NONE,
            FeedbackMode::Dephasing { gamma_p } => NoiseParams {
                gamma_a: 0.0,
                gamma_p,
            },
        }
    }

    fn gamma_p(&self) -> f64 {
        self.noise().gamma_p
    }

    /// Feedback law evaluated at `x`.
    pub fn law(&self, x: &Vec3) -> f64 {
        x[1] / (x[0] + 4.0 * self.gamma_p() * x[2])
    }

    /// Quantity conserved while the law is active.
    pub fn invariant(&self, x: &Vec3) -> f64 {
        x[0] * x[1] + 4.0 * self.gamma_p() * self.epsilon * x[1]
    }

    /// Runs the closed loop for a given frequency ratio.
    pub fn run(&self, freq_ratio: f64, opts: &IntegrationOptions) -> Result<FeedbackRun> {
        opts.validate()?;
        // Validates the ratio.
        let cfg = EngineConfig::new(freq_ratio, self.noise(), 1.0)?;
        let lo = cfg.u_min();
        let noise = self.noise();
        let eps = self.epsilon;
        let ctl = opts.step_control();

        let bang_limit = 100.0 * eps / (1.0 - lo) + 10.0;
        let bang = ode::solve(
            |_, x: &Vec3| Ok(rhs_unchecked(*x, lo, &noise)),
            0.0,
            MomentState::INITIAL.to_array(),
            bang_limit,
            &ctl,
            Some(|_: f64, x: &Vec3| x[2] - eps),
        )?;
        let t_bang = bang.event_time.ok_or_else(|| {
            Error::Protocol(format!("x3 never reached epsilon = {eps} under the lower bound"))
        })?;
        let start = bang.y_end;
        let u_start = self.law(&start);
        if u_start > 1.0 {
            return Err(Error::Protocol(format!(
                "feedback control {u_start:.6} exceeds 1 at switch-on; epsilon = {eps} is too large"
            )));
        }
        if u_start <= lo {
            return Err(Error::Protocol(
                "feedback law already at the lower bound at switch-on".into(),
            ));
        }

        let feedback_limit = t_bang + 200.0 / eps + 100.0;
        let over = std::cell::Cell::new(false);
        let fb = ode::solve(
            |_, x: &Vec3| {
                let u = self.law(x);
                if u > 1.0 {
                    over.set(true);
                }
                Ok(rhs_unchecked(*x, u, &noise))
            },
            t_bang,
            start,
            feedback_limit,
            &ctl,
            Some(|_: f64, x: &Vec3| lo - self.law(x)),
        )?;
        if over.get() {
            return Err(Error::Protocol(format!(
                "feedback control exceeded 1; epsilon = {eps} is too large"
            )));
        }
        let duration = fb.event_time.ok_or_else(|| {
            Error::Protocol("feedback law never reached the lower control bound".into())
        })?;

        let n_fb = opts.dense_output_samples.max(2);
        let n_bang = (n_fb / 20).max(11);
        let mut times = Vec::with_capacity(n_bang + n_fb);
        let mut states = Vec::with_capacity(n_bang + n_fb);
        let mut controls = Vec::with_capacity(n_bang + n_fb);
        push_samples(&bang, 0.0, t_bang, n_bang, |_| lo, &mut times, &mut states, &mut controls);
        push_samples(
            &fb,
            t_bang,
            duration,
            n_fb,
            |x| self.law(x).max(lo),
            &mut times,
            &mut states,
            &mut controls,
        );

        let c_start = self.invariant(&start);
        let mut invariant_drift: f64 = 0.0;
        let mut max_x3_rate: f64 = 0.0;
        let mut prev_u = f64::INFINITY;
        let mut monotone = true;
        for s in &states[n_bang..] {
            let x = s.to_array();
            invariant_drift = invariant_drift.max((self.invariant(&x) - c_start).abs());
            let u = self.law(&x);
            max_x3_rate = max_x3_rate.max(rhs_unchecked(x, u, &noise)[2].abs());
            if u > prev_u + 1e-12 {
                monotone = false;
            }
            prev_u = u;
        }

        let final_state = MomentState::from_array(fb.y_end);
        let mut final_cfg = cfg;
        final_cfg.duration = duration;
        let score = score_final(&final_cfg, &final_state, 0)?;
        let profile = ControlProfile::tabulated(times.clone(), controls.clone(), Vec::new())?;
        let trajectory = Trajectory {
            times,
            states,
            controls,
            clamp_events: 0,
            rhs_evaluations: bang.evaluations + fb.evaluations,
            accepted_steps: bang.steps.len() + fb.steps.len(),
            rejected_steps: bang.rejected + fb.rejected,
            final_state,
            final_control: lo,
        };
        Ok(FeedbackRun {
            protocol: *self,
            freq_ratio,
            bang_duration: t_bang,
            duration,
            invariant_start: c_start,
            invariant_drift,
            max_x3_rate,
            control_monotone: monotone,
            score,
            trajectory,
            profile,
        })
    }
}

#[allow(clippy::too_many_arguments)]
fn push_samples(
    sol: &OdeSolution,
    a: f64,
    b: f64,
    n: usize,
    u_of: impl Fn(&Vec3) -> f64,
    times: &mut Vec<f64>,
    states: &mut Vec<MomentState>,
    controls: &mut Vec<f64>,
) {
    for i in 0..n {
        let t = if i + 1 == n { b } else { a + (b - a) * i as f64 / (n - 1) as f64 };
        let x = if i + 1 == n { sol.y_end } else { sol.eval(t) };
        times.push(t);
        states.push(MomentState::from_array(x));
        controls.push(u_of(&x));
    }
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if epsilon > 0.0 && epsilon <= 0.2 {
        Ok(())
    } else {
        Err(domain(format!("epsilon must lie in (0, 0.2], got {epsilon}")))
    }
}

/// Outcome of a closed-loop feedback run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackRun {
    pub protocol: FeedbackProtocol,
    pub freq_ratio: f64,
    /// Time spent at the lower bound building `x3 = ε`.
    pub bang_duration: f64,
    /// Total protocol duration `ω_h T`.
    pub duration: f64,
    /// Conserved quantity at switch-on.
    pub invariant_start: f64,
    /// Largest deviation of the conserved quantity during feedback.
    pub invariant_drift: f64,
    /// Largest `|ẋ3|` during feedback.
    pub max_x3_rate: f64,
    /// Whether the feedback control was non-increasing at every sample.
    pub control_monotone: bool,
    pub score: Score,
    pub trajectory: Trajectory,
    /// Recorded control for open-loop replay.
    pub profile: ControlProfile,
}

/// Noiseless protocol with law `u = x2/x1`.
pub fn feedback_noiseless(epsilon: f64, freq_ratio: f64, opts: &IntegrationOptions) -> Result<FeedbackRun> {
    FeedbackProtocol::noiseless(epsilon)?.run(freq_ratio, opts)
}

/// Pure-dephasing protocol with law `u = x2/(x1 + 4γ_p x3)`.
pub fn feedback_dephasing(
    epsilon: f64,
    gamma_p: f64,
    freq_ratio: f64,
    opts: &IntegrationOptions,
) -> Result<FeedbackRun> {
    FeedbackProtocol::dephasing(epsilon, gamma_p)?.run(freq_ratio, opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrator::score_control;
    use approx::assert_abs_diff_eq;

    const R: f64 = 1.0 / 3.0;

    #[test]
    fn noiseless_protocol_follows_invariant() {
        let eps = 0.05;
        let run = feedback_noiseless(eps, R, &Default::default()).unwrap();
        assert_abs_diff_eq!(run.invariant_start, 1.0 + eps * eps, epsilon = 1e-9);
        assert!(run.invariant_drift < 1e-6, "drift {}", run.invariant_drift);
        assert!(run.max_x3_rate < 1e-9, "x3 rate {}", run.max_x3_rate);
        assert!(run.control_monotone);
        // x2 = r²x1 and x1 x2 = 1 + ε² at the end.
        let s = run.score.final_state;
        let k = (1.0 + eps * eps).sqrt();
        assert_abs_diff_eq!(s.x1, k / R, epsilon = 1e-6);
        assert_abs_diff_eq!(s.x2, R * k, epsilon = 1e-6);
        assert_abs_diff_eq!(s.x3, eps, epsilon = 1e-9);
        assert_abs_diff_eq!(run.score.delta, k - 1.0, epsilon = 1e-6);
    }

    #[test]
    fn noiseless_delta_shrinks_with_epsilon() {
        let opts = IntegrationOptions::default();
        let d: Vec<f64> = [0.1, 0.05, 0.025]
            .iter()
            .map(|&e| feedback_noiseless(e, R, &opts).unwrap().score.delta)
            .collect();
        assert!(d[0] > d[1] && d[1] > d[2]);
        assert!(d[2] < 1e-3);
    }

    #[test]
    fn dephasing_protocol_follows_invariant() {
        let run = feedback_dephasing(0.05, 0.01, R, &Default::default()).unwrap();
        assert!(run.invariant_drift < 1e-6, "drift {}", run.invariant_drift);
        assert!(run.max_x3_rate < 1e-9);
        assert!(run.control_monotone);
        for (s, &u) in run.trajectory.states.iter().zip(&run.trajectory.controls).skip(60) {
            let p = crate::dynamics::to_physical(s, u).unwrap();
            assert!(p.correlation.abs() < 0.05);
        }
    }

    #[test]
    fn large_epsilon_is_rejected() {
        assert!(FeedbackProtocol::noiseless(0.0).is_err());
        assert!(FeedbackProtocol::noiseless(0.3).is_err());
        assert!(FeedbackProtocol::dephasing(0.05, 0.0).is_err());
        assert!(FeedbackProtocol::for_noise(0.05, &NoiseParams::amplitude(0.02).unwrap()).is_err());
    }

    #[test]
    fn recorded_profile_replays_open_loop() {
        let run = feedback_dephasing(0.05, 0.01, R, &Default::default()).unwrap();
        let cfg = EngineConfig::new(R, run.protocol.noise(), run.duration).unwrap();
        let replay = score_control(&cfg, &run.profile, &Default::default()).unwrap();
        assert!((replay.delta - run.score.delta).abs() < 1e-3);
    }
}
