//! Starting points for the multistart policy.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::controls::{omega_profile_rescaled, ControlProfile};
use crate::error::Result;
use crate::integrator::{integrate_at, IntegrationOptions};
use crate::lgl::barycentric_eval;
use crate::transcription::{interpolate_control, CollocationProblem};

/// Nodal columns `(x1, x2, x3, u)` of a previous solution, possibly on a
/// different grid order or duration.
#[derive(Debug, Clone, PartialEq)]
pub struct WarmStart {
    pub nodes: Vec<f64>,
    pub columns: [Vec<f64>; 4],
}

impl WarmStart {
    pub(crate) fn from_solution(problem: &CollocationProblem, z: &[f64]) -> Self {
        let [a, b, c, d] = problem.split(z);
        Self {
            nodes: problem.grid.nodes.clone(),
            columns: [a.to_vec(), b.to_vec(), c.to_vec(), d.to_vec()],
        }
    }

    /// Maps onto `problem`'s grid. The time axis is rescaled implicitly
    /// since both grids live on `[-1, 1]`.
    pub(crate) fn to_vector(&self, problem: &CollocationProblem) -> Vec<f64> {
        if self.nodes == problem.grid.nodes {
            return self.columns.concat();
        }
        let weights = crate::lgl::LglGrid::new(self.nodes.len() - 1)
            .map(|g| g.weights)
            .unwrap_or_default();
        self.columns
            .iter()
            .flat_map(|col| {
                problem
                    .grid
                    .nodes
                    .iter()
                    .map(|&t| barycentric_eval(&self.nodes, &weights, col, t))
                    .collect::<Vec<_>>()
            })
            .collect()
    }
}

fn fill_states(problem: &CollocationProblem, control: &ControlProfile) -> Result<Vec<f64>> {
    let times = problem.node_times();
    let opts = IntegrationOptions {
        rel_tol: 1e-8,
        abs_tol: 1e-10,
        ..Default::default()
    };
    let traj = integrate_at(&problem.config, control, &opts, &times)?;
    let l = problem.layout;
    let mut z = vec![0.0; l.num_vars()];
    for k in 0..l.nodes {
        let s = traj.states[k].to_array();
        for r in 0..3 {
            z[l.x(r, k)] = s[r];
        }
        z[l.u(k)] = traj.controls[k];
    }
    Ok(z)
}

/// (a) reference profile rescaled to the requested duration.
pub(crate) fn reference_guess(problem: &CollocationProblem) -> Result<Vec<f64>> {
    let cfg = &problem.config;
    fill_states(problem, &omega_profile_rescaled(1, cfg.freq_ratio, cfg.duration)?)
}

/// (b) straight lines between the ideal endpoints.
pub(crate) fn linear_guess(problem: &CollocationProblem) -> Vec<f64> {
    let l = problem.layout;
    let r = problem.config.freq_ratio;
    let lo = problem.config.u_min();
    let mut z = vec![0.0; l.num_vars()];
    for (k, &tau) in problem.grid.nodes.iter().enumerate() {
        let s = 0.5 * (tau + 1.0);
        z[l.x(0, k)] = 1.0 + s * (1.0 / r - 1.0);
        z[l.x(1, k)] = 1.0 + s * (r - 1.0);
        z[l.u(k)] = 1.0 + s * (lo - 1.0);
    }
    z
}

/// (c) the reference control plus a smooth random perturbation that
/// vanishes at both ends; states re-integrated under the clamped result.
pub(crate) fn perturbed_guess(
    problem: &CollocationProblem,
    seed: u64,
    stream: u64,
    scale: f64,
) -> Result<Vec<f64>> {
    let cfg = &problem.config;
    let base = omega_profile_rescaled(1, cfg.freq_ratio, cfg.duration)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let normal = Normal::new(0.0, scale).expect("finite scale");
    let amps: Vec<f64> = (0..4).map(|_| normal.sample(&mut rng)).collect();
    let lo = cfg.u_min();
    let times = problem.node_times();
    let mut values = Vec::with_capacity(times.len());
    for &t in &times {
        let s = t / cfg.duration;
        let bump: f64 = amps
            .iter()
            .enumerate()
            .map(|(j, a)| a * ((j + 1) as f64 * std::f64::consts::PI * s).sin())
            .sum();
        values.push((base.value(t)? + (1.0 - lo) * bump).clamp(lo, 1.0));
    }
    let ctl = interpolate_control(&problem.grid, &values, cfg.duration)?;
    let mut z = fill_states(problem, &ctl)?;
    let l = problem.layout;
    for (k, v) in values.into_iter().enumerate() {
        z[l.u(k)] = v;
    }
    Ok(z)
}
