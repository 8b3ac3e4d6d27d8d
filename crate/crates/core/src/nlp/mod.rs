//! Solver for the transcribed program, multistart driver, duration sweeps
//! and minimum-feasible-time search.

mod al;
mod init;
mod search;

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{delta_measure, EngineConfig};
use crate::error::{domain, Result};
use crate::integrator::{score_control, IntegrationOptions};
use crate::transcription::{interpolate_control, transcribe, CollocationProblem};

pub use init::WarmStart;
pub use search::{
    min_feasible_time, sweep_duration, BracketStep, MinTimeResult, SweepPoint, TimeSearch,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    pub max_outer_iterations: usize,
    /// Newton iterations per subproblem.
    pub max_inner_iterations: usize,
    pub constraint_tolerance: f64,
    pub optimality_tolerance: f64,
    /// Violation below which a non-optimal point still counts as feasible.
    pub feasibility_tolerance: f64,
    pub multistart_count: usize,
    pub initial_penalty: f64,
    pub penalty_growth: f64,
    pub max_penalty: f64,
    /// Standard deviation of the random control perturbation, as a
    /// fraction of the admissible range.
    pub perturbation_scale: f64,
    pub seed: u64,
    pub integration: IntegrationOptions,
    /// Stop at the first start that reaches the feasibility tolerance,
    /// without driving it to optimality.
    pub feasibility_only: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            max_outer_iterations: 60,
            max_inner_iterations: 200,
            constraint_tolerance: 1e-8,
            optimality_tolerance: 1e-8,
            feasibility_tolerance: 1e-6,
            multistart_count: 8,
            initial_penalty: 1e4,
            penalty_growth: 10.0,
            max_penalty: 1e10,
            perturbation_scale: 0.15,
            seed: 0,
            integration: IntegrationOptions::default(),
            feasibility_only: false,
        }
    }
}

impl SolveOptions {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("constraint_tolerance", self.constraint_tolerance),
            ("optimality_tolerance", self.optimality_tolerance),
            ("feasibility_tolerance", self.feasibility_tolerance),
        ] {
            if !(v > 0.0 && v < 1e-2) {
                return Err(domain(format!("{name} must lie in (0, 1e-2), got {v}")));
            }
        }
        if self.multistart_count == 0 {
            return Err(domain("multistart_count must be at least 1"));
        }
        if self.max_outer_iterations == 0 || self.max_inner_iterations == 0 {
            return Err(domain("iteration limits must be positive"));
        }
        if !(self.penalty_growth > 1.0) || !(self.initial_penalty > 0.0) {
            return Err(domain("penalty must be positive and grow by a factor > 1"));
        }
        if !(self.perturbation_scale >= 0.0) {
            return Err(domain("perturbation_scale must be non-negative"));
        }
        self.integration.validate()
    }

    fn al_settings(&self) -> al::AlSettings {
        al::AlSettings {
            max_outer: self.max_outer_iterations,
            max_inner: self.max_inner_iterations,
            constraint_tol: self.constraint_tolerance,
            optimality_tol: self.optimality_tolerance,
            feasibility_tol: self.feasibility_tolerance,
            initial_penalty: self.initial_penalty,
            penalty_growth: self.penalty_growth,
            max_penalty: self.max_penalty,
            stop_when_feasible: self.feasibility_only,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveStatus {
    Optimal,
    FeasibleSuboptimal,
    Infeasible,
    IterationLimit,
}

impl SolveStatus {
    pub fn is_feasible(self) -> bool {
        matches!(self, Self::Optimal | Self::FeasibleSuboptimal)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Optimal => "optimal",
            Self::FeasibleSuboptimal => "feasible-suboptimal",
            Self::Infeasible => "infeasible",
            Self::IterationLimit => "iteration-limit",
        }
    }
}

impl std::fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Independent check of a nodal solution by integrating its interpolated
/// control.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Resimulation {
    pub delta: f64,
    pub parasitic: f64,
    pub energy_ratio: f64,
    pub clamp_events: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StartSummary {
    pub label: String,
    pub status: SolveStatus,
    pub objective: f64,
    pub max_violation: f64,
    pub stationarity: f64,
    pub outer_iterations: usize,
    pub inner_iterations: usize,
    pub resimulated: Option<Resimulation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveMetadata {
    pub scheme: String,
    pub interpolation: String,
    pub constraint_tolerance: f64,
    pub optimality_tolerance: f64,
    pub feasibility_tolerance: f64,
    pub integrator_rel_tol: f64,
    pub integrator_abs_tol: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub status: SolveStatus,
    pub config: EngineConfig,
    pub order: usize,
    pub node_times: Vec<f64>,
    pub x1: Vec<f64>,
    pub x2: Vec<f64>,
    pub x3: Vec<f64>,
    pub u: Vec<f64>,
    /// `x2_N`.
    pub objective: f64,
    pub max_violation: f64,
    pub stationarity: f64,
    /// `(x2_N + u_N x1_N)/2`, the final energy in units of the initial one.
    pub nodal_energy_ratio: f64,
    pub nodal_delta: f64,
    pub resimulated: Option<Resimulation>,
    pub wall_ms: f64,
    pub best_start: usize,
    pub warm_started: bool,
    pub starts: Vec<StartSummary>,
    pub metadata: SolveMetadata,
}

impl SolveReport {
    pub fn is_feasible(&self) -> bool {
        self.status.is_feasible()
    }

    /// Optimized `δ`, taken from the re-simulation when available.
    pub fn delta(&self) -> f64 {
        self.resimulated.map_or(self.nodal_delta, |r| r.delta)
    }

    pub fn parasitic(&self) -> Option<f64> {
        self.resimulated.map(|r| r.parasitic)
    }

    pub fn warm_start(&self) -> WarmStart {
        let nodes = self
            .node_times
            .iter()
            .map(|&t| 2.0 * t / self.config.duration - 1.0)
            .collect();
        WarmStart {
            nodes,
            columns: [self.x1.clone(), self.x2.clone(), self.x3.clone(), self.u.clone()],
        }
    }

    /// Continuous control obtained by interpolating the nodal values.
    pub fn control(&self) -> Result<crate::controls::ControlProfile> {
        let grid = crate::lgl::LglGrid::new(self.order)?;
        interpolate_control(&grid, &self.u, self.config.duration)
    }

    /// Copy with timing zeroed, for reproducibility comparisons.
    pub fn without_timing(&self) -> Self {
        Self {
            wall_ms: 0.0,
            ..self.clone()
        }
    }
}

struct Candidate {
    z: Vec<f64>,
    summary: StartSummary,
}

fn resimulate(problem: &CollocationProblem, z: &[f64], opts: &IntegrationOptions) -> Option<Resimulation> {
    let u = problem.split(z)[3];
    let ctl = interpolate_control(&problem.grid, u, problem.config.duration).ok()?;
    let score = score_control(&problem.config, &ctl, opts).ok()?;
    Some(Resimulation {
        delta: score.delta,
        parasitic: score.parasitic,
        energy_ratio: score.final_physical.energy,
        clamp_events: score.clamp_events,
    })
}

fn run_start(
    problem: &CollocationProblem,
    label: String,
    z0: Result<Vec<f64>>,
    opts: &SolveOptions,
) -> Candidate {
    let z0 = match z0 {
        Ok(z) if z.iter().all(|v| v.is_finite()) => z,
        _ => init::linear_guess(problem),
    };
    let r = al::solve_from(problem, &z0, &opts.al_settings());
    let resim = if r.violation < opts.feasibility_tolerance {
        resimulate(problem, &r.z, &opts.integration)
    } else {
        None
    };
    let status = match r.outcome {
        al::AlOutcome::Converged if resim.is_some() => SolveStatus::Optimal,
        _ if r.violation < opts.feasibility_tolerance && resim.is_some() => {
            SolveStatus::FeasibleSuboptimal
        }
        al::AlOutcome::Stalled | al::AlOutcome::PenaltyLimit => SolveStatus::Infeasible,
        _ if r.violation >= opts.feasibility_tolerance && r.penalty >= 1e6 => SolveStatus::Infeasible,
        _ => SolveStatus::IterationLimit,
    };
    Candidate {
        summary: StartSummary {
            label,
            status,
            objective: problem.objective(&r.z),
            max_violation: r.violation,
            stationarity: r.stationarity,
            outer_iterations: r.outer_iterations,
            inner_iterations: r.inner_iterations,
            resimulated: resim,
        },
        z: r.z,
    }
}

/// Best feasible objective; ties within `1e-9` go to the smaller
/// re-simulated parasitic energy. Without a feasible start the one with
/// the smallest violation is returned.
fn select(candidates: &[Candidate]) -> usize {
    let feasible: Vec<usize> = (0..candidates.len())
        .filter(|&i| candidates[i].summary.status.is_feasible())
        .collect();
    if feasible.is_empty() {
        return (0..candidates.len())
            .min_by(|&a, &b| {
                candidates[a]
                    .summary
                    .max_violation
                    .total_cmp(&candidates[b].summary.max_violation)
            })
            .unwrap_or(0);
    }
    let mut best = feasible[0];
    for &i in &feasible[1..] {
        let (a, b) = (&candidates[i].summary, &candidates[best].summary);
        let parasitic = |s: &StartSummary| s.resimulated.map_or(f64::INFINITY, |r| r.parasitic);
        if a.objective < b.objective - 1e-9
            || ((a.objective - b.objective).abs() <= 1e-9 && parasitic(a) < parasitic(b))
        {
            best = i;
        }
    }
    best
}

/// Order of the auxiliary grid behind the `coarse` start.
const COARSE_ORDER: usize = 30;

/// Solution of the same problem on a grid of order [`COARSE_ORDER`],
/// interpolated onto the nodes of `problem`. Fine grids occasionally stall
/// at local minimisers of the violation that the coarse grid avoids.
fn coarse_guess(
    problem: &CollocationProblem,
    opts: &SolveOptions,
    warm: Option<&WarmStart>,
) -> Result<Vec<f64>> {
    let coarse = transcribe(&problem.config, COARSE_ORDER)?;
    let sub = SolveOptions {
        multistart_count: 2,
        ..*opts
    };
    let report = solve_with_warm_start(&coarse, &sub, warm)?;
    Ok(report.warm_start().to_vector(problem))
}

/// Multistart solve of `problem`. The start list is the warm start (if
/// given), the rescaled reference profile, a coarse-grid solution (fine
/// grids only), the linear interpolant, then seeded perturbations of the
/// reference until `multistart_count` starts.
pub fn solve(problem: &CollocationProblem, opts: &SolveOptions) -> Result<SolveReport> {
    solve_with_warm_start(problem, opts, None)
}

pub fn solve_with_warm_start(
    problem: &CollocationProblem,
    opts: &SolveOptions,
    warm: Option<&WarmStart>,
) -> Result<SolveReport> {
    opts.validate()?;
    let clock = Instant::now();
    let count = opts.multistart_count;
    let mut labels: Vec<String> = Vec::with_capacity(count);
    if warm.is_some() {
        labels.push("warm".into());
    }
    labels.push("reference".into());
    if problem.order() > COARSE_ORDER {
        labels.push("coarse".into());
    }
    labels.push("linear".into());
    let mut stream = 0u64;
    while labels.len() < count {
        stream += 1;
        labels.push(format!("perturbed-{stream}"));
    }
    labels.truncate(count);

    let start = |label: String| {
        let z0 = match label.as_str() {
            "warm" => Ok(warm.expect("warm label implies warm start").to_vector(problem)),
            "reference" => init::reference_guess(problem),
            "linear" => Ok(init::linear_guess(problem)),
            "coarse" => coarse_guess(problem, opts, warm),
            other => {
                let k: u64 = other.trim_start_matches("perturbed-").parse().unwrap_or(0);
                init::perturbed_guess(problem, opts.seed, k, opts.perturbation_scale)
            }
        };
        run_start(problem, label, z0, opts)
    };
    let candidates: Vec<Candidate> = if opts.feasibility_only {
        let mut out = Vec::new();
        for label in labels {
            let c = start(label);
            let done = c.summary.status.is_feasible();
            out.push(c);
            if done {
                break;
            }
        }
        out
    } else {
        labels.into_par_iter().map(start).collect()
    };

    let best = select(&candidates);
    let z = &candidates[best].z;
    let s = &candidates[best].summary;
    let [x1, x2, x3, u] = problem.split(z);
    let n = problem.layout.nodes;
    let nodal_energy_ratio = 0.5 * (x2[n - 1] + u[n - 1] * x1[n - 1]);
    let nodal_delta = delta_measure(nodal_energy_ratio, problem.config.freq_ratio)
        .unwrap_or(f64::NAN);
    Ok(SolveReport {
        status: s.status,
        config: problem.config,
        order: problem.order(),
        node_times: problem.node_times(),
        x1: x1.to_vec(),
        x2: x2.to_vec(),
        x3: x3.to_vec(),
        u: u.to_vec(),
        objective: s.objective,
        max_violation: s.max_violation,
        stationarity: s.stationarity,
        nodal_energy_ratio,
        nodal_delta,
        resimulated: s.resimulated,
        wall_ms: clock.elapsed().as_secs_f64() * 1e3,
        best_start: best,
        warm_started: warm.is_some(),
        starts: candidates.into_iter().map(|c| c.summary).collect(),
        metadata: SolveMetadata {
            scheme: "augmented Lagrangian, projected Newton inner solver, row-scaled equalities".into(),
            interpolation: "barycentric Lagrange on the LGL nodes, clamped to bounds".into(),
            constraint_tolerance: opts.constraint_tolerance,
            optimality_tolerance: opts.optimality_tolerance,
            feasibility_tolerance: opts.feasibility_tolerance,
            integrator_rel_tol: opts.integration.rel_tol,
            integrator_abs_tol: opts.integration.abs_tol,
            seed: opts.seed,
        },
    })
}

/// Transcribes and solves in one call.
pub fn optimize(config: &EngineConfig, order: usize, opts: &SolveOptions) -> Result<SolveReport> {
    solve(&transcribe(config, order)?, opts)
}

pub(crate) fn warm_from(problem: &CollocationProblem, report: &SolveReport) -> WarmStart {
    let z: Vec<f64> = [&report.x1, &report.x2, &report.x3, &report.u]
        .iter()
        .flat_map(|c| c.iter().copied())
        .collect();
    if report.order == problem.order() {
        WarmStart::from_solution(problem, &z)
    } else {
        report.warm_start()
    }
}
