//! Optimal control of the expansion stroke of a harmonic quantum Otto
//! engine subject to amplitude and phase noise.

pub mod controls;
pub mod dynamics;
pub mod error;
pub mod feedback;
pub mod integrator;
pub mod lgl;
pub mod nlp;
pub mod ode;
pub mod sde;
pub mod transcription;

pub use controls::{mu_n, omega_profile, omega_profile_rescaled, t_n, ControlProfile, NodalControl};
pub use dynamics::{
    casimir_companion, casimir_rate, delta_measure, from_physical, parasitic_energy, rhs,
    to_physical, EngineConfig, MomentState, NoiseParams, PhysicalState,
};
pub use error::{Error, Result};
pub use feedback::{feedback_dephasing, feedback_noiseless, FeedbackMode, FeedbackProtocol, FeedbackRun};
pub use integrator::{integrate, integrate_at, score_control, IntegrationOptions, Score, Trajectory};
pub use lgl::{diff_matrix, legendre_eval, lgl_nodes, LglGrid};
pub use transcription::{interpolate_control, transcribe, CollocationProblem, Layout, ProblemDump, SparseRows};
pub use nlp::{
    min_feasible_time, optimize, solve, solve_with_warm_start, sweep_duration, MinTimeResult,
    SolveOptions, SolveReport, SolveStatus, SweepPoint, TimeSearch, WarmStart,
};
pub use sde::{
    compare_moments, simulate_ensemble, EnsembleSeries, MomentComparison, NoiseCoupling, Scheme,
    SdeOptions,
};
