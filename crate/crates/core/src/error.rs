use thiserror::Error;

/// Errors raised by the engine model, integrators, solvers and verifiers.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// The adaptive integrator could not make progress.
    #[error("step size underflow at t = {t:.6e} (h = {h:.3e})")]
    Stiffness { t: f64, h: f64 },

    /// A state component became non-finite.
    #[error("non-finite state at t = {t:.6e}")]
    Divergence { t: f64 },

    /// A feedback protocol left the admissible control set.
    #[error("protocol error: {0}")]
    Protocol(String),

    /// Minimum-time search could not bracket the feasibility boundary.
    #[error("search error: {0}")]
    Search(String),

    /// Two time series could not be aligned sample by sample.
    #[error("alignment error: {0}")]
    Alignment(String),

    /// Too many Monte-Carlo trajectories diverged.
    #[error("noise too strong: {diverged} of {total} trajectories diverged")]
    NoiseTooStrong { diverged: usize, total: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}
