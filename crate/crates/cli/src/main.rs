//! `otto`: batch experiments for the expansion stroke of a noisy quantum
//! Otto engine.
//!
//! Exit codes: 0 success, 2 configuration error, 3 infeasible,
//! 4 numerical failure.

mod commands;
mod config;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::RunConfig;

#[derive(Debug)]
pub enum Failure {
    Config(String),
    Infeasible(String),
    Numeric(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Infeasible(_) => 3,
            Failure::Numeric(_) => 4,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Config(m) => write!(f, "configuration error: {m}"),
            Failure::Infeasible(m) => write!(f, "infeasible: {m}"),
            Failure::Numeric(m) => write!(f, "numerical failure: {m}"),
        }
    }
}

impl From<otto_core::Error> for Failure {
    fn from(e: otto_core::Error) -> Self {
        use otto_core::Error as E;
        match e {
            E::Domain(_) => Failure::Config(e.to_string()),
            E::Search(_) => Failure::Infeasible(e.to_string()),
            _ => Failure::Numeric(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Numeric(format!("i/o: {e}"))
    }
}

impl From<csv::Error> for Failure {
    fn from(e: csv::Error) -> Self {
        Failure::Numeric(format!("csv: {e}"))
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Numeric(format!("json: {e}"))
    }
}

#[derive(Parser)]
#[command(name = "otto", version, about = "Optimal control experiments for a noisy harmonic Otto engine")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Optimize a single stroke duration.
    Optimize(Flags),
    /// Optimize over a duration grid and compare with the reference profiles.
    Sweep(Flags),
    /// Bisect for the shortest duration with a feasible solution.
    MinTime(Flags),
    /// Run the adiabatic feedback protocols for each epsilon.
    Feedback(Flags),
    /// Check the moment equations against a stochastic ensemble.
    VerifySde(Flags),
}

/// Settings shared by all commands. Flags override the config file.
#[derive(Args, Default)]
struct Flags {
    /// Flat `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Frequency ratio ω_c/ω_h.
    #[arg(long)]
    ratio: Option<String>,
    #[arg(long = "gamma-a")]
    gamma_a: Option<String>,
    #[arg(long = "gamma-p")]
    gamma_p: Option<String>,
    /// Stroke duration ω_h T.
    #[arg(long = "T")]
    duration: Option<String>,
    /// Duration grid start:stop:step.
    #[arg(long = "T-grid")]
    grid: Option<String>,
    /// Collocation order.
    #[arg(long = "N")]
    order: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// Output directory.
    #[arg(long)]
    out: Option<String>,
    #[arg(long = "tol-constraint")]
    tol_constraint: Option<String>,
    #[arg(long = "tol-optimality")]
    tol_optimality: Option<String>,
    #[arg(long = "tol-feasibility")]
    tol_feasibility: Option<String>,
    /// Number of multistart initial guesses.
    #[arg(long)]
    multistart: Option<String>,
    #[arg(long = "max-outer")]
    max_outer: Option<String>,
    /// Warm-start each sweep point from the previous one (sequential).
    #[arg(long = "warm-start")]
    warm_start: bool,
    /// Integrator relative tolerance.
    #[arg(long)]
    rtol: Option<String>,
    /// Integrator absolute tolerance.
    #[arg(long)]
    atol: Option<String>,
    /// Number of stochastic trajectories.
    #[arg(long)]
    ensemble: Option<String>,
    /// Stochastic time step.
    #[arg(long)]
    dt: Option<String>,
    /// Output samples of the stochastic run.
    #[arg(long)]
    samples: Option<String>,
    /// heun or euler-ito.
    #[arg(long)]
    scheme: Option<String>,
    /// independent or common.
    #[arg(long)]
    coupling: Option<String>,
    /// Comma-separated feedback targets.
    #[arg(long)]
    epsilon: Option<String>,
    /// reference[:n], feedback or file:PATH.
    #[arg(long)]
    control: Option<String>,
    /// Only evaluate the reference profiles.
    #[arg(long = "baseline-only")]
    baseline_only: bool,
    /// Worker threads (0: all processors).
    #[arg(long)]
    workers: Option<String>,
    /// Initial bracket lo:hi of the minimum-time search.
    #[arg(long)]
    bracket: Option<String>,
    /// Final bracket width of the minimum-time search.
    #[arg(long)]
    width: Option<String>,
}

impl Flags {
    fn resolve(&self) -> Result<RunConfig, Failure> {
        let mut cfg = RunConfig::default();
        if let Some(path) = &self.config {
            cfg.apply_file(path)?;
        }
        let pairs: [(&str, &Option<String>); 25] = [
            ("ratio", &self.ratio),
            ("gamma_a", &self.gamma_a),
            ("gamma_p", &self.gamma_p),
            ("T", &self.duration),
            ("T_grid", &self.grid),
            ("N", &self.order),
            ("seed", &self.seed),
            ("out", &self.out),
            ("tol_constraint", &self.tol_constraint),
            ("tol_optimality", &self.tol_optimality),
            ("tol_feasibility", &self.tol_feasibility),
            ("multistart", &self.multistart),
            ("max_outer", &self.max_outer),
            ("rtol", &self.rtol),
            ("atol", &self.atol),
            ("ensemble", &self.ensemble),
            ("dt", &self.dt),
            ("samples", &self.samples),
            ("scheme", &self.scheme),
            ("coupling", &self.coupling),
            ("epsilon", &self.epsilon),
            ("control", &self.control),
            ("workers", &self.workers),
            ("bracket", &self.bracket),
            ("width", &self.width),
        ];
        for (key, value) in pairs {
            if let Some(v) = value {
                cfg.set(key, v)
                    .map_err(|m| Failure::Config(format!("--{}: {m}", key.replace('_', "-"))))?;
            }
        }
        if self.warm_start {
            cfg.warm_start = true;
        }
        if self.baseline_only {
            cfg.baseline_only = true;
        }
        Ok(cfg)
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let (flags, cmd): (&Flags, fn(&RunConfig) -> Result<(), Failure>) = match &cli.command {
        Command::Optimize(f) => (f, commands::optimize),
        Command::Sweep(f) => (f, commands::sweep),
        Command::MinTime(f) => (f, commands::min_time),
        Command::Feedback(f) => (f, commands::feedback),
        Command::VerifySde(f) => (f, commands::verify_sde),
    };
    cmd(&flags.resolve()?)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("otto: {e}");
            ExitCode::from(e.code())
        }
    }
}
