use serde::{Deserialize, Serialize};

use super::{solve_with_warm_start, warm_from, SolveOptions, SolveReport, SolveStatus, WarmStart};
use crate::dynamics::EngineConfig;
use crate::error::{domain, Error, Result};
use crate::transcription::transcribe;

/// Bracket and resolution for [`min_feasible_time`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeSearch {
    /// Initial guess for an infeasible duration.
    pub lower: f64,
    /// Initial guess for a feasible duration.
    pub upper: f64,
    /// Final bracket width.
    pub width: f64,
    /// Scan limits used when the initial pair does not bracket.
    pub scan_min: f64,
    pub scan_max: f64,
}

impl Default for TimeSearch {
    fn default() -> Self {
        Self {
            lower: 1.5,
            upper: 2.5,
            width: 0.01,
            scan_min: 0.2,
            scan_max: 30.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BracketStep {
    pub duration: f64,
    pub status: SolveStatus,
    pub max_violation: f64,
    pub lower: f64,
    pub upper: f64,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinTimeResult {
    /// Feasible end of the final bracket.
    pub duration: f64,
    pub lower: f64,
    pub history: Vec<BracketStep>,
    pub solution: SolveReport,
}

/// Smallest feasible duration of `base` (its own duration is ignored),
/// by bisection with the solver as feasibility oracle. Each probe is
/// warm-started from the most recent feasible solution and stops at the
/// first feasible start, so the returned solution is feasible but not
/// necessarily optimal.
pub fn min_feasible_time(
    base: &EngineConfig,
    order: usize,
    opts: &SolveOptions,
    search: &TimeSearch,
) -> Result<MinTimeResult> {
    if !(search.width > 0.0) || !(search.lower > 0.0) || !(search.lower < search.upper) {
        return Err(domain("time search needs 0 < lower < upper and a positive width"));
    }
    let opts = &SolveOptions {
        feasibility_only: true,
        ..*opts
    };
    let mut history = Vec::new();
    let mut warm: Option<WarmStart> = None;
    let probe = |t: f64, warm: &mut Option<WarmStart>, history: &mut Vec<BracketStep>, lo: f64, hi: f64| -> Result<SolveReport> {
        let problem = transcribe(&base.with_duration(t)?, order)?;
        let report = solve_with_warm_start(&problem, opts, warm.as_ref())?;
        if report.is_feasible() {
            *warm = Some(warm_from(&problem, &report));
        }
        history.push(BracketStep {
            duration: t,
            status: report.status,
            max_violation: report.max_violation,
            lower: lo,
            upper: hi,
            wall_ms: report.wall_ms,
        });
        Ok(report)
    };

    let mut hi = search.upper;
    let mut best = loop {
        let r = probe(hi, &mut warm, &mut history, f64::NAN, hi)?;
        if r.is_feasible() {
            break r;
        }
        hi *= 1.5;
        if hi > search.scan_max {
            return Err(Error::Search(format!(
                "no feasible duration up to {}",
                search.scan_max
            )));
        }
    };
    let mut lo = search.lower.min(hi * 0.8);
    loop {
        let r = probe(lo, &mut warm, &mut history, lo, hi)?;
        if !r.is_feasible() {
            break;
        }
        hi = lo;
        best = r;
        lo *= 0.8;
        if lo < search.scan_min {
            return Err(Error::Search(format!(
                "still feasible at {lo}; no infeasible duration above {}",
                search.scan_min
            )));
        }
    }
    while hi - lo > search.width {
        let mid = 0.5 * (lo + hi);
        let r = probe(mid, &mut warm, &mut history, lo, hi)?;
        if r.is_feasible() {
            hi = mid;
            best = r;
        } else {
            lo = mid;
        }
        if let Some(last) = history.last_mut() {
            last.lower = lo;
            last.upper = hi;
        }
    }
    Ok(MinTimeResult {
        duration: hi,
        lower: lo,
        history,
        solution: best,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub duration: f64,
    pub warm_started: bool,
    pub report: SolveReport,
}

/// Solves every duration of an ascending grid. With `warm_start` each
/// point starts additionally from the previous feasible solution;
/// otherwise points are independent and run in parallel.
pub fn sweep_duration(
    base: &EngineConfig,
    order: usize,
    durations: &[f64],
    opts: &SolveOptions,
    warm_start: bool,
) -> Result<Vec<SweepPoint>> {
    if durations.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(domain("sweep durations must be strictly ascending"));
    }
    if warm_start {
        let mut out = Vec::with_capacity(durations.len());
        let mut warm: Option<WarmStart> = None;
        for &t in durations {
            let problem = transcribe(&base.with_duration(t)?, order)?;
            let report = solve_with_warm_start(&problem, opts, warm.as_ref())?;
            if report.is_feasible() {
                warm = Some(warm_from(&problem, &report));
            }
            out.push(SweepPoint {
                duration: t,
                warm_started: report.warm_started,
                report,
            });
        }
        Ok(out)
    } else {
        use rayon::prelude::*;
        durations
            .par_iter()
            .map(|&t| {
                let problem = transcribe(&base.with_duration(t)?, order)?;
                let report = solve_with_warm_start(&problem, opts, None)?;
                Ok(SweepPoint {
                    duration: t,
                    warm_started: false,
                    report,
                })
            })
            .collect()
    }
}
