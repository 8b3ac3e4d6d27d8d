//! Control profiles `u(t) = ω²(t)/ω_h²` and the closed-form reference
//! family `ω_n(t) = ω_h/(1 − μ_n ω_h t)`.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::lgl::barycentric_eval;

/// A time-parametrized control on `[0, duration]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ControlProfile {
    /// `u(t) = 1/(1 − μ t)²`.
    Rational { mu: f64, duration: f64 },
    /// Piecewise-constant control; `values[i]` holds on
    /// `[switch_times[i-1], switch_times[i])`.
    PiecewiseConstant {
        switch_times: Vec<f64>,
        values: Vec<f64>,
        duration: f64,
    },
    /// Polynomial through nodal values on an LGL grid.
    Nodal(NodalControl),
    /// Piecewise-linear through recorded samples, e.g. a closed-loop run
    /// replayed open loop. A time listed twice marks a jump (right
    /// continuous); `breaks` lists further kinks.
    Tabulated {
        times: Vec<f64>,
        values: Vec<f64>,
        breaks: Vec<f64>,
    },
}

/// Nodal values on `[-1, 1]` mapped to `[0, duration]` by
/// `τ = (2t − T)/T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodalControl {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    pub values: Vec<f64>,
    pub duration: f64,
}

impl NodalControl {
    pub fn eval_raw(&self, t: f64) -> f64 {
        let tau = (2.0 * t - self.duration) / self.duration;
        barycentric_eval(&self.nodes, &self.weights, &self.values, tau.clamp(-1.0, 1.0))
    }
}

impl ControlProfile {
    pub fn constant(u: f64, duration: f64) -> Result<Self> {
        Self::piecewise_constant(Vec::new(), vec![u], duration)
    }

    pub fn piecewise_constant(
        switch_times: Vec<f64>,
        values: Vec<f64>,
        duration: f64,
    ) -> Result<Self> {
        if !(duration > 0.0) {
            return Err(domain("profile duration must be positive"));
        }
        if values.len() != switch_times.len() + 1 {
            return Err(domain("piecewise-constant profile needs one more value than switches"));
        }
        let mut prev = 0.0;
        for &s in &switch_times {
            if !(s >= prev && s <= duration) {
                return Err(domain("switch times must be ascending within [0, duration]"));
            }
            prev = s;
        }
        if values.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(domain("control values must be positive"));
        }
        Ok(Self::PiecewiseConstant {
            switch_times,
            values,
            duration,
        })
    }

    pub fn tabulated(times: Vec<f64>, values: Vec<f64>, breaks: Vec<f64>) -> Result<Self> {
        if times.len() < 2 || times.len() != values.len() {
            return Err(domain("tabulated profile needs matching times and values (>= 2)"));
        }
        if times[0] != 0.0
            || times.windows(2).any(|w| w[0] > w[1])
            || times.windows(3).any(|w| w[0] == w[2])
            || times[times.len() - 1] <= 0.0
        {
            return Err(domain(
                "tabulated times must start at 0 and be non-decreasing, with at most pairs of repeats",
            ));
        }
        Ok(Self::Tabulated {
            times,
            values,
            breaks,
        })
    }

    pub fn duration(&self) -> f64 {
        match self {
            Self::Rational { duration, .. } | Self::PiecewiseConstant { duration, .. } => *duration,
            Self::Nodal(n) => n.duration,
            Self::Tabulated { times, .. } => *times.last().unwrap_or(&0.0),
        }
    }

    /// Unclamped control value at `t`.
    pub fn value(&self, t: f64) -> Result<f64> {
        let duration = self.duration();
        let slack = 1e-9 * duration.max(1.0);
        if !(t >= -slack && t <= duration + slack) {
            return Err(domain(format!(
                "control evaluated at t = {t} outside [0, {duration}]"
            )));
        }
        let t = t.clamp(0.0, duration);
        Ok(match self {
            Self::Rational { mu, .. } => {
                let s = 1.0 - mu * t;
                1.0 / (s * s)
            }
            Self::PiecewiseConstant {
                switch_times,
                values,
                ..
            } => {
                let idx = switch_times.partition_point(|&s| s <= t);
                values[idx.min(values.len() - 1)]
            }
            Self::Nodal(n) => n.eval_raw(t),
            Self::Tabulated { times, values, .. } => {
                let i = times.partition_point(|&s| s <= t).clamp(1, times.len() - 1);
                let (t0, t1) = (times[i - 1], times[i]);
                if t1 == t0 {
                    values[i]
                } else {
                    let w = (t - t0) / (t1 - t0);
                    values[i - 1] + w * (values[i] - values[i - 1])
                }
            }
        })
    }

    /// Value clamped into `[lo, hi]`, with a flag telling whether clamping
    /// was needed.
    pub fn clamped(&self, t: f64, lo: f64, hi: f64) -> Result<(f64, bool)> {
        let u = self.value(t)?;
        let c = u.clamp(lo, hi);
        Ok((c, c != u))
    }

    /// Interior times where the profile may be discontinuous or kinked.
    pub fn breakpoints(&self) -> Vec<f64> {
        let duration = self.duration();
        let interior = |v: &Vec<f64>| -> Vec<f64> {
            let mut out: Vec<f64> = v.iter().copied().filter(|&s| s > 0.0 && s < duration).collect();
            out.dedup();
            out
        };
        match self {
            Self::PiecewiseConstant { switch_times, .. } => interior(switch_times),
            Self::Tabulated { times, breaks, .. } => {
                let mut all: Vec<f64> = breaks.clone();
                all.extend(times.windows(2).filter(|w| w[0] == w[1]).map(|w| w[0]));
                all.sort_by(f64::total_cmp);
                interior(&all)
            }
            _ => Vec::new(),
        }
    }

    /// Writes `samples` evenly spaced `(t, u)` rows (plus `omega = √u`).
    pub fn write_csv<W: Write>(&self, samples: usize, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["t", "u", "omega"])?;
        let duration = self.duration();
        let n = samples.max(2);
        for i in 0..n {
            let t = duration * i as f64 / (n - 1) as f64;
            let u = self.value(t)?;
            w.write_record([fmt(t), fmt(u), fmt(u.max(0.0).sqrt())])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a `(t, u)` CSV as a tabulated profile. Extra columns are
    /// ignored.
    pub fn read_csv<R: std::io::Read>(reader: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let headers = r.headers()?.clone();
        let col = |name: &str| headers.iter().position(|h| h.trim() == name);
        let (ti, ui) = match (col("t"), col("u")) {
            (Some(a), Some(b)) => (a, b),
            _ => return Err(domain("control CSV needs 't' and 'u' columns")),
        };
        let mut times = Vec::new();
        let mut values = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let parse = |i: usize| -> Result<f64> {
                rec.get(i)
                    .and_then(|s| s.trim().parse().ok())
                    .ok_or_else(|| domain(format!("bad number in control CSV: {rec:?}")))
            };
            times.push(parse(ti)?);
            values.push(parse(ui)?);
        }
        Self::tabulated(times, values, Vec::new())
    }
}

/// Shortest round-trip representation; keeps CSV output byte-stable.
pub(crate) fn fmt(v: f64) -> String {
    format!("{v:e}")
}

/// `μ_n = −2 ln(ω_h/ω_c)/√(4n²π² + ln²(ω_h/ω_c))`.
pub fn mu_n(n: u32, freq_ratio: f64) -> Result<f64> {
    if n < 1 {
        return Err(domain("reference profile index must be >= 1"));
    }
    check_ratio(freq_ratio)?;
    let ln = (1.0 / freq_ratio).ln();
    let nf = n as f64;
    Ok(-2.0 * ln / (4.0 * nf * nf * std::f64::consts::PI.powi(2) + ln * ln).sqrt())
}

/// Duration `ω_h T_n` after which the noiseless flow under `ω_n` returns
/// to `L = C = 0`.
pub fn t_n(n: u32, freq_ratio: f64) -> Result<f64> {
    if n < 1 {
        return Err(domain("reference profile index must be >= 1"));
    }
    check_ratio(freq_ratio)?;
    let ln = (1.0 / freq_ratio).ln();
    let nf = n as f64;
    let root = (4.0 * nf * nf * std::f64::consts::PI.powi(2) + ln * ln).sqrt();
    Ok((1.0 / freq_ratio - 1.0) * root / (2.0 * ln))
}

/// The reference profile `ω_n` on `[0, T_n]`.
pub fn omega_profile(n: u32, freq_ratio: f64) -> Result<ControlProfile> {
    Ok(ControlProfile::Rational {
        mu: mu_n(n, freq_ratio)?,
        duration: t_n(n, freq_ratio)?,
    })
}

/// `ω_n` compressed or stretched in time to span `duration`.
pub fn omega_profile_rescaled(n: u32, freq_ratio: f64, duration: f64) -> Result<ControlProfile> {
    if !(duration > 0.0) {
        return Err(domain("duration must be positive"));
    }
    let mu = mu_n(n, freq_ratio)? * t_n(n, freq_ratio)? / duration;
    Ok(ControlProfile::Rational { mu, duration })
}

fn check_ratio(freq_ratio: f64) -> Result<()> {
    if freq_ratio > 0.0 && freq_ratio < 1.0 {
        Ok(())
    } else {
        Err(domain(format!(
            "frequency ratio must lie in (0, 1), got {freq_ratio}"
        )))
    }
}
