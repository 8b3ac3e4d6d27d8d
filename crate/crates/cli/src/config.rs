//! Run configuration: defaults, then a flat `key = value` file, then
//! command-line flags. Every value is checked as soon as it is read so
//! that diagnostics can point at the file line or flag it came from.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use otto_core::{
    EngineConfig, IntegrationOptions, NoiseCoupling, NoiseParams, Scheme, SdeOptions, SolveOptions,
    TimeSearch,
};

use crate::Failure;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl Grid {
    /// Points `start, start + step, …` up to `stop` inclusive (with a
    /// small tolerance so that `2:29:0.5` ends at 29).
    pub fn points(&self) -> Vec<f64> {
        let n = ((self.stop - self.start) / self.step + 1e-9).floor() as usize;
        (0..=n).map(|i| self.start + i as f64 * self.step).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ControlSource {
    Reference(u32),
    Feedback,
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub ratio: f64,
    pub gamma_a: f64,
    pub gamma_p: f64,
    pub duration: Option<f64>,
    pub grid: Option<Grid>,
    pub order: usize,
    pub seed: u64,
    pub out: PathBuf,
    pub tol_constraint: f64,
    pub tol_optimality: f64,
    pub tol_feasibility: f64,
    pub multistart: usize,
    pub max_outer: usize,
    pub warm_start: bool,
    pub rtol: f64,
    pub atol: f64,
    pub ensemble: usize,
    pub dt: f64,
    pub samples: usize,
    pub scheme: Scheme,
    pub coupling: NoiseCoupling,
    pub epsilon: Vec<f64>,
    pub control: ControlSource,
    pub baseline_only: bool,
    pub workers: Option<usize>,
    pub bracket: (f64, f64),
    pub width: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let solve = SolveOptions::default();
        let integ = IntegrationOptions::default();
        let sde = SdeOptions::default();
        let search = TimeSearch::default();
        Self {
            ratio: 1.0 / 3.0,
            gamma_a: 0.0,
            gamma_p: 0.0,
            duration: None,
            grid: None,
            order: 69,
            seed: 0,
            out: PathBuf::from("out"),
            tol_constraint: solve.constraint_tolerance,
            tol_optimality: solve.optimality_tolerance,
            tol_feasibility: solve.feasibility_tolerance,
            multistart: solve.multistart_count,
            max_outer: solve.max_outer_iterations,
            warm_start: false,
            rtol: integ.rel_tol,
            atol: integ.abs_tol,
            ensemble: sde.ensemble_size,
            dt: sde.time_step,
            samples: sde.samples,
            scheme: sde.scheme,
            coupling: sde.coupling,
            epsilon: vec![0.1, 0.05, 0.025],
            control: ControlSource::Reference(1),
            baseline_only: false,
            workers: None,
            bracket: (search.lower, search.upper),
            width: search.width,
        }
    }
}

/// Keys in the order they are echoed.
pub const KEYS: &[&str] = &[
    "ratio",
    "gamma_a",
    "gamma_p",
    "T",
    "T_grid",
    "N",
    "seed",
    "out",
    "tol_constraint",
    "tol_optimality",
    "tol_feasibility",
    "multistart",
    "max_outer",
    "warm_start",
    "rtol",
    "atol",
    "ensemble",
    "dt",
    "samples",
    "scheme",
    "coupling",
    "epsilon",
    "control",
    "baseline_only",
    "workers",
    "bracket",
    "width",
];

fn num(v: &str) -> Result<f64, String> {
    let x: f64 = v.parse().map_err(|_| format!("'{v}' is not a number"))?;
    if x.is_finite() {
        Ok(x)
    } else {
        Err(format!("'{v}' is not finite"))
    }
}

fn int(v: &str) -> Result<usize, String> {
    v.parse().map_err(|_| format!("'{v}' is not a non-negative integer"))
}

fn flag(v: &str) -> Result<bool, String> {
    match v {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(format!("'{v}' is not a boolean")),
    }
}

fn in_open(x: f64, lo: f64, hi: f64, what: &str) -> Result<f64, String> {
    if x > lo && x < hi {
        Ok(x)
    } else {
        Err(format!("{what} must lie in ({lo}, {hi}), got {x}"))
    }
}

fn positive(x: f64, what: &str) -> Result<f64, String> {
    if x > 0.0 {
        Ok(x)
    } else {
        Err(format!("{what} must be > 0, got {x}"))
    }
}

fn fmt_num(x: f64) -> String {
    format!("{x:?}")
}

impl RunConfig {
    /// Applies one setting. Keys accept `-` in place of `_`.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        let v = value.trim();
        match key.replace('-', "_").as_str() {
            "ratio" => self.ratio = in_open(num(v)?, 0.0, 1.0, "ratio")?,
            "gamma_a" => self.gamma_a = noise(num(v)?, "gamma_a")?,
            "gamma_p" => self.gamma_p = noise(num(v)?, "gamma_p")?,
            "T" => self.duration = Some(positive(num(v)?, "T")?),
            "T_grid" => self.grid = Some(parse_grid(v)?),
            "N" => {
                let n = int(v)?;
                if n < 4 {
                    return Err(format!("N must be at least 4, got {n}"));
                }
                self.order = n;
            }
            "seed" => self.seed = v.parse().map_err(|_| format!("'{v}' is not a valid seed"))?,
            "out" => {
                if v.is_empty() {
                    return Err("out must not be empty".into());
                }
                self.out = PathBuf::from(v);
            }
            "tol_constraint" => self.tol_constraint = in_open(num(v)?, 0.0, 1e-2, "tol_constraint")?,
            "tol_optimality" => self.tol_optimality = in_open(num(v)?, 0.0, 1e-2, "tol_optimality")?,
            "tol_feasibility" => {
                self.tol_feasibility = in_open(num(v)?, 0.0, 1e-2, "tol_feasibility")?
            }
            "multistart" => {
                self.multistart = int(v)?;
                if self.multistart == 0 {
                    return Err("multistart must be at least 1".into());
                }
            }
            "max_outer" => {
                self.max_outer = int(v)?;
                if self.max_outer == 0 {
                    return Err("max_outer must be at least 1".into());
                }
            }
            "warm_start" => self.warm_start = flag(v)?,
            "rtol" => self.rtol = in_open(num(v)?, 0.0, 1.0, "rtol")?,
            "atol" => self.atol = in_open(num(v)?, 0.0, 1.0, "atol")?,
            "ensemble" => {
                self.ensemble = int(v)?;
                if self.ensemble < 2 {
                    return Err("ensemble must be at least 2".into());
                }
            }
            "dt" => self.dt = in_open(num(v)?, 0.0, 1e-2, "dt")?,
            "samples" => {
                self.samples = int(v)?;
                if self.samples < 2 {
                    return Err("samples must be at least 2".into());
                }
            }
            "scheme" => {
                self.scheme = match v {
                    "heun" => Scheme::Heun,
                    "euler-ito" => Scheme::EulerIto,
                    _ => return Err(format!("scheme must be heun or euler-ito, got '{v}'")),
                }
            }
            "coupling" => {
                self.coupling = match v {
                    "independent" => NoiseCoupling::Independent,
                    "common" => NoiseCoupling::Common,
                    _ => return Err(format!("coupling must be independent or common, got '{v}'")),
                }
            }
            "epsilon" => {
                let eps = v
                    .split(',')
                    .map(|s| num(s.trim()).and_then(|e| in_open(e, 0.0, 1.0, "epsilon")))
                    .collect::<Result<Vec<_>, _>>()?;
                if eps.is_empty() {
                    return Err("epsilon list is empty".into());
                }
                self.epsilon = eps;
            }
            "control" => self.control = parse_control(v)?,
            "baseline_only" => self.baseline_only = flag(v)?,
            "workers" => {
                let w = int(v)?;
                self.workers = if w == 0 { None } else { Some(w) };
            }
            "bracket" => {
                let (a, b) = v
                    .split_once(':')
                    .ok_or_else(|| format!("bracket must be lo:hi, got '{v}'"))?;
                let (a, b) = (positive(num(a)?, "bracket")?, num(b)?);
                if !(a < b) {
                    return Err(format!("bracket needs lo < hi, got {a}:{b}"));
                }
                self.bracket = (a, b);
            }
            "width" => self.width = positive(num(v)?, "width")?,
            other => return Err(format!("unknown key '{other}'")),
        }
        Ok(())
    }

    /// Reads `key = value` lines; `#` starts a comment.
    pub fn apply_file(&mut self, path: &Path) -> Result<(), Failure> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
        self.apply_text(&text, &path.display().to_string())
    }

    pub fn apply_text(&mut self, text: &str, origin: &str) -> Result<(), Failure> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let at = |msg: String| Failure::Config(format!("{origin}:{}: {msg}", i + 1));
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| at(format!("expected key = value, got '{line}'")))?;
            self.set(k.trim(), v).map_err(at)?;
        }
        Ok(())
    }

    /// Canonical `key = value` listing of every setting; feeding it back
    /// through [`RunConfig::apply_text`] reproduces `self`.
    pub fn canonical(&self) -> String {
        let mut s = String::new();
        for key in KEYS {
            let v = match *key {
                "ratio" => fmt_num(self.ratio),
                "gamma_a" => fmt_num(self.gamma_a),
                "gamma_p" => fmt_num(self.gamma_p),
                "T" => match self.duration {
                    Some(t) => fmt_num(t),
                    None => continue,
                },
                "T_grid" => match self.grid {
                    Some(g) => format!("{}:{}:{}", fmt_num(g.start), fmt_num(g.stop), fmt_num(g.step)),
                    None => continue,
                },
                "N" => self.order.to_string(),
                "seed" => self.seed.to_string(),
                "out" => self.out.display().to_string(),
                "tol_constraint" => fmt_num(self.tol_constraint),
                "tol_optimality" => fmt_num(self.tol_optimality),
                "tol_feasibility" => fmt_num(self.tol_feasibility),
                "multistart" => self.multistart.to_string(),
                "max_outer" => self.max_outer.to_string(),
                "warm_start" => self.warm_start.to_string(),
                "rtol" => fmt_num(self.rtol),
                "atol" => fmt_num(self.atol),
                "ensemble" => self.ensemble.to_string(),
                "dt" => fmt_num(self.dt),
                "samples" => self.samples.to_string(),
                "scheme" => match self.scheme {
                    Scheme::Heun => "heun".into(),
                    Scheme::EulerIto => "euler-ito".into(),
                },
                "coupling" => match self.coupling {
                    NoiseCoupling::Independent => "independent".into(),
                    NoiseCoupling::Common => "common".into(),
                },
                "epsilon" => self.epsilon.iter().map(|&e| fmt_num(e)).collect::<Vec<_>>().join(","),
                "control" => match &self.control {
                    ControlSource::Reference(n) => format!("reference:{n}"),
                    ControlSource::Feedback => "feedback".into(),
                    ControlSource::File(p) => format!("file:{}", p.display()),
                },
                "baseline_only" => self.baseline_only.to_string(),
                "workers" => self.workers.unwrap_or(0).to_string(),
                "bracket" => format!("{}:{}", fmt_num(self.bracket.0), fmt_num(self.bracket.1)),
                "width" => fmt_num(self.width),
                _ => unreachable!("every key is listed"),
            };
            let _ = writeln!(s, "{key} = {v}");
        }
        s
    }

    pub fn noise(&self) -> NoiseParams {
        NoiseParams {
            gamma_a: self.gamma_a,
            gamma_p: self.gamma_p,
        }
    }

    pub fn engine(&self, duration: f64) -> Result<EngineConfig, Failure> {
        Ok(EngineConfig::new(self.ratio, self.noise(), duration)?)
    }

    pub fn require_duration(&self) -> Result<f64, Failure> {
        self.duration
            .ok_or_else(|| Failure::Config("this command needs a duration (T)".into()))
    }

    pub fn integration(&self) -> IntegrationOptions {
        IntegrationOptions {
            rel_tol: self.rtol,
            abs_tol: self.atol,
            ..Default::default()
        }
    }

    pub fn solve_options(&self) -> SolveOptions {
        SolveOptions {
            max_outer_iterations: self.max_outer,
            constraint_tolerance: self.tol_constraint,
            optimality_tolerance: self.tol_optimality,
            feasibility_tolerance: self.tol_feasibility,
            multistart_count: self.multistart,
            seed: self.seed,
            integration: self.integration(),
            ..Default::default()
        }
    }

    pub fn sde_options(&self) -> SdeOptions {
        SdeOptions {
            ensemble_size: self.ensemble,
            time_step: self.dt,
            seed: self.seed,
            scheme: self.scheme,
            coupling: self.coupling,
            samples: self.samples,
        }
    }

    pub fn time_search(&self) -> TimeSearch {
        TimeSearch {
            lower: self.bracket.0,
            upper: self.bracket.1,
            width: self.width,
            ..Default::default()
        }
    }
}

fn noise(x: f64, what: &str) -> Result<f64, String> {
    if x >= 0.0 {
        Ok(x)
    } else {
        Err(format!("{what} must be >= 0, got {x}"))
    }
}

fn parse_grid(v: &str) -> Result<Grid, String> {
    let parts: Vec<&str> = v.split(':').collect();
    if parts.len() != 3 {
        return Err(format!("T_grid must be start:stop:step, got '{v}'"));
    }
    let g = Grid {
        start: positive(num(parts[0])?, "grid start")?,
        stop: num(parts[1])?,
        step: positive(num(parts[2])?, "grid step")?,
    };
    if g.stop < g.start {
        return Err(format!("grid stop {} is below start {}", g.stop, g.start));
    }
    if (g.stop - g.start) / g.step > 1e5 {
        return Err("grid has more than 1e5 points".into());
    }
    Ok(g)
}

fn parse_control(v: &str) -> Result<ControlSource, String> {
    if v == "feedback" {
        return Ok(ControlSource::Feedback);
    }
    if let Some(n) = v.strip_prefix("reference:") {
        let n: u32 = n.parse().map_err(|_| format!("bad reference index in '{v}'"))?;
        if n == 0 {
            return Err("reference index starts at 1".into());
        }
        return Ok(ControlSource::Reference(n));
    }
    if v == "reference" {
        return Ok(ControlSource::Reference(1));
    }
    match v.strip_prefix("file:") {
        Some(p) if !p.is_empty() => Ok(ControlSource::File(PathBuf::from(p))),
        _ => Err(format!(
            "control must be reference[:n], feedback or file:PATH, got '{v}'"
        )),
    }
}
