use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use otto_core::{
    compare_moments, integrate, integrate_at, min_feasible_time, omega_profile,
    omega_profile_rescaled, score_control, simulate_ensemble, solve, sweep_duration, t_n,
    transcribe, ControlProfile, FeedbackProtocol, SolveReport, SolveStatus,
};
use serde::Serialize;

use crate::config::{ControlSource, RunConfig};
use crate::Failure;

const CONTROL_SAMPLES: usize = 501;

fn num(v: f64) -> String {
    format!("{v:e}")
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>, Failure> {
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<(), Failure> {
    let mut w = create(dir, name)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

/// Creates the output directory and echoes the effective configuration.
fn prepare(cfg: &RunConfig) -> Result<(), Failure> {
    fs::create_dir_all(&cfg.out)?;
    fs::write(cfg.out.join("config.txt"), cfg.canonical())?;
    Ok(())
}

fn pool(cfg: &RunConfig) -> Result<rayon::ThreadPool, Failure> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cfg.workers {
        b = b.num_threads(n);
    }
    b.build().map_err(|e| Failure::Numeric(e.to_string()))
}

fn status_code(status: SolveStatus) -> Result<(), Failure> {
    match status {
        SolveStatus::Optimal | SolveStatus::FeasibleSuboptimal => Ok(()),
        SolveStatus::Infeasible => Err(Failure::Infeasible("no feasible solution found".into())),
        SolveStatus::IterationLimit => {
            Err(Failure::Numeric("iteration limit reached before convergence".into()))
        }
    }
}

/// Solution JSON, and for feasible reports the interpolated control and
/// its re-simulated trajectory.
fn write_solution(dir: &Path, cfg: &RunConfig, report: &SolveReport) -> Result<(), Failure> {
    write_json(dir, "solution.json", report)?;
    if report.is_feasible() {
        let control = report.control()?;
        control.write_csv(CONTROL_SAMPLES, create(dir, "control.csv")?)?;
        let traj = integrate(&report.config, &control, &cfg.integration())?;
        traj.write_csv(create(dir, "trajectory.csv")?)?;
    }
    Ok(())
}

fn summary(report: &SolveReport) -> String {
    let mut s = format!(
        "T={} status={} objective={:.9} max_violation={:.3e}",
        report.config.duration, report.status, report.objective, report.max_violation
    );
    if let Some(r) = report.resimulated {
        s += &format!(" delta={:.6e} parasitic={:.3e}", r.delta, r.parasitic);
    }
    s
}

pub fn optimize(cfg: &RunConfig) -> Result<(), Failure> {
    let engine = cfg.engine(cfg.require_duration()?)?;
    let problem = transcribe(&engine, cfg.order)?;
    let opts = cfg.solve_options();
    opts.validate()?;
    prepare(cfg)?;
    write_json(&cfg.out, "problem.json", &problem.dump())?;
    let report = pool(cfg)?.install(|| solve(&problem, &opts))?;
    write_solution(&cfg.out, cfg, &report)?;
    println!("{}", summary(&report));
    status_code(report.status)
}

struct Baseline {
    n: u32,
    duration: f64,
    delta: f64,
    parasitic: f64,
}

/// Reference-profile figures of merit at every `T_n` inside `[lo, hi]`.
fn baselines(cfg: &RunConfig, lo: f64, hi: f64) -> Result<Vec<Baseline>, Failure> {
    let mut out = Vec::new();
    for n in 1.. {
        let t = t_n(n, cfg.ratio)?;
        if t > hi * (1.0 + 1e-12) {
            break;
        }
        if t < lo * (1.0 - 1e-12) {
            continue;
        }
        let s = score_control(&cfg.engine(t)?, &omega_profile(n, cfg.ratio)?, &cfg.integration())?;
        out.push(Baseline {
            n,
            duration: t,
            delta: s.delta,
            parasitic: s.parasitic,
        });
    }
    Ok(out)
}

pub fn sweep(cfg: &RunConfig) -> Result<(), Failure> {
    let grid = cfg
        .grid
        .ok_or_else(|| Failure::Config("sweep needs a duration grid (T_grid)".into()))?;
    let base = cfg.engine(grid.start)?;
    let opts = cfg.solve_options();
    opts.validate()?;
    prepare(cfg)?;
    let refs = baselines(cfg, grid.start, grid.stop)?;
    let mut w = csv::Writer::from_writer(create(&cfg.out, "baseline.csv")?);
    w.write_record(["n", "omega_h_T", "delta_ref", "parasitic_ref"])?;
    for b in &refs {
        w.write_record([b.n.to_string(), num(b.duration), num(b.delta), num(b.parasitic)])?;
    }
    w.flush()?;
    if cfg.baseline_only {
        for b in &refs {
            println!("n={} T={:.6} delta_ref={:.6e} parasitic_ref={:.3e}", b.n, b.duration, b.delta, b.parasitic);
        }
        return Ok(());
    }

    let mut durations = grid.points();
    durations.extend(refs.iter().map(|b| b.duration));
    durations.sort_by(f64::total_cmp);
    durations.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
    let points = pool(cfg)?.install(|| sweep_duration(&base, cfg.order, &durations, &opts, cfg.warm_start))?;

    let points_dir = cfg.out.join("points");
    let mut w = csv::Writer::from_writer(create(&cfg.out, "sweep.csv")?);
    w.write_record([
        "omega_h_T",
        "delta_opt",
        "delta_ref",
        "parasitic_opt",
        "parasitic_ref",
        "status",
        "warm_started",
        "wall_ms",
    ])?;
    for p in &points {
        let dir = points_dir.join(format!("T_{:.6}", p.duration));
        fs::create_dir_all(&dir)?;
        write_solution(&dir, cfg, &p.report)?;
        let b = refs.iter().find(|b| (b.duration - p.duration).abs() < 1e-9);
        let feasible = p.report.is_feasible();
        w.write_record([
            num(p.duration),
            if feasible { num(p.report.delta()) } else { String::new() },
            opt(b.map(|b| b.delta)),
            opt(p.report.parasitic()),
            opt(b.map(|b| b.parasitic)),
            p.report.status.to_string(),
            p.warm_started.to_string(),
            format!("{:.1}", p.report.wall_ms),
        ])?;
        println!("{}", summary(&p.report));
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct MinTimeSummary {
    duration: f64,
    lower: f64,
    width: f64,
    probes: usize,
}

pub fn min_time(cfg: &RunConfig) -> Result<(), Failure> {
    let search = cfg.time_search();
    let base = cfg.engine(search.upper)?;
    let opts = cfg.solve_options();
    opts.validate()?;
    prepare(cfg)?;
    let result = pool(cfg)?.install(|| min_feasible_time(&base, cfg.order, &opts, &search))?;
    let mut w = csv::Writer::from_writer(create(&cfg.out, "bracket.csv")?);
    w.write_record(["omega_h_T", "status", "max_violation", "lower", "upper", "wall_ms"])?;
    for s in &result.history {
        w.write_record([
            num(s.duration),
            s.status.to_string(),
            num(s.max_violation),
            opt(Some(s.lower).filter(|v| v.is_finite())),
            num(s.upper),
            format!("{:.1}", s.wall_ms),
        ])?;
    }
    w.flush()?;
    write_json(
        &cfg.out,
        "min_time.json",
        &MinTimeSummary {
            duration: result.duration,
            lower: result.lower,
            width: search.width,
            probes: result.history.len(),
        },
    )?;
    write_solution(&cfg.out, cfg, &result.solution)?;
    println!(
        "minimum feasible T = {:.4} (infeasible at {:.4}, {} probes)",
        result.duration,
        result.lower,
        result.history.len()
    );
    Ok(())
}

pub fn feedback(cfg: &RunConfig) -> Result<(), Failure> {
    let protocols = cfg
        .epsilon
        .iter()
        .map(|&e| FeedbackProtocol::for_noise(e, &cfg.noise()))
        .collect::<Result<Vec<_>, _>>()?;
    prepare(cfg)?;
    let mut w = csv::Writer::from_writer(create(&cfg.out, "summary.csv")?);
    w.write_record([
        "epsilon",
        "omega_h_T",
        "bang_duration",
        "delta",
        "parasitic",
        "invariant_start",
        "invariant_drift",
        "control_monotone",
    ])?;
    for p in protocols {
        let run = p.run(cfg.ratio, &cfg.integration())?;
        let tag = format!("{}", p.epsilon);
        run.trajectory.write_csv(create(&cfg.out, &format!("feedback_eps_{tag}.csv"))?)?;
        run.profile.write_csv(CONTROL_SAMPLES, create(&cfg.out, &format!("control_eps_{tag}.csv"))?)?;
        w.write_record([
            num(p.epsilon),
            num(run.duration),
            num(run.bang_duration),
            num(run.score.delta),
            num(run.score.parasitic),
            num(run.invariant_start),
            num(run.invariant_drift),
            run.control_monotone.to_string(),
        ])?;
        println!(
            "epsilon={} T={:.6} delta={:.6e} drift={:.2e}",
            p.epsilon, run.duration, run.score.delta, run.invariant_drift
        );
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct SdeSummary {
    config: otto_core::EngineConfig,
    options: otto_core::SdeOptions,
    diverged: usize,
    comparison: otto_core::MomentComparison,
    max_z: f64,
    fraction_above_3: f64,
}

fn sde_control(cfg: &RunConfig) -> Result<ControlProfile, Failure> {
    Ok(match &cfg.control {
        ControlSource::Reference(n) => match cfg.duration {
            Some(t) => omega_profile_rescaled(*n, cfg.ratio, t)?,
            None => omega_profile(*n, cfg.ratio)?,
        },
        ControlSource::Feedback => {
            let p = FeedbackProtocol::for_noise(cfg.epsilon[0], &cfg.noise())?;
            p.run(cfg.ratio, &cfg.integration())?.profile
        }
        ControlSource::File(path) => {
            let f = File::open(path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
            ControlProfile::read_csv(f)?
        }
    })
}

pub fn verify_sde(cfg: &RunConfig) -> Result<(), Failure> {
    let control = sde_control(cfg)?;
    let engine = cfg.engine(control.duration())?;
    let opts = cfg.sde_options();
    opts.validate(&engine)?;
    prepare(cfg)?;
    let series = pool(cfg)?.install(|| simulate_ensemble(&engine, &control, &opts))?;
    let traj = integrate_at(&engine, &control, &cfg.integration(), &series.times)?;
    let cmp = compare_moments(&series, &traj)?;
    series.write_csv(&traj, create(&cfg.out, "sde.csv")?)?;
    write_json(
        &cfg.out,
        "sde.json",
        &SdeSummary {
            config: engine,
            options: opts,
            diverged: series.diverged,
            comparison: cmp,
            max_z: cmp.overall_max_z(),
            fraction_above_3: cmp.overall_fraction_above_3(),
        },
    )?;
    println!(
        "T={:.6} ensemble={} dt={} max_z(E,L,C)=({:.2}, {:.2}, {:.2}) above_3={:.3}",
        engine.duration,
        opts.ensemble_size,
        opts.time_step,
        cmp.max_z[0],
        cmp.max_z[1],
        cmp.max_z[2],
        cmp.overall_fraction_above_3()
    );
    Ok(())
}
