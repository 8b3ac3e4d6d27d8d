use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn otto(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_otto"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn out_arg(dir: &Path) -> String {
    dir.to_str().unwrap().to_owned()
}

#[test]
fn help_lists_the_commands() {
    let o = otto(&["--help"]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8_lossy(&o.stdout);
    for cmd in ["optimize", "sweep", "min-time", "feedback", "verify-sde"] {
        assert!(text.contains(cmd), "{cmd} missing from help");
    }
}

#[test]
fn configuration_errors_exit_with_2_and_point_at_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "# stroke\nratio = 0.3\ngamma_p = -0.01\n").unwrap();
    let o = otto(&["optimize", "--config", cfg.to_str().unwrap(), "--T", "3"]);
    assert_eq!(code(&o), 2);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("run.cfg:3"), "{err}");

    let o = otto(&["optimize", "--ratio", "1.5", "--T", "3"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("--ratio"));

    let o = otto(&["optimize", "--N", "20"]);
    assert_eq!(code(&o), 2, "missing duration");
    assert_eq!(code(&otto(&["optimize", "--no-such-flag"])), 2);
}

#[test]
fn optimize_writes_artifacts_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let args = ["optimize", "--T", "3", "--N", "20", "--multistart", "2", "--seed", "5"];
    let o = otto(&[&args[..], &["--out", &out_arg(&a)]].concat());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["config.txt", "problem.json", "solution.json", "control.csv", "trajectory.csv"] {
        assert!(a.join(f).exists(), "{f}");
    }
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(a.join("solution.json")).unwrap()).unwrap();
    assert_eq!(report["status"], "optimal");
    assert!(report["resimulated"]["delta"].as_f64().unwrap().abs() < 1e-3);
    let head = fs::read_to_string(a.join("control.csv")).unwrap();
    assert!(head.starts_with("t,u,omega\n"));

    // Re-running from the echoed configuration reproduces the data files.
    let o = otto(&[
        "optimize",
        "--config",
        a.join("config.txt").to_str().unwrap(),
        "--out",
        &out_arg(&b),
    ]);
    assert_eq!(code(&o), 0);
    for f in ["control.csv", "trajectory.csv", "problem.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let ca = fs::read_to_string(a.join("config.txt")).unwrap();
    let cb = fs::read_to_string(b.join("config.txt")).unwrap();
    assert_eq!(ca.replace(&out_arg(&a), ""), cb.replace(&out_arg(&b), ""));
}

#[test]
fn short_amplitude_noise_stroke_exits_infeasible() {
    let dir = tempfile::tempdir().unwrap();
    let o = otto(&[
        "optimize", "--T", "1.0", "--gamma-a", "0.02", "--N", "20", "--multistart", "2", "--out",
        &out_arg(dir.path()),
    ]);
    assert_eq!(code(&o), 3);
    assert!(dir.path().join("solution.json").exists());
    assert!(!dir.path().join("control.csv").exists());
}

#[test]
fn baseline_only_sweep_needs_no_solver() {
    let dir = tempfile::tempdir().unwrap();
    let o = otto(&[
        "sweep", "--gamma-p", "0.01", "--T-grid", "2:29:1", "--baseline-only", "--out",
        &out_arg(dir.path()),
    ]);
    assert_eq!(code(&o), 0);
    let text = fs::read_to_string(dir.path().join("baseline.csv")).unwrap();
    assert_eq!(text.lines().count(), 6);
    assert!(!dir.path().join("sweep.csv").exists());
}

#[test]
fn sweep_merges_reference_durations() {
    let dir = tempfile::tempdir().unwrap();
    let o = otto(&[
        "sweep", "--gamma-p", "0.01", "--T-grid", "5:6:1", "--N", "16", "--multistart", "1",
        "--workers", "2", "--out", &out_arg(dir.path()),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let mut r = csv::Reader::from_path(dir.path().join("sweep.csv")).unwrap();
    let rows: Vec<csv::StringRecord> = r.records().map(|x| x.unwrap()).collect();
    assert_eq!(rows.len(), 3);
    assert!(rows[0][2].is_empty());
    assert!(!rows[1][2].is_empty(), "T_1 row carries the reference delta");
    assert_eq!(fs::read_dir(dir.path().join("points")).unwrap().count(), 3);
}

#[test]
fn min_time_writes_the_bracket_history() {
    let dir = tempfile::tempdir().unwrap();
    let o = otto(&[
        "min-time", "--N", "16", "--multistart", "1", "--bracket", "1.6:2.1", "--width", "0.05",
        "--out", &out_arg(dir.path()),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(dir.path().join("bracket.csv")).unwrap();
    assert!(text.starts_with("omega_h_T,status,max_violation,lower,upper,wall_ms"));
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("min_time.json")).unwrap()).unwrap();
    let t = summary["duration"].as_f64().unwrap();
    assert!(t > 1.6 && t <= 2.1);
}

#[test]
fn feedback_runs_every_epsilon_and_rejects_amplitude_noise() {
    let dir = tempfile::tempdir().unwrap();
    let o = otto(&["feedback", "--gamma-p", "0.01", "--epsilon", "0.1,0.05", "--out", &out_arg(dir.path())]);
    assert_eq!(code(&o), 0);
    let mut r = csv::Reader::from_path(dir.path().join("summary.csv")).unwrap();
    let deltas: Vec<f64> = r.records().map(|x| x.unwrap()[3].parse().unwrap()).collect();
    assert_eq!(deltas.len(), 2);
    assert!(deltas[1] < deltas[0]);
    assert!(dir.path().join("feedback_eps_0.05.csv").exists());

    let o = otto(&["feedback", "--gamma-a", "0.01", "--out", &out_arg(dir.path())]);
    assert_eq!(code(&o), 2);
}

#[test]
fn verify_sde_replays_a_control_file() {
    let dir = tempfile::tempdir().unwrap();
    let ctl = dir.path().join("u.csv");
    fs::write(&ctl, "t,u\n0,1\n0.5,0.5\n1,0.25\n").unwrap();
    let o = otto(&[
        "verify-sde", "--gamma-a", "0.02", "--ratio", "0.5", "--ensemble", "4000", "--dt", "1e-3",
        "--samples", "11", "--control", &format!("file:{}", ctl.display()), "--out",
        &out_arg(&dir.path().join("s")),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(dir.path().join("s/sde.csv")).unwrap();
    assert_eq!(text.lines().count(), 12);
    let v: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("s/sde.json")).unwrap()).unwrap();
    assert!(v["max_z"].as_f64().unwrap() < 5.0);

    let o = otto(&["verify-sde", "--gamma-p", "0.5", "--dt", "5e-3", "--out", &out_arg(dir.path())]);
    assert_eq!(code(&o), 2, "coarse step for the noise strength");
}
