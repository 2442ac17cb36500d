use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

const SMALL: &str = "[model]\ndelta = 0.1\nK = 1e3\n\n[grid]\nM = 20\nN = 100\n";

fn glpath(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_glpath"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn small_config(dir: &Path) -> String {
    let p = dir.join("small.cfg");
    fs::write(&p, SMALL).unwrap();
    p.to_string_lossy().into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn no_arguments_prints_usage() {
    let d = TempDir::new().unwrap();
    let o = glpath(&[], d.path());
    assert!(!o.status.success());
    assert!(stderr(&o).contains("Usage"));
}

#[test]
fn unknown_command_is_a_usage_error() {
    let d = TempDir::new().unwrap();
    let o = glpath(&["teleport"], d.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn probability_of_zero_action_is_one() {
    let d = TempDir::new().unwrap();
    let o = glpath(&["probability", "--action", "0", "--epsilon", "0.1"], d.path());
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(String::from_utf8_lossy(&o.stdout).trim(), "1");
}

#[test]
fn probability_rejects_bad_epsilon() {
    let d = TempDir::new().unwrap();
    let o = glpath(&["probability", "--action", "1"], d.path());
    assert_eq!(o.status.code(), Some(3));
    let o = glpath(&["probability", "--action", "1", "--epsilon", "-1"], d.path());
    assert_eq!(o.status.code(), Some(3));
    let o = glpath(&["probability", "--action", "abc", "--epsilon", "1"], d.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn probability_from_a_solve() {
    let d = TempDir::new().unwrap();
    let cfg = small_config(d.path());
    let o = glpath(&["--config", &cfg, "--set", "epsilon=2", "probability"], d.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let out = String::from_utf8_lossy(&o.stdout).into_owned();
    let mut lines = out.lines();
    let a: f64 = lines.next().unwrap().strip_prefix("action ").unwrap().parse().unwrap();
    let p: f64 = lines.next().unwrap().parse().unwrap();
    assert!(a > 0.0);
    assert!((p - (-a / 2.0).exp()).abs() <= 1e-15);
}

#[test]
fn bad_config_reports_the_line() {
    let d = TempDir::new().unwrap();
    let p = d.path().join("bad.cfg");
    fs::write(&p, "[model]\ndelta = 0.1\nwidth = 3\n").unwrap();
    let o = glpath(&["--config", p.to_str().unwrap(), "solve"], d.path());
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));
    let o = glpath(&["--config", "missing.cfg", "solve"], d.path());
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn overrides_are_validated_before_any_work() {
    let d = TempDir::new().unwrap();
    for bad in [
        "bogus=1",
        "M=abc",
        "delta=-0.1",
        "grid.delta=0.1",
        "nu=2",
        "resolutions=800,400,200",
    ] {
        let o = glpath(&["--set", bad, "--out", "o", "solve"], d.path());
        assert_eq!(o.status.code(), Some(3), "{bad}: {}", stderr(&o));
        assert!(!d.path().join("o").exists(), "{bad} produced output");
    }
    let o = glpath(&["--scheme", "rk4", "solve"], d.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn unwritable_output_is_an_io_error() {
    let d = TempDir::new().unwrap();
    let cfg = small_config(d.path());
    fs::write(d.path().join("taken"), "").unwrap();
    let o = glpath(&["--config", &cfg, "--out", "taken/sub", "stable-states"], d.path());
    assert_eq!(o.status.code(), Some(5), "{}", stderr(&o));
    let o = glpath(&["--config", &cfg, "--out", "taken/sub", "solve"], d.path());
    assert_eq!(o.status.code(), Some(5), "{}", stderr(&o));
}

#[test]
fn numerical_failure_has_its_own_code() {
    let d = TempDir::new().unwrap();
    let cfg = small_config(d.path());
    // One stage at the target and a single Newton step cannot converge.
    let o = glpath(
        &[
            "--config",
            &cfg,
            "--set",
            "ladder=20,100,0.1,1e3",
            "--set",
            "newton_max=1",
            "--set",
            "max_bisections=0",
            "solve",
        ],
        d.path(),
    );
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
    assert!(stderr(&o).contains("converge"));
}

#[test]
fn stable_states_csv() {
    let d = TempDir::new().unwrap();
    let cfg = small_config(d.path());
    let o = glpath(&["--config", &cfg, "--out", "o", "stable-states"], d.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(d.path().join("o/stable_states.csv")).unwrap();
    let rows: Vec<Vec<f64>> = text
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 21);
    assert_eq!(rows[0][1], 0.0);
    assert_eq!(rows[20][1], 0.0);
    for r in &rows {
        assert_eq!(r[1], -r[2]);
        assert!(r[1] >= 0.0 && r[1] < 1.0);
    }
    assert!(rows[10][1] > 0.99);
}

#[test]
fn solve_writes_paths_snapshots_and_summary() {
    let d = TempDir::new().unwrap();
    let cfg = small_config(d.path());
    let o = glpath(&["--config", &cfg, "--out", "o", "solve"], d.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let out = d.path().join("o");
    for f in [
        "path_xi.csv",
        "path_eta.csv",
        "snapshots.csv",
        "summary.txt",
        "settings.cfg",
    ] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    let xi = fs::read_to_string(out.join("path_xi.csv")).unwrap();
    assert_eq!(xi.lines().count(), 102);
    assert_eq!(xi.lines().next().unwrap().split(',').count(), 20);
    let snap = fs::read_to_string(out.join("snapshots.csv")).unwrap();
    assert_eq!(snap.lines().next().unwrap(), "x,t=0,t=0.2,t=0.4,t=0.6,t=0.8,t=1");
    assert_eq!(snap.lines().count(), 22);
    // Starts at the positive state, ends at the negative one.
    let mid: Vec<f64> = snap
        .lines()
        .nth(11)
        .unwrap()
        .split(',')
        .map(|v| v.parse().unwrap())
        .collect();
    assert!(mid[1] > 0.9 && mid[6] < -0.9, "{mid:?}");
    let summary = fs::read_to_string(out.join("summary.txt")).unwrap();
    let value: f64 = summary
        .lines()
        .find_map(|l| l.strip_prefix("value "))
        .unwrap()
        .parse()
        .unwrap();
    assert!(value > 0.0 && value.is_finite());
    // The written settings reproduce the run.
    let again = glpath(&["--config", "o/settings.cfg", "--out", "p", "solve"], d.path());
    assert!(again.status.success(), "{}", stderr(&again));
    assert_eq!(
        fs::read(out.join("summary.txt")).unwrap(),
        fs::read(d.path().join("p/summary.txt")).unwrap()
    );
}

#[test]
fn repeated_runs_are_byte_identical() {
    let d = TempDir::new().unwrap();
    let cfg = small_config(d.path());
    for dir in ["a", "b"] {
        let o = glpath(&["--config", &cfg, "--scheme", "be", "--out", dir, "solve"], d.path());
        assert!(o.status.success(), "{}", stderr(&o));
    }
    for f in ["path_xi.csv", "path_eta.csv", "snapshots.csv", "summary.txt"] {
        let a = fs::read(d.path().join("a").join(f)).unwrap();
        let b = fs::read(d.path().join("b").join(f)).unwrap();
        assert!(a == b, "{f} differs");
    }
}

#[test]
fn sweep_and_probe_emit_reports() {
    let d = TempDir::new().unwrap();
    let cfg = small_config(d.path());
    let o = glpath(
        &[
            "--config",
            &cfg,
            "--set",
            "mode=dt",
            "--set",
            "fixed=20",
            "--set",
            "resolutions=100,200,400",
            "--out",
            "s",
            "sweep",
        ],
        d.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(d.path().join("s/sweep_dt.csv")).unwrap();
    assert!(csv.starts_with("mode,scheme,M,N"));
    assert!(csv.contains("extrapolated"));
    assert!(d.path().join("s/sweep_dt.svg").is_file());

    let o = glpath(
        &[
            "--config",
            &cfg,
            "--scheme",
            "be",
            "--set",
            "directions=1,2",
            "--set",
            "scales=0.02,0.01,0.005",
            "--out",
            "p",
            "probe",
        ],
        d.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(d.path().join("p/probe.csv")).unwrap();
    assert_eq!(csv.lines().count(), 7);
    assert!(d.path().join("p/probe.svg").is_file());
}
