use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{anyhow, Context};
use glpath::experiments::{emit_probe, emit_sweep, run_sweep, semiconcavity_probe};
use glpath::grid::{fmt17, write_series_csv, PathPair, SpaceTimeGrid};
use glpath::model::{stable_states as equilibria, transition_probability};
use glpath::solver::{continuation_solve, Solution};
use glpath::{Error, SchemeKind, Settings};

pub const EXIT_CONFIG: u8 = 3;
pub const EXIT_NUMERIC: u8 = 4;
pub const EXIT_IO: u8 = 5;

/// An error with the exit code it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub error: anyhow::Error,
}

impl Failure {
    fn new(code: u8, error: impl Into<anyhow::Error>) -> Self {
        Failure {
            code,
            error: error.into(),
        }
    }
}

fn code_of(e: &Error) -> u8 {
    match e {
        Error::Config { .. } | Error::Argument(_) => EXIT_CONFIG,
        Error::Io(_) => EXIT_IO,
        Error::Stage { source, .. } => code_of(source),
        _ => EXIT_NUMERIC,
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::new(code_of(&e), e)
    }
}

fn io<T>(r: std::io::Result<T>, what: impl FnOnce() -> String) -> Result<T, Failure> {
    r.map_err(|e| Failure::new(EXIT_IO, anyhow::Error::new(e).context(what())))
}

/// Reads the settings file (if any), applies overrides and validates the
/// result before anything is computed.
pub fn load_settings(path: Option<&Path>, overrides: &[String]) -> Result<Settings, Failure> {
    let mut s = match path {
        None => Settings::default(),
        Some(p) => {
            let src = fs::read_to_string(p)
                .with_context(|| format!("cannot read config {}", p.display()))
                .map_err(|e| Failure::new(EXIT_CONFIG, e))?;
            Settings::parse(&src)
                .with_context(|| format!("in {}", p.display()))
                .map_err(|e| Failure::new(EXIT_CONFIG, e))?
        }
    };
    s.apply_overrides(overrides)?;
    s.validate()?;
    Ok(s)
}

fn write_file(dir: &Path, name: &str, bytes: &[u8]) -> Result<(), Failure> {
    io(fs::create_dir_all(dir), || format!("cannot create {}", dir.display()))?;
    let p = dir.join(name);
    io(fs::write(&p, bytes), || format!("cannot write {}", p.display()))
}

fn series_bytes(series: &[glpath::Field], g: &SpaceTimeGrid) -> Result<Vec<u8>, Failure> {
    let mut buf = Vec::new();
    write_series_csv(&mut buf, series, g)?;
    Ok(buf)
}

/// Node coordinate including the boundary nodes `0` and `M`.
fn node(g: &SpaceTimeGrid, j: usize) -> f64 {
    j as f64 / g.m() as f64
}

pub fn stable_states(s: &Settings, out: &Path) -> Result<(), Failure> {
    let g = s.grid()?;
    let pair = equilibria(&s.params()?, &g, 1e-12)?;
    let mut csv = String::from("x,phi_plus,phi_minus\n");
    for j in 0..=g.m() {
        let (p, m) = if j == 0 || j == g.m() {
            (0.0, 0.0)
        } else {
            (pair.phi_plus[j - 1], pair.phi_minus[j - 1])
        };
        let _ = writeln!(csv, "{},{},{}", fmt17(node(&g, j)), fmt17(p), fmt17(m));
    }
    write_file(out, "stable_states.csv", csv.as_bytes())?;
    println!("M {} delta {} residual {:.3e}", g.m(), s.delta, pair.residual);
    println!("wrote {}", out.join("stable_states.csv").display());
    Ok(())
}

/// Running cost `dt dx sum |eta|^2 / 2` over the control levels of `kind`.
pub fn action(path: &PathPair, g: &SpaceTimeGrid, kind: SchemeKind) -> f64 {
    let levels = match kind {
        SchemeKind::Forward => &path.eta[1..],
        SchemeKind::Backward => &path.eta[..g.n()],
    };
    let sum: f64 = levels.iter().map(|e| e.iter().map(|v| v * v).sum::<f64>()).sum();
    0.5 * g.dt() * g.dx() * sum
}

fn solve_settings(s: &Settings) -> Result<Solution, Failure> {
    let cfg = s.solver_config()?;
    Ok(continuation_solve(s.seed, s.scheme, &cfg)?)
}

fn snapshots_csv(s: &Settings, sol: &Solution) -> String {
    let g = &sol.problem.grid;
    let levels: Vec<usize> = s
        .snapshots
        .iter()
        .map(|&t| ((t / g.dt()).round() as usize).min(g.n()))
        .collect();
    let mut csv = String::from("x");
    for &l in &levels {
        let _ = write!(csv, ",t={}", g.t(l));
    }
    csv.push('\n');
    for j in 0..=g.m() {
        csv.push_str(&fmt17(node(g, j)));
        for &l in &levels {
            let v = if j == 0 || j == g.m() {
                0.0
            } else {
                sol.path.xi[l][j - 1]
            };
            csv.push(',');
            csv.push_str(&fmt17(v));
        }
        csv.push('\n');
    }
    csv
}

fn summary(s: &Settings, sol: &Solution) -> String {
    let g = &sol.problem.grid;
    let r = &sol.report;
    let d = &r.diagnostics;
    let mut t = String::new();
    let _ = writeln!(t, "scheme {}", r.scheme.tag());
    let _ = writeln!(t, "seed {}", s.seed);
    let _ = writeln!(t, "M {}", g.m());
    let _ = writeln!(t, "N {}", g.n());
    let _ = writeln!(t, "T {}", g.horizon());
    let _ = writeln!(t, "delta {}", sol.problem.params.delta);
    let _ = writeln!(t, "K {}", sol.problem.params.penalty);
    let _ = writeln!(t, "value {}", fmt17(r.value));
    let _ = writeln!(t, "action {}", fmt17(action(&sol.path, g, r.scheme)));
    let _ = writeln!(t, "stages {}", r.newton_iters_per_stage.len());
    let _ = writeln!(t, "inserted_stages {}", r.inserted_stages);
    let iters: Vec<String> = r.newton_iters_per_stage.iter().map(|v| v.to_string()).collect();
    let _ = writeln!(t, "newton_iters {}", iters.join(" "));
    let _ = writeln!(t, "picard_iters {}", r.picard_iters);
    let _ = writeln!(t, "picard_converged {}", r.picard_converged);
    if let Some(res) = r.residual_history.last() {
        let _ = writeln!(t, "final_residual {res:.3e}");
    }
    if let Some(step) = r.step_history.last() {
        let _ = writeln!(t, "final_update {step:.3e}");
    }
    let _ = writeln!(t, "grad_increment {}", fmt17(d.grad_increment));
    let _ = writeln!(t, "control_bound {}", fmt17(d.control_bound));
    let _ = writeln!(t, "hamiltonian_drift {}", fmt17(d.hamiltonian_drift));
    let _ = writeln!(t, "h1_bound_margin {}", fmt17(d.max_h1_margin()));
    t
}

pub fn solve(s: &Settings, out: &Path) -> Result<(), Failure> {
    // Fail on an unwritable directory before spending time on the solve.
    io(fs::create_dir_all(out), || format!("cannot create {}", out.display()))?;
    let sol = solve_settings(s)?;
    let g = &sol.problem.grid;
    write_file(out, "path_xi.csv", &series_bytes(&sol.path.xi, g)?)?;
    write_file(out, "path_eta.csv", &series_bytes(&sol.path.eta, g)?)?;
    write_file(out, "snapshots.csv", snapshots_csv(s, &sol).as_bytes())?;
    let text = summary(s, &sol);
    write_file(out, "summary.txt", text.as_bytes())?;
    write_file(out, "settings.cfg", s.render().as_bytes())?;
    print!("{text}");
    Ok(())
}

pub fn sweep(s: &Settings, out: &Path) -> Result<(), Failure> {
    io(fs::create_dir_all(out), || format!("cannot create {}", out.display()))?;
    let spec = s.sweep_spec()?;
    let stem = format!("sweep_{}", spec.mode);
    write_file(out, "settings.cfg", s.render().as_bytes())?;
    let (result, failure) = match run_sweep(&spec) {
        Ok(r) => (r, None),
        Err(abort) => (abort.partial, Some(abort.error)),
    };
    emit_sweep(&result, out, &stem)?;
    for f in &result.fits {
        print!("{} order {:.3}", f.scheme.tag(), f.fitted_order);
        if let Some(x) = f.extrapolated {
            print!(" extrapolated {x:.6}");
        }
        if let Some(sl) = f.slope {
            print!(" slope {sl:.4}");
        }
        println!();
    }
    println!("wrote {}", out.join(format!("{stem}.csv")).display());
    match failure {
        None => Ok(()),
        Some(e) => {
            let code = code_of(&e);
            Err(Failure::new(
                code,
                anyhow!(e).context("sweep aborted; partial results written"),
            ))
        }
    }
}

pub fn probe(s: &Settings, out: &Path) -> Result<(), Failure> {
    io(fs::create_dir_all(out), || format!("cannot create {}", out.display()))?;
    let cfg = s.solver_config()?;
    let sol = continuation_solve(s.seed, s.scheme, &cfg)?;
    let dirs = s.probe_directions(&sol.problem.grid);
    let rep = semiconcavity_probe((&sol.problem, &sol.path), &dirs, &s.scales, s.scheme, &cfg)?;
    emit_probe(&rep, out, "probe")?;
    write_file(out, "settings.cfg", s.render().as_bytes())?;
    println!("base_value {}", fmt17(rep.base_value));
    println!("constant {}", fmt17(rep.constant));
    for (id, why) in &rep.skipped {
        println!("skipped direction {} ({}): {why}", id, s.directions[*id]);
    }
    println!("wrote {}", out.join("probe.csv").display());
    Ok(())
}

pub fn probability(s: &Settings, action_arg: Option<f64>, epsilon: Option<f64>) -> Result<(), Failure> {
    let eps = epsilon.or(s.epsilon).ok_or_else(|| {
        Failure::new(
            EXIT_CONFIG,
            anyhow!("no epsilon: pass --epsilon or set epsilon in [report]"),
        )
    })?;
    let a = match action_arg {
        Some(a) => a,
        None => {
            let sol = solve_settings(s)?;
            let a = action(&sol.path, &sol.problem.grid, sol.report.scheme);
            println!("action {a}");
            a
        }
    };
    println!("{}", transition_probability(a, eps)?);
    Ok(())
}
