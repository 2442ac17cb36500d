//! Convergence sweeps, Richardson extrapolation, a semiconcavity probe of the
//! discrete value function, and CSV/SVG report emission.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{fmt17, seminorm_h1, transfer_path, Field, PathPair, SpaceTimeGrid};
use crate::schemes::{Diagnostics, Problem, SchemeKind};
use crate::solver::{
    continuation_solve, default_ladder, newton_solve, stage_problem, LadderPlan, SeedKind, SolverConfig, Stage,
};

/// Which resolution a sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum SweepMode {
    /// `M = N` varied together.
    DxDt,
    /// `M` varied, `N` fixed.
    Dx,
    /// `N` varied, `M` fixed.
    Dt,
}

impl SweepMode {
    pub fn tag(&self) -> &'static str {
        match self {
            SweepMode::DxDt => "dxdt",
            SweepMode::Dx => "dx",
            SweepMode::Dt => "dt",
        }
    }
}

impl fmt::Display for SweepMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for SweepMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "dxdt" => Ok(SweepMode::DxDt),
            "dx" => Ok(SweepMode::Dx),
            "dt" => Ok(SweepMode::Dt),
            other => Err(Error::Argument(format!("unknown sweep mode {other:?}"))),
        }
    }
}

/// A convergence study.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub mode: SweepMode,
    /// Strictly increasing, at least three entries.
    pub resolutions: Vec<usize>,
    /// The resolution held fixed (`N` for `dx`, `M` for `dt`); ignored for
    /// `dxdt`.
    pub fixed: usize,
    /// Solver settings; the parameters and horizon of its target stage are
    /// used for every cell.
    pub base: SolverConfig,
    pub scheme_set: Vec<SchemeKind>,
    pub seed: SeedKind,
    /// Ladder used for cells that are not warm started.
    pub plan: LadderPlan,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.resolutions.len() < 3 {
            return Err(Error::Argument(format!(
                "a sweep needs at least 3 resolutions, got {}",
                self.resolutions.len()
            )));
        }
        if self.resolutions.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Argument("sweep resolutions must be strictly increasing".into()));
        }
        if self.scheme_set.is_empty() {
            return Err(Error::Argument("sweep needs at least one scheme".into()));
        }
        if self.mode != SweepMode::DxDt && self.fixed == 0 {
            return Err(Error::Argument("fixed resolution must be positive".into()));
        }
        if self.base.ladder.is_empty() {
            return Err(Error::Argument("base configuration has no target stage".into()));
        }
        for &r in &self.resolutions {
            self.grid_for(r)?;
        }
        Ok(())
    }

    /// Grid of the cell with resolution `r`.
    pub fn grid_for(&self, r: usize) -> Result<SpaceTimeGrid> {
        let t = self.base.target().grid.horizon();
        match self.mode {
            SweepMode::DxDt => SpaceTimeGrid::new(r, r, t),
            SweepMode::Dx => SpaceTimeGrid::new(r, self.fixed, t),
            SweepMode::Dt => SpaceTimeGrid::new(self.fixed, r, t),
        }
    }

    /// Step that the fit runs over: `dx` in `dx` mode, `dt` otherwise.
    pub fn step_of(&self, g: &SpaceTimeGrid) -> f64 {
        match self.mode {
            SweepMode::Dx => g.dx(),
            _ => g.dt(),
        }
    }
}

/// One solved cell.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub resolution: usize,
    pub scheme: SchemeKind,
    pub grid: SpaceTimeGrid,
    pub value: f64,
    pub diagnostics: Diagnostics,
    /// Newton iterations of the solve that produced this cell.
    pub newton_iters: usize,
    /// Fitted order of the state updates of that Newton solve, when
    /// measurable.
    pub newton_order: Option<f64>,
    /// Newton update sizes of that solve.
    pub step_history: Vec<f64>,
    /// Sizes of the state part of those updates.
    pub state_step_history: Vec<f64>,
    /// Whether the cell was reached from its neighbour rather than a ladder.
    pub warm: bool,
}

/// Fitted quantities for one scheme.
#[derive(Debug, Clone, PartialEq)]
pub struct SchemeFit {
    pub scheme: SchemeKind,
    /// Log-log slope of the error against the step.
    pub fitted_order: f64,
    /// Slope `b` of the affine fit `value = a + b step` (time modes only).
    pub slope: Option<f64>,
    /// Intercept `a` of that fit (time modes only).
    pub extrapolated: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub mode: SweepMode,
    /// Sorted by resolution, then scheme.
    pub rows: Vec<SweepRow>,
    /// One entry per scheme with at least three rows, in scheme order.
    pub fits: Vec<SchemeFit>,
}

impl SweepResult {
    pub fn fit(&self, scheme: SchemeKind) -> Option<&SchemeFit> {
        self.fits.iter().find(|f| f.scheme == scheme)
    }

    pub fn rows_for(&self, scheme: SchemeKind) -> impl Iterator<Item = &SweepRow> {
        self.rows.iter().filter(move |r| r.scheme == scheme)
    }
}

/// A sweep stopped by a failed cell; the cells solved before it are kept.
#[derive(Debug)]
pub struct SweepAbort {
    pub partial: SweepResult,
    pub error: Error,
}

impl fmt::Display for SweepAbort {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "sweep aborted after {} cells: {}",
            self.partial.rows.len(),
            self.error
        )
    }
}

impl std::error::Error for SweepAbort {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

/// Solves one configuration from scratch along the default ladder.
pub fn solve_cold(
    target: Stage,
    kind: SchemeKind,
    seed: SeedKind,
    base: &SolverConfig,
    plan: &LadderPlan,
) -> Result<(Problem, PathPair, SweepRow)> {
    let mut cfg = base.clone();
    cfg.ladder = default_ladder(target, plan)?;
    let sol = continuation_solve(seed, kind, &cfg)?;
    let r = &sol.report;
    let row = SweepRow {
        resolution: 0,
        scheme: kind,
        grid: target.grid,
        value: r.value,
        diagnostics: r.diagnostics.clone(),
        newton_iters: *r.newton_iters_per_stage.last().unwrap_or(&0),
        newton_order: crate::solver::convergence_order(&r.state_step_history),
        step_history: r.step_history.clone(),
        state_step_history: r.state_step_history.clone(),
        warm: false,
    };
    Ok((sol.problem, sol.path, row))
}

/// Solves `target` by Newton from a neighbouring solution transferred onto
/// its grid.
pub fn solve_warm(
    target: Stage,
    kind: SchemeKind,
    from: (&Problem, &PathPair),
    base: &SolverConfig,
) -> Result<(Problem, PathPair, SweepRow)> {
    let problem = stage_problem(&target)?;
    let mut guess = transfer_path(from.1, &from.0.grid, &problem.grid)?;
    guess.xi[0] = problem.start.clone();
    let (path, report) = newton_solve(&guess, kind, &problem, base)?;
    let row = SweepRow {
        resolution: 0,
        scheme: kind,
        grid: target.grid,
        value: problem.discrete_value(&path, kind)?,
        diagnostics: problem.diagnostics(&path, kind)?,
        newton_iters: report.iterations,
        newton_order: report.convergence_order(),
        step_history: report.step_history,
        state_step_history: report.state_step_history,
        warm: true,
    };
    Ok((problem, path, row))
}

fn run_chain(spec: &SweepSpec, kind: SchemeKind) -> (Vec<SweepRow>, Option<Error>) {
    let target = *spec.base.target();
    let mut rows = Vec::new();
    let mut prev: Option<(Problem, PathPair)> = None;
    for &r in &spec.resolutions {
        let stage = match spec.grid_for(r) {
            Ok(grid) => Stage {
                grid,
                params: target.params,
            },
            Err(e) => return (rows, Some(e)),
        };
        let warm = prev
            .as_ref()
            .and_then(|(p, path)| solve_warm(stage, kind, (p, path), &spec.base).ok());
        let solved = match warm {
            Some(w) => Ok(w),
            None => solve_cold(stage, kind, spec.seed, &spec.base, &spec.plan),
        };
        match solved {
            Ok((problem, path, mut row)) => {
                row.resolution = r;
                rows.push(row);
                prev = Some((problem, path));
            }
            Err(e) => return (rows, Some(Error::Argument(format!("{} cell {}: {e}", kind.tag(), r)))),
        }
    }
    (rows, None)
}

/// Runs every (resolution, scheme) cell. Resolutions of one scheme form a
/// warm-start chain; schemes run concurrently.
pub fn run_sweep(spec: &SweepSpec) -> std::result::Result<SweepResult, SweepAbort> {
    let empty = |error| SweepAbort {
        partial: SweepResult {
            mode: spec.mode,
            rows: Vec::new(),
            fits: Vec::new(),
        },
        error,
    };
    spec.validate().map_err(empty)?;
    spec.base.validate().map_err(empty)?;
    let mut schemes = spec.scheme_set.clone();
    schemes.sort();
    schemes.dedup();
    let chains: Vec<(Vec<SweepRow>, Option<Error>)> = schemes.par_iter().map(|&k| run_chain(spec, k)).collect();
    let mut rows = Vec::new();
    let mut error = None;
    for (r, e) in chains {
        rows.extend(r);
        if error.is_none() {
            error = e;
        }
    }
    rows.sort_by(|a, b| (a.resolution, a.scheme).cmp(&(b.resolution, b.scheme)));
    let mut result = SweepResult {
        mode: spec.mode,
        rows,
        fits: Vec::new(),
    };
    if let Some(error) = error {
        return Err(SweepAbort { partial: result, error });
    }
    for &k in &schemes {
        let pts: Vec<(f64, f64)> = result.rows_for(k).map(|r| (spec.step_of(&r.grid), r.value)).collect();
        match fit_scheme(spec.mode, k, &pts) {
            Ok(fit) => result.fits.push(fit),
            Err(error) => return Err(SweepAbort { partial: result, error }),
        }
    }
    Ok(result)
}

/// Fits for one scheme's `(step, value)` points.
///
/// `dx` mode: the finest point is the reference; the order is the log-log
/// slope of `|value - reference|` over the points whose step is at least
/// twice the reference step (all non-reference points if fewer than two
/// qualify). Time modes: affine extrapolation to zero step, and the order is
/// the log-log slope of `|value - extrapolated|`.
pub fn fit_scheme(mode: SweepMode, scheme: SchemeKind, pts: &[(f64, f64)]) -> Result<SchemeFit> {
    if pts.len() < 3 {
        return Err(Error::Argument(format!(
            "need at least 3 points to fit, got {}",
            pts.len()
        )));
    }
    match mode {
        SweepMode::Dx => {
            let (h_ref, v_ref) = *pts.iter().min_by(|a, b| a.0.total_cmp(&b.0)).expect("nonempty");
            let others: Vec<(f64, f64)> = pts.iter().copied().filter(|p| p.0 > h_ref).collect();
            let upper: Vec<(f64, f64)> = others
                .iter()
                .copied()
                .filter(|p| p.0 >= 2.0 * h_ref * (1.0 - 1e-12))
                .collect();
            let used = if upper.len() >= 2 { upper } else { others };
            let errs: Vec<(f64, f64)> = used.iter().map(|&(h, v)| (h, (v - v_ref).abs())).collect();
            Ok(SchemeFit {
                scheme,
                fitted_order: loglog_slope(&errs)?,
                slope: None,
                extrapolated: None,
            })
        }
        SweepMode::Dt | SweepMode::DxDt => {
            let (a, b) = affine_fit(pts)?;
            let errs: Vec<(f64, f64)> = pts.iter().map(|&(h, v)| (h, (v - a).abs())).collect();
            Ok(SchemeFit {
                scheme,
                fitted_order: loglog_slope(&errs)?,
                slope: Some(b),
                extrapolated: Some(a),
            })
        }
    }
}

/// Least-squares `value = a + b step`; returns `(a, b)`.
pub fn affine_fit(points: &[(f64, f64)]) -> Result<(f64, f64)> {
    if points.len() < 2 {
        return Err(Error::Argument("an affine fit needs at least 2 points".into()));
    }
    let k = points.len() as f64;
    let mh = points.iter().map(|p| p.0).sum::<f64>() / k;
    let mv = points.iter().map(|p| p.1).sum::<f64>() / k;
    let shh: f64 = points.iter().map(|p| (p.0 - mh).powi(2)).sum();
    let shv: f64 = points.iter().map(|p| (p.0 - mh) * (p.1 - mv)).sum();
    if !(shh > 1e-14 * mh * mh) || points.iter().any(|p| !p.0.is_finite() || !p.1.is_finite()) {
        return Err(Error::Argument("degenerate steps in affine fit".into()));
    }
    let b = shv / shh;
    Ok((mv - b * mh, b))
}

/// Affine least-squares extrapolation of `(step, value)` pairs to step zero.
pub fn richardson_extrapolate(points: &[(f64, f64)]) -> Result<f64> {
    affine_fit(points).map(|(a, _)| a)
}

/// Slope of `ln y` against `ln x` by least squares.
pub fn loglog_slope(points: &[(f64, f64)]) -> Result<f64> {
    if points.iter().any(|p| !(p.0 > 0.0 && p.1 > 0.0)) {
        return Err(Error::Argument("log-log fit needs positive data".into()));
    }
    let logs: Vec<(f64, f64)> = points.iter().map(|p| (p.0.ln(), p.1.ln())).collect();
    affine_fit(&logs).map(|(_, b)| b)
}

/// One evaluation of the semiconcavity probe.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeEntry {
    pub direction_id: usize,
    pub h: f64,
    /// `u(x0 + h d) + u(x0 - h d) - 2 u(x0)`
    pub q: f64,
    /// `u(x0 + h d)` and `u(x0 - h d)`
    pub u_plus: f64,
    pub u_minus: f64,
    /// `q / (h^2 |d|_1^2)`
    pub ratio: f64,
    /// Ratio more than ten times the running maximum (a basin switch).
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeReport {
    pub base_value: f64,
    pub entries: Vec<ProbeEntry>,
    /// Directions dropped because a solve failed, with the reason.
    pub skipped: Vec<(usize, String)>,
    /// Largest unflagged ratio.
    pub constant: f64,
}

/// Second differences of the discrete value function around the start of
/// `base` along each direction and scale.
///
/// Each perturbed problem keeps the target and parameters of `base` and is
/// Newton-solved from the base path.
pub fn semiconcavity_probe(
    base: (&Problem, &PathPair),
    directions: &[Field],
    scales: &[f64],
    kind: SchemeKind,
    cfg: &SolverConfig,
) -> Result<ProbeReport> {
    let (problem, path) = base;
    let g = &problem.grid;
    for (i, d) in directions.iter().enumerate() {
        g.check(d)?;
        if d.iter().all(|&v| v == 0.0) {
            return Err(Error::Argument(format!("direction {i} is zero")));
        }
    }
    if scales.iter().any(|&h| !(h > 0.0 && h.is_finite())) {
        return Err(Error::Argument("probe scales must be positive".into()));
    }
    let u0 = problem.discrete_value(path, kind)?;
    let solve_from = |start: Field| -> Result<f64> {
        let p = Problem::new(problem.params, *g, start, problem.target.clone())?;
        let mut guess = path.clone();
        guess.xi[0] = p.start.clone();
        let (solved, _) = newton_solve(&guess, kind, &p, cfg)?;
        p.discrete_value(&solved, kind)
    };
    let mut entries = Vec::new();
    let mut skipped = Vec::new();
    let mut running = 0.0_f64;
    'dirs: for (id, d) in directions.iter().enumerate() {
        let norm = seminorm_h1(d, g)?;
        let mut local = Vec::new();
        for &h in scales {
            let plus = solve_from(problem.start.add(&d.scaled(h)));
            let minus = solve_from(problem.start.sub(&d.scaled(h)));
            let (up, um) = match (plus, minus) {
                (Ok(a), Ok(b)) => (a, b),
                (Err(e), _) | (_, Err(e)) => {
                    skipped.push((id, e.to_string()));
                    continue 'dirs;
                }
            };
            let q = up + um - 2.0 * u0;
            local.push((h, q, up, um, q / (h * h * norm * norm)));
        }
        for (h, q, u_plus, u_minus, ratio) in local {
            let flagged = running > 0.0 && ratio > 10.0 * running;
            if !flagged {
                running = running.max(ratio);
            }
            entries.push(ProbeEntry {
                direction_id: id,
                h,
                q,
                u_plus,
                u_minus,
                ratio,
                flagged,
            });
        }
    }
    let constant = entries
        .iter()
        .filter(|e| !e.flagged)
        .map(|e| e.ratio)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(ProbeReport {
        base_value: u0,
        entries,
        skipped,
        constant,
    })
}

pub const SWEEP_HEADER: &str =
    "mode,scheme,M,N,dx,dt,value,grad_increment,control_bound,hamiltonian_drift,newton_iters";
pub const PROBE_HEADER: &str = "direction_id,h,q,ratio,flagged";

/// Sweep CSV: one row per cell, then a `fitted_order` row per scheme and, in
/// the time modes, an `extrapolated` row holding the intercept.
pub fn write_sweep_csv<W: Write>(mut w: W, result: &SweepResult) -> Result<()> {
    writeln!(w, "{SWEEP_HEADER}")?;
    for r in &result.rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{}",
            result.mode,
            r.scheme.tag(),
            r.grid.m(),
            r.grid.n(),
            fmt17(r.grid.dx()),
            fmt17(r.grid.dt()),
            fmt17(r.value),
            fmt17(r.diagnostics.grad_increment),
            fmt17(r.diagnostics.control_bound),
            fmt17(r.diagnostics.hamiltonian_drift),
            r.newton_iters
        )?;
    }
    for f in &result.fits {
        writeln!(w, "fitted_order,{},,,,,{},,,,", f.scheme.tag(), fmt17(f.fitted_order))?;
        if let Some(a) = f.extrapolated {
            writeln!(w, "extrapolated,{},,,,{},{},,,,", f.scheme.tag(), fmt17(0.0), fmt17(a))?;
        }
    }
    Ok(())
}

pub fn write_probe_csv<W: Write>(mut w: W, report: &ProbeReport) -> Result<()> {
    writeln!(w, "{PROBE_HEADER}")?;
    for e in &report.entries {
        writeln!(
            w,
            "{},{},{},{},{}",
            e.direction_id,
            fmt17(e.h),
            fmt17(e.q),
            fmt17(e.ratio),
            e.flagged
        )?;
    }
    Ok(())
}

struct Series {
    label: String,
    points: Vec<(f64, f64)>,
}

const PALETTE: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

/// Minimal line plot with embedded data comments.
fn svg_plot(title: &str, xlabel: &str, ylabel: &str, log: bool, series: &[Series], notes: &[String]) -> String {
    let (w, h) = (640.0, 420.0);
    let (l, r, t, b) = (80.0, 20.0, 40.0, 60.0);
    let tx = |v: f64| if log { v.log10() } else { v };
    let all: Vec<(f64, f64)> = series
        .iter()
        .flat_map(|s| s.points.iter().map(|&(x, y)| (tx(x), tx(y))))
        .filter(|p| p.0.is_finite() && p.1.is_finite())
        .collect();
    let span = |f: fn(&(f64, f64)) -> f64| {
        let lo = all.iter().map(f).fold(f64::INFINITY, f64::min);
        let hi = all.iter().map(f).fold(f64::NEG_INFINITY, f64::max);
        if !lo.is_finite() {
            (0.0, 1.0)
        } else if hi - lo < 1e-12 {
            (lo - 0.5, hi + 0.5)
        } else {
            let pad = 0.05 * (hi - lo);
            (lo - pad, hi + pad)
        }
    };
    let (x0, x1) = span(|p| p.0);
    let (y0, y1) = span(|p| p.1);
    let px = |x: f64| l + (x - x0) / (x1 - x0) * (w - l - r);
    let py = |y: f64| h - b - (y - y0) / (y1 - y0) * (h - t - b);

    let mut s = String::new();
    s.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n"
    ));
    for n in notes {
        s.push_str(&format!("<!-- {n} -->\n"));
    }
    for ser in series {
        for &(x, y) in &ser.points {
            s.push_str(&format!("<!-- data {} {} {} -->\n", ser.label, fmt17(x), fmt17(y)));
        }
    }
    s.push_str(&format!(
        "<rect x=\"0\" y=\"0\" width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n"
    ));
    s.push_str(&format!(
        "<rect x=\"{l}\" y=\"{t}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"black\"/>\n",
        w - l - r,
        h - t - b
    ));
    s.push_str(&format!(
        "<text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"15\">{title}</text>\n",
        w / 2.0
    ));
    s.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\">{xlabel}</text>\n",
        l + (w - l - r) / 2.0,
        h - 15.0
    ));
    s.push_str(&format!(
        "<text x=\"18\" y=\"{}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\" transform=\"rotate(-90 18 {})\">{ylabel}</text>\n",
        t + (h - t - b) / 2.0,
        t + (h - t - b) / 2.0
    ));
    for k in 0..=4 {
        let fx = x0 + (x1 - x0) * k as f64 / 4.0;
        let fy = y0 + (y1 - y0) * k as f64 / 4.0;
        let (lx, ly) = if log {
            (format!("1e{fx:.2}"), format!("1e{fy:.2}"))
        } else {
            (format!("{fx:.4}"), format!("{fy:.4}"))
        };
        s.push_str(&format!(
            "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"10\">{lx}</text>\n",
            px(fx),
            h - b + 16.0
        ));
        s.push_str(&format!(
            "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"10\">{ly}</text>\n",
            l - 6.0,
            py(fy) + 3.0
        ));
    }
    for (i, ser) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<String> = ser
            .points
            .iter()
            .map(|&(x, y)| (tx(x), tx(y)))
            .filter(|p| p.0.is_finite() && p.1.is_finite())
            .map(|(x, y)| format!("{:.2},{:.2}", px(x), py(y)))
            .collect();
        s.push_str(&format!(
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>\n",
            pts.join(" ")
        ));
        for p in &pts {
            let (cx, cy) = p.split_once(',').expect("formatted pair");
            s.push_str(&format!("<circle cx=\"{cx}\" cy=\"{cy}\" r=\"3\" fill=\"{color}\"/>\n"));
        }
        s.push_str(&format!(
            "<text x=\"{:.2}\" y=\"{:.2}\" font-family=\"sans-serif\" font-size=\"12\" fill=\"{color}\">{}</text>\n",
            l + 10.0,
            t + 16.0 + 15.0 * i as f64,
            ser.label
        ));
    }
    s.push_str("</svg>\n");
    s
}

/// SVG of a sweep: error against `dx` on log axes in `dx` mode, value
/// against `dt` otherwise.
pub fn sweep_svg(result: &SweepResult) -> String {
    let mut series = Vec::new();
    let mut notes = vec![format!("mode {}", result.mode)];
    let schemes: Vec<SchemeKind> = {
        let mut v: Vec<SchemeKind> = result.rows.iter().map(|r| r.scheme).collect();
        v.dedup();
        v.sort();
        v.dedup();
        v
    };
    for k in schemes {
        let rows: Vec<&SweepRow> = result.rows_for(k).collect();
        if let Some(f) = result.fit(k) {
            notes.push(format!("fit {} fitted_order {}", k.tag(), fmt17(f.fitted_order)));
            if let (Some(a), Some(b)) = (f.extrapolated, f.slope) {
                notes.push(format!("fit {} extrapolated {} slope {}", k.tag(), fmt17(a), fmt17(b)));
            }
        }
        let points = match result.mode {
            SweepMode::Dx => {
                let finest = rows.iter().max_by_key(|r| r.grid.m());
                let v_ref = finest.map(|r| r.value).unwrap_or(0.0);
                let m_ref = finest.map(|r| r.grid.m()).unwrap_or(0);
                rows.iter()
                    .filter(|r| r.grid.m() != m_ref)
                    .map(|r| (r.grid.dx(), (r.value - v_ref).abs()))
                    .collect()
            }
            _ => rows.iter().map(|r| (r.grid.dt(), r.value)).collect(),
        };
        series.push(Series {
            label: k.tag().to_string(),
            points,
        });
    }
    match result.mode {
        SweepMode::Dx => svg_plot("value error vs dx", "dx", "|value - finest|", true, &series, &notes),
        SweepMode::Dt => svg_plot("value vs dt", "dt", "value", false, &series, &notes),
        SweepMode::DxDt => svg_plot("value vs dx = dt", "dt", "value", false, &series, &notes),
    }
}

/// SVG of a probe: ratio against `h` per direction, log axes.
pub fn probe_svg(report: &ProbeReport) -> String {
    let mut ids: Vec<usize> = report.entries.iter().map(|e| e.direction_id).collect();
    ids.dedup();
    let series: Vec<Series> = ids
        .iter()
        .map(|&id| Series {
            label: format!("d{id}"),
            points: report
                .entries
                .iter()
                .filter(|e| e.direction_id == id)
                .map(|e| (e.h, e.ratio.abs()))
                .collect(),
        })
        .collect();
    let notes = vec![
        format!("base_value {}", fmt17(report.base_value)),
        format!("constant {}", fmt17(report.constant)),
    ];
    svg_plot(
        "semiconcavity ratio vs h",
        "h",
        "|q| / (h^2 |d|_1^2)",
        true,
        &series,
        &notes,
    )
}

/// Writes `<stem>.csv` and `<stem>.svg` into `dir`.
pub fn emit_sweep(result: &SweepResult, dir: &Path, stem: &str) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let csv = dir.join(format!("{stem}.csv"));
    let mut buf = Vec::new();
    write_sweep_csv(&mut buf, result)?;
    fs::write(&csv, buf)?;
    let svg = dir.join(format!("{stem}.svg"));
    fs::write(&svg, sweep_svg(result))?;
    Ok(vec![csv, svg])
}

/// Writes `<stem>.csv` and `<stem>.svg` into `dir`.
pub fn emit_probe(report: &ProbeReport, dir: &Path, stem: &str) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let csv = dir.join(format!("{stem}.csv"));
    let mut buf = Vec::new();
    write_probe_csv(&mut buf, report)?;
    fs::write(&csv, buf)?;
    let svg = dir.join(format!("{stem}.svg"));
    fs::write(&svg, probe_svg(report))?;
    Ok(vec![csv, svg])
}
