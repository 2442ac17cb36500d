//! Two-stage solution procedure: a damped fixed-point (Picard) warm start
//! followed by full-step Newton iterations with a banded LU, chained over a
//! ladder of grids and parameters.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::grid::{transfer_path, Field, PathPair, SpaceTimeGrid};
use crate::model::{stable_states, ModelParams};
use crate::schemes::{
    be_dual_step_back, be_state_step, fe_dual_step_back, fe_state_step, Diagnostics, Problem, SchemeKind,
};

/// Tolerance on the discrete L2 residual of the stable states.
pub const EQUILIBRIUM_TOL: f64 = 1e-12;

/// Newton gives up once the residual exceeds its initial size by this factor.
const DIVERGED: f64 = 1e8;

/// One rung of the continuation ladder.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stage {
    pub grid: SpaceTimeGrid,
    pub params: ModelParams,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    /// Picard damping `nu` in `[0, 1)`.
    pub nu: f64,
    pub picard_tol: f64,
    pub picard_max: usize,
    /// Per-component bound on the Newton update and the residual.
    pub newton_tol: f64,
    pub newton_max: usize,
    /// How often a failed parameter step may be halved before giving up.
    pub max_bisections: usize,
    /// Scheme used on every stage but the last; `None` uses the requested
    /// scheme throughout.
    pub bootstrap: Option<SchemeKind>,
    /// Stages solved in order; the last one is the target configuration.
    pub ladder: Vec<Stage>,
}

impl SolverConfig {
    pub fn new(ladder: Vec<Stage>) -> Self {
        SolverConfig {
            nu: 0.9,
            picard_tol: 1e-3,
            picard_max: 500,
            newton_tol: 1e-13,
            newton_max: 30,
            max_bisections: 6,
            bootstrap: Some(SchemeKind::Backward),
            ladder,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.nu) {
            return Err(Error::Argument(format!(
                "damping nu must lie in [0, 1), got {}",
                self.nu
            )));
        }
        if !(self.picard_tol > 0.0 && self.newton_tol > 0.0) {
            return Err(Error::Argument("tolerances must be positive".into()));
        }
        if self.picard_max == 0 || self.newton_max == 0 {
            return Err(Error::Argument("iteration budgets must be positive".into()));
        }
        if self.ladder.is_empty() {
            return Err(Error::Argument("continuation ladder is empty".into()));
        }
        for s in &self.ladder {
            s.params.validate()?;
        }
        let t0 = self.ladder[0].grid.horizon();
        if self.ladder.iter().any(|s| s.grid.horizon() != t0) {
            return Err(Error::Argument("all ladder stages must share the horizon T".into()));
        }
        Ok(())
    }

    pub fn target(&self) -> &Stage {
        self.ladder.last().expect("validated ladder")
    }
}

/// Shape of the ladder built by [`default_ladder`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LadderPlan {
    /// Spatial intervals of the coarse grid.
    pub coarse_m: usize,
    /// Time steps of the coarse grid.
    pub coarse_n: usize,
    /// Interface width the first stage starts from (never below the target).
    pub delta_start: f64,
    /// Penalty of the first stage (never above the target).
    pub k_start: f64,
    /// Penalty used while `delta` is lowered.
    pub k_mid: f64,
    /// Largest change of `delta` between consecutive stages.
    pub delta_step: f64,
    /// Largest factor between consecutive penalties.
    pub k_factor: f64,
}

impl Default for LadderPlan {
    fn default() -> Self {
        LadderPlan {
            coarse_m: 30,
            coarse_n: 30,
            delta_start: 0.1,
            k_start: 10.0,
            k_mid: 1e3,
            delta_step: 0.01,
            k_factor: 1e3,
        }
    }
}

/// Builds a ladder ending at `target`: a coarse, wide-interface, soft-penalty
/// first stage, refinement in time until `dt <= delta / 3`, then `delta`
/// lowered and `K` raised to the target, and finally the grid moved to the
/// target resolution by factors of at most two.
pub fn default_ladder(target: Stage, plan: &LadderPlan) -> Result<Vec<Stage>> {
    let t = target.grid.horizon();
    let tp = target.params;
    if plan.coarse_m < 2 || plan.coarse_n < 1 || !(plan.delta_step > 0.0) || !(plan.k_factor > 1.0) {
        return Err(Error::Argument("invalid ladder plan".into()));
    }
    let delta0 = plan.delta_start.max(tp.delta);
    let k0 = plan.k_start.min(tp.penalty);
    let k_mid = plan.k_mid.clamp(k0, tp.penalty);
    let stage = |m: usize, n: usize, delta: f64, k: f64| -> Result<Stage> {
        let mut params = tp;
        params.delta = delta;
        params.penalty = k;
        Ok(Stage {
            grid: SpaceTimeGrid::new(m, n, t)?,
            params,
        })
    };
    let m0 = plan.coarse_m.min(target.grid.m());
    let mut n = plan.coarse_n;
    let mut ladder = vec![stage(m0, n, delta0, k0)?];
    if k_mid > k0 {
        ladder.push(stage(m0, n, delta0, k_mid)?);
    }
    let n_fine = ((3.0 * t / tp.delta).ceil() as usize).max(n);
    while n < n_fine {
        n = (2 * n).min(n_fine);
        ladder.push(stage(m0, n, delta0, k_mid)?);
    }
    let steps = ((delta0 - tp.delta) / plan.delta_step - 1e-9).ceil().max(0.0) as usize;
    for s in 1..=steps {
        let d = delta0 + (tp.delta - delta0) * s as f64 / steps as f64;
        ladder.push(stage(m0, n, d, k_mid)?);
    }
    let k_steps = ((tp.penalty / k_mid).ln() / plan.k_factor.ln() - 1e-9).ceil().max(0.0) as usize;
    let factor = (tp.penalty / k_mid).powf(1.0 / k_steps.max(1) as f64);
    for s in 1..=k_steps {
        let k = k_mid * factor.powi(s as i32);
        ladder.push(stage(m0, n, tp.delta, k)?);
    }
    let mut m = m0;
    while m != target.grid.m() || n != target.grid.n() {
        m = toward(m, target.grid.m());
        n = toward(n, target.grid.n());
        ladder.push(stage(m, n, tp.delta, tp.penalty)?);
    }
    let last = ladder.last_mut().expect("nonempty");
    *last = target;
    Ok(ladder)
}

/// One refinement step from `a` toward `b`, changing by at most a factor 2.
fn toward(a: usize, b: usize) -> usize {
    if b > a {
        (2 * a).min(b)
    } else {
        (a / 2).max(b)
    }
}

/// Family of initial guesses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeedKind {
    /// Linear-in-time blend of the two stable states.
    Uniform,
    /// A single wall entering at `x = 0` and sweeping to `x = 1`.
    OneWall,
    /// Two walls nucleating at `x = 1/2` and moving outward.
    TwoWall,
    /// Uncontrolled rest at the start state with zero dual; an exact solution
    /// in the limit `K -> 0`, used to begin a penalty homotopy.
    Rest,
}

impl fmt::Display for SeedKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SeedKind::Uniform => "uniform",
            SeedKind::OneWall => "one_wall",
            SeedKind::TwoWall => "two_wall",
            SeedKind::Rest => "rest",
        })
    }
}

impl FromStr for SeedKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "uniform" => Ok(SeedKind::Uniform),
            "one_wall" => Ok(SeedKind::OneWall),
            "two_wall" | "two_walls" => Ok(SeedKind::TwoWall),
            "rest" => Ok(SeedKind::Rest),
            other => Err(Error::Argument(format!("unknown seed {other:?}"))),
        }
    }
}

/// Builds the stable states and the control problem for one stage.
pub fn stage_problem(stage: &Stage) -> Result<Problem> {
    let pair = stable_states(&stage.params, &stage.grid, EQUILIBRIUM_TOL)?;
    Problem::new(stage.params, stage.grid, pair.phi_plus, pair.phi_minus)
}

/// State trajectory of a seed family; the dual is filled so that every
/// state row of `kind` holds exactly.
pub fn seed_path(problem: &Problem, seed: SeedKind, kind: SchemeKind) -> Result<PathPair> {
    let g = &problem.grid;
    let plus = &problem.start;
    let minus = &problem.target;
    let w = 2.0 * problem.params.delta;
    let n = g.n();
    if seed == SeedKind::Rest {
        return Ok(PathPair::constant(g, plus, &g.zero_field()));
    }
    let mut xi = Vec::with_capacity(n + 1);
    for level in 0..=n {
        let s = level as f64 / n as f64;
        let f = match seed {
            SeedKind::Uniform => Field(
                plus.iter()
                    .zip(minus.iter())
                    .map(|(a, b)| (1.0 - s) * a + s * b)
                    .collect(),
            ),
            SeedKind::OneWall => {
                let c = -2.0 * w + s * (1.0 + 4.0 * w);
                Field((0..g.interior()).map(|i| plus[i] * ((g.x(i) - c) / w).tanh()).collect())
            }
            SeedKind::TwoWall => {
                let d = -2.0 * w + s * (0.5 + 4.0 * w);
                Field(
                    (0..g.interior())
                        .map(|i| plus[i] * (((g.x(i) - 0.5).abs() - d) / w).tanh())
                        .collect(),
                )
            }
            SeedKind::Rest => unreachable!(),
        };
        xi.push(f);
    }
    xi[0] = plus.clone();
    xi[n] = minus.clone();
    let eta = consistent_dual(problem, &xi, kind)?;
    Ok(PathPair { xi, eta })
}

/// Dual levels that make every state row of `kind` vanish for `xi`.
pub fn consistent_dual(problem: &Problem, xi: &[Field], kind: SchemeKind) -> Result<Vec<Field>> {
    let g = &problem.grid;
    let n = g.n();
    let dt = g.dt();
    let zero = g.zero_field();
    let mut eta = vec![zero.clone(); n + 1];
    for level in 0..n {
        // Free drift over one step, then the control is whatever is missing.
        match kind {
            SchemeKind::Forward => {
                let free = fe_state_step(&xi[level], &zero, &problem.params, g)?;
                eta[level + 1] = Field(
                    free.iter()
                        .zip(xi[level + 1].iter())
                        .map(|(f, x)| (f - x) / dt)
                        .collect(),
                );
            }
            SchemeKind::Backward => {
                // x - dt (delta D2 x - V'(x)/delta) = xi^n - dt eta^n at x = xi^{n+1}.
                let x = &xi[level + 1];
                let lhs = implicit_lhs(x, &problem.params, g);
                eta[level] = Field((0..x.len()).map(|i| (xi[level][i] - lhs[i]) / dt).collect());
            }
        }
    }
    match kind {
        SchemeKind::Forward => eta[0] = fe_dual_step_back(&eta[1], &xi[0], &problem.params, g)?,
        SchemeKind::Backward => eta[n] = problem.terminal_dual(&xi[n]),
    }
    Ok(eta)
}

fn implicit_lhs(x: &[f64], p: &ModelParams, g: &SpaceTimeGrid) -> Vec<f64> {
    let lap = crate::grid::d2_apply(x, g).expect("field on grid");
    let pot = p.potential();
    (0..x.len())
        .map(|i| x[i] - g.dt() * (p.delta * lap[i] - pot.v1(x[i]) / p.delta))
        .collect()
}

/// Dual sweep backward from the terminal condition for fixed states.
fn dual_sweep(problem: &Problem, xi: &[Field], kind: SchemeKind) -> Result<Vec<Field>> {
    let g = &problem.grid;
    let n = g.n();
    let mut eta = vec![g.zero_field(); n + 1];
    eta[n] = problem.terminal_dual(&xi[n]);
    for level in (0..n).rev() {
        eta[level] = match kind {
            SchemeKind::Forward => fe_dual_step_back(&eta[level + 1], &xi[level], &problem.params, g)?,
            SchemeKind::Backward => be_dual_step_back(&eta[level + 1], &xi[level + 1], &problem.params, g)?,
        };
    }
    Ok(eta)
}

/// State sweep forward from the start with control `-eta`.
fn state_sweep(problem: &Problem, eta: &[Field], kind: SchemeKind) -> Result<Vec<Field>> {
    let g = &problem.grid;
    let n = g.n();
    let mut xi = Vec::with_capacity(n + 1);
    xi.push(problem.start.clone());
    for level in 0..n {
        let next = match kind {
            SchemeKind::Forward => fe_state_step(&xi[level], &eta[level + 1].scaled(-1.0), &problem.params, g)?,
            SchemeKind::Backward => be_state_step(&xi[level], &eta[level], &problem.params, g)?,
        };
        if !next.is_finite() {
            return Err(Error::WarmStartDiverged {
                iterations: 0,
                change: f64::INFINITY,
            });
        }
        xi.push(next);
    }
    Ok(xi)
}

/// Outcome of the Picard warm start.
#[derive(Debug, Clone, PartialEq)]
pub struct WarmStart {
    pub path: PathPair,
    pub iterations: usize,
    /// Whether the change dropped to `picard_tol`.
    pub converged: bool,
    pub changes: Vec<f64>,
}

/// Damped fixed-point iteration: dual sweep for the current states, state
/// sweep with that dual, then `xi <- nu xi + (1 - nu) xi_upd`.
///
/// Stops when the max-norm of `xi_upd - xi` is at most `picard_tol` or the
/// budget is used up; the last iterate is returned either way.
pub fn picard_warm_start(
    seed: &PathPair,
    kind: SchemeKind,
    problem: &Problem,
    cfg: &SolverConfig,
) -> Result<WarmStart> {
    cfg.validate()?;
    seed.check(&problem.grid)?;
    let mut xi = seed.xi.clone();
    xi[0] = problem.start.clone();
    let mut changes = Vec::new();
    for it in 1..=cfg.picard_max {
        let eta = dual_sweep(problem, &xi, kind)?;
        let upd = state_sweep(problem, &eta, kind).map_err(|_| Error::WarmStartDiverged {
            iterations: it,
            change: f64::INFINITY,
        })?;
        let change = xi
            .iter()
            .zip(&upd)
            .flat_map(|(a, b)| a.iter().zip(b.iter()).map(|(p, q)| (p - q).abs()))
            .fold(0.0_f64, f64::max);
        changes.push(change);
        if change <= cfg.picard_tol {
            let eta = dual_sweep(problem, &upd, kind)?;
            return Ok(WarmStart {
                path: PathPair { xi: upd, eta },
                iterations: it,
                converged: true,
                changes,
            });
        }
        if changes.len() > 5 && change > 10.0 * changes[changes.len() - 6] || !change.is_finite() {
            return Err(Error::WarmStartDiverged { iterations: it, change });
        }
        for (a, b) in xi.iter_mut().zip(&upd) {
            for (p, q) in a.iter_mut().zip(b.iter()) {
                *p = cfg.nu * *p + (1.0 - cfg.nu) * q;
            }
        }
    }
    let eta = dual_sweep(problem, &xi, kind)?;
    Ok(WarmStart {
        path: PathPair { xi, eta },
        iterations: cfg.picard_max,
        converged: false,
        changes,
    })
}

/// Per-solve Newton record.
#[derive(Debug, Clone, PartialEq)]
pub struct NewtonReport {
    pub iterations: usize,
    /// Residual max-norm before each iteration and after the last one.
    pub residual_history: Vec<f64>,
    /// Max-norm of each Newton update.
    pub step_history: Vec<f64>,
    /// Max-norm of the state part of each update.
    pub state_step_history: Vec<f64>,
}

impl NewtonReport {
    /// Fitted order `p` of the state update sizes, `s_{k+1} ~ C s_k^p`.
    ///
    /// The dual carries the terminal factor `2K` and `1/dt`, so its early
    /// updates exceed one and sit outside the asymptotic regime.
    pub fn convergence_order(&self) -> Option<f64> {
        convergence_order(&self.state_step_history)
    }
}

/// Entries at or below this size are treated as round-off.
pub const ORDER_FLOOR: f64 = 1e-13;

/// Least-squares fit of `ln s_{k+1} = ln C + p ln s_k` over the last three
/// consecutive pairs before round-off sets in; `None` with fewer than two
/// pairs.
///
/// An entry counts as round-off when it is at most [`ORDER_FLOOR`], or below
/// `1e-10` while shrinking by less than a factor 100.
pub fn convergence_order(history: &[f64]) -> Option<f64> {
    let noise = |k: usize| {
        let r = history[k];
        !(r > ORDER_FLOOR && r.is_finite()) || (k > 0 && r < 1e-10 && r > 1e-2 * history[k - 1])
    };
    let end = (0..history.len()).find(|&k| noise(k)).unwrap_or(history.len());
    let used = &history[end.saturating_sub(4)..end];
    if used.len() < 3 {
        return None;
    }
    let xs: Vec<f64> = used[..used.len() - 1].iter().map(|r| r.ln()).collect();
    let ys: Vec<f64> = used[1..].iter().map(|r| r.ln()).collect();
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx <= f64::EPSILON {
        return None;
    }
    Some(sxy / sxx)
}

/// Residual max-norm with the terminal coupling rows divided by `1 + 2K`,
/// so that rounding in `2K (xi^N - target)` does not mask convergence.
pub fn scaled_residual_norm(problem: &Problem, r: &[f64], kind: SchemeKind) -> f64 {
    let m = problem.grid.interior();
    let last = r.len() - m;
    let scale = 1.0 + 2.0 * problem.params.penalty;
    let _ = kind;
    r.iter()
        .enumerate()
        .map(|(i, v)| if i >= last { (v / scale).abs() } else { v.abs() })
        .fold(0.0_f64, f64::max)
}

/// Full-step Newton on the scheme residual.
///
/// Converged when every component of the update is at most
/// `newton_tol * max(1, |z_i|)` and the (terminal-scaled) residual max-norm
/// is at most `newton_tol`. The recorded step sizes are absolute.
pub fn newton_solve(
    guess: &PathPair,
    kind: SchemeKind,
    problem: &Problem,
    cfg: &SolverConfig,
) -> Result<(PathPair, NewtonReport)> {
    let mut z = problem.pack(guess, kind)?;
    let mut path = problem.unpack(&z, kind)?;
    let mut residual_history = Vec::new();
    let mut step_history = Vec::new();
    let mut state_step_history = Vec::new();
    let mut last_small = false;
    let block = problem.grid.interior();
    for it in 0..cfg.newton_max {
        let r = problem.residual(&path, kind)?;
        let rn = scaled_residual_norm(problem, &r, kind);
        residual_history.push(rn);
        if !rn.is_finite() || rn > DIVERGED * residual_history[0].max(1.0) {
            break;
        }
        if rn <= cfg.newton_tol && last_small {
            return Ok((
                path,
                NewtonReport {
                    iterations: it,
                    residual_history,
                    step_history,
                    state_step_history,
                },
            ));
        }
        // Equilibrate the terminal rows, which carry the factor 2K.
        let mut jac = problem.jacobian(&path, kind)?;
        let mut step: Vec<f64> = r.iter().map(|v| -v).collect();
        let scale = 1.0 / (1.0 + 2.0 * problem.params.penalty);
        for i in step.len() - problem.grid.interior()..step.len() {
            jac.scale_row(i, scale);
            step[i] *= scale;
        }
        let lu = jac.factor()?;
        lu.solve_in_place(&mut step);
        let sn = step.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        step_history.push(sn);
        state_step_history.push(
            step.chunks(block)
                .step_by(2)
                .flatten()
                .fold(0.0_f64, |a, v| a.max(v.abs())),
        );
        last_small = step
            .iter()
            .zip(&z)
            .all(|(s, zi)| s.abs() <= cfg.newton_tol * zi.abs().max(1.0));
        for (zi, si) in z.iter_mut().zip(&step) {
            *zi += si;
        }
        path = problem.unpack(&z, kind)?;
        if last_small {
            let r = problem.residual(&path, kind)?;
            let rn = scaled_residual_norm(problem, &r, kind);
            residual_history.push(rn);
            if rn <= cfg.newton_tol {
                return Ok((
                    path,
                    NewtonReport {
                        iterations: it + 1,
                        residual_history,
                        step_history,
                        state_step_history,
                    },
                ));
            }
        }
    }
    let residual = residual_history.last().copied().unwrap_or(f64::NAN);
    Err(Error::NonConvergence {
        method: "Newton",
        iterations: step_history.len(),
        residual,
        history: residual_history,
    })
}

/// Aggregated record of a continuation solve.
#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub scheme: SchemeKind,
    pub picard_iters: usize,
    pub picard_converged: bool,
    pub newton_iters_per_stage: Vec<usize>,
    /// Intermediate parameter stages added by step halving.
    pub inserted_stages: usize,
    /// Newton residual history of the final stage.
    pub residual_history: Vec<f64>,
    /// Newton update sizes of the final stage.
    pub step_history: Vec<f64>,
    pub state_step_history: Vec<f64>,
    pub value: f64,
    pub diagnostics: Diagnostics,
}

/// Result of [`continuation_solve`]: final problem, path and report.
#[derive(Debug, Clone)]
pub struct Solution {
    pub problem: Problem,
    pub path: PathPair,
    pub report: SolveReport,
}

/// Seeds the first stage, warm starts it, then Newton-solves every stage,
/// transferring the path between grids.
///
/// The Picard iterate replaces the seed only when it reached `picard_tol`;
/// otherwise Newton starts from the seed itself.
pub fn continuation_solve(seed: SeedKind, kind: SchemeKind, cfg: &SolverConfig) -> Result<Solution> {
    cfg.validate()?;
    let annotate = |stage: usize| {
        move |e: Error| Error::Stage {
            stage,
            source: Box::new(e),
        }
    };
    let first_kind = stage_kind(cfg, 0, kind);
    let problem = stage_problem(&cfg.ladder[0]).map_err(annotate(0))?;
    let seeded = seed_path(&problem, seed, first_kind).map_err(annotate(0))?;
    let (path, warm) = match picard_warm_start(&seeded, first_kind, &problem, cfg) {
        Ok(w) if w.converged => (w.path, (w.iterations, true)),
        Ok(w) => (seeded, (w.iterations, false)),
        Err(Error::WarmStartDiverged { iterations, .. }) => (seeded, (iterations, false)),
        Err(e) => return Err(annotate(0)(e)),
    };
    let mut sol = continue_from(path, warm.0, problem, kind, cfg, 0)?;
    sol.report.picard_converged = warm.1;
    Ok(sol)
}

/// Scheme solved on ladder stage `idx` when `kind` is requested.
pub fn stage_kind(cfg: &SolverConfig, idx: usize, kind: SchemeKind) -> SchemeKind {
    if idx + 1 == cfg.ladder.len() {
        kind
    } else {
        cfg.bootstrap.unwrap_or(kind)
    }
}

/// Re-solves a converged path of one scheme with the other scheme on the
/// same problem, keeping the states and rebuilding the dual.
pub fn switch_scheme(
    path: &PathPair,
    to: SchemeKind,
    problem: &Problem,
    cfg: &SolverConfig,
) -> Result<(PathPair, NewtonReport)> {
    let guess = PathPair {
        xi: path.xi.clone(),
        eta: consistent_dual(problem, &path.xi, to)?,
    };
    newton_solve(&guess, to, problem, cfg)
}

/// Runs the ladder from stage `from` onward with `path` as the guess on
/// `problem` (which must be stage `from`, in the scheme
/// `stage_kind(cfg, from, kind)`).
///
/// A stage whose Newton solve fails is approached through intermediate
/// parameters (linear in `delta`, geometric in `K`) on the new grid, halving
/// the step up to `max_bisections` times.
pub fn continue_from(
    mut path: PathPair,
    picard_iters: usize,
    mut problem: Problem,
    kind: SchemeKind,
    cfg: &SolverConfig,
    from: usize,
) -> Result<Solution> {
    let annotate = |stage: usize| {
        move |e: Error| Error::Stage {
            stage,
            source: Box::new(e),
        }
    };
    let mut iters = Vec::new();
    let mut inserted = 0;
    let mut last = None;
    let mut current = cfg.ladder[from];
    for (idx, stage) in cfg.ladder.iter().enumerate().skip(from) {
        // The last stage is reached in the bootstrap scheme and then switched.
        let sk = if idx == from {
            stage_kind(cfg, idx, kind)
        } else {
            cfg.bootstrap.unwrap_or(kind)
        };
        let mut report = if idx == from {
            let (solved, report) = newton_solve(&path, sk, &problem, cfg).map_err(annotate(idx))?;
            path = solved;
            report
        } else {
            let step = advance(path, &problem, &current, stage, sk, cfg, 0, &mut inserted).map_err(annotate(idx))?;
            path = step.0;
            problem = step.1;
            step.2
        };
        if sk != kind && idx + 1 == cfg.ladder.len() {
            let (solved, r) = switch_scheme(&path, kind, &problem, cfg).map_err(annotate(idx))?;
            path = solved;
            report = r;
        }
        current = *stage;
        iters.push(report.iterations);
        last = Some(report);
    }
    let last = last.expect("nonempty ladder");
    let value = problem.discrete_value(&path, kind)?;
    let diagnostics = problem.diagnostics(&path, kind)?;
    Ok(Solution {
        report: SolveReport {
            scheme: kind,
            picard_iters,
            picard_converged: false,
            newton_iters_per_stage: iters,
            inserted_stages: inserted,
            residual_history: last.residual_history,
            step_history: last.step_history,
            state_step_history: last.state_step_history,
            value,
            diagnostics,
        },
        problem,
        path,
    })
}

/// Moves a solution of `problem` (parameters of `from`) to stage `to`.
#[allow(clippy::too_many_arguments)]
fn advance(
    path: PathPair,
    problem: &Problem,
    from: &Stage,
    to: &Stage,
    kind: SchemeKind,
    cfg: &SolverConfig,
    depth: usize,
    inserted: &mut usize,
) -> Result<(PathPair, Problem, NewtonReport)> {
    let next = stage_problem(to)?;
    let mut guess = transfer_path(&path, &problem.grid, &next.grid)?;
    guess.xi[0] = next.start.clone();
    let err = match newton_solve(&guess, kind, &next, cfg) {
        Ok((solved, report)) => return Ok((solved, next, report)),
        Err(e) => e,
    };
    let retry = matches!(err, Error::NonConvergence { .. } | Error::Singular { .. });
    if !retry || depth >= cfg.max_bisections || from.params == to.params {
        return Err(err);
    }
    let mid = Stage {
        grid: to.grid,
        params: midpoint(&from.params, &to.params),
    };
    *inserted += 1;
    let (p1, prob1, _) = advance(path, problem, from, &mid, kind, cfg, depth + 1, inserted)?;
    advance(p1, &prob1, &mid, to, kind, cfg, depth + 1, inserted)
}

fn midpoint(a: &ModelParams, b: &ModelParams) -> ModelParams {
    let mut p = *b;
    p.delta = 0.5 * (a.delta + b.delta);
    p.penalty = (a.penalty * b.penalty).sqrt();
    p
}
