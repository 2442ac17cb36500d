//! Symplectic forward and backward Euler discretizations of the coupled
//! state/dual system.
//!
//! The unknowns of a space-time solve are stacked time-major with state and
//! dual interleaved per level, which keeps the Jacobian banded with
//! bandwidth `2(M - 1) + 1`:
//!
//! * forward scheme, block `k = 1..=N`: `(xi^k, eta^k)`
//! * backward scheme, block `k = 1..=N`: `(xi^k, eta^{k-1})`
//!
//! Residual rows are ordered the same way, so each block's first half holds
//! the state rows and its second half the dual (or terminal) rows. The
//! initial state `xi^0` is fixed; the forward scheme derives `eta^0` from the
//! dual recursion and the backward scheme derives `eta^N` from the terminal
//! condition.

use std::fmt;
use std::str::FromStr;

use crate::error::{check_len, Error, Result};
use crate::grid::{d2_into, norm_l2, seminorm_h1, Field, PathPair, SpaceTimeGrid};
use crate::linalg::{solve_tridiagonal, BandedMatrix};
use crate::model::{hamiltonian, ModelParams, Potential};

/// Which symplectic Euler variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SchemeKind {
    /// Explicit in the state, implicit in the dual.
    Forward,
    /// Implicit in the state, explicit in the dual.
    Backward,
}

impl SchemeKind {
    pub fn tag(&self) -> &'static str {
        match self {
            SchemeKind::Forward => "FE",
            SchemeKind::Backward => "BE",
        }
    }
}

impl fmt::Display for SchemeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for SchemeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "fe" | "forward" => Ok(SchemeKind::Forward),
            "be" | "backward" => Ok(SchemeKind::Backward),
            other => Err(Error::Argument(format!("unknown scheme {other:?} (expected fe or be)"))),
        }
    }
}

/// A fully specified discrete control problem: parameters, grid, fixed
/// initial state and terminal target.
#[derive(Debug, Clone)]
pub struct Problem {
    pub params: ModelParams,
    pub grid: SpaceTimeGrid,
    pub start: Field,
    pub target: Field,
}

impl Problem {
    pub fn new(params: ModelParams, grid: SpaceTimeGrid, start: Field, target: Field) -> Result<Self> {
        params.validate()?;
        grid.check(&start)?;
        grid.check(&target)?;
        Ok(Problem {
            params,
            grid,
            start,
            target,
        })
    }

    fn block(&self) -> usize {
        self.grid.interior()
    }

    /// Number of stacked unknowns, `2 N (M - 1)`.
    pub fn unknowns(&self) -> usize {
        2 * self.grid.n() * self.block()
    }

    fn potential(&self) -> Potential {
        self.params.potential()
    }

    /// Stacks the unknown levels of `path`.
    pub fn pack(&self, path: &PathPair, kind: SchemeKind) -> Result<Vec<f64>> {
        path.check(&self.grid)?;
        let m = self.block();
        let mut z = Vec::with_capacity(self.unknowns());
        for k in 1..=self.grid.n() {
            z.extend_from_slice(&path.xi[k]);
            let dual = match kind {
                SchemeKind::Forward => &path.eta[k],
                SchemeKind::Backward => &path.eta[k - 1],
            };
            z.extend_from_slice(dual);
        }
        debug_assert_eq!(z.len(), 2 * m * self.grid.n());
        Ok(z)
    }

    /// Rebuilds a full path from stacked unknowns, filling `xi^0` with the
    /// start and the derived dual level.
    pub fn unpack(&self, z: &[f64], kind: SchemeKind) -> Result<PathPair> {
        check_len("stacked unknowns", self.unknowns(), z.len())?;
        let m = self.block();
        let n = self.grid.n();
        let mut xi = Vec::with_capacity(n + 1);
        let mut eta = vec![Field::zeros(m); n + 1];
        xi.push(self.start.clone());
        for k in 1..=n {
            let base = (k - 1) * 2 * m;
            xi.push(Field(z[base..base + m].to_vec()));
            let d = Field(z[base + m..base + 2 * m].to_vec());
            match kind {
                SchemeKind::Forward => eta[k] = d,
                SchemeKind::Backward => eta[k - 1] = d,
            }
        }
        match kind {
            SchemeKind::Forward => {
                eta[0] = fe_dual_step_back(&eta[1], &xi[0], &self.params, &self.grid)?;
            }
            SchemeKind::Backward => {
                eta[n] = self.terminal_dual(&xi[n]);
            }
        }
        Ok(PathPair { xi, eta })
    }

    /// `2 K (xi^N - target)`
    pub fn terminal_dual(&self, xi_n: &[f64]) -> Field {
        let two_k = 2.0 * self.params.penalty;
        Field(
            xi_n.iter()
                .zip(self.target.iter())
                .map(|(a, b)| two_k * (a - b))
                .collect(),
        )
    }

    /// Residual of the scheme at `path`, zero exactly at scheme solutions.
    pub fn residual(&self, path: &PathPair, kind: SchemeKind) -> Result<Vec<f64>> {
        path.check(&self.grid)?;
        let m = self.block();
        let n = self.grid.n();
        let dt = self.grid.dt();
        let dx = self.grid.dx();
        let delta = self.params.delta;
        let inv_delta = 1.0 / delta;
        let pot = self.potential();
        let mut r = vec![0.0; self.unknowns()];
        let mut lap = vec![0.0; m];
        for k in 1..=n {
            let base = (k - 1) * 2 * m;
            let prev: &[f64] = if k == 1 { &self.start } else { &path.xi[k - 1] };
            let cur = &path.xi[k];
            match kind {
                SchemeKind::Forward => {
                    d2_into(prev, dx, &mut lap);
                    let eta_k = &path.eta[k];
                    for i in 0..m {
                        r[base + i] = cur[i] - prev[i] - dt * (delta * lap[i] - inv_delta * pot.v1(prev[i]) - eta_k[i]);
                    }
                    if k < n {
                        let next = &path.eta[k + 1];
                        d2_into(next, dx, &mut lap);
                        for i in 0..m {
                            r[base + m + i] =
                                eta_k[i] - next[i] - dt * (delta * lap[i] - inv_delta * next[i] * pot.v2(cur[i]));
                        }
                    } else {
                        let two_k = 2.0 * self.params.penalty;
                        for i in 0..m {
                            r[base + m + i] = eta_k[i] - two_k * (cur[i] - self.target[i]);
                        }
                    }
                }
                SchemeKind::Backward => {
                    let eta_prev = &path.eta[k - 1];
                    d2_into(cur, dx, &mut lap);
                    for i in 0..m {
                        r[base + i] =
                            cur[i] - prev[i] - dt * (delta * lap[i] - inv_delta * pot.v1(cur[i]) - eta_prev[i]);
                    }
                    let next = if k < n {
                        path.eta[k].clone()
                    } else {
                        self.terminal_dual(cur)
                    };
                    d2_into(eta_prev, dx, &mut lap);
                    for i in 0..m {
                        r[base + m + i] =
                            eta_prev[i] - next[i] - dt * (delta * lap[i] - inv_delta * eta_prev[i] * pot.v2(cur[i]));
                    }
                }
            }
        }
        Ok(r)
    }

    /// Exact Jacobian of [`Problem::residual`] with respect to the stacked
    /// unknowns, in banded storage.
    pub fn jacobian(&self, path: &PathPair, kind: SchemeKind) -> Result<BandedMatrix> {
        path.check(&self.grid)?;
        let m = self.block();
        let n = self.grid.n();
        let dt = self.grid.dt();
        let c = self.params.delta / (self.grid.dx() * self.grid.dx());
        let inv_delta = 1.0 / self.params.delta;
        let two_k = 2.0 * self.params.penalty;
        let pot = self.potential();
        let bw = 2 * m + 1;
        let mut j = BandedMatrix::zeros(self.unknowns(), bw, bw);

        // Writes `sign * I - dt (delta D2 - diag(react / delta))` at (row0, col0).
        let put_op = |j: &mut BandedMatrix, row0: usize, col0: usize, sign: f64, react: &dyn Fn(usize) -> f64| {
            for i in 0..m {
                j.add(row0 + i, col0 + i, sign + dt * (2.0 * c + inv_delta * react(i)));
                if i > 0 {
                    j.add(row0 + i, col0 + i - 1, -dt * c);
                }
                if i + 1 < m {
                    j.add(row0 + i, col0 + i + 1, -dt * c);
                }
            }
        };

        for k in 1..=n {
            let base = (k - 1) * 2 * m;
            let cur = &path.xi[k];
            match kind {
                SchemeKind::Forward => {
                    for i in 0..m {
                        j.add(base + i, base + i, 1.0);
                        j.add(base + i, base + m + i, dt);
                    }
                    if k >= 2 {
                        let prev = &path.xi[k - 1];
                        put_op(&mut j, base, base - 2 * m, -1.0, &|i| pot.v2(prev[i]));
                    }
                    if k < n {
                        let next = &path.eta[k + 1];
                        for i in 0..m {
                            j.add(base + m + i, base + m + i, 1.0);
                            j.add(base + m + i, base + i, dt * inv_delta * next[i] * pot.v3(cur[i]));
                        }
                        put_op(&mut j, base + m, base + 3 * m, -1.0, &|i| pot.v2(cur[i]));
                    } else {
                        for i in 0..m {
                            j.add(base + m + i, base + m + i, 1.0);
                            j.add(base + m + i, base + i, -two_k);
                        }
                    }
                }
                SchemeKind::Backward => {
                    let eta_prev = &path.eta[k - 1];
                    put_op(&mut j, base, base, 1.0, &|i| pot.v2(cur[i]));
                    for i in 0..m {
                        if k >= 2 {
                            j.add(base + i, base - 2 * m + i, -1.0);
                        }
                        j.add(base + i, base + m + i, dt);
                    }
                    put_op(&mut j, base + m, base + m, 1.0, &|i| pot.v2(cur[i]));
                    for i in 0..m {
                        let mut v = dt * inv_delta * eta_prev[i] * pot.v3(cur[i]);
                        if k == n {
                            v -= two_k;
                        } else {
                            j.add(base + m + i, base + 3 * m + i, -1.0);
                        }
                        j.add(base + m + i, base + i, v);
                    }
                }
            }
        }
        Ok(j)
    }

    /// Discrete value: terminal penalty plus the running cost summed over
    /// `n = 1..=N` (forward) or `n = 0..N` (backward).
    pub fn discrete_value(&self, path: &PathPair, kind: SchemeKind) -> Result<f64> {
        path.check(&self.grid)?;
        let n = self.grid.n();
        let dx = self.grid.dx();
        let terminal: f64 = path.xi[n]
            .iter()
            .zip(self.target.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        let levels = match kind {
            SchemeKind::Forward => &path.eta[1..=n],
            SchemeKind::Backward => &path.eta[0..n],
        };
        let running: f64 = levels.iter().map(|e| e.dot(e)).sum();
        Ok(self.params.penalty * dx * terminal + 0.5 * self.grid.dt() * dx * running)
    }

    /// Reduced forward-scheme objective as a function of the controls
    /// `alpha^0..alpha^{N-1}`.
    pub fn control_value(&self, controls: &[Field]) -> Result<f64> {
        let xi = self.forward_states(controls)?;
        let n = self.grid.n();
        let dx = self.grid.dx();
        let terminal: f64 = xi[n]
            .iter()
            .zip(self.target.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        let running: f64 = controls.iter().map(|a| a.dot(a)).sum();
        Ok(self.params.penalty * dx * terminal + 0.5 * self.grid.dt() * dx * running)
    }

    fn forward_states(&self, controls: &[Field]) -> Result<Vec<Field>> {
        check_len("controls", self.grid.n(), controls.len())?;
        let mut xi = Vec::with_capacity(controls.len() + 1);
        xi.push(self.start.clone());
        for a in controls {
            let next = fe_state_step(xi.last().unwrap(), a, &self.params, &self.grid)?;
            xi.push(next);
        }
        Ok(xi)
    }

    /// Gradient of [`Problem::control_value`] by one forward state sweep and
    /// one backward dual sweep: `dt dx (alpha^n + eta^{n+1})`.
    pub fn adjoint_gradient(&self, controls: &[Field]) -> Result<Vec<Field>> {
        let xi = self.forward_states(controls)?;
        let n = self.grid.n();
        let scale = self.grid.dt() * self.grid.dx();
        let mut grad = vec![Field::default(); n];
        let mut eta = self.terminal_dual(&xi[n]);
        for level in (0..n).rev() {
            grad[level] = Field(
                controls[level]
                    .iter()
                    .zip(eta.iter())
                    .map(|(a, e)| scale * (a + e))
                    .collect(),
            );
            if level > 0 {
                eta = fe_dual_step_back(&eta, &xi[level], &self.params, &self.grid)?;
            }
        }
        Ok(grad)
    }

    /// Diagnostic monitors evaluated on a (solved) path.
    pub fn diagnostics(&self, path: &PathPair, kind: SchemeKind) -> Result<Diagnostics> {
        path.check(&self.grid)?;
        let g = &self.grid;
        let p = &self.params;
        let n = g.n();
        let dt = g.dt();

        let mut grad_increment = 0.0_f64;
        for w in path.xi.windows(2) {
            let d = w[1].sub(&w[0]);
            grad_increment = grad_increment.max(seminorm_h1(&d, g)? / dt);
        }

        let mut control_bound = 0.0_f64;
        for e in &path.eta {
            control_bound = control_bound.max(norm_l2(e, g)?);
        }

        // A-priori H1 bound: |xi^n|_1^2 <= |xi^0|_1^2 + |xi^0|_4^4 / (2 delta^2)
        //   - |xi^0|^2 / delta^2 + ||alpha||^2 / delta + 1 / (2 delta).
        let controls = match kind {
            SchemeKind::Forward => &path.eta[1..=n],
            SchemeKind::Backward => &path.eta[0..n],
        };
        let mut alpha_sq = 0.0;
        for e in controls {
            let v = norm_l2(e, g)?;
            alpha_sq += dt * v * v;
        }
        let x0 = &path.xi[0];
        let h0 = seminorm_h1(x0, g)?;
        let l2 = norm_l2(x0, g)?;
        let l4: f64 = g.dx() * x0.iter().map(|v| v.powi(4)).sum::<f64>();
        let inv = 1.0 / p.delta;
        let rhs = h0 * h0 + 0.5 * inv * inv * l4 - inv * inv * l2 * l2 + inv * alpha_sq + 0.5 * inv;
        let h1_bound_margin = path
            .xi
            .iter()
            .map(|x| seminorm_h1(x, g).map(|h| h * h - rhs))
            .collect::<Result<Vec<f64>>>()?;

        let h_ref = hamiltonian(&path.eta[1], &path.xi[0], p, g)?;
        let mut hamiltonian_drift = 0.0_f64;
        for level in 0..n {
            let h = hamiltonian(&path.eta[level + 1], &path.xi[level], p, g)?;
            hamiltonian_drift = hamiltonian_drift.max((h - h_ref).abs());
        }

        Ok(Diagnostics {
            grad_increment,
            control_bound,
            h1_bound_margin,
            hamiltonian_drift,
        })
    }
}

/// Monitors evaluated on a solved path.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Diagnostics {
    /// `max_n |xi^{n+1} - xi^n|_1 / dt`
    pub grad_increment: f64,
    /// `max_n ||eta^n||`
    pub control_bound: f64,
    /// Per level, left minus right side of the a-priori H1 bound (nonpositive
    /// when the bound holds).
    pub h1_bound_margin: Vec<f64>,
    /// `max_n |H(eta^{n+1}, xi^n) - H(eta^1, xi^0)|`
    pub hamiltonian_drift: f64,
}

impl Diagnostics {
    pub fn max_h1_margin(&self) -> f64 {
        self.h1_bound_margin.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// One explicit state step `xi + dt (delta D2 xi - V'(xi)/delta + alpha)`.
pub fn fe_state_step(xi_n: &[f64], control: &[f64], p: &ModelParams, g: &SpaceTimeGrid) -> Result<Field> {
    g.check(xi_n)?;
    g.check(control)?;
    let dt = g.dt();
    let pot = p.potential();
    let mut lap = vec![0.0; xi_n.len()];
    d2_into(xi_n, g.dx(), &mut lap);
    Ok(Field(
        (0..xi_n.len())
            .map(|i| xi_n[i] + dt * (p.delta * lap[i] - pot.v1(xi_n[i]) / p.delta + control[i]))
            .collect(),
    ))
}

/// One backward dual step `eta + dt (delta D2 eta - eta V''(xi^n) / delta)`.
pub fn fe_dual_step_back(eta_np1: &[f64], xi_n: &[f64], p: &ModelParams, g: &SpaceTimeGrid) -> Result<Field> {
    g.check(eta_np1)?;
    g.check(xi_n)?;
    let dt = g.dt();
    let pot = p.potential();
    let mut lap = vec![0.0; xi_n.len()];
    d2_into(eta_np1, g.dx(), &mut lap);
    Ok(Field(
        (0..xi_n.len())
            .map(|i| eta_np1[i] + dt * (p.delta * lap[i] - eta_np1[i] * pot.v2(xi_n[i]) / p.delta))
            .collect(),
    ))
}

/// Implicit state step: solves
/// `x - dt (delta D2 x - V'(x)/delta) = xi^n - dt eta^n` for `x`.
pub fn be_state_step(xi_n: &[f64], eta_n: &[f64], p: &ModelParams, g: &SpaceTimeGrid) -> Result<Field> {
    g.check(xi_n)?;
    g.check(eta_n)?;
    let m = xi_n.len();
    let dt = g.dt();
    let c = p.delta / (g.dx() * g.dx());
    let pot = p.potential();
    let rhs: Vec<f64> = xi_n.iter().zip(eta_n).map(|(x, e)| x - dt * e).collect();
    let mut x = Field(xi_n.to_vec());
    let mut lap = vec![0.0; m];
    let off = vec![-dt * c; m];
    let mut last = f64::INFINITY;
    for _ in 0..50 {
        d2_into(&x, g.dx(), &mut lap);
        let r: Vec<f64> = (0..m)
            .map(|i| x[i] - dt * (p.delta * lap[i] - pot.v1(x[i]) / p.delta) - rhs[i])
            .collect();
        last = r.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        if last <= 1e-13 * (1.0 + x.max_abs()) {
            return Ok(x);
        }
        let diag: Vec<f64> = x.iter().map(|&v| 1.0 + dt * (2.0 * c + pot.v2(v) / p.delta)).collect();
        let neg: Vec<f64> = r.iter().map(|v| -v).collect();
        let step = solve_tridiagonal(&off, &diag, &off, &neg)?;
        x.axpy(1.0, &step);
        if !x.is_finite() {
            break;
        }
    }
    Err(Error::NonConvergence {
        method: "implicit state step",
        iterations: 50,
        residual: last,
        history: vec![last],
    })
}

/// Implicit dual step: solves
/// `(I - dt (delta D2 - diag(V''(xi^{n+1}))/delta)) eta^n = eta^{n+1}`.
pub fn be_dual_step_back(eta_np1: &[f64], xi_np1: &[f64], p: &ModelParams, g: &SpaceTimeGrid) -> Result<Field> {
    g.check(eta_np1)?;
    g.check(xi_np1)?;
    let m = xi_np1.len();
    let dt = g.dt();
    let c = p.delta / (g.dx() * g.dx());
    let pot = p.potential();
    let diag: Vec<f64> = xi_np1
        .iter()
        .map(|&v| 1.0 + dt * (2.0 * c + pot.v2(v) / p.delta))
        .collect();
    let off = vec![-dt * c; m];
    Ok(Field(solve_tridiagonal(&off, &diag, &off, eta_np1)?))
}
