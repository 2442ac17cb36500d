//! Space-time grids, interior nodal fields, discrete norms and the
//! tridiagonal operators acting on them.
//!
//! A [`Field`] holds the `M - 1` interior nodal values of a function on
//! `(0, 1)`; the homogeneous Dirichlet values at `x = 0` and `x = 1` are
//! implicit. A [`PathPair`] holds the state and dual trajectories on all
//! `N + 1` time levels.

use std::io::{BufRead, Write};
use std::ops::{Deref, DerefMut};

use crate::error::{check_len, Error, Result};

/// Uniform grid on `[0, 1] x [0, T]` with `M` spatial subintervals and `N`
/// time steps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpaceTimeGrid {
    m: usize,
    n: usize,
    horizon: f64,
}

impl SpaceTimeGrid {
    pub fn new(m: usize, n: usize, horizon: f64) -> Result<Self> {
        if m < 2 {
            return Err(Error::Argument(format!("M must be at least 2, got {m}")));
        }
        if n < 1 {
            return Err(Error::Argument("N must be at least 1".into()));
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::Argument(format!("T must be positive, got {horizon}")));
        }
        Ok(SpaceTimeGrid { m, n, horizon })
    }

    /// Number of spatial subintervals `M`.
    pub fn m(&self) -> usize {
        self.m
    }

    /// Number of time steps `N`.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// Number of interior nodes, `M - 1`.
    pub fn interior(&self) -> usize {
        self.m - 1
    }

    pub fn dx(&self) -> f64 {
        1.0 / self.m as f64
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.n as f64
    }

    /// Coordinate of interior node `i` (zero based, so node `i` sits at `(i + 1) dx`).
    pub fn x(&self, i: usize) -> f64 {
        (i + 1) as f64 / self.m as f64
    }

    pub fn t(&self, level: usize) -> f64 {
        level as f64 * self.horizon / self.n as f64
    }

    pub fn zero_field(&self) -> Field {
        Field::zeros(self.interior())
    }

    /// Samples `f` at the interior nodes.
    pub fn sample(&self, f: impl Fn(f64) -> f64) -> Field {
        Field((0..self.interior()).map(|i| f(self.x(i))).collect())
    }

    pub(crate) fn check(&self, f: &[f64]) -> Result<()> {
        check_len("field length vs grid interior", self.interior(), f.len())
    }
}

/// Interior nodal values of a function with homogeneous Dirichlet boundary.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Field(pub Vec<f64>);

impl Field {
    pub fn zeros(len: usize) -> Self {
        Field(vec![0.0; len])
    }

    pub fn from_vec(values: Vec<f64>) -> Self {
        Field(values)
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn dot(&self, other: &[f64]) -> f64 {
        self.iter().zip(other).map(|(a, b)| a * b).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn scaled(&self, c: f64) -> Field {
        Field(self.iter().map(|v| c * v).collect())
    }

    pub fn sub(&self, other: &[f64]) -> Field {
        Field(self.iter().zip(other).map(|(a, b)| a - b).collect())
    }

    pub fn add(&self, other: &[f64]) -> Field {
        Field(self.iter().zip(other).map(|(a, b)| a + b).collect())
    }

    /// `self += c * other`
    pub fn axpy(&mut self, c: f64, other: &[f64]) {
        for (a, b) in self.iter_mut().zip(other) {
            *a += c * b;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.iter().all(|v| v.is_finite())
    }
}

impl Deref for Field {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for Field {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

impl From<Vec<f64>> for Field {
    fn from(v: Vec<f64>) -> Self {
        Field(v)
    }
}

/// State trajectory `xi[0..=N]` and dual trajectory `eta[0..=N]`.
///
/// The dual is the negative of the control: `alpha^n = -eta^{n+1}` for the
/// forward scheme and `alpha^n = -eta^n` for the backward scheme.
#[derive(Debug, Clone, PartialEq)]
pub struct PathPair {
    pub xi: Vec<Field>,
    pub eta: Vec<Field>,
}

impl PathPair {
    /// Constant-in-time path `(xi, eta)` on every level.
    pub fn constant(g: &SpaceTimeGrid, xi: &Field, eta: &Field) -> Self {
        PathPair {
            xi: vec![xi.clone(); g.n() + 1],
            eta: vec![eta.clone(); g.n() + 1],
        }
    }

    pub fn zeros(g: &SpaceTimeGrid) -> Self {
        let z = g.zero_field();
        Self::constant(g, &z, &z)
    }

    pub fn check(&self, g: &SpaceTimeGrid) -> Result<()> {
        check_len("state levels", g.n() + 1, self.xi.len())?;
        check_len("dual levels", g.n() + 1, self.eta.len())?;
        for f in self.xi.iter().chain(&self.eta) {
            g.check(f)?;
        }
        Ok(())
    }

    /// Largest componentwise difference over both trajectories.
    pub fn max_diff(&self, other: &PathPair) -> f64 {
        let d = |a: &[Field], b: &[Field]| {
            a.iter()
                .zip(b)
                .flat_map(|(u, v)| u.iter().zip(v.iter()).map(|(p, q)| (p - q).abs()))
                .fold(0.0_f64, f64::max)
        };
        d(&self.xi, &other.xi).max(d(&self.eta, &other.eta))
    }
}

/// Discrete L2 norm `sqrt(dx * sum f_i^2)`.
pub fn norm_l2(f: &[f64], g: &SpaceTimeGrid) -> Result<f64> {
    g.check(f)?;
    Ok((g.dx() * f.iter().map(|v| v * v).sum::<f64>()).sqrt())
}

/// Discrete H1 seminorm from forward differences, boundary slopes included.
pub fn seminorm_h1(f: &[f64], g: &SpaceTimeGrid) -> Result<f64> {
    g.check(f)?;
    let dx = g.dx();
    let mut prev = 0.0;
    let mut acc = 0.0;
    for &v in f.iter().chain(std::iter::once(&0.0)) {
        let s = (v - prev) / dx;
        acc += s * s;
        prev = v;
    }
    Ok((dx * acc).sqrt())
}

/// Second difference quotient `(f_{i-1} - 2 f_i + f_{i+1}) / dx^2` with zero
/// Dirichlet data.
pub fn d2_apply(f: &[f64], g: &SpaceTimeGrid) -> Result<Field> {
    g.check(f)?;
    let mut out = vec![0.0; f.len()];
    d2_into(f, g.dx(), &mut out);
    Ok(Field(out))
}

pub(crate) fn d2_into(f: &[f64], dx: f64, out: &mut [f64]) {
    let inv = 1.0 / (dx * dx);
    let m = f.len();
    for i in 0..m {
        let left = if i > 0 { f[i - 1] } else { 0.0 };
        let right = if i + 1 < m { f[i + 1] } else { 0.0 };
        out[i] = (left - 2.0 * f[i] + right) * inv;
    }
}

/// Mass matrix product with stencil `(1/6, 2/3, 1/6)`.
pub fn b_apply(f: &[f64], g: &SpaceTimeGrid) -> Result<Field> {
    g.check(f)?;
    let m = f.len();
    Ok(Field(
        (0..m)
            .map(|i| {
                let left = if i > 0 { f[i - 1] } else { 0.0 };
                let right = if i + 1 < m { f[i + 1] } else { 0.0 };
                (left + right) / 6.0 + 2.0 * f[i] / 3.0
            })
            .collect(),
    ))
}

/// Linear interpolation weights of `pos` on `count` uniform cells: returns
/// `(lower index, weight of upper)`. The upper index is clamped to `count`.
fn bracket(pos: f64, count: usize) -> (usize, f64) {
    let s = pos * count as f64;
    let lo = s.floor();
    let lo_i = (lo as usize).min(count);
    let w = s - lo;
    // Snap near-exact hits so nested grids copy nodal values bit for bit.
    if w.abs() < 1e-12 || lo_i == count {
        (lo_i, 0.0)
    } else if (1.0 - w).abs() < 1e-12 {
        (lo_i + 1, 0.0)
    } else {
        (lo_i, w)
    }
}

/// Value of the spatial profile at full-grid node index `j` (0..=M), with the
/// Dirichlet zeros at both ends.
fn full_node(f: &[f64], j: usize) -> f64 {
    if j == 0 || j > f.len() {
        0.0
    } else {
        f[j - 1]
    }
}

fn transfer_series(src: &[Field], from: &SpaceTimeGrid, to: &SpaceTimeGrid) -> Vec<Field> {
    let xs: Vec<(usize, f64)> = (0..to.interior()).map(|i| bracket(to.x(i), from.m())).collect();
    (0..=to.n())
        .map(|level| {
            let (n0, wt) = bracket(level as f64 / to.n() as f64, from.n());
            let n1 = (n0 + 1).min(from.n());
            let space = |f: &Field, (j, wx): (usize, f64)| {
                let a = full_node(f, j);
                if wx == 0.0 {
                    a
                } else {
                    (1.0 - wx) * a + wx * full_node(f, j + 1)
                }
            };
            Field(
                xs.iter()
                    .map(|&b| {
                        let a = space(&src[n0], b);
                        if wt == 0.0 {
                            a
                        } else {
                            (1.0 - wt) * a + wt * space(&src[n1], b)
                        }
                    })
                    .collect(),
            )
        })
        .collect()
}

/// Bilinear space-time interpolation of a path onto another grid with the
/// same horizon.
pub fn transfer_path(p: &PathPair, from: &SpaceTimeGrid, to: &SpaceTimeGrid) -> Result<PathPair> {
    p.check(from)?;
    if (from.horizon() - to.horizon()).abs() > 1e-12 * from.horizon() {
        return Err(Error::Argument(format!(
            "cannot transfer between horizons {} and {}",
            from.horizon(),
            to.horizon()
        )));
    }
    if from == to {
        return Ok(p.clone());
    }
    Ok(PathPair {
        xi: transfer_series(&p.xi, from, to),
        eta: transfer_series(&p.eta, from, to),
    })
}

/// Formats a float with 17 significant digits.
pub fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes one row per time level: `t`, then the `M - 1` nodal values.
pub fn write_series_csv<W: Write>(mut w: W, series: &[Field], g: &SpaceTimeGrid) -> Result<()> {
    check_len("time levels", g.n() + 1, series.len())?;
    let mut header = String::from("t");
    for i in 0..g.interior() {
        header.push_str(&format!(",u{}", i + 1));
    }
    writeln!(w, "{header}")?;
    for (level, f) in series.iter().enumerate() {
        g.check(f)?;
        let mut line = fmt17(g.t(level));
        for v in f.iter() {
            line.push(',');
            line.push_str(&fmt17(*v));
        }
        writeln!(w, "{line}")?;
    }
    Ok(())
}

/// Reads a series written by [`write_series_csv`]; returns the time column
/// and the fields.
pub fn read_series_csv<R: BufRead>(r: R) -> Result<(Vec<f64>, Vec<Field>)> {
    let mut times = Vec::new();
    let mut fields = Vec::new();
    for (lineno, line) in r.lines().enumerate() {
        let line = line?;
        if lineno == 0 || line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split(',').map(|s| {
            s.trim().parse::<f64>().map_err(|e| Error::Config {
                line: lineno + 1,
                message: format!("bad number {s:?}: {e}"),
            })
        });
        let t = parts.next().ok_or_else(|| Error::Config {
            line: lineno + 1,
            message: "empty row".into(),
        })??;
        let values = parts.collect::<Result<Vec<f64>>>()?;
        if let Some(first) = fields.first() {
            let first: &Field = first;
            check_len("csv row width", first.len(), values.len())?;
        }
        times.push(t);
        fields.push(Field(values));
    }
    Ok((times, fields))
}
