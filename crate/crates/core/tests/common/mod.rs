//! Brute-force transcriptions shared by the integration tests.

#![allow(dead_code)]

use glpath::grid::{Field, PathPair, SpaceTimeGrid};
use glpath::model::ModelParams;
use glpath::schemes::{Problem, SchemeKind};
use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn random_problem(rng: &mut ChaCha8Rng, m: usize, n: usize, k: f64) -> Problem {
    let g = SpaceTimeGrid::new(m, n, 0.5 + rng.gen::<f64>()).unwrap();
    let p = ModelParams::new(0.05 + 0.5 * rng.gen::<f64>(), k).unwrap();
    let start = Field((0..m - 1).map(|_| rng.gen_range(-1.2..1.2)).collect());
    let target = Field((0..m - 1).map(|_| rng.gen_range(-1.2..1.2)).collect());
    Problem::new(p, g, start, target).unwrap()
}

pub fn random_path(rng: &mut ChaCha8Rng, pr: &Problem) -> PathPair {
    let g = &pr.grid;
    let mut f = || Field((0..g.interior()).map(|_| rng.gen_range(-1.5..1.5)).collect());
    let mut path = PathPair {
        xi: (0..=g.n()).map(|_| f()).collect(),
        eta: (0..=g.n()).map(|_| f()).collect(),
    };
    path.xi[0] = pr.start.clone();
    path
}

/// Dense D2 with zero Dirichlet data.
pub fn d2_dense(m: usize, dx: f64) -> DMatrix<f64> {
    let k = m - 1;
    DMatrix::from_fn(k, k, |i, j| {
        if i == j {
            -2.0 / (dx * dx)
        } else if i.abs_diff(j) == 1 {
            1.0 / (dx * dx)
        } else {
            0.0
        }
    })
}

/// Direct transcription of the displayed recursions, level by level, using
/// dense linear algebra and written-out polynomial derivatives.
pub fn brute_residual(pr: &Problem, path: &PathPair, kind: SchemeKind) -> Vec<f64> {
    let g = &pr.grid;
    let (m, n) = (g.m(), g.n());
    let d2 = d2_dense(m, g.dx());
    let dt = g.dt();
    let delta = pr.params.delta;
    let k = pr.params.penalty;
    let col = |f: &Field| nalgebra::DVector::from_column_slice(f);
    let vp = |x: &nalgebra::DVector<f64>| x.map(|v| v * v * v - v);
    let vpp = |x: &nalgebra::DVector<f64>| x.map(|v| 3.0 * v * v - 1.0);
    let xi: Vec<_> = (0..=n)
        .map(|l| if l == 0 { col(&pr.start) } else { col(&path.xi[l]) })
        .collect();
    let eta: Vec<_> = (0..=n).map(|l| col(&path.eta[l])).collect();
    let target = col(&pr.target);
    let mut out = Vec::new();
    match kind {
        SchemeKind::Forward => {
            for lvl in 1..=n {
                let s =
                    &xi[lvl] - &xi[lvl - 1] - dt * (delta * &d2 * &xi[lvl - 1] - vp(&xi[lvl - 1]) / delta - &eta[lvl]);
                out.extend(s.iter());
                let d = if lvl < n {
                    &eta[lvl]
                        - &eta[lvl + 1]
                        - dt * (delta * &d2 * &eta[lvl + 1] - eta[lvl + 1].component_mul(&vpp(&xi[lvl])) / delta)
                } else {
                    &eta[n] - 2.0 * k * (&xi[n] - &target)
                };
                out.extend(d.iter());
            }
        }
        SchemeKind::Backward => {
            let eta_n = 2.0 * k * (&xi[n] - &target);
            for lvl in 1..=n {
                let s = &xi[lvl] - &xi[lvl - 1] - dt * (delta * &d2 * &xi[lvl] - vp(&xi[lvl]) / delta - &eta[lvl - 1]);
                out.extend(s.iter());
                let next = if lvl < n { eta[lvl].clone() } else { eta_n.clone() };
                let d = &eta[lvl - 1]
                    - next
                    - dt * (delta * &d2 * &eta[lvl - 1] - eta[lvl - 1].component_mul(&vpp(&xi[lvl])) / delta);
                out.extend(d.iter());
            }
        }
    }
    out
}

pub fn brute_value(pr: &Problem, path: &PathPair, kind: SchemeKind) -> f64 {
    let g = &pr.grid;
    let n = g.n();
    let mut terminal = 0.0;
    for i in 0..g.interior() {
        terminal += (path.xi[n][i] - pr.target[i]).powi(2);
    }
    let range = match kind {
        SchemeKind::Forward => 1..n + 1,
        SchemeKind::Backward => 0..n,
    };
    let mut running = 0.0;
    for l in range {
        for v in path.eta[l].iter() {
            running += v * v;
        }
    }
    pr.params.penalty * g.dx() * terminal + g.dt() * g.dx() * running / 2.0
}

pub fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |a, b| a.max(b.abs()))
}

/// Dense Jacobian of [`brute_residual`] with respect to the packed unknowns.
///
/// Every residual component is a polynomial of degree at most three in the
/// unknowns, so the five-point difference with unit step is exact up to
/// rounding.
pub fn brute_jacobian(pr: &Problem, path: &PathPair, kind: SchemeKind) -> DMatrix<f64> {
    let z = pr.pack(path, kind).unwrap();
    let nn = z.len();
    let mut j = DMatrix::zeros(nn, nn);
    for c in 0..nn {
        let r = |s: f64| {
            let mut zz = z.clone();
            zz[c] += s;
            brute_residual(pr, &pr.unpack(&zz, kind).unwrap(), kind)
        };
        let (p1, m1, p2, m2) = (r(1.0), r(-1.0), r(2.0), r(-2.0));
        for row in 0..nn {
            j[(row, c)] = (8.0 * (p1[row] - m1[row]) - (p2[row] - m2[row])) / 12.0;
        }
    }
    j
}
