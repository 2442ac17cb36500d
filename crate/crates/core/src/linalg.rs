//! Banded LU with partial pivoting and a tridiagonal solver.
//!
//! Storage follows the LAPACK `gbtrf` layout: column-major with `2 kl + ku + 1`
//! rows per column, where the top `kl` rows hold fill-in produced by row
//! interchanges.

use crate::error::{Error, Result};

/// Square banded matrix with `kl` sub- and `ku` super-diagonals.
#[derive(Debug, Clone)]
pub struct BandedMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    ldab: usize,
    ab: Vec<f64>,
}

impl BandedMatrix {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let ldab = 2 * kl + ku + 1;
        BandedMatrix {
            n,
            kl,
            ku,
            ldab,
            ab: vec![0.0; ldab * n],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn lower_bandwidth(&self) -> usize {
        self.kl
    }

    pub fn upper_bandwidth(&self) -> usize {
        self.ku
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < self.n && j < self.n);
        debug_assert!(i + self.ku >= j && j + self.kl >= i, "({i}, {j}) outside band");
        j * self.ldab + self.kl + self.ku + i - j
    }

    pub fn in_band(&self, i: usize, j: usize) -> bool {
        i < self.n && j < self.n && i + self.ku >= j && j + self.kl >= i
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if self.in_band(i, j) {
            self.ab[self.idx(i, j)]
        } else {
            0.0
        }
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let k = self.idx(i, j);
        self.ab[k] = v;
    }

    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let k = self.idx(i, j);
        self.ab[k] += v;
    }

    /// Multiplies row `i` by `c`.
    pub fn scale_row(&mut self, i: usize, c: f64) {
        let lo = i.saturating_sub(self.kl);
        let hi = (i + self.ku).min(self.n - 1);
        for j in lo..=hi {
            let k = self.idx(i, j);
            self.ab[k] *= c;
        }
    }

    /// `y = A x`
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for j in 0..self.n {
            let lo = j.saturating_sub(self.ku);
            let hi = (j + self.kl).min(self.n - 1);
            for i in lo..=hi {
                y[i] += self.ab[self.idx(i, j)] * x[j];
            }
        }
        y
    }

    /// Largest `(i - j, j - i)` over structurally nonzero entries.
    pub fn measured_bandwidth(&self) -> (usize, usize) {
        let mut lower = 0;
        let mut upper = 0;
        for j in 0..self.n {
            let lo = j.saturating_sub(self.ku);
            let hi = (j + self.kl).min(self.n - 1);
            for i in lo..=hi {
                if self.ab[self.idx(i, j)] != 0.0 {
                    if i > j {
                        lower = lower.max(i - j);
                    } else {
                        upper = upper.max(j - i);
                    }
                }
            }
        }
        (lower, upper)
    }

    /// Factors in place; consumes the matrix.
    pub fn factor(mut self) -> Result<BandedLu> {
        let n = self.n;
        let kl = self.kl;
        let ku = self.ku;
        let ldab = self.ldab;
        let kv = ku + kl;
        let mut ipiv = vec![0usize; n];
        let ab = &mut self.ab;
        // Fill-in rows start out zeroed by construction.
        let mut ju = 0usize;
        for j in 0..n {
            let km = kl.min(n - 1 - j);
            // Column j, rows j..=j+km live at ab[j*ldab + kv .. + km].
            let col = j * ldab + kv;
            let mut p = 0;
            let mut best = ab[col].abs();
            for r in 1..=km {
                let v = ab[col + r].abs();
                if v > best {
                    best = v;
                    p = r;
                }
            }
            ipiv[j] = j + p;
            if best == 0.0 {
                return Err(Error::Singular { column: j });
            }
            ju = ju.max((j + ku + p).min(n - 1));
            if p != 0 {
                // Swap rows j and j+p over columns j..=ju.
                for c in j..=ju {
                    let base = c * ldab + kv;
                    let a = base + j - c;
                    let b = base + j + p - c;
                    // (i - c) may be negative; index arithmetic stays in range
                    // because both rows lie inside the widened band.
                    ab.swap(a, b);
                }
            }
            let pivot = ab[col];
            let inv = 1.0 / pivot;
            for r in 1..=km {
                ab[col + r] *= inv;
            }
            if km > 0 {
                for c in (j + 1)..=ju {
                    let cbase = c * ldab + kv + j - c;
                    let f = ab[cbase];
                    if f != 0.0 {
                        let (left, right) = ab.split_at_mut(cbase + 1);
                        let l = &left[col + 1..col + 1 + km];
                        let dst = &mut right[..km];
                        for (d, li) in dst.iter_mut().zip(l) {
                            *d -= li * f;
                        }
                    }
                }
            }
        }
        Ok(BandedLu {
            n,
            kl,
            ku,
            ldab,
            ab: self.ab,
            ipiv,
        })
    }
}

/// LU factors produced by [`BandedMatrix::factor`].
#[derive(Debug, Clone)]
pub struct BandedLu {
    n: usize,
    kl: usize,
    ku: usize,
    ldab: usize,
    ab: Vec<f64>,
    ipiv: Vec<usize>,
}

impl BandedLu {
    /// Solves `A x = b` in place.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let n = self.n;
        let kv = self.kl + self.ku;
        let ldab = self.ldab;
        for j in 0..n {
            let km = self.kl.min(n - 1 - j);
            let p = self.ipiv[j];
            if p != j {
                b.swap(p, j);
            }
            let bj = b[j];
            if bj != 0.0 {
                let col = j * ldab + kv;
                for r in 1..=km {
                    b[j + r] -= self.ab[col + r] * bj;
                }
            }
        }
        for j in (0..n).rev() {
            let col = j * ldab + kv;
            b[j] /= self.ab[col];
            let bj = b[j];
            if bj != 0.0 {
                let top = j.saturating_sub(kv);
                for i in top..j {
                    b[i] -= self.ab[col - (j - i)] * bj;
                }
            }
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}

/// Solves a tridiagonal system with sub-diagonal `lower[1..]`, diagonal
/// `diag` and super-diagonal `upper[..n-1]` using partial pivoting on a
/// banded factorization.
pub fn solve_tridiagonal(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &[f64]) -> Result<Vec<f64>> {
    let n = diag.len();
    let mut a = BandedMatrix::zeros(n, 1, 1);
    for i in 0..n {
        a.set(i, i, diag[i]);
        if i > 0 {
            a.set(i, i - 1, lower[i]);
        }
        if i + 1 < n {
            a.set(i, i + 1, upper[i]);
        }
    }
    Ok(a.factor()?.solve(rhs))
}
