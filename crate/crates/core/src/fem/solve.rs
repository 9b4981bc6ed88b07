//! Linear solvers for the symmetric positive-definite systems of the
//! discretization: Jacobi-preconditioned conjugate gradients and a banded
//! Cholesky factorization used when one matrix is solved many times.

use super::{ScalarField, SparseMatrix};
use crate::error::{invalid, Error, Result};

pub const DEFAULT_REL_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ITER: usize = 20_000;

/// Solves `A x = b` from a zero initial guess.
///
/// Stops once `||A x - b|| <= rel_tol * ||b||`.
pub fn cg_solve(a: &SparseMatrix, b: &ScalarField, rel_tol: f64, max_iter: usize) -> Result<ScalarField> {
    cg_solve_from(a, b, vec![0.0; b.len()], rel_tol, max_iter)
}

/// Conjugate gradients with an explicit initial guess.
pub fn cg_solve_from(
    a: &SparseMatrix,
    b: &[f64],
    x0: Vec<f64>,
    rel_tol: f64,
    max_iter: usize,
) -> Result<ScalarField> {
    let n = a.n;
    if b.len() != n || x0.len() != n {
        return Err(invalid(format!("cg: matrix is {n}x{n}, rhs {} guess {}", b.len(), x0.len())));
    }
    let inv_diag: Vec<f64> = a
        .diag()
        .iter()
        .map(|&d| if d > 0.0 { 1.0 / d } else { 1.0 })
        .collect();

    let b_norm = norm(b);
    let mut x = x0;
    if b_norm == 0.0 {
        return Ok(ScalarField::from(vec![0.0; n]));
    }
    let target = rel_tol * b_norm;

    let mut r = a.mul_vec(&x);
    for (ri, bi) in r.iter_mut().zip(b) {
        *ri = bi - *ri;
    }
    let mut res = norm(&r);
    if res <= target {
        return Ok(ScalarField::from(x));
    }
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(r, d)| r * d).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];

    for _ in 0..max_iter {
        a.mul_vec_into(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            return Err(Error::NotPositiveDefinite { pivot: 0, value: pap });
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        res = norm(&r);
        if res <= target {
            return Ok(ScalarField::from(x));
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::SolverDivergence {
        iterations: max_iter,
        residual: res / b_norm,
    })
}

/// Cholesky factor `L L^T` of a symmetric positive-definite banded matrix.
///
/// Row `i` of `L` is stored densely for columns `i - bw ..= i`.
#[derive(Debug, Clone)]
pub struct BandedCholesky {
    n: usize,
    bw: usize,
    rows: Vec<f64>,
}

impl BandedCholesky {
    pub fn factor(a: &SparseMatrix) -> Result<Self> {
        let n = a.n;
        let bw = a.bandwidth();
        let w = bw + 1;
        let mut rows = vec![0.0; n * w];
        // slot k of row i holds column i - bw + k
        for i in 0..n {
            for (j, v) in a.row(i) {
                if j <= i {
                    rows[i * w + (j + bw - i)] = v;
                }
            }
        }
        for i in 0..n {
            let j0 = i.saturating_sub(bw);
            for j in j0..=i {
                let lo = j0.max(j.saturating_sub(bw));
                let mut s = rows[i * w + (j + bw - i)];
                for k in lo..j {
                    s -= rows[i * w + (k + bw - i)] * rows[j * w + (k + bw - j)];
                }
                if j == i {
                    if s <= 0.0 || !s.is_finite() {
                        return Err(Error::NotPositiveDefinite { pivot: i, value: s });
                    }
                    rows[i * w + bw] = s.sqrt();
                } else {
                    rows[i * w + (j + bw - i)] = s / rows[j * w + bw];
                }
            }
        }
        Ok(Self { n, bw, rows })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve_in_place(&self, x: &mut [f64]) {
        let (n, bw, w) = (self.n, self.bw, self.bw + 1);
        for i in 0..n {
            let j0 = i.saturating_sub(bw);
            let mut s = x[i];
            for j in j0..i {
                s -= self.rows[i * w + (j + bw - i)] * x[j];
            }
            x[i] = s / self.rows[i * w + bw];
        }
        for i in (0..n).rev() {
            x[i] /= self.rows[i * w + bw];
            let xi = x[i];
            let j0 = i.saturating_sub(bw);
            for j in j0..i {
                x[j] -= self.rows[i * w + (j + bw - i)] * xi;
            }
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
