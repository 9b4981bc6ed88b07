//! Smallest eigenpair of `-div(kappa grad .)` with Dirichlet data, and the
//! scalar closed forms of the single-mode heat dynamics
//! `d' + lambda d = F`, `d(0) = d0`.

use crate::error::{invalid, Error, Result};
use crate::fem::{
    apply_dirichlet, assemble_stiffness, cg_solve, lumped_mass, ScalarField, SparseMatrix, DEFAULT_MAX_ITER,
};
use crate::mesh::Mesh;

/// Inner CG tolerance for the inverse iteration.
const INNER_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct EigenPair {
    pub lambda1: f64,
    /// `M`-normalized: `w1^T M w1 = 1`.
    pub w1: ScalarField,
    /// `||K w1 - lambda1 M w1|| / (lambda1 ||M w1||)` at exit.
    pub residual: f64,
    pub iterations: usize,
}

/// Inverse power iteration for the smallest `lambda` with `K w = lambda M w`.
///
/// `M` may be singular on constrained rows as long as `K` is SPD there.
/// Converges when the relative residual drops to `tol`.
pub fn smallest_eigenpair(k: &SparseMatrix, m: &SparseMatrix, tol: f64, max_iter: usize) -> Result<EigenPair> {
    if k.n != m.n {
        return Err(invalid(format!("K is {}x{}, M is {}x{}", k.n, k.n, m.n, m.n)));
    }
    let n = k.n;
    // positive start vector has a nonzero component along the positive
    // ground state
    let mut w: Vec<f64> = (0..n).map(|i| 1.0 + 0.5 * ((i * 7919) % 13) as f64 / 13.0).collect();
    let mut residual = f64::INFINITY;
    for it in 1..=max_iter {
        let mw = m.mul_vec(&w);
        let next = cg_solve(k, &ScalarField::from(mw), INNER_TOL, DEFAULT_MAX_ITER)?;
        w = next.values;
        let mnorm = m.bilinear(&w, &w).sqrt();
        if !(mnorm > 0.0) {
            return Err(Error::Internal("eigenvector lost its mass component".into()));
        }
        w.iter_mut().for_each(|v| *v /= mnorm);
        let lambda = k.bilinear(&w, &w);
        let kw = k.mul_vec(&w);
        let mw = m.mul_vec(&w);
        let r: f64 = kw.iter().zip(&mw).map(|(a, b)| (a - lambda * b).powi(2)).sum::<f64>().sqrt();
        let scale = lambda * mw.iter().map(|v| v * v).sum::<f64>().sqrt();
        residual = r / scale;
        if residual <= tol {
            // sign convention: positive mean
            if w.iter().sum::<f64>() < 0.0 {
                w.iter_mut().for_each(|v| *v = -*v);
            }
            return Ok(EigenPair {
                lambda1: lambda,
                w1: w.into(),
                residual,
                iterations: it,
            });
        }
    }
    Err(Error::EigenStagnation {
        iterations: max_iter,
        residual,
    })
}

/// Smallest Dirichlet eigenpair of `-div(coeff grad .)` with lumped mass.
pub fn dirichlet_eigenpair(mesh: &Mesh, coeff: &[f64], tol: f64, max_iter: usize) -> Result<EigenPair> {
    let k = assemble_stiffness(mesh, coeff)?;
    let (k, _) = apply_dirichlet(&k, &ScalarField::zeros(mesh.num_nodes()), &mesh.boundary_nodes, 0.0)?;
    let mut mass = lumped_mass(mesh);
    for &b in &mesh.boundary_nodes {
        mass[b] = 0.0;
    }
    smallest_eigenpair(&k, &SparseMatrix::diagonal(&mass), tol, max_iter)
}

/// `f (u0 - f / lambda1) >= 0`.
pub fn check_source_assumption(f: f64, u0: f64, lambda1: f64) -> Result<bool> {
    if !(lambda1 > 0.0) {
        return Err(invalid(format!("lambda1 must be positive, got {lambda1}")));
    }
    Ok(f * (u0 - f / lambda1) >= 0.0)
}

/// `d(t) = (d0 - F/lambda) exp(-lambda t) + F/lambda`.
///
/// Evaluated as `d0 e^{-lambda t} + (F/lambda)(1 - e^{-lambda t})` so that
/// the sign of `d` follows `d0` and `F` when they agree.
pub fn mode_coefficient(t: f64, lambda: f64, d0: f64, forcing: f64) -> f64 {
    let decay = (-lambda * t).exp();
    d0 * decay - (forcing / lambda) * (-lambda * t).exp_m1()
}

/// `d(t) d(T - t)`.
pub fn mode_product(t: f64, horizon: f64, lambda: f64, d0: f64, forcing: f64) -> f64 {
    mode_coefficient(t, lambda, d0, forcing) * mode_coefficient(horizon - t, lambda, d0, forcing)
}

/// `H(S) = (1 - e^{-lambda S}) / (lambda S)`, the mean of `e^{-lambda t}` over `[0, S]`.
pub fn h_ratio(s: f64, lambda: f64) -> f64 {
    let x = lambda * s;
    if x == 0.0 {
        return 1.0;
    }
    -(-x).exp_m1() / x
}
