//! P1 finite-element operators on a [`Mesh`]: stiffness and mass assembly,
//! Dirichlet elimination and SPD solvers.

mod solve;
mod sparse;

pub use solve::{cg_solve, cg_solve_from, BandedCholesky, DEFAULT_MAX_ITER, DEFAULT_REL_TOL};
pub use sparse::SparseMatrix;

use crate::error::{invalid, Error, Result};
use crate::mesh::Mesh;
use std::ops::{Deref, DerefMut};

/// One real value per mesh node.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ScalarField {
    pub values: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(n: usize) -> Self {
        Self { values: vec![0.0; n] }
    }

    pub fn constant(n: usize, c: f64) -> Self {
        Self { values: vec![c; n] }
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Checks that the field lives on `mesh`.
    pub fn check_mesh(&self, mesh: &Mesh) -> Result<()> {
        if self.len() != mesh.num_nodes() {
            return Err(invalid(format!(
                "field has {} values but mesh has {} nodes",
                self.len(),
                mesh.num_nodes()
            )));
        }
        Ok(())
    }
}

impl From<Vec<f64>> for ScalarField {
    fn from(values: Vec<f64>) -> Self {
        Self { values }
    }
}

impl Deref for ScalarField {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.values
    }
}

impl DerefMut for ScalarField {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }
}

/// `K_ij = sum_e coeff_e * area_e * grad N_i . grad N_j`.
pub fn assemble_stiffness(mesh: &Mesh, coeff: &[f64]) -> Result<SparseMatrix> {
    if coeff.len() != mesh.num_elements() {
        return Err(invalid(format!(
            "{} coefficients for {} elements",
            coeff.len(),
            mesh.num_elements()
        )));
    }
    if let Some((e, &c)) = coeff.iter().enumerate().find(|(_, c)| !(**c > 0.0) || !c.is_finite()) {
        return Err(Error::CoefficientBounds { element: e, value: c });
    }
    Ok(assemble_weighted_stiffness(mesh, coeff))
}

/// Stiffness-type assembly with arbitrary (possibly signed) element weights.
pub(crate) fn assemble_weighted_stiffness(mesh: &Mesh, weight: &[f64]) -> SparseMatrix {
    let mut t = Vec::with_capacity(9 * mesh.num_elements());
    for (e, tri) in mesh.elements.iter().enumerate() {
        let g = &mesh.element_grads[e];
        let s = weight[e] * mesh.element_area[e];
        for a in 0..3 {
            for b in 0..3 {
                t.push((tri[a], tri[b], s * (g[a][0] * g[b][0] + g[a][1] * g[b][1])));
            }
        }
    }
    SparseMatrix::from_triplets(mesh.num_nodes(), t).expect("mesh indices are in range")
}

/// Consistent (`lumped = false`) or row-sum lumped mass matrix.
pub fn assemble_mass(mesh: &Mesh, lumped: bool) -> SparseMatrix {
    if lumped {
        return SparseMatrix::diagonal(&lumped_mass(mesh));
    }
    let mut t = Vec::with_capacity(9 * mesh.num_elements());
    for (e, tri) in mesh.elements.iter().enumerate() {
        let a = mesh.element_area[e] / 12.0;
        for i in 0..3 {
            for j in 0..3 {
                t.push((tri[i], tri[j], if i == j { 2.0 * a } else { a }));
            }
        }
    }
    SparseMatrix::from_triplets(mesh.num_nodes(), t).expect("mesh indices are in range")
}

/// Diagonal of the lumped mass matrix: `integral of N_i`.
pub fn lumped_mass(mesh: &Mesh) -> Vec<f64> {
    let mut d = vec![0.0; mesh.num_nodes()];
    for (e, tri) in mesh.elements.iter().enumerate() {
        for &n in tri {
            d[n] += mesh.element_area[e] / 3.0;
        }
    }
    d
}

/// Symmetric elimination of `u_i = value` for every `i` in `nodes`.
///
/// Constrained rows and columns are zeroed with a unit diagonal; their
/// coupling is moved to the right-hand side so the matrix stays symmetric.
pub fn apply_dirichlet(
    k: &SparseMatrix,
    b: &ScalarField,
    nodes: &[usize],
    value: f64,
) -> Result<(SparseMatrix, ScalarField)> {
    if b.len() != k.n {
        return Err(invalid(format!("rhs length {} vs matrix {}", b.len(), k.n)));
    }
    let mut fixed = vec![false; k.n];
    for &i in nodes {
        if i >= k.n {
            return Err(invalid(format!("constrained node {i} out of range")));
        }
        fixed[i] = true;
    }
    let mut rhs = b.clone();
    let mut t = Vec::with_capacity(k.nnz());
    for i in 0..k.n {
        if fixed[i] {
            t.push((i, i, 1.0));
            rhs[i] = value;
            continue;
        }
        for (j, v) in k.row(i) {
            if fixed[j] {
                rhs[i] -= v * value;
            } else {
                t.push((i, j, v));
            }
        }
    }
    Ok((SparseMatrix::from_triplets(k.n, t)?, rhs))
}

/// `integral of |grad phi|^2` (no `eps / 2` factor).
pub fn dirichlet_energy(mesh: &Mesh, phi: &[f64]) -> f64 {
    (0..mesh.num_elements())
        .map(|e| {
            let g = mesh.gradient(e, phi);
            mesh.element_area[e] * (g[0] * g[0] + g[1] * g[1])
        })
        .sum()
}

/// Lumped-mass `L^1` norm.
pub fn l1_norm(mass: &[f64], v: &[f64]) -> f64 {
    mass.iter().zip(v).map(|(m, x)| m * x.abs()).sum()
}

/// Lumped-mass `L^2` norm.
pub fn l2_norm(mass: &[f64], v: &[f64]) -> f64 {
    mass.iter().zip(v).map(|(m, x)| m * x * x).sum::<f64>().sqrt()
}
