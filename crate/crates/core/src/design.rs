//! Level-set design fields, the two-phase conductivity they induce, and the
//! clip-and-shift volume projection.

use crate::error::{invalid, Error, Result};
use crate::fem::{lumped_mass, ScalarField};
use crate::mesh::Mesh;

/// Conductivities of the two phases, `beta > alpha > 0`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MaterialParams {
    pub alpha: f64,
    pub beta: f64,
}

impl MaterialParams {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        let m = Self { alpha, beta };
        m.validate()?;
        Ok(m)
    }

    /// Strict ordering check.
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.beta > self.alpha && self.beta.is_finite()) {
            return Err(invalid(format!(
                "material ordering requires beta > alpha > 0, got alpha = {}, beta = {}",
                self.alpha, self.beta
            )));
        }
        Ok(())
    }

    /// `beta >= alpha > 0`; equal conductivities give a design-independent
    /// problem and are accepted by the solvers.
    pub fn validate_weak(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.beta >= self.alpha && self.beta.is_finite()) {
            return Err(invalid(format!(
                "material ordering requires beta >= alpha > 0, got alpha = {}, beta = {}",
                self.alpha, self.beta
            )));
        }
        Ok(())
    }
}

impl Default for MaterialParams {
    fn default() -> Self {
        Self { alpha: 1.0, beta: 10.0 }
    }
}

/// Level-set function with its volume fraction target and exponent.
///
/// `phi > 0` is the `beta` phase, `phi < 0` the `alpha` phase.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignField {
    pub phi: ScalarField,
    pub gamma: f64,
    pub m: f64,
}

impl DesignField {
    pub fn new(phi: ScalarField, gamma: f64, m: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(invalid(format!("volume fraction must lie in (0, 1), got {gamma}")));
        }
        if !(m >= 1.0) {
            return Err(invalid(format!("exponent m must be >= 1, got {m}")));
        }
        check_box(&phi)?;
        Ok(Self { phi, gamma, m })
    }

    pub fn constant(mesh: &Mesh, value: f64, gamma: f64, m: f64) -> Result<Self> {
        Self::new(ScalarField::constant(mesh.num_nodes(), value), gamma, m)
    }

    pub fn coefficient(&self, mesh: &Mesh, mat: &MaterialParams) -> Result<Vec<f64>> {
        coefficient(mesh, &self.phi, self.m, mat)
    }
}

fn check_box(phi: &[f64]) -> Result<()> {
    match phi.iter().position(|v| !(v.abs() <= 1.0)) {
        Some(i) => Err(Error::InvalidDesign(format!("|phi| > 1 at node {i} ({})", phi[i]))),
        None => Ok(()),
    }
}

/// Per-element conductivity `alpha + (beta - alpha) * mean_e((phi_+)^m)`.
pub fn coefficient(mesh: &Mesh, phi: &[f64], m: f64, mat: &MaterialParams) -> Result<Vec<f64>> {
    if phi.len() != mesh.num_nodes() {
        return Err(invalid("design field does not match mesh"));
    }
    check_box(phi)?;
    let nodal: Vec<f64> = phi.iter().map(|&v| v.max(0.0).powf(m)).collect();
    let span = mat.beta - mat.alpha;
    Ok(mesh
        .elements
        .iter()
        .map(|tri| {
            let mean = (nodal[tri[0]] + nodal[tri[1]] + nodal[tri[2]]) / 3.0;
            (mat.alpha + span * mean).clamp(mat.alpha, mat.beta)
        })
        .collect())
}

/// Nodewise `max(-1, min(phi + lambda, 1))`.
pub fn clip_shift(phi: &[f64], lambda: f64) -> ScalarField {
    phi.iter().map(|&v| (v + lambda).clamp(-1.0, 1.0)).collect::<Vec<_>>().into()
}

/// Lumped-mass quadrature of `max(phi, 0)`.
pub fn volume(mass: &[f64], phi: &[f64]) -> f64 {
    mass.iter().zip(phi).map(|(m, v)| m * v.max(0.0)).sum()
}

/// Result of the clip-and-shift projection.
#[derive(Debug, Clone)]
pub struct Projection {
    pub phi: ScalarField,
    pub lambda: f64,
    pub volume: f64,
}

/// Finds `lambda` in `[-2, 2]` by bisection so that
/// `|volume(clip_shift(phi, lambda)) - target| <= eta1`.
pub fn project_volume(mass: &[f64], phi: &[f64], target: f64, eta1: f64) -> Result<Projection> {
    let total: f64 = mass.iter().sum();
    if !(target > 0.0 && target < total) {
        return Err(invalid(format!("target volume {target} outside (0, {total})")));
    }
    if !(eta1 > 0.0) {
        return Err(invalid(format!("volume tolerance must be positive, got {eta1}")));
    }
    let vol = |lambda: f64| {
        mass.iter()
            .zip(phi)
            .map(|(m, v)| m * (v + lambda).clamp(-1.0, 1.0).max(0.0))
            .sum::<f64>()
    };
    let (mut lo, mut hi) = (-2.0f64, 2.0f64);
    // 200 halvings take the bracket far below f64 resolution
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let v = vol(mid);
        if (v - target).abs() <= eta1 {
            return Ok(Projection {
                phi: clip_shift(phi, mid),
                lambda: mid,
                volume: v,
            });
        }
        if v < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(Error::Internal(format!(
        "volume bisection exhausted on [{lo}, {hi}] for target {target}"
    )))
}

/// Convenience wrapper computing the lumped mass on the fly.
pub fn project_design(mesh: &Mesh, design: &DesignField, eta1: f64) -> Result<(DesignField, f64)> {
    let mass = lumped_mass(mesh);
    let p = project_volume(&mass, &design.phi, design.gamma * mesh.total_area(), eta1)?;
    Ok((
        DesignField {
            phi: p.phi,
            ..design.clone()
        },
        p.lambda,
    ))
}

/// Fraction of nodes with `lo < phi_+ < hi`.
pub fn intermediate_fraction(phi: &[f64], lo: f64, hi: f64) -> f64 {
    let count = phi.iter().filter(|&&v| v.max(0.0) > lo && v.max(0.0) < hi).count();
    count as f64 / phi.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_rect_mesh, Rect};

    fn mesh() -> Mesh {
        build_rect_mesh(8, 8, Rect::UNIT).unwrap()
    }

    #[test]
    fn coefficient_extremes_and_midpoint() {
        let m = mesh();
        let mat = MaterialParams::new(1.0, 10.0).unwrap();
        let n = m.num_nodes();
        assert!(coefficient(&m, &vec![-1.0; n], 3.0, &mat).unwrap().iter().all(|&c| c == 1.0));
        assert!(coefficient(&m, &vec![1.0; n], 3.0, &mat).unwrap().iter().all(|&c| c == 10.0));
        let half = coefficient(&m, &vec![0.5; n], 3.0, &mat).unwrap();
        assert!(half.iter().all(|&c| (c - 2.125).abs() < 1e-14));
    }

    #[test]
    fn coefficient_rejects_box_violation() {
        let m = mesh();
        let mut phi = vec![0.0; m.num_nodes()];
        phi[5] = 1.2;
        assert!(matches!(
            coefficient(&m, &phi, 1.0, &MaterialParams::default()),
            Err(Error::InvalidDesign(_))
        ));
    }

    #[test]
    fn material_ordering() {
        assert!(MaterialParams::new(1.0, 1.0).is_err());
        assert!(MaterialParams::new(2.0, 1.0).is_err());
        assert!(MaterialParams::new(0.0, 1.0).is_err());
        assert!(MaterialParams::new(1.0, 10.0).is_ok());
    }

    #[test]
    fn clip_shift_examples() {
        let phi = [0.2, -0.7, 1.0, -1.0];
        assert_eq!(clip_shift(&phi, 0.0).values, phi.to_vec());
        assert!(clip_shift(&[0.0; 4], 5.0).iter().all(|&v| v == 1.0));
        let line: Vec<f64> = (0..=8).map(|i| 2.0 * (i as f64 / 8.0) - 1.0).collect();
        let out = clip_shift(&line, 0.5);
        for (i, v) in out.iter().enumerate() {
            let x = i as f64 / 8.0;
            if x >= 0.75 {
                assert_eq!(*v, 1.0);
            } else {
                assert!((v - (2.0 * x - 0.5)).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn volume_examples() {
        let m = mesh();
        let mass = lumped_mass(&m);
        assert!((volume(&mass, &vec![0.5; m.num_nodes()]) - 0.5).abs() < 1e-14);
        assert_eq!(volume(&mass, &vec![-0.3; m.num_nodes()]), 0.0);
        let fine = build_rect_mesh(64, 64, Rect::UNIT).unwrap();
        let v = volume(&lumped_mass(&fine), &fine.interpolate(|x, _| x - 0.5));
        assert!((v - 0.125).abs() < 1e-3);
    }

    #[test]
    fn projection_examples() {
        let m = mesh();
        let mass = lumped_mass(&m);
        let n = m.num_nodes();
        let p = project_volume(&mass, &vec![0.5; n], 0.5, 1e-6).unwrap();
        assert_eq!(p.lambda, 0.0);
        assert_eq!(p.phi.values, vec![0.5; n]);
        let p = project_volume(&mass, &vec![0.0; n], 0.5, 1e-9).unwrap();
        assert!((p.lambda - 0.5).abs() < 1e-8);
        let p = project_volume(&mass, &vec![-1.0; n], 0.25, 1e-9).unwrap();
        assert!((p.lambda - 1.25).abs() < 1e-8);
        assert!(project_volume(&mass, &vec![0.0; n], 0.0, 1e-6).is_err());
        assert!(project_volume(&mass, &vec![0.0; n], 1.0, 1e-6).is_err());
    }

    #[test]
    fn intermediate_fraction_counts() {
        assert_eq!(intermediate_fraction(&[-1.0, 0.5, 1.0, 0.01], 0.05, 0.95), 0.25);
    }
}
