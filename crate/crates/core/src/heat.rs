//! Backward-Euler P1 solver for the heat equation with homogeneous Dirichlet
//! data, its elliptic counterpart, and the source/state duality pairings.

use crate::error::{invalid, Result};
use crate::fem::{
    apply_dirichlet, assemble_stiffness, cg_solve, lumped_mass, BandedCholesky, ScalarField, SparseMatrix,
    DEFAULT_MAX_ITER, DEFAULT_REL_TOL,
};
use crate::mesh::Mesh;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Heat source `f(x, t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SourceSpec {
    /// Space- and time-independent source.
    Constant { value: f64 },
    /// `amplitude * (exp(-decay t) cos(frequency t) + 1)` on `[0, T/2]`,
    /// mirrored about `T/2`.
    DampedCosineSymmetric {
        amplitude: f64,
        decay: f64,
        frequency: f64,
    },
    /// Nodal profile times a piecewise-linear time factor. Empty `times`
    /// means a factor of one.
    Table {
        profile: Vec<f64>,
        #[serde(default)]
        times: Vec<f64>,
        #[serde(default)]
        factors: Vec<f64>,
    },
}

impl SourceSpec {
    pub fn constant(value: f64) -> Self {
        SourceSpec::Constant { value }
    }

    /// The time-dependent experiment source with amplitude 10, decay `pi^2/2`
    /// and angular frequency `4 pi^2`.
    pub fn damped_cosine() -> Self {
        SourceSpec::DampedCosineSymmetric {
            amplitude: 10.0,
            decay: PI * PI / 2.0,
            frequency: 4.0 * PI * PI,
        }
    }

    pub fn steady(profile: Vec<f64>) -> Self {
        SourceSpec::Table {
            profile,
            times: Vec::new(),
            factors: Vec::new(),
        }
    }

    pub fn validate(&self, mesh: &Mesh) -> Result<()> {
        match self {
            SourceSpec::Constant { value } if !value.is_finite() => Err(invalid("non-finite source")),
            SourceSpec::DampedCosineSymmetric {
                amplitude,
                decay,
                frequency,
            } if ![amplitude, decay, frequency].iter().all(|v| v.is_finite()) => {
                Err(invalid("non-finite source parameters"))
            }
            SourceSpec::Table { profile, times, factors } => {
                if profile.len() != mesh.num_nodes() {
                    return Err(invalid(format!(
                        "source profile has {} values, mesh has {} nodes",
                        profile.len(),
                        mesh.num_nodes()
                    )));
                }
                if times.len() != factors.len() {
                    return Err(invalid("source time table and factors differ in length"));
                }
                if times.windows(2).any(|w| !(w[1] > w[0])) {
                    return Err(invalid("source time table must be strictly increasing"));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// True when `f(t) = f(T - t)` holds on every uniform grid.
    pub fn is_time_symmetric(&self) -> bool {
        match self {
            SourceSpec::Constant { .. } | SourceSpec::DampedCosineSymmetric { .. } => true,
            SourceSpec::Table { times, .. } => times.is_empty(),
        }
    }

    pub fn as_constant(&self) -> Option<f64> {
        match self {
            SourceSpec::Constant { value } => Some(*value),
            _ => None,
        }
    }

    fn time_factor(&self, t: f64) -> f64 {
        match self {
            SourceSpec::Constant { .. } => 1.0,
            SourceSpec::DampedCosineSymmetric {
                decay, frequency, ..
            } => (-decay * t).exp() * (frequency * t).cos() + 1.0,
            SourceSpec::Table { times, factors, .. } => {
                if times.is_empty() {
                    return 1.0;
                }
                let k = times.partition_point(|&s| s <= t);
                if k == 0 {
                    factors[0]
                } else if k == times.len() {
                    factors[k - 1]
                } else {
                    let w = (t - times[k - 1]) / (times[k] - times[k - 1]);
                    factors[k - 1] * (1.0 - w) + factors[k] * w
                }
            }
        }
    }

    fn fill(&self, mesh: &Mesh, factor: f64, out: &mut [f64]) {
        match self {
            SourceSpec::Constant { value } => out.iter_mut().for_each(|v| *v = value * factor),
            SourceSpec::DampedCosineSymmetric { amplitude, .. } => {
                out.iter_mut().for_each(|v| *v = amplitude * factor)
            }
            SourceSpec::Table { profile, .. } => {
                debug_assert_eq!(profile.len(), mesh.num_nodes());
                out.iter_mut().zip(profile).for_each(|(v, p)| *v = p * factor)
            }
        }
    }

    /// Nodal values at grid time `t_k = k T / steps`.
    ///
    /// The symmetric source is evaluated at `min(k, steps - k) * dt` so that
    /// `f(t_k) == f(t_{steps-k})` bit for bit.
    pub fn nodal_at_step(&self, mesh: &Mesh, k: usize, steps: usize, horizon: f64) -> Vec<f64> {
        let mut out = vec![0.0; mesh.num_nodes()];
        self.fill_at_step(mesh, k, steps, horizon, &mut out);
        out
    }

    fn fill_at_step(&self, mesh: &Mesh, k: usize, steps: usize, horizon: f64, out: &mut [f64]) {
        let dt = horizon / steps as f64;
        let t = match self {
            SourceSpec::DampedCosineSymmetric { .. } => k.min(steps - k) as f64 * dt,
            _ => k as f64 * dt,
        };
        self.fill(mesh, self.time_factor(t), out);
    }

    /// Long-time limit `f_inf` used by the elliptic problem.
    pub fn steady_limit(&self, mesh: &Mesh) -> Vec<f64> {
        let factor = match self {
            // exp(-decay t) cos(..) -> 0
            SourceSpec::DampedCosineSymmetric { .. } => 1.0,
            SourceSpec::Table { factors, .. } => factors.last().copied().unwrap_or(1.0),
            SourceSpec::Constant { .. } => 1.0,
        };
        let mut out = vec![0.0; mesh.num_nodes()];
        self.fill(mesh, factor, &mut out);
        out
    }
}

/// Initial state `u_0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialValue {
    Constant { value: f64 },
    /// `amplitude * sin(pi x) sin(pi y)` in the domain's normalized coordinates.
    SineMode { amplitude: f64 },
    Nodal { values: Vec<f64> },
}

impl InitialValue {
    pub fn as_constant(&self) -> Option<f64> {
        match self {
            InitialValue::Constant { value } => Some(*value),
            _ => None,
        }
    }

    /// Nodal interpolant, boundary nodes included.
    pub fn interpolate(&self, mesh: &Mesh) -> Result<Vec<f64>> {
        let d = mesh.domain;
        match self {
            InitialValue::Constant { value } => Ok(vec![*value; mesh.num_nodes()]),
            InitialValue::SineMode { amplitude } => Ok(mesh.interpolate(|x, y| {
                amplitude
                    * (PI * (x - d.x_min) / d.width()).sin()
                    * (PI * (y - d.y_min) / d.height()).sin()
            })),
            InitialValue::Nodal { values } if values.len() == mesh.num_nodes() => Ok(values.clone()),
            InitialValue::Nodal { values } => Err(invalid(format!(
                "initial field has {} values, mesh has {} nodes",
                values.len(),
                mesh.num_nodes()
            ))),
        }
    }
}

/// Time horizon, step count, initial value and inner solver tolerance.
#[derive(Debug, Clone, PartialEq)]
pub struct RunParams {
    pub horizon: f64,
    pub steps: usize,
    pub initial: InitialValue,
    pub rel_tol: f64,
}

impl RunParams {
    pub fn new(horizon: f64, steps: usize, initial: InitialValue) -> Result<Self> {
        let r = Self {
            horizon,
            steps,
            initial,
            rel_tol: DEFAULT_REL_TOL,
        };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(invalid(format!("horizon must be positive, got {}", self.horizon)));
        }
        if self.steps == 0 {
            return Err(invalid("at least one time step is required"));
        }
        Ok(())
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }
}

/// Default step count: `100 T` clamped to `[50, 400]`.
pub fn default_steps(horizon: f64) -> usize {
    (100.0 * horizon).round().clamp(50.0, 400.0) as usize
}

/// The discrete trajectory `u^0, ..., u^nt` on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldSeries {
    pub horizon: f64,
    pub times: Vec<f64>,
    pub fields: Vec<ScalarField>,
    /// Element conductivity the series was computed with.
    pub kappa: Vec<f64>,
}

impl FieldSeries {
    pub fn steps(&self) -> usize {
        self.fields.len() - 1
    }

    pub fn last(&self) -> &ScalarField {
        self.fields.last().expect("series is never empty")
    }

    /// Checks that the time grid is uniform to rounding.
    pub fn is_uniform(&self) -> bool {
        let n = self.times.len();
        if n < 2 {
            return false;
        }
        let dt = self.horizon / (n - 1) as f64;
        self.times
            .iter()
            .enumerate()
            .all(|(k, t)| (t - k as f64 * dt).abs() <= 1e-12 * self.horizon.max(1.0))
    }
}

/// Backward-Euler time stepper for one fixed conductivity.
///
/// The Dirichlet-eliminated matrix `M/dt + K` is factored once and reused
/// for every step.
pub struct HeatStepper<'a> {
    mesh: &'a Mesh,
    mass: Vec<f64>,
    factor: BandedCholesky,
    kappa: Vec<f64>,
    dt: f64,
}

impl<'a> HeatStepper<'a> {
    pub fn new(mesh: &'a Mesh, coeff: &[f64], dt: f64) -> Result<Self> {
        let k = assemble_stiffness(mesh, coeff)?;
        let mass = lumped_mass(mesh);
        let a = k.linear_combination(1.0, &SparseMatrix::diagonal(&mass), 1.0 / dt)?;
        let (a, _) = apply_dirichlet(&a, &ScalarField::zeros(mesh.num_nodes()), &mesh.boundary_nodes, 0.0)?;
        Ok(Self {
            mesh,
            mass,
            factor: BandedCholesky::factor(&a)?,
            kappa: coeff.to_vec(),
            dt,
        })
    }

    /// Solves `(M/dt + K) x = rhs` with `x = 0` on the boundary. `rhs` is
    /// overwritten with the solution.
    pub fn solve_in_place(&self, rhs: &mut [f64]) {
        for &b in &self.mesh.boundary_nodes {
            rhs[b] = 0.0;
        }
        self.factor.solve_in_place(rhs);
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    pub fn run(&self, source: &SourceSpec, run: &RunParams) -> Result<FieldSeries> {
        let mesh = self.mesh;
        let nt = run.steps;
        let u0 = run.initial.interpolate(mesh)?;
        let mut fields = Vec::with_capacity(nt + 1);
        fields.push(ScalarField::from(u0));
        let mut f = vec![0.0; mesh.num_nodes()];
        for k in 0..nt {
            source.fill_at_step(mesh, k + 1, nt, run.horizon, &mut f);
            let prev = &fields[k];
            let mut rhs: Vec<f64> = (0..mesh.num_nodes())
                .map(|i| self.mass[i] * (prev[i] / self.dt + f[i]))
                .collect();
            self.solve_in_place(&mut rhs);
            fields.push(ScalarField::from(rhs));
        }
        Ok(FieldSeries {
            horizon: run.horizon,
            times: (0..=nt).map(|k| k as f64 * run.horizon / nt as f64).collect(),
            fields,
            kappa: self.kappa.clone(),
        })
    }
}

/// Solves the heat equation on `[0, T]` with `u = 0` on the boundary.
pub fn solve_parabolic(mesh: &Mesh, coeff: &[f64], source: &SourceSpec, run: &RunParams) -> Result<FieldSeries> {
    run.validate()?;
    source.validate(mesh)?;
    HeatStepper::new(mesh, coeff, run.dt())?.run(source, run)
}

/// Solves `-div(kappa grad u) = f_inf`, `u = 0` on the boundary.
pub fn solve_elliptic(mesh: &Mesh, coeff: &[f64], f_inf: &[f64], rel_tol: f64) -> Result<ScalarField> {
    if f_inf.len() != mesh.num_nodes() {
        return Err(invalid("steady source does not match mesh"));
    }
    let k = assemble_stiffness(mesh, coeff)?;
    let b: Vec<f64> = lumped_mass(mesh).iter().zip(f_inf).map(|(m, f)| m * f).collect();
    let (k, b) = apply_dirichlet(&k, &ScalarField::from(b), &mesh.boundary_nodes, 0.0)?;
    cg_solve(&k, &b, rel_tol, DEFAULT_MAX_ITER)
}

/// Trapezoidal weights of a uniform grid with `steps` intervals.
pub fn trapezoid_weights(steps: usize, horizon: f64) -> Vec<f64> {
    let dt = horizon / steps as f64;
    (0..=steps)
        .map(|k| if k == 0 || k == steps { 0.5 * dt } else { dt })
        .collect()
}

/// `(1/T) int_0^T (f(t), u(t)) dt` by the trapezoidal rule in time and
/// lumped quadrature in space.
pub fn duality_time_average(mesh: &Mesh, series: &FieldSeries, source: &SourceSpec) -> Result<f64> {
    source.validate(mesh)?;
    let nt = series.steps();
    if nt == 0 {
        return Err(invalid("series has no time steps"));
    }
    let mass = lumped_mass(mesh);
    let weights = trapezoid_weights(nt, series.horizon);
    let mut f = vec![0.0; mesh.num_nodes()];
    let mut total = 0.0;
    for (k, u) in series.fields.iter().enumerate() {
        u.check_mesh(mesh)?;
        source.fill_at_step(mesh, k, nt, series.horizon, &mut f);
        let pairing: f64 = (0..mesh.num_nodes()).map(|i| mass[i] * f[i] * u[i]).sum();
        total += weights[k] * pairing;
    }
    Ok(total / series.horizon)
}

/// `int f_inf u_bar dx` with lumped quadrature.
pub fn duality_steady(mesh: &Mesh, u_bar: &[f64], f_inf: &[f64]) -> Result<f64> {
    if u_bar.len() != mesh.num_nodes() || f_inf.len() != mesh.num_nodes() {
        return Err(invalid("field does not match mesh"));
    }
    Ok(lumped_mass(mesh)
        .iter()
        .zip(u_bar.iter().zip(f_inf))
        .map(|(m, (u, f))| m * u * f)
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::l2_norm;
    use crate::mesh::{build_rect_mesh, Rect};

    fn sine(mesh: &Mesh) -> Vec<f64> {
        mesh.interpolate(|x, y| (PI * x).sin() * (PI * y).sin())
    }

    #[test]
    fn zero_data_stays_zero() {
        let m = build_rect_mesh(6, 6, Rect::UNIT).unwrap();
        let run = RunParams::new(0.5, 10, InitialValue::Constant { value: 0.0 }).unwrap();
        let s = solve_parabolic(&m, &vec![1.0; m.num_elements()], &SourceSpec::constant(0.0), &run).unwrap();
        assert_eq!(s.fields.len(), 11);
        assert!(s.fields.iter().all(|u| u.iter().all(|&v| v == 0.0)));
        assert_eq!(duality_time_average(&m, &s, &SourceSpec::constant(3.0)).unwrap(), 0.0);
    }

    #[test]
    fn boundary_is_zero_after_start() {
        let m = build_rect_mesh(5, 4, Rect::UNIT).unwrap();
        let run = RunParams::new(0.1, 5, InitialValue::Constant { value: 1.0 }).unwrap();
        let s = solve_parabolic(&m, &vec![2.0; m.num_elements()], &SourceSpec::constant(10.0), &run).unwrap();
        assert!(m.boundary_nodes.iter().all(|&b| s.fields[0][b] == 1.0));
        for u in &s.fields[1..] {
            assert!(m.boundary_nodes.iter().all(|&b| u[b] == 0.0));
            assert!(u.is_finite());
        }
        assert!(s.is_uniform());
    }

    #[test]
    fn manufactured_stationary_solution() {
        let m = build_rect_mesh(32, 32, Rect::UNIT).unwrap();
        let w = sine(&m);
        let f: Vec<f64> = w.iter().map(|v| 2.0 * PI * PI * v).collect();
        let run = RunParams::new(0.1, 20, InitialValue::Nodal { values: w.clone() }).unwrap();
        let s = solve_parabolic(&m, &vec![1.0; m.num_elements()], &SourceSpec::steady(f), &run).unwrap();
        let mass = lumped_mass(&m);
        let wn = l2_norm(&mass, &w);
        for u in &s.fields {
            let diff: Vec<f64> = u.iter().zip(&w).map(|(a, b)| a - b).collect();
            assert!(l2_norm(&mass, &diff) < 0.01 * wn);
        }
    }

    #[test]
    fn constant_pairing_is_exact() {
        let m = build_rect_mesh(4, 4, Rect::UNIT).unwrap();
        let d = 0.7;
        let mut u = vec![d; m.num_nodes()];
        for &b in &m.boundary_nodes {
            u[b] = 0.0;
        }
        let series = FieldSeries {
            horizon: 2.0,
            times: vec![0.0, 1.0, 2.0],
            fields: vec![u.clone().into(), u.clone().into(), u.clone().into()],
            kappa: vec![1.0; m.num_elements()],
        };
        let mass = lumped_mass(&m);
        let interior: f64 = (0..m.num_nodes()).filter(|&i| !m.is_boundary(i)).map(|i| mass[i]).sum();
        let e = duality_time_average(&m, &series, &SourceSpec::constant(3.0)).unwrap();
        assert!((e - 3.0 * d * interior).abs() < 1e-14);
    }

    #[test]
    fn elliptic_zero_source_and_scaling() {
        let m = build_rect_mesh(10, 10, Rect::UNIT).unwrap();
        let zero = solve_elliptic(&m, &vec![1.0; m.num_elements()], &vec![0.0; m.num_nodes()], 1e-12).unwrap();
        assert!(zero.iter().all(|&v| v == 0.0));
        let f = vec![1.0; m.num_nodes()];
        let a = solve_elliptic(&m, &vec![1.0; m.num_elements()], &f, 1e-13).unwrap();
        let b = solve_elliptic(&m, &vec![4.0; m.num_elements()], &f, 1e-13).unwrap();
        for (x, y) in a.iter().zip(b.iter()) {
            assert!((x - 4.0 * y).abs() < 1e-10);
        }
        let e1 = duality_steady(&m, &a, &f).unwrap();
        let f3: Vec<f64> = f.iter().map(|v| 3.0 * v).collect();
        let a3 = solve_elliptic(&m, &vec![1.0; m.num_elements()], &f3, 1e-13).unwrap();
        assert!((duality_steady(&m, &a3, &f3).unwrap() - 9.0 * e1).abs() < 1e-10 * e1);
    }

    #[test]
    fn symmetric_source_mirrors_exactly() {
        let m = build_rect_mesh(2, 2, Rect::UNIT).unwrap();
        let s = SourceSpec::damped_cosine();
        for nt in [7, 50, 401] {
            for k in 0..=nt {
                assert_eq!(s.nodal_at_step(&m, k, nt, 1.3), s.nodal_at_step(&m, nt - k, nt, 1.3));
            }
        }
        let f0 = s.nodal_at_step(&m, 0, 10, 1.0);
        assert!((f0[0] - 20.0).abs() < 1e-14);
        assert_eq!(s.steady_limit(&m)[0], 10.0);
    }

    #[test]
    fn table_interpolates_in_time() {
        let m = build_rect_mesh(1, 1, Rect::UNIT).unwrap();
        let s = SourceSpec::Table {
            profile: vec![1.0, 2.0, 3.0, 4.0],
            times: vec![0.0, 1.0],
            factors: vec![0.0, 2.0],
        };
        s.validate(&m).unwrap();
        assert_eq!(s.nodal_at_step(&m, 1, 4, 2.0), vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(s.nodal_at_step(&m, 4, 4, 2.0), vec![2.0, 4.0, 6.0, 8.0]);
        assert!(!s.is_time_symmetric());
        let bad = SourceSpec::steady(vec![1.0]);
        assert!(bad.validate(&m).is_err());
    }

    #[test]
    fn default_step_rule() {
        assert_eq!(default_steps(0.1), 50);
        assert_eq!(default_steps(1.0), 100);
        assert_eq!(default_steps(5.0), 400);
        assert_eq!(default_steps(2.5), 250);
    }
}
