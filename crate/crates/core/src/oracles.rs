//! Closed-form and brute-force verifiers for the discretization, the
//! derivative formula and the single-mode sign chain.

use crate::design::{coefficient, project_volume, MaterialParams};
use crate::error::Result;
use crate::fem::{assemble_mass, lumped_mass, SparseMatrix, DEFAULT_REL_TOL};
use crate::heat::{solve_elliptic, solve_parabolic, InitialValue, RunParams, SourceSpec};
use crate::mesh::{build_rect_mesh, Mesh, Rect};
use crate::sensitivity::{
    central_directional_derivative, correlation_derivative, directional_derivative, linearized_state, series_l2,
};
use crate::spectral::{h_ratio, mode_coefficient, mode_product};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::f64::consts::PI;

/// How `measured` is compared with `expected`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Comparison {
    /// `|measured - expected| <= tolerance`.
    Within,
    /// `measured <= expected + tolerance`.
    AtMost,
    /// `measured >= expected - tolerance`.
    AtLeast,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleReport {
    pub name: String,
    pub passed: bool,
    pub measured: f64,
    pub expected: f64,
    pub tolerance: f64,
    pub comparison: Comparison,
}

impl OracleReport {
    pub fn new(name: impl Into<String>, comparison: Comparison, measured: f64, expected: f64, tolerance: f64) -> Self {
        let passed = match comparison {
            Comparison::Within => (measured - expected).abs() <= tolerance,
            Comparison::AtMost => measured <= expected + tolerance,
            Comparison::AtLeast => measured >= expected - tolerance,
        };
        Self {
            name: name.into(),
            passed,
            measured,
            expected,
            tolerance,
            comparison,
        }
    }

    pub fn within(name: impl Into<String>, measured: f64, expected: f64, tolerance: f64) -> Self {
        Self::new(name, Comparison::Within, measured, expected, tolerance)
    }

    pub fn at_most(name: impl Into<String>, measured: f64, bound: f64) -> Self {
        Self::new(name, Comparison::AtMost, measured, bound, 0.0)
    }

    pub fn at_least(name: impl Into<String>, measured: f64, bound: f64) -> Self {
        Self::new(name, Comparison::AtLeast, measured, bound, 0.0)
    }

    /// Interval check `lo <= measured <= hi`, stored as a centered tolerance.
    pub fn in_range(name: impl Into<String>, measured: f64, lo: f64, hi: f64) -> Self {
        Self::within(name, measured, 0.5 * (lo + hi), 0.5 * (hi - lo))
    }
}

pub fn all_passed(reports: &[OracleReport]) -> bool {
    reports.iter().all(|r| r.passed)
}

fn consistent_l2(mass: &SparseMatrix, a: &[f64], b: &[f64]) -> f64 {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    mass.bilinear(&d, &d).max(0.0).sqrt()
}

fn sine_mode(mesh: &Mesh) -> Vec<f64> {
    mesh.interpolate(|x, y| (PI * x).sin() * (PI * y).sin())
}

/// `L^2` error of the elliptic solve against `u = sin(pi x) sin(pi y)`,
/// `f = 2 pi^2 u`, on the unit square.
pub fn elliptic_manufactured_error(n: usize) -> Result<f64> {
    let mesh = build_rect_mesh(n, n, Rect::UNIT)?;
    let exact = sine_mode(&mesh);
    let f: Vec<f64> = exact.iter().map(|v| 2.0 * PI * PI * v).collect();
    let u = solve_elliptic(&mesh, &vec![1.0; mesh.num_elements()], &f, 1e-12)?;
    Ok(consistent_l2(&assemble_mass(&mesh, false), &u, &exact))
}

/// Relative `L^2` error at `T` of the free decay `u = e^{-2 pi^2 t} sin(pi x) sin(pi y)`.
pub fn decay_error(n: usize, horizon: f64, steps: usize) -> Result<f64> {
    let mesh = build_rect_mesh(n, n, Rect::UNIT)?;
    let run = RunParams::new(horizon, steps, InitialValue::SineMode { amplitude: 1.0 })?;
    let s = solve_parabolic(&mesh, &vec![1.0; mesh.num_elements()], &SourceSpec::constant(0.0), &run)?;
    let exact: Vec<f64> = sine_mode(&mesh).iter().map(|v| v * (-2.0 * PI * PI * horizon).exp()).collect();
    let mass = assemble_mass(&mesh, false);
    let zero = vec![0.0; exact.len()];
    Ok(consistent_l2(&mass, s.last(), &exact) / consistent_l2(&mass, &exact, &zero))
}

/// Elliptic `h^2` convergence over consecutive `resolutions`, the
/// parabolic decay oracle and its `dt^1` convergence on the finest mesh,
/// and the exactness of zero data.
pub fn run_manufactured_suite(resolutions: &[usize]) -> Result<Vec<OracleReport>> {
    let mut out = Vec::new();
    let errors: Vec<f64> = resolutions
        .iter()
        .map(|&n| elliptic_manufactured_error(n))
        .collect::<Result<_>>()?;
    for (w, e) in resolutions.windows(2).zip(errors.windows(2)) {
        out.push(OracleReport::in_range(
            format!("elliptic_l2_ratio_{}_{}", w[0], w[1]),
            e[0] / e[1],
            3.2,
            4.8,
        ));
    }
    if let Some(&fine) = resolutions.iter().max() {
        let horizon = 0.05;
        let coarse = decay_error(fine, horizon, 100)?;
        let finer = decay_error(fine, horizon, 200)?;
        out.push(OracleReport::at_most(format!("decay_rel_l2_n{fine}_nt200"), finer, 0.02));
        out.push(OracleReport::in_range("decay_dt_halving_ratio", coarse / finer, 1.6, 2.4));
    }

    let mesh = build_rect_mesh(8, 8, Rect::UNIT)?;
    let ones = vec![1.0; mesh.num_elements()];
    let u = solve_elliptic(&mesh, &ones, &vec![0.0; mesh.num_nodes()], DEFAULT_REL_TOL)?;
    let run = RunParams::new(0.1, 10, InitialValue::Constant { value: 0.0 })?;
    let s = solve_parabolic(&mesh, &ones, &SourceSpec::constant(0.0), &run)?;
    let worst = u
        .iter()
        .chain(s.fields.iter().flat_map(|f| f.iter()))
        .fold(0.0f64, |m, v| m.max(v.abs()));
    out.push(OracleReport::within("zero_source_exact", worst, 0.0, 0.0));
    Ok(out)
}

/// Setup of the derivative oracle.
#[derive(Debug, Clone)]
pub struct DerivativeSuite {
    pub n: usize,
    pub horizon: f64,
    pub steps: usize,
    pub samples: usize,
    pub seed: u64,
    pub material: MaterialParams,
    pub m: f64,
    pub gamma: f64,
    pub source: SourceSpec,
    pub initial: InitialValue,
    /// Forward step size `s`.
    pub step: f64,
    /// Relative mismatch bound.
    pub rel_tol: f64,
    /// Absolute mismatch floor.
    pub abs_tol: f64,
}

impl Default for DerivativeSuite {
    fn default() -> Self {
        Self {
            n: 32,
            horizon: 1.0,
            steps: 100,
            samples: 20,
            seed: 7,
            material: MaterialParams::default(),
            m: 3.0,
            gamma: 0.5,
            source: SourceSpec::constant(10.0),
            initial: InitialValue::Constant { value: 1.0 },
            step: 1e-4,
            rel_tol: 0.02,
            abs_tol: 1e-6,
        }
    }
}

/// Random admissible level set: uniform noise, a few passes of
/// node-element averaging, rescaled and clipped to the box, then projected
/// onto the volume constraint.
pub fn random_admissible_phi(mesh: &Mesh, gamma: f64, rng: &mut impl Rng) -> Result<Vec<f64>> {
    let mut phi: Vec<f64> = (0..mesh.num_nodes()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    for _ in 0..3 {
        let elem: Vec<f64> = mesh
            .elements
            .iter()
            .map(|t| (phi[t[0]] + phi[t[1]] + phi[t[2]]) / 3.0)
            .collect();
        phi = mesh.element_to_nodes(&elem);
    }
    let amp = phi.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-12);
    let scale = rng.gen_range(1.0..3.0) / amp;
    let phi: Vec<f64> = phi.iter().map(|v| (v * scale).clamp(-1.0, 1.0)).collect();
    let mass = lumped_mass(mesh);
    Ok(project_volume(&mass, &phi, gamma * mesh.total_area(), 1e-6 * mesh.total_area())?
        .phi
        .values)
}

/// Outcome of one derivative comparison.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerivativeSample {
    pub correlation: f64,
    pub finite_difference: f64,
    pub central: bool,
    /// `||u_{A+h} - u_A - u'h|| / ||h||` at `h` and `h/2`.
    pub remainder: [f64; 2],
}

impl DerivativeSuite {
    fn run_params(&self) -> Result<RunParams> {
        RunParams::new(self.horizon, self.steps, self.initial.clone())
    }

    fn tolerance(&self, reference: f64) -> f64 {
        (self.rel_tol * reference.abs()).max(self.abs_tol)
    }

    /// Correlation formula, FD quotient and remainder quotients for one
    /// coefficient and perturbation.
    pub fn compare(&self, mesh: &Mesh, coeff: &[f64], h: &[f64]) -> Result<DerivativeSample> {
        let run = self.run_params()?;
        let alpha = self.material.alpha;
        let series = solve_parabolic(mesh, coeff, &self.source, &run)?;
        let correlation = correlation_derivative(mesh, &series, h)?;
        let mut fd = directional_derivative(mesh, coeff, &self.source, &run, h, self.step, alpha)?;
        // upgrade when the one-sided check is marginal
        let mut central = false;
        if (correlation - fd).abs() > 0.5 * self.tolerance(fd) {
            fd = central_directional_derivative(mesh, coeff, &self.source, &run, h, self.step, alpha)?;
            central = true;
        }

        let tangent = linearized_state(mesh, &series, h)?;
        let h_norm = h.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let mut remainder = [0.0; 2];
        for (slot, scale) in remainder.iter_mut().zip([1.0, 0.5]) {
            if h_norm == 0.0 {
                break;
            }
            let perturbed: Vec<f64> = coeff.iter().zip(h).map(|(c, d)| c + scale * d).collect();
            let moved = solve_parabolic(mesh, &perturbed, &self.source, &run)?;
            let mut diff = moved.clone();
            for (k, f) in diff.fields.iter_mut().enumerate() {
                for i in 0..f.len() {
                    f[i] -= series.fields[k][i] + scale * tangent.fields[k][i];
                }
            }
            *slot = series_l2(mesh, &diff) / (scale * h_norm);
        }
        Ok(DerivativeSample {
            correlation,
            finite_difference: fd,
            central,
            remainder,
        })
    }

    /// Per-sample and aggregate reports, the zero-perturbation check and
    /// the sign of the derivative along positive constant `h`.
    pub fn run(&self) -> Result<Vec<OracleReport>> {
        let mesh = build_rect_mesh(self.n, self.n, Rect::UNIT)?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let alpha = self.material.alpha;
        let mut out = Vec::new();
        let mut worst_scaled = 0.0f64;
        let mut worst_sign = f64::NEG_INFINITY;

        for i in 0..self.samples {
            let phi = random_admissible_phi(&mesh, self.gamma, &mut rng)?;
            let coeff = coefficient(&mesh, &phi, self.m, &self.material)?;
            let h: Vec<f64> = (0..mesh.num_elements())
                .map(|_| rng.gen_range(-0.25 * alpha..0.25 * alpha))
                .collect();
            let s = self.compare(&mesh, &coeff, &h)?;
            let tol = self.tolerance(s.finite_difference);
            let r = OracleReport::within(format!("derivative_sample_{i}"), s.correlation, s.finite_difference, tol);
            worst_scaled = worst_scaled.max((s.correlation - s.finite_difference).abs() / tol);
            out.push(r);
            out.push(OracleReport::at_most(
                format!("remainder_halving_{i}"),
                s.remainder[1],
                s.remainder[0],
            ));

            let c = rng.gen_range(0.05 * alpha..0.25 * alpha);
            let positive = vec![c; mesh.num_elements()];
            let run = self.run_params()?;
            let series = solve_parabolic(&mesh, &coeff, &self.source, &run)?;
            let corr = correlation_derivative(&mesh, &series, &positive)?;
            let fd = central_directional_derivative(&mesh, &coeff, &self.source, &run, &positive, self.step, alpha)?;
            worst_sign = worst_sign.max(corr).max(fd);
        }
        // mismatch in units of the per-sample tolerance max(rel |fd|, abs)
        out.push(OracleReport::at_most("derivative_max_scaled_mismatch", worst_scaled, 1.0));
        if self.samples > 0 {
            out.push(OracleReport::at_most("derivative_positive_h_sign", worst_sign, 1e-8));
        }

        let coeff = vec![1.0; mesh.num_elements()];
        let zero = vec![0.0; mesh.num_elements()];
        let s = self.compare(&mesh, &coeff, &zero)?;
        out.push(OracleReport::within(
            "derivative_zero_h",
            s.correlation.abs().max(s.finite_difference.abs()),
            0.0,
            0.0,
        ));
        Ok(out)
    }
}

pub fn run_derivative_suite(samples: usize, seed: u64) -> Result<Vec<OracleReport>> {
    DerivativeSuite {
        samples,
        seed,
        ..Default::default()
    }
    .run()
}

/// Sign and monotonicity checks of the single-mode closed forms.
pub fn run_galerkin_suite() -> Vec<OracleReport> {
    let mut out = Vec::new();
    let horizon = 2.0;
    let lambdas = [0.1, 0.5, 1.0, 2.0, 5.0, 10.0, 19.74, 50.0, 100.0, 500.0];
    let data = [
        (1.0, 10.0),
        (0.0, 1.0),
        (1.0, 0.0),
        (0.5, 0.1),
        (2.0, 50.0),
        (-1.0, -10.0),
        (-0.2, 0.0),
        (0.0, -3.0),
        (1e-3, 1e3),
        (-5.0, -0.5),
    ];
    let mut worst = f64::INFINITY;
    for &lambda in &lambdas {
        for &(d0, f) in &data {
            for k in 0..100 {
                let t = horizon * k as f64 / 99.0;
                worst = worst.min(mode_product(t, horizon, lambda, d0, f));
            }
        }
    }
    out.push(OracleReport::at_least("mode_product_grid_min", worst, -1e-14));

    let mut violations = 0usize;
    for i in 0..40 {
        let lambda = 0.1 * 1000f64.powf(i as f64 / 39.0);
        let mut prev = f64::INFINITY;
        for k in 1..=1000 {
            let s = 0.1 * k as f64;
            let v = h_ratio(s, lambda);
            if !(v < prev) {
                violations += 1;
            }
            prev = v;
        }
    }
    out.push(OracleReport::within("h_ratio_strictly_decreasing_violations", violations as f64, 0.0, 0.0));

    let (d0, f, lambda) = (0.7, 3.0, 2.0);
    out.push(OracleReport::within("mode_coefficient_at_zero", mode_coefficient(0.0, lambda, d0, f), d0, 0.0));
    out.push(OracleReport::within(
        "mode_coefficient_long_time",
        mode_coefficient(40.0, lambda, d0, f),
        f / lambda,
        1e-12,
    ));
    out.push(OracleReport::within("h_ratio_at_zero", h_ratio(0.0, lambda), 1.0, 0.0));
    out
}
