//! Descent fields of the time-averaged pairing with respect to the level-set
//! function, built from the time-correlation kernel
//! `int_0^T grad u(t) . grad u(T - t) dt`, plus finite-difference and
//! tangent-linear derivative checks.

use crate::design::{DesignField, MaterialParams};
use crate::error::{invalid, Result};
use crate::fem::{assemble_weighted_stiffness, lumped_mass, ScalarField};
use crate::heat::{
    duality_time_average, solve_parabolic, trapezoid_weights, FieldSeries, HeatStepper, RunParams, SourceSpec,
};
use crate::mesh::Mesh;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SensitivityMode {
    Parabolic,
    Elliptic,
}

/// Nodal descent field `g`; it vanishes wherever `phi <= 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityField {
    pub g: ScalarField,
    pub mode: SensitivityMode,
}

/// Per-element trapezoidal sum of `grad u^k . grad u^{nt-k}`.
pub fn correlation_integral(mesh: &Mesh, series: &FieldSeries) -> Result<Vec<f64>> {
    if !series.is_uniform() {
        return Err(invalid("correlation needs a uniform time grid"));
    }
    let nt = series.steps();
    for u in &series.fields {
        u.check_mesh(mesh)?;
    }
    let weights = trapezoid_weights(nt, series.horizon);
    let mut out = vec![0.0; mesh.num_elements()];
    // the summand for k and nt - k is the same, so visit each pair once
    for k in 0..=nt / 2 {
        let (a, b) = (&series.fields[k], &series.fields[nt - k]);
        let w = if k == nt - k { weights[k] } else { 2.0 * weights[k] };
        for (e, c) in out.iter_mut().enumerate() {
            let ga = mesh.gradient(e, a);
            let gb = mesh.gradient(e, b);
            *c += w * (ga[0] * gb[0] + ga[1] * gb[1]);
        }
    }
    Ok(out)
}

fn nodal_descent(mesh: &Mesh, design: &DesignField, mat: &MaterialParams, kernel: &[f64]) -> Result<ScalarField> {
    design.phi.check_mesh(mesh)?;
    let nodal = mesh.element_to_nodes(kernel);
    let scale = design.m * (mat.beta - mat.alpha);
    Ok(design
        .phi
        .iter()
        .zip(nodal)
        .map(|(&phi, c)| {
            if phi > 0.0 {
                scale * phi.powf(design.m - 1.0) * c
            } else {
                0.0
            }
        })
        .collect::<Vec<_>>()
        .into())
}

/// `g = m (beta - alpha) / T |phi|^{m-1} chi_{phi > 0} int_0^T grad u(t) . grad u(T-t) dt`.
///
/// This is minus the derivative density of the time-averaged pairing.
pub fn descent_field(
    mesh: &Mesh,
    design: &DesignField,
    series: &FieldSeries,
    mat: &MaterialParams,
) -> Result<SensitivityField> {
    let mut kernel = correlation_integral(mesh, series)?;
    kernel.iter_mut().for_each(|c| *c /= series.horizon);
    Ok(SensitivityField {
        g: nodal_descent(mesh, design, mat, &kernel)?,
        mode: SensitivityMode::Parabolic,
    })
}

/// Steady counterpart `g = m (beta - alpha) |phi|^{m-1} chi_{phi > 0} |grad u_bar|^2`.
pub fn elliptic_descent_field(
    mesh: &Mesh,
    design: &DesignField,
    u_bar: &[f64],
    mat: &MaterialParams,
) -> Result<SensitivityField> {
    if u_bar.len() != mesh.num_nodes() {
        return Err(invalid("state does not match mesh"));
    }
    let kernel: Vec<f64> = (0..mesh.num_elements())
        .map(|e| {
            let g = mesh.gradient(e, u_bar);
            g[0] * g[0] + g[1] * g[1]
        })
        .collect();
    Ok(SensitivityField {
        g: nodal_descent(mesh, design, mat, &kernel)?,
        mode: SensitivityMode::Elliptic,
    })
}

/// Derivative of the time-averaged pairing along the isotropic coefficient
/// perturbation `h` predicted by the correlation kernel:
/// `-(1/T) sum_e h_e area_e C_e`.
pub fn correlation_derivative(mesh: &Mesh, series: &FieldSeries, h: &[f64]) -> Result<f64> {
    if h.len() != mesh.num_elements() {
        return Err(invalid("perturbation does not match mesh"));
    }
    let c = correlation_integral(mesh, series)?;
    let s: f64 = (0..mesh.num_elements()).map(|e| h[e] * mesh.element_area[e] * c[e]).sum();
    Ok(-s / series.horizon)
}

/// Time-averaged pairing for a given conductivity.
pub fn energy_for_coeff(mesh: &Mesh, coeff: &[f64], source: &SourceSpec, run: &RunParams) -> Result<f64> {
    let series = solve_parabolic(mesh, coeff, source, run)?;
    duality_time_average(mesh, &series, source)
}

fn perturbed(coeff: &[f64], h: &[f64], s: f64, floor: f64) -> Result<Vec<f64>> {
    coeff
        .iter()
        .zip(h)
        .enumerate()
        .map(|(e, (c, dh))| {
            let v = c + s * dh;
            if v >= floor {
                Ok(v)
            } else {
                Err(invalid(format!(
                    "perturbed coefficient {v} at element {e} violates ellipticity bound {floor}"
                )))
            }
        })
        .collect()
}

/// Forward difference `(E(kappa + s h) - E(kappa)) / s`.
///
/// `alpha` is the lower conductivity; the perturbed coefficient must stay
/// above `alpha / 2`.
pub fn directional_derivative(
    mesh: &Mesh,
    coeff: &[f64],
    source: &SourceSpec,
    run: &RunParams,
    h: &[f64],
    s: f64,
    alpha: f64,
) -> Result<f64> {
    if h.len() != coeff.len() {
        return Err(invalid("perturbation does not match coefficient"));
    }
    if h.iter().all(|&v| v == 0.0) {
        return Ok(0.0);
    }
    let plus = perturbed(coeff, h, s, 0.5 * alpha)?;
    let e0 = energy_for_coeff(mesh, coeff, source, run)?;
    let e1 = energy_for_coeff(mesh, &plus, source, run)?;
    Ok((e1 - e0) / s)
}

/// Central difference `(E(kappa + s h) - E(kappa - s h)) / 2s`.
pub fn central_directional_derivative(
    mesh: &Mesh,
    coeff: &[f64],
    source: &SourceSpec,
    run: &RunParams,
    h: &[f64],
    s: f64,
    alpha: f64,
) -> Result<f64> {
    if h.len() != coeff.len() {
        return Err(invalid("perturbation does not match coefficient"));
    }
    if h.iter().all(|&v| v == 0.0) {
        return Ok(0.0);
    }
    let plus = perturbed(coeff, h, s, 0.5 * alpha)?;
    let minus = perturbed(coeff, h, -s, 0.5 * alpha)?;
    let e1 = energy_for_coeff(mesh, &plus, source, run)?;
    let e2 = energy_for_coeff(mesh, &minus, source, run)?;
    Ok((e1 - e2) / (2.0 * s))
}

/// Tangent-linear state `u' h`: backward Euler for
/// `d/dt v - div(kappa grad v) = div(h grad u)`, `v(0) = 0`, `v = 0` on the
/// boundary, driven by the stored trajectory `series`.
pub fn linearized_state(mesh: &Mesh, series: &FieldSeries, h: &[f64]) -> Result<FieldSeries> {
    if h.len() != mesh.num_elements() {
        return Err(invalid("perturbation does not match mesh"));
    }
    let nt = series.steps();
    let dt = series.horizon / nt as f64;
    let stepper = HeatStepper::new(mesh, &series.kappa, dt)?;
    let kh = assemble_weighted_stiffness(mesh, h);
    let mass = stepper.mass().to_vec();
    let mut fields = Vec::with_capacity(nt + 1);
    fields.push(ScalarField::zeros(mesh.num_nodes()));
    for k in 0..nt {
        let forcing = kh.mul_vec(&series.fields[k + 1]);
        let prev = &fields[k];
        let mut rhs: Vec<f64> = (0..mesh.num_nodes())
            .map(|i| mass[i] * prev[i] / dt - forcing[i])
            .collect();
        stepper.solve_in_place(&mut rhs);
        fields.push(ScalarField::from(rhs));
    }
    Ok(FieldSeries {
        horizon: series.horizon,
        times: series.times.clone(),
        fields,
        kappa: series.kappa.clone(),
    })
}

/// Exact derivative of the discrete pairing along `h`, via the
/// tangent-linear state.
pub fn tangent_derivative(mesh: &Mesh, series: &FieldSeries, source: &SourceSpec, h: &[f64]) -> Result<f64> {
    let tangent = linearized_state(mesh, series, h)?;
    duality_time_average(mesh, &tangent, source)
}

/// Lumped `L^2(0,T; L^2)` norm of a series (trapezoidal in time).
pub fn series_l2(mesh: &Mesh, series: &FieldSeries) -> f64 {
    let mass = lumped_mass(mesh);
    let w = trapezoid_weights(series.steps(), series.horizon);
    series
        .fields
        .iter()
        .zip(&w)
        .map(|(u, wk)| wk * u.iter().zip(&mass).map(|(v, m)| m * v * v).sum::<f64>())
        .sum::<f64>()
        .sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::heat::InitialValue;
    use crate::mesh::{build_rect_mesh, Rect};
    use std::f64::consts::PI;

    fn setup() -> (Mesh, MaterialParams) {
        (build_rect_mesh(8, 8, Rect::UNIT).unwrap(), MaterialParams::new(1.0, 10.0).unwrap())
    }

    fn stationary(mesh: &Mesh, u: &[f64], steps: usize, horizon: f64) -> FieldSeries {
        FieldSeries {
            horizon,
            times: (0..=steps).map(|k| k as f64 * horizon / steps as f64).collect(),
            fields: vec![ScalarField::from(u.to_vec()); steps + 1],
            kappa: vec![1.0; mesh.num_elements()],
        }
    }

    #[test]
    fn zero_series_gives_zero_kernel() {
        let (m, _) = setup();
        let s = stationary(&m, &vec![0.0; m.num_nodes()], 4, 1.0);
        assert!(correlation_integral(&m, &s).unwrap().iter().all(|&c| c == 0.0));
    }

    #[test]
    fn stationary_kernel_is_t_times_gradient_squared() {
        let (m, _) = setup();
        let u = m.interpolate(|x, y| x * x + 2.0 * y);
        let s = stationary(&m, &u, 6, 2.5);
        let c = correlation_integral(&m, &s).unwrap();
        for e in 0..m.num_elements() {
            let g = m.gradient(e, &u);
            assert!((c[e] - 2.5 * (g[0] * g[0] + g[1] * g[1])).abs() < 1e-12);
        }
    }

    #[test]
    fn decaying_mode_kernel() {
        // u(t) = exp(-lt) w  =>  C = T exp(-lT) |grad w|^2
        let (m, _) = setup();
        let w = m.interpolate(|x, y| (PI * x).sin() * (PI * y).sin());
        let (l, horizon, nt) = (3.0, 0.7, 400);
        let s = FieldSeries {
            horizon,
            times: (0..=nt).map(|k| k as f64 * horizon / nt as f64).collect(),
            fields: (0..=nt)
                .map(|k| {
                    let t = k as f64 * horizon / nt as f64;
                    ScalarField::from(w.iter().map(|v| (-l * t).exp() * v).collect::<Vec<_>>())
                })
                .collect(),
            kappa: vec![1.0; m.num_elements()],
        };
        let c = correlation_integral(&m, &s).unwrap();
        for e in 0..m.num_elements() {
            let g = m.gradient(e, &w);
            let expect = horizon * (-l * horizon).exp() * (g[0] * g[0] + g[1] * g[1]);
            assert!((c[e] - expect).abs() <= 0.02 * expect.abs() + 1e-14);
        }
    }

    #[test]
    fn non_uniform_grid_rejected() {
        let (m, _) = setup();
        let mut s = stationary(&m, &vec![1.0; m.num_nodes()], 4, 1.0);
        s.times[2] = 0.6;
        assert!(correlation_integral(&m, &s).is_err());
    }

    #[test]
    fn descent_support_and_degenerate_cases() {
        let (m, mat) = setup();
        let u = m.interpolate(|x, y| x * (1.0 - x) * y * (1.0 - y));
        let s = stationary(&m, &u, 4, 1.0);
        let neg = DesignField::constant(&m, -0.2, 0.5, 3.0).unwrap();
        assert!(descent_field(&m, &neg, &s, &mat).unwrap().g.iter().all(|&g| g == 0.0));

        let phi = m.interpolate(|x, _| 2.0 * x - 1.0);
        let d = DesignField::new(phi.clone().into(), 0.5, 3.0).unwrap();
        let g = descent_field(&m, &d, &s, &mat).unwrap();
        for (p, v) in phi.iter().zip(g.g.iter()) {
            if *p <= 0.0 {
                assert_eq!(*v, 0.0);
            }
        }
        let same = MaterialParams { alpha: 2.0, beta: 2.0 };
        assert!(descent_field(&m, &d, &s, &same).unwrap().g.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn linear_exponent_collapses_power() {
        let (m, mat) = setup();
        let u = m.interpolate(|x, y| x * y);
        let s = stationary(&m, &u, 3, 2.0);
        let d = DesignField::constant(&m, 0.4, 0.5, 1.0).unwrap();
        let g = descent_field(&m, &d, &s, &mat).unwrap();
        let nodal = m.element_to_nodes(&correlation_integral(&m, &s).unwrap());
        for (a, c) in g.g.iter().zip(nodal) {
            assert!((a - 9.0 / 2.0 * c).abs() < 1e-12);
        }
    }

    #[test]
    fn stationary_parabolic_matches_elliptic() {
        let (m, mat) = setup();
        let u = m.interpolate(|x, y| (x * y).sin());
        let d = DesignField::new(m.interpolate(|x, y| 0.9 * (x - y)).into(), 0.5, 3.0).unwrap();
        let p = descent_field(&m, &d, &stationary(&m, &u, 5, 1.7), &mat).unwrap();
        let e = elliptic_descent_field(&m, &d, &u, &mat).unwrap();
        assert_eq!(e.mode, SensitivityMode::Elliptic);
        for (a, b) in p.g.iter().zip(e.g.iter()) {
            assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
            assert!(*b >= 0.0);
        }
        let zero = elliptic_descent_field(&m, &d, &vec![0.0; m.num_nodes()], &mat).unwrap();
        assert!(zero.g.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn zero_direction_and_ellipticity_guard() {
        let (m, _) = setup();
        let coeff = vec![1.0; m.num_elements()];
        let run = RunParams::new(0.2, 10, InitialValue::Constant { value: 1.0 }).unwrap();
        let src = SourceSpec::constant(10.0);
        let zero = vec![0.0; m.num_elements()];
        assert_eq!(directional_derivative(&m, &coeff, &src, &run, &zero, 1e-4, 1.0).unwrap(), 0.0);
        let big = vec![-1.0; m.num_elements()];
        assert!(directional_derivative(&m, &coeff, &src, &run, &big, 0.6, 1.0).is_err());
    }

    #[test]
    fn tangent_matches_finite_difference() {
        let (m, mat) = setup();
        let d = DesignField::new(m.interpolate(|x, y| (3.0 * x * y - 0.5).clamp(-1.0, 1.0)).into(), 0.5, 3.0).unwrap();
        let coeff = d.coefficient(&m, &mat).unwrap();
        let run = RunParams::new(0.3, 30, InitialValue::Constant { value: 1.0 }).unwrap();
        let src = SourceSpec::constant(10.0);
        let h: Vec<f64> = (0..m.num_elements()).map(|e| 0.1 * ((e % 5) as f64 - 2.0)).collect();
        let series = solve_parabolic(&m, &coeff, &src, &run).unwrap();
        let tangent = tangent_derivative(&m, &series, &src, &h).unwrap();
        let fd = central_directional_derivative(&m, &coeff, &src, &run, &h, 1e-4, mat.alpha).unwrap();
        assert!((tangent - fd).abs() <= 1e-6 * tangent.abs().max(1e-6), "{tangent} vs {fd}");
    }
}
