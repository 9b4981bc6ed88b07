use heatopt::design::{clip_shift, coefficient, project_volume, volume, MaterialParams};
use heatopt::fem::{assemble_mass, assemble_stiffness, cg_solve, dirichlet_energy, lumped_mass, BandedCholesky, ScalarField};
use heatopt::mesh::{build_rect_mesh, Rect};
use heatopt::spectral::{h_ratio, mode_product};
use proptest::prelude::*;

fn mesh_dims() -> impl Strategy<Value = (usize, usize)> {
    (1usize..9, 1usize..9)
}

fn domain() -> impl Strategy<Value = Rect> {
    (-2.0f64..2.0, 0.2f64..3.0, -2.0f64..2.0, 0.2f64..3.0).prop_map(|(x, w, y, h)| Rect::new(x, x + w, y, y + h))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn mesh_covers_domain((nx, ny) in mesh_dims(), d in domain()) {
        let m = build_rect_mesh(nx, ny, d).unwrap();
        prop_assert_eq!(m.num_nodes(), (nx + 1) * (ny + 1));
        prop_assert_eq!(m.num_elements(), 2 * nx * ny);
        prop_assert_eq!(m.boundary_nodes.len(), 2 * (nx + ny));
        prop_assert!((m.total_area() - d.area()).abs() < 1e-12 * d.area().max(1.0));
        prop_assert!(m.element_area.iter().all(|&a| a > 0.0));
        // basis gradients sum to zero on every element
        for g in &m.element_grads {
            prop_assert!((g[0][0] + g[1][0] + g[2][0]).abs() < 1e-9);
            prop_assert!((g[0][1] + g[1][1] + g[2][1]).abs() < 1e-9);
        }
    }

    #[test]
    fn linear_fields_have_exact_gradients((nx, ny) in mesh_dims(), a in -3.0f64..3.0, b in -3.0f64..3.0, c in -1.0f64..1.0) {
        let m = build_rect_mesh(nx, ny, Rect::UNIT).unwrap();
        let u = m.interpolate(|x, y| a * x + b * y + c);
        for e in 0..m.num_elements() {
            let g = m.gradient(e, &u);
            prop_assert!((g[0] - a).abs() < 1e-9 && (g[1] - b).abs() < 1e-9);
        }
        let expect = a * a + b * b;
        prop_assert!((dirichlet_energy(&m, &u) - expect).abs() < 1e-9 * expect.max(1.0));
    }

    #[test]
    fn mass_matrices_agree_on_constants((nx, ny) in mesh_dims(), d in domain()) {
        let m = build_rect_mesh(nx, ny, d).unwrap();
        let ones = vec![1.0; m.num_nodes()];
        let consistent = assemble_mass(&m, false).bilinear(&ones, &ones);
        let lumped: f64 = lumped_mass(&m).iter().sum();
        prop_assert!((consistent - d.area()).abs() < 1e-12 * d.area().max(1.0));
        prop_assert!((lumped - d.area()).abs() < 1e-12 * d.area().max(1.0));
    }

    #[test]
    fn stiffness_is_linear_symmetric_and_elliptic(
        seed in any::<u64>(),
        a in 0.1f64..5.0,
        b in 0.1f64..5.0,
    ) {
        let m = build_rect_mesh(4, 3, Rect::UNIT).unwrap();
        let ne = m.num_elements();
        let c1: Vec<f64> = (0..ne).map(|e| 1.0 + ((seed >> (e % 60)) & 7) as f64).collect();
        let c2: Vec<f64> = (0..ne).map(|e| 0.5 + ((seed >> ((3 * e) % 60)) & 3) as f64).collect();
        let mix: Vec<f64> = c1.iter().zip(&c2).map(|(x, y)| a * x + b * y).collect();
        let k1 = assemble_stiffness(&m, &c1).unwrap();
        let k2 = assemble_stiffness(&m, &c2).unwrap();
        let km = assemble_stiffness(&m, &mix).unwrap();
        let combo = k1.linear_combination(a, &k2, b).unwrap();
        let x: Vec<f64> = (0..m.num_nodes()).map(|i| ((i * 37 + seed as usize) % 11) as f64 - 5.0).collect();
        let lhs = km.mul_vec(&x);
        let rhs = combo.mul_vec(&x);
        for (p, q) in lhs.iter().zip(&rhs) {
            prop_assert!((p - q).abs() < 1e-9 * (1.0 + q.abs()));
        }
        prop_assert!(km.is_symmetric(1e-12));
        prop_assert!(km.bilinear(&x, &x) >= -1e-9);
        let ones = vec![1.0; m.num_nodes()];
        prop_assert!(km.mul_vec(&ones).iter().all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn energy_ignores_constant_shift(vals in prop::collection::vec(-1.0f64..1.0, 25), c in -3.0f64..3.0) {
        let m = build_rect_mesh(4, 4, Rect::UNIT).unwrap();
        let shifted: Vec<f64> = vals.iter().map(|v| v + c).collect();
        let e0 = dirichlet_energy(&m, &vals);
        prop_assert!((dirichlet_energy(&m, &shifted) - e0).abs() < 1e-10 * (1.0 + e0));
    }

    #[test]
    fn volume_is_monotone_in_shift(vals in prop::collection::vec(-1.0f64..1.0, 25), l1 in -2.0f64..2.0, l2 in -2.0f64..2.0) {
        let m = build_rect_mesh(4, 4, Rect::UNIT).unwrap();
        let mass = lumped_mass(&m);
        let (lo, hi) = if l1 <= l2 { (l1, l2) } else { (l2, l1) };
        let v_lo = volume(&mass, &clip_shift(&vals, lo));
        let v_hi = volume(&mass, &clip_shift(&vals, hi));
        prop_assert!(v_lo <= v_hi + 1e-15);
        prop_assert!(clip_shift(&vals, hi).iter().all(|v| v.abs() <= 1.0));
    }

    #[test]
    fn projection_hits_target_and_is_idempotent(vals in prop::collection::vec(-1.0f64..1.0, 36), gamma in 0.05f64..0.95) {
        let m = build_rect_mesh(5, 5, Rect::UNIT).unwrap();
        let mass = lumped_mass(&m);
        let eta = 1e-9;
        let p = project_volume(&mass, &vals, gamma, eta).unwrap();
        prop_assert!((p.volume - gamma).abs() <= eta);
        prop_assert!(p.phi.iter().all(|v| v.abs() <= 1.0));
        let again = project_volume(&mass, &p.phi, gamma, eta).unwrap();
        prop_assert!(again.lambda.abs() < 1e-6);
        for (a, b) in again.phi.iter().zip(p.phi.iter()) {
            prop_assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn coefficient_stays_between_phases(vals in prop::collection::vec(-1.0f64..1.0, 25), m_exp in 1.0f64..4.0) {
        let m = build_rect_mesh(4, 4, Rect::UNIT).unwrap();
        let mat = MaterialParams::new(0.7, 4.0).unwrap();
        let k = coefficient(&m, &vals, m_exp, &mat).unwrap();
        prop_assert!(k.iter().all(|&c| (0.7..=4.0).contains(&c)));
    }

    #[test]
    fn h_ratio_decreases(lambda in 0.1f64..100.0, s in 1e-3f64..100.0, ds in 1e-3f64..10.0) {
        let a = h_ratio(s, lambda);
        let b = h_ratio(s + ds, lambda);
        prop_assert!(b < a);
        prop_assert!(a > 0.0 && a <= 1.0);
    }

    #[test]
    fn mode_product_is_nonnegative_for_compatible_data(
        lambda in 0.01f64..200.0,
        horizon in 0.01f64..10.0,
        frac in 0.0f64..1.0,
        d0 in 0.0f64..5.0,
        f in 0.0f64..50.0,
        sign in prop::bool::ANY,
    ) {
        let s = if sign { 1.0 } else { -1.0 };
        prop_assert!(mode_product(frac * horizon, horizon, lambda, s * d0, s * f) >= -1e-14);
    }

    #[test]
    fn cg_and_cholesky_agree(seed in any::<u64>(), shift in 0.1f64..10.0) {
        let m = build_rect_mesh(5, 4, Rect::UNIT).unwrap();
        let k = assemble_stiffness(&m, &vec![1.5; m.num_elements()]).unwrap();
        let a = k.linear_combination(1.0, &assemble_mass(&m, true), shift).unwrap();
        let b: Vec<f64> = (0..m.num_nodes()).map(|i| (((seed >> (i % 50)) & 15) as f64) - 7.5).collect();
        let x = cg_solve(&a, &ScalarField::from(b.clone()), 1e-13, 10_000).unwrap();
        let y = BandedCholesky::factor(&a).unwrap().solve(&b);
        for (p, q) in x.iter().zip(&y) {
            prop_assert!((p - q).abs() < 1e-8 * (1.0 + q.abs()));
        }
    }
}
