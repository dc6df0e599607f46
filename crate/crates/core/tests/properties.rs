use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rdsens_core::euler::{simulate, EulerConfig};
use rdsens_core::geometry::{derivative_projection, project, ActiveSet, Polyhedron};
use rdsens_core::models::make_rbm1d;
use rdsens_core::reference::{brute_force_projection, pava_descending};
use rdsens_core::rng::{GaussianStream, ScriptedIncrements};
use rdsens_core::validation::{random_cone, seeded};

fn coords(dim: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-5.0f64..5.0, dim)
}

proptest! {
    #[test]
    fn weyl_projection_matches_isotonic_regression(x in (2usize..8).prop_flat_map(coords)) {
        let g = Polyhedron::weyl_chamber(x.len()).unwrap();
        let p = project(&g, g.normals(), &x).unwrap();
        let iso = pava_descending(&x);
        for (a, b) in p.point.iter().zip(&iso) {
            prop_assert!((a - b).abs() <= 1e-9);
        }
    }

    #[test]
    fn oblique_quadrant_projection_is_complementary(x in coords(2)) {
        let g = Polyhedron::orthant(2);
        let r = DMatrix::from_column_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        let p = project(&g, &r, &x).unwrap();
        prop_assert!(g.contains(p.point.as_slice(), 1e-12));
        for i in 0..2 {
            prop_assert!(p.multipliers[i] >= 0.0);
            prop_assert!(p.multipliers[i] == 0.0 || g.slack(p.point.as_slice(), i).abs() <= 1e-12);
        }
        let (z, _) = brute_force_projection(&g, &r, &x).unwrap();
        prop_assert!((p.point - z).amax() <= 1e-12);
    }

    #[test]
    fn cone_derivative_projection_is_an_oblique_projector(seed in any::<u64>(), dim in 2usize..5, y in coords(4)) {
        let mut rng = seeded(seed);
        let inst = random_cone(&mut rng, dim, dim - 1, true);
        let faces = inst.poly.num_faces();
        let active = ActiveSet::from_mask((1u64 << faces) - 1, 0.0);
        let l = derivative_projection(&inst.poly, &inst.r, &active).unwrap();
        prop_assert!((&l * &l - &l).amax() <= 1e-10);
        let ly = &l * DVector::from_column_slice(&y[..dim]);
        prop_assert!((inst.poly.normals().transpose() * ly).amax() <= 1e-10);
    }

    #[test]
    fn one_dim_euler_is_the_positive_part_recursion(dw in prop::collection::vec(-1.0f64..1.0, 1..40)) {
        let cfg = EulerConfig::new(0.1, dw.len()).unwrap();
        let t = simulate(&make_rbm1d(), &[0.5, -1.0, 1.0], &cfg, &mut ScriptedIncrements::scalar(&dw), false).unwrap();
        let mut z = 0.5f64;
        let mut l = 0.0f64;
        for (n, w) in dw.iter().enumerate() {
            let xi = z - 0.1 + w;
            z = xi.max(0.0);
            l += (-xi).max(0.0);
            prop_assert_eq!(t.states[n + 1][0], z);
            prop_assert!((t.multipliers[n + 1][0] - l).abs() <= 1e-12 * (1.0 + l));
        }
    }

    #[test]
    fn trials_are_reproducible_per_index(seed in any::<u64>(), trial in 0u64..1000) {
        let cfg = EulerConfig::new(0.05, 20).unwrap();
        let a = simulate(&make_rbm1d(), &[1.0, -1.0, 1.0], &cfg, &mut GaussianStream::new(seed, trial, 1, 0.05), true).unwrap();
        let b = simulate(&make_rbm1d(), &[1.0, -1.0, 1.0], &cfg, &mut GaussianStream::new(seed, trial, 1, 0.05), true).unwrap();
        prop_assert_eq!(a, b);
    }
}
