use disclab::boltzmann::{mu_moment_matrix, partition_function_direct};
use disclab::polyform::{
    basis_size, binomial, enumerate_basis, monomials_up_to, parse_form, HomogeneousForm, MultiIndex,
};
use disclab::sdp::{build_volume_relaxation, moment_matrix_map, Domain};
use disclab::spherequad::SphereQuadrature;
use proptest::prelude::*;

fn form(d: usize, m: u32) -> impl Strategy<Value = HomogeneousForm> {
    let basis = enumerate_basis(d, m);
    let size = basis.size();
    prop::collection::vec(-3.0f64..3.0, size).prop_map(move |c| HomogeneousForm::from_coefficients(&basis, &c))
}

fn dim_degree() -> impl Strategy<Value = (usize, u32)> {
    (1usize..=4, 0u32..=6)
}

fn point(d: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-2.0f64..2.0, d)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn homogeneity((f, x, s) in dim_degree().prop_flat_map(|(d, m)| (form(d, m), point(d), 0.1f64..3.0))) {
        let y: Vec<f64> = x.iter().map(|v| s * v).collect();
        let lhs = f.evaluate(&y);
        let rhs = s.powi(f.degree() as i32) * f.evaluate(&x);
        prop_assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + rhs.abs()));
    }

    #[test]
    fn euler_identity((f, x) in dim_degree().prop_flat_map(|(d, m)| (form(d, m), point(d)))) {
        let grad = f.gradient(&x);
        let lhs: f64 = grad.iter().zip(&x).map(|(g, v)| g * v).sum();
        let rhs = f.degree() as f64 * f.evaluate(&x);
        prop_assert!((lhs - rhs).abs() <= 1e-9 * (1.0 + rhs.abs()));
    }

    #[test]
    fn print_then_parse_is_identity(f in (1usize..=4, 1u32..=6).prop_flat_map(|(d, m)| form(d, m))) {
        let back = parse_form(&f.to_string(), f.dim()).unwrap();
        prop_assert_eq!(back, f);
    }

    #[test]
    fn basis_counts(d in 1usize..=4, m in 0u32..=8) {
        let b = enumerate_basis(d, m);
        prop_assert_eq!(b.size(), binomial(d - 1 + m as usize, m as usize));
        prop_assert_eq!(b.size(), basis_size(d, m));
        prop_assert!(b.indices().windows(2).all(|w| w[0] < w[1]));
        prop_assert!(b.indices().iter().all(|a| a.degree() == m));
        prop_assert_eq!(monomials_up_to(d, m).len(), binomial(d + m as usize, m as usize));
    }

    #[test]
    fn moment_map_is_symmetric(d in 1usize..=3, t in 0u32..=3) {
        let map = moment_matrix_map(d, t);
        let rows = monomials_up_to(d, t);
        prop_assert_eq!(map.len(), binomial(d + t as usize, t as usize));
        let all = monomials_up_to(d, 2 * t);
        for (r, a) in rows.iter().enumerate() {
            for (c, b) in rows.iter().enumerate() {
                prop_assert_eq!(map[r][c], map[c][r]);
                prop_assert_eq!(&all[map[r][c]], &a.add(b));
            }
        }
        let p = build_volume_relaxation(d, t, Domain::Box);
        prop_assert_eq!(p.n_vars, all.len());
    }
}

fn positive_quartic() -> impl Strategy<Value = HomogeneousForm> {
    (0.5f64..2.0, 0.5f64..2.0, -0.4f64..0.4, -0.2f64..0.2).prop_map(|(a, b, c, e)| {
        let t = [(vec![4, 0], a), (vec![0, 4], b), (vec![2, 2], c), (vec![3, 1], e)];
        HomogeneousForm::new(2, 4, t.into_iter().map(|(x, v)| (MultiIndex::new(x), v))).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn moment_matrix_is_psd(g in positive_quartic()) {
        let hm = mu_moment_matrix(&g, &SphereQuadrature::new(2, 32).unwrap()).unwrap();
        prop_assert!(hm.check_psd().is_ok());
        prop_assert!(hm.min_eigenvalue() > 0.0);
    }

    #[test]
    fn partition_scales_with_action(g in positive_quartic(), s in 0.25f64..4.0) {
        let q = SphereQuadrature::new(2, 32).unwrap();
        let z = partition_function_direct(&g, &q).unwrap();
        let zs = partition_function_direct(&g.scaled(s), &q).unwrap();
        prop_assert!((zs - s.powf(-0.5) * z).abs() <= 1e-9 * z);
    }
}
