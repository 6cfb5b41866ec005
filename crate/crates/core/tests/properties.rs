use kernel_ert::noise::noise_matrix;
use kernel_ert::reconstruct::{solve_alpha, sublevel_region};
use kernel_ert::*;
use nalgebra::DMatrix;
use proptest::prelude::*;

fn small_mesh() -> Mesh {
    generate_disk_mesh(1.0, 24, 6).unwrap()
}

fn field(mesh: &Mesh, values: &[f64]) -> PowerDensityField {
    PowerDensityField {
        per_element: (0..mesh.n_triangles()).map(|t| values[t % values.len()]).collect(),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn generated_meshes_are_valid(quarter in 2usize..24, ring_pick in 0usize..64, radius in 0.01f64..2.0) {
        let nb = 4 * quarter;
        let n_rings = 1 + ring_pick % quarter;
        let mesh = generate_disk_mesh(radius, nb, n_rings).unwrap();
        let report = mesh_diagnostics(&mesh);
        prop_assert!(report.is_valid(), "{:?}", report.violations);
        prop_assert_eq!(mesh.n_boundary(), nb);
        prop_assert_eq!(report.euler_characteristic, 1);
        prop_assert!(report.boundary_length_spread < 1e-9);
    }

    #[test]
    fn unusable_mesh_parameters_are_rejected(nb in 0usize..40, extra in 1usize..8) {
        prop_assume!(nb < 8 || nb % 4 != 0);
        prop_assert!(generate_disk_mesh(1.0, nb, 1).is_err());
        prop_assert!(generate_disk_mesh(1.0, 16, 4 + extra).is_err());
    }

    #[test]
    fn jaccard_is_a_symmetric_score(a in prop::collection::vec(any::<bool>(), 1..300),
                                    b in prop::collection::vec(any::<bool>(), 1..300)) {
        let mesh = small_mesh();
        let n = mesh.n_triangles();
        let pick = |v: &[bool]| RegionIndicator { per_element: (0..n).map(|t| v[t % v.len()]).collect() };
        let (ra, rb) = (pick(&a), pick(&b));
        let ab = jaccard(&ra, &rb, &mesh).unwrap();
        prop_assert!((0.0..=1.0).contains(&ab));
        prop_assert_eq!(ab, jaccard(&rb, &ra, &mesh).unwrap());
        prop_assert_eq!(jaccard(&ra, &ra, &mesh).unwrap(), 1.0);
    }

    #[test]
    fn alpha_grows_with_the_power_target(values in prop::collection::vec(1e-6f64..10.0, 1..50),
                                         f1 in 0.0f64..1.0, f2 in 0.0f64..1.0) {
        let mesh = small_mesh();
        let p = field(&mesh, &values);
        let total = p.total_power(&mesh);
        let (lo, hi) = if f1 <= f2 { (f1, f2) } else { (f2, f1) };
        let a_lo = solve_alpha(&mesh, &p, lo * total).unwrap().alpha;
        let a_hi = solve_alpha(&mesh, &p, hi * total).unwrap().alpha;
        prop_assert!(a_lo <= a_hi);
        let (r_lo, r_hi) = (sublevel_region(&p, a_lo), sublevel_region(&p, a_hi));
        prop_assert!(r_lo.is_subset_of(&r_hi));
        let spent = power_in_region(&mesh, &p, &r_lo).unwrap();
        prop_assert!(spent <= lo * total * (1.0 + 1e-12) + 1e-300);
    }

    #[test]
    fn noise_is_reproducible_and_symmetric(seed in any::<u64>(), n in 1usize..20) {
        let a = noise_matrix(n, seed);
        prop_assert_eq!(&a, &noise_matrix(n, seed));
        prop_assert_eq!(&a, &a.transpose());
    }

    #[test]
    fn perturbed_spectra_obey_weyl(seed in any::<u64>(), eta in 1e-6f64..0.5, n in 3usize..25) {
        let m = DMatrix::from_fn(n, n, |i, j| 1.0 / (1.0 + i as f64 + j as f64));
        let gram = DMatrix::identity(n, n);
        let clean = eigendecompose(&m, &gram, "identity").unwrap();
        let p = perturb(&m, &gram, &NoiseSpec { eta, seed }).unwrap();
        let noisy = eigendecompose(&p.matrix, &gram, "identity").unwrap();
        let report = weyl_check(&clean.eigenvalues, &noisy.eigenvalues, p.delta).unwrap();
        prop_assert!(report.pass, "{} > {}", report.max_deviation, p.delta);
    }
}
