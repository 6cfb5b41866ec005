use std::f64::consts::PI;

use kernel_ert::analytic::{concentric_power_density_unit, disk_ntd_eigenvalue};
use kernel_ert::fem::energy_identity_defect;
use kernel_ert::ntd::quadratic_form;
use kernel_ert::*;

fn homogeneous(n_boundary: usize, n_rings: usize) -> (Mesh, ConductivityField) {
    let mesh = generate_disk_mesh(1.0, n_boundary, n_rings).unwrap();
    let sigma = ConductivityField::uniform(&mesh, 2.0).unwrap();
    (mesh, sigma)
}

#[test]
fn ntd_error_shrinks_under_refinement() {
    let errors: Vec<f64> = [(32, 8), (64, 16), (128, 32)]
        .iter()
        .map(|&(nb, nr)| {
            let (mesh, sigma) = homogeneous(nb, nr);
            let lam = assemble_ntd(&mesh, &sigma).unwrap();
            let g = fourier_current(&mesh, 3, Phase::Cos);
            let exact = disk_ntd_eigenvalue(3, 1.0, 2.0);
            (quadratic_form(&lam, &g).unwrap() - exact).abs() / exact
        })
        .collect();
    assert!(errors[1] < 0.35 * errors[0], "{errors:?}");
    assert!(errors[2] < 0.35 * errors[1], "{errors:?}");
}

#[test]
fn fourier_modes_decouple_on_the_disk() {
    let (mesh, sigma) = homogeneous(64, 16);
    let lam = assemble_ntd(&mesh, &sigma).unwrap();
    let basis = &lam.basis;
    let modes: Vec<_> = (1..=5)
        .flat_map(|n| {
            [
                fourier_current(&mesh, n, Phase::Cos),
                fourier_current(&mesh, n, Phase::Sin),
            ]
        })
        .map(|g| basis.coords_of(&g))
        .collect();
    for (i, a) in modes.iter().enumerate() {
        let diag = a.dot(&(&lam.matrix * a));
        for b in &modes[i + 1..] {
            let off = a.dot(&(&lam.matrix * b));
            assert!(off.abs() < 1e-3 * diag, "{off} vs {diag}");
        }
    }
}

#[test]
fn power_density_follows_radial_profile() {
    let (mesh, _) = homogeneous(128, 32);
    let sigma = ConductivityField::uniform(&mesh, 200.0).unwrap();
    let n = 3;
    let sol = solve_neumann(&mesh, &sigma, &fourier_current(&mesh, n, Phase::Cos)).unwrap();
    let p = power_density(&mesh, &sigma, &sol.nodal_u).unwrap();
    let (mut err, mut total) = (0.0, 0.0);
    for t in 0..mesh.n_triangles() {
        let c = mesh.centroid(t);
        let exact = concentric_power_density_unit(n as u32, c[0].hypot(c[1]), 1.0, 200.0);
        err += (p.per_element[t] - exact).abs() * mesh.area(t);
        total += exact * mesh.area(t);
    }
    assert!(err / total < 0.05, "{}", err / total);
    assert!(energy_identity_defect(&mesh, &p, &sol) < 1e-10);
}

#[test]
fn mesh_area_is_the_inscribed_polygon() {
    for (nb, nr) in [(16, 4), (64, 16), (256, 64)] {
        let mesh = generate_disk_mesh(0.5, nb, nr).unwrap();
        let polygon = 0.5 * nb as f64 * 0.25 * (2.0 * PI / nb as f64).sin();
        assert!((mesh.total_area() - polygon).abs() < 1e-12, "{nb}");
        assert!(mesh_diagnostics(&mesh).is_valid());
    }
}

#[test]
fn power_density_ignores_potential_offset() {
    let (mesh, sigma) = homogeneous(32, 8);
    let g = fourier_current(&mesh, 2, Phase::Sin);
    let sol = solve_neumann(&mesh, &sigma, &g).unwrap();
    let shifted: Vec<f64> = sol.nodal_u.iter().map(|u| u + 3.7).collect();
    let a = power_density(&mesh, &sigma, &sol.nodal_u).unwrap();
    let b = power_density(&mesh, &sigma, &shifted).unwrap();
    let scale = a.per_element.iter().fold(0.0f64, |m, x| m.max(*x));
    for (x, y) in a.per_element.iter().zip(&b.per_element) {
        assert!((x - y).abs() <= 1e-9 * scale);
    }
}

#[test]
fn energy_identity_holds_for_inhomogeneous_media() {
    let mesh = generate_disk_mesh(1.0, 64, 16).unwrap();
    let spec = PhantomSpec::homogeneous(5.0).with(
        Shape::Ellipse {
            center: [0.2, -0.1],
            semi_axes: [0.4, 0.2],
            rotation: 0.3,
        },
        0.05,
    );
    let sigma = build_conductivity(&mesh, &spec).unwrap();
    let solver = NeumannSolver::new(&mesh, &sigma).unwrap();
    for n in 1..=6 {
        let sol = solver.solve(&fourier_current(&mesh, n, Phase::Cos)).unwrap();
        let p = power_density(&mesh, &sigma, &sol.nodal_u).unwrap();
        assert!(energy_identity_defect(&mesh, &p, &sol) < 1e-10);
    }
}
