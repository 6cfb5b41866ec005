//! Discrete Neumann-to-Dirichlet operators on the zero-mean boundary-current space.
//!
//! Currents are piecewise constant on the `N_b` boundary edges. The zero-mean
//! subspace has dimension `N_b - 1`; coordinates are taken in the basis
//! obtained from a Householder reflection that maps the constant function onto
//! the last edge indicator, scaled so that the basis is L2(boundary)-orthonormal.
//! The Gram matrix is still carried explicitly and every eigenproblem is posed
//! as `M v = lambda G v`.

use std::fmt::Write as _;
use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fem::{edge_integrals, BoundaryCurrent, NeumannSolver};
use crate::mesh::Mesh;
use crate::phantom::ConductivityField;

/// Largest relative defect `||M - M^T||_F / ||M||_F` accepted from assembly.
pub const SYMMETRY_TOLERANCE: f64 = 1e-8;
pub const BASIS_TAG: &str = "householder-l2";

/// Zero-mean basis of piecewise-constant boundary currents.
#[derive(Debug, Clone)]
pub struct ZeroMeanBasis {
    tag: String,
    radius: f64,
    lengths: Vec<f64>,
    /// `N_b x (N_b - 1)`: column k holds the per-edge values of basis function k.
    functions: DMatrix<f64>,
    gram: DMatrix<f64>,
    gram_chol: Cholesky<f64, Dyn>,
}

impl ZeroMeanBasis {
    pub fn for_mesh(mesh: &Mesh) -> Result<Self> {
        Self::from_lengths(mesh.radius(), mesh.boundary_lengths())
    }

    pub fn from_lengths(radius: f64, lengths: Vec<f64>) -> Result<Self> {
        let nb = lengths.len();
        if nb < 2 {
            return Err(Error::BasisMismatch("need at least two boundary edges".into()));
        }
        let sqrt_len: Vec<f64> = lengths.iter().map(|l| l.sqrt()).collect();
        let norm = sqrt_len.iter().map(|s| s * s).sum::<f64>().sqrt();
        // w = s_hat - e_last
        let mut w: Vec<f64> = sqrt_len.iter().map(|s| s / norm).collect();
        w[nb - 1] -= 1.0;
        let ww: f64 = w.iter().map(|x| x * x).sum();
        let functions = DMatrix::from_fn(nb, nb - 1, |e, k| {
            let delta = if e == k { 1.0 } else { 0.0 };
            (delta - 2.0 * w[k] * w[e] / ww) / sqrt_len[e]
        });
        let weighted = DMatrix::from_fn(nb, nb - 1, |e, k| functions[(e, k)] * lengths[e]);
        let gram = functions.transpose() * weighted;
        let gram = (&gram + gram.transpose()) * 0.5;
        let gram_chol = Cholesky::new(gram.clone()).ok_or(Error::IndefiniteGram)?;
        Ok(Self {
            tag: BASIS_TAG.to_string(),
            radius,
            lengths,
            functions,
            gram,
            gram_chol,
        })
    }

    pub fn tag(&self) -> &str {
        &self.tag
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn n_edges(&self) -> usize {
        self.lengths.len()
    }

    pub fn dim(&self) -> usize {
        self.lengths.len() - 1
    }

    pub fn lengths(&self) -> &[f64] {
        &self.lengths
    }

    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    pub fn gram_cholesky(&self) -> &Cholesky<f64, Dyn> {
        &self.gram_chol
    }

    pub fn function(&self, k: usize) -> BoundaryCurrent {
        BoundaryCurrent::new(self.functions.column(k).iter().copied().collect())
    }

    /// Per-edge current for a coordinate vector.
    pub fn current(&self, coords: &DVector<f64>) -> BoundaryCurrent {
        BoundaryCurrent::new((&self.functions * coords).iter().copied().collect())
    }

    /// L2 projection coordinates: `G^{-1} B^T diag(len) g`.
    pub fn coords_of(&self, g: &BoundaryCurrent) -> DVector<f64> {
        let weighted = DVector::from_iterator(self.n_edges(), g.per_edge.iter().zip(&self.lengths).map(|(v, l)| v * l));
        self.gram_chol.solve(&(self.functions.transpose() * weighted))
    }

    /// `B^T t` for per-edge integrals `t_e = int_e u`: the pairings `<b_k, u>`.
    pub fn pair_with_traces(&self, traces: &[f64]) -> DVector<f64> {
        self.functions.transpose() * DVector::from_column_slice(traces)
    }

    pub fn same_provenance(&self, other: &ZeroMeanBasis) -> bool {
        self.tag == other.tag
            && self.lengths.len() == other.lengths.len()
            && (self.radius - other.radius).abs() <= 1e-12 * self.radius.abs()
            && self
                .lengths
                .iter()
                .zip(&other.lengths)
                .all(|(a, b)| (a - b).abs() <= 1e-12 * a.abs())
    }
}

/// Anything represented as a symmetric matrix in zero-mean basis coordinates.
pub trait BoundaryOperator {
    fn matrix(&self) -> &DMatrix<f64>;
    fn basis(&self) -> &ZeroMeanBasis;
}

/// Discrete NtD map `Lambda_sigma` in basis coordinates: `v^T M w = <g_v, Lambda g_w>`.
#[derive(Debug, Clone)]
pub struct NtDMatrix {
    pub matrix: DMatrix<f64>,
    pub basis: Arc<ZeroMeanBasis>,
    /// Relative symmetry defect of the assembled matrix before symmetrization.
    pub raw_symmetry_defect: f64,
}

impl BoundaryOperator for NtDMatrix {
    fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }
    fn basis(&self) -> &ZeroMeanBasis {
        &self.basis
    }
}

/// `Lambda_D - Lambda_bg` in shared basis coordinates.
#[derive(Debug, Clone)]
pub struct DifferenceOperator {
    pub matrix: DMatrix<f64>,
    pub basis: Arc<ZeroMeanBasis>,
}

impl BoundaryOperator for DifferenceOperator {
    fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }
    fn basis(&self) -> &ZeroMeanBasis {
        &self.basis
    }
}

pub fn symmetry_defect(m: &DMatrix<f64>) -> f64 {
    let norm = m.norm();
    if norm == 0.0 {
        0.0
    } else {
        (m - m.transpose()).norm() / norm
    }
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Column-by-column assembly, one Neumann solve per basis current.
pub fn assemble_ntd(mesh: &Mesh, sigma: &ConductivityField) -> Result<NtDMatrix> {
    let basis = Arc::new(ZeroMeanBasis::for_mesh(mesh)?);
    let solver = NeumannSolver::new(mesh, sigma)?;
    assemble_ntd_with(&solver, basis)
}

pub fn assemble_ntd_with(solver: &NeumannSolver<'_>, basis: Arc<ZeroMeanBasis>) -> Result<NtDMatrix> {
    let mesh = solver.mesh();
    if basis.n_edges() != mesh.n_boundary() {
        return Err(Error::BasisMismatch(format!(
            "basis has {} edges, mesh has {}",
            basis.n_edges(),
            mesh.n_boundary()
        )));
    }
    let dim = basis.dim();
    let columns: Vec<DVector<f64>> = (0..dim)
        .into_par_iter()
        .map(|k| {
            let sol = solver.solve(&basis.function(k))?;
            Ok(basis.pair_with_traces(&edge_integrals(mesh, &sol.nodal_u)))
        })
        .collect::<Result<_>>()?;
    let raw = DMatrix::from_columns(&columns);
    let defect = symmetry_defect(&raw);
    if defect > SYMMETRY_TOLERANCE {
        return Err(Error::SymmetryDefect {
            defect,
            tolerance: SYMMETRY_TOLERANCE,
        });
    }
    Ok(NtDMatrix {
        matrix: symmetrize(&raw),
        basis,
        raw_symmetry_defect: defect,
    })
}

pub fn difference_operator(lam_d: &NtDMatrix, lam_bg: &NtDMatrix) -> Result<DifferenceOperator> {
    if !lam_d.basis.same_provenance(&lam_bg.basis) || lam_d.matrix.shape() != lam_bg.matrix.shape() {
        return Err(Error::BasisMismatch(
            "NtD matrices were assembled on different boundary bases".into(),
        ));
    }
    Ok(DifferenceOperator {
        matrix: symmetrize(&(&lam_d.matrix - &lam_bg.matrix)),
        basis: lam_d.basis.clone(),
    })
}

/// L2(boundary) pairing `<g, A g>`.
pub fn quadratic_form<O: BoundaryOperator + ?Sized>(op: &O, g: &BoundaryCurrent) -> Result<f64> {
    let basis = op.basis();
    if g.len() != basis.n_edges() {
        return Err(Error::SizeMismatch {
            what: "boundary current",
            expected: basis.n_edges(),
            got: g.len(),
        });
    }
    let v = basis.coords_of(g);
    Ok(v.dot(&(op.matrix() * &v)))
}

/// Dense CSV with a short `#` header carrying radius, edge count and basis tag.
pub fn matrix_to_csv(m: &DMatrix<f64>, basis: &ZeroMeanBasis) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# kernel-ert boundary operator");
    let _ = writeln!(s, "# radius_m={:.16e}", basis.radius());
    let _ = writeln!(s, "# n_boundary={}", basis.n_edges());
    let _ = writeln!(s, "# basis={}", basis.tag());
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| format!("{:.16e}", m[(i, j)])).collect();
        let _ = writeln!(s, "{}", row.join(","));
    }
    s
}

/// Parses [`matrix_to_csv`] output and checks it against `basis`.
pub fn matrix_from_csv(text: &str, basis: &ZeroMeanBasis) -> Result<DMatrix<f64>> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let (mut radius, mut nb, mut tag) = (None, None, None);
    for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
        if let Some(h) = line.strip_prefix('#') {
            if let Some((k, v)) = h.trim().split_once('=') {
                match k.trim() {
                    "radius_m" => radius = v.trim().parse::<f64>().ok(),
                    "n_boundary" => nb = v.trim().parse::<usize>().ok(),
                    "basis" => tag = Some(v.trim().to_string()),
                    _ => {}
                }
            }
            continue;
        }
        rows.push(
            line.split(',')
                .map(|t| {
                    t.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::Parse(format!("bad matrix entry '{t}'")))
                })
                .collect::<Result<_>>()?,
        );
    }
    if nb != Some(basis.n_edges()) {
        return Err(Error::BasisMismatch(format!(
            "file n_boundary {:?} does not match mesh {}",
            nb,
            basis.n_edges()
        )));
    }
    if tag.as_deref() != Some(basis.tag()) {
        return Err(Error::BasisMismatch(format!(
            "file basis {:?} does not match {}",
            tag,
            basis.tag()
        )));
    }
    match radius {
        Some(r) if (r - basis.radius()).abs() <= 1e-12 * basis.radius() => {}
        _ => {
            return Err(Error::BasisMismatch(format!(
                "file radius {:?} does not match mesh {}",
                radius,
                basis.radius()
            )))
        }
    }
    let dim = basis.dim();
    if rows.len() != dim || rows.iter().any(|r| r.len() != dim) {
        return Err(Error::Parse(format!("expected a {dim}x{dim} matrix")));
    }
    Ok(DMatrix::from_fn(dim, dim, |i, j| rows[i][j]))
}

impl NtDMatrix {
    /// `self + delta` in the same basis, e.g. a reference map plus a noisy difference.
    pub fn offset(&self, delta: &DMatrix<f64>) -> Result<NtDMatrix> {
        if delta.shape() != self.matrix.shape() {
            return Err(Error::SizeMismatch {
                what: "operator offset",
                expected: self.matrix.nrows(),
                got: delta.nrows(),
            });
        }
        let raw = &self.matrix + delta;
        Ok(NtDMatrix {
            raw_symmetry_defect: symmetry_defect(&raw),
            matrix: symmetrize(&raw),
            basis: self.basis.clone(),
        })
    }

    pub fn to_csv(&self) -> String {
        matrix_to_csv(&self.matrix, &self.basis)
    }

    pub fn from_csv(text: &str, basis: Arc<ZeroMeanBasis>) -> Result<Self> {
        let raw = matrix_from_csv(text, &basis)?;
        let defect = symmetry_defect(&raw);
        if defect > SYMMETRY_TOLERANCE {
            return Err(Error::SymmetryDefect {
                defect,
                tolerance: SYMMETRY_TOLERANCE,
            });
        }
        Ok(Self {
            matrix: symmetrize(&raw),
            basis,
            raw_symmetry_defect: defect,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::{fourier_current, Phase};
    use crate::mesh::generate_disk_mesh;

    #[test]
    fn basis_is_orthonormal_and_zero_mean() {
        let lengths: Vec<f64> = (0..12).map(|k| 0.5 + 0.1 * k as f64).collect();
        let basis = ZeroMeanBasis::from_lengths(1.0, lengths.clone()).unwrap();
        let id = DMatrix::<f64>::identity(11, 11);
        assert!((basis.gram() - id).norm() < 1e-13);
        for k in 0..11 {
            assert!(basis.function(k).total_current(&lengths).abs() < 1e-14);
        }
    }

    #[test]
    fn coords_round_trip_on_zero_mean_currents() {
        let mesh = generate_disk_mesh(0.1, 32, 8).unwrap();
        let basis = ZeroMeanBasis::for_mesh(&mesh).unwrap();
        let g = fourier_current(&mesh, 3, Phase::Sin);
        let back = basis.current(&basis.coords_of(&g));
        for (a, b) in g.per_edge.iter().zip(&back.per_edge) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn ntd_halves_when_sigma_doubles() {
        let mesh = generate_disk_mesh(0.1, 32, 8).unwrap();
        let s1 = ConductivityField::uniform(&mesh, 200.0).unwrap();
        let a = assemble_ntd(&mesh, &s1).unwrap();
        let b = assemble_ntd(&mesh, &s1.scaled(2.0).unwrap()).unwrap();
        assert!((&a.matrix * 0.5 - &b.matrix).norm() < 1e-10 * b.matrix.norm());
        assert!(a.raw_symmetry_defect < SYMMETRY_TOLERANCE);
    }

    #[test]
    fn ntd_is_positive_on_random_currents() {
        use rand::{Rng, SeedableRng};
        let mesh = generate_disk_mesh(0.1, 32, 8).unwrap();
        let sigma = ConductivityField::uniform(&mesh, 200.0).unwrap();
        let lam = assemble_ntd(&mesh, &sigma).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let v = DVector::from_fn(lam.basis.dim(), |_, _| rng.random_range(-1.0..1.0));
            assert!(v.dot(&(&lam.matrix * &v)) > 0.0);
        }
    }

    #[test]
    fn identical_operators_give_zero_difference() {
        let mesh = generate_disk_mesh(0.1, 16, 4).unwrap();
        let sigma = ConductivityField::uniform(&mesh, 5.0).unwrap();
        let lam = assemble_ntd(&mesh, &sigma).unwrap();
        let d = difference_operator(&lam, &lam).unwrap();
        assert!(d.matrix.iter().all(|&x| x == 0.0));
        assert_eq!(quadratic_form(&d, &BoundaryCurrent::zeros(16)).unwrap(), 0.0);
    }

    #[test]
    fn basis_mismatch_rejected() {
        let m1 = generate_disk_mesh(0.1, 16, 4).unwrap();
        let m2 = generate_disk_mesh(0.2, 16, 4).unwrap();
        let a = assemble_ntd(&m1, &ConductivityField::uniform(&m1, 1.0).unwrap()).unwrap();
        let b = assemble_ntd(&m2, &ConductivityField::uniform(&m2, 1.0).unwrap()).unwrap();
        assert!(matches!(difference_operator(&a, &b), Err(Error::BasisMismatch(_))));
    }

    #[test]
    fn csv_round_trip_and_header_checks() {
        let mesh = generate_disk_mesh(0.1, 16, 4).unwrap();
        let lam = assemble_ntd(&mesh, &ConductivityField::uniform(&mesh, 2.0).unwrap()).unwrap();
        let text = lam.to_csv();
        let back = NtDMatrix::from_csv(&text, lam.basis.clone()).unwrap();
        assert_eq!(back.matrix, lam.matrix);
        let other = Arc::new(ZeroMeanBasis::for_mesh(&generate_disk_mesh(0.2, 16, 4).unwrap()).unwrap());
        assert!(NtDMatrix::from_csv(&text, other).is_err());
    }
}
