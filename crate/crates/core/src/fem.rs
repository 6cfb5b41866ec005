//! P1 finite elements for the steady-current Neumann problem
//! `div(sigma grad u) = 0`, `sigma du/dn = g` on the boundary, with the
//! boundary-mean gauge `int_{boundary} u = 0`.
//!
//! The gauge is imposed by the rank-one augmentation `K + gamma c c^T`, where
//! `c` holds the trapezoidal boundary weights. For a compatible load
//! (`1^T f = 0`) the augmented SPD system has exactly the solution of the
//! bordered saddle-point system `[K c; c^T 0]`, so a skyline Cholesky
//! factorization can be used and shared across many right-hand sides.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::mesh::{Mesh, RegionIndicator};
use crate::phantom::ConductivityField;

/// Relative residual accepted from a direct solve.
pub const SOLVE_TOLERANCE: f64 = 1e-10;
/// Largest relative total-current violation that is silently projected away.
pub const COMPATIBILITY_TOLERANCE: f64 = 1e-6;

/// Symmetric sparse matrix in CSR form (both triangles stored).
#[derive(Debug, Clone)]
pub struct SparseSym {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl SparseSym {
    fn from_triplets(n: usize, mut trip: Vec<(usize, usize, f64)>) -> Self {
        trip.sort_unstable_by_key(|&(i, j, _)| (i, j));
        let mut row_ptr = vec![0usize; n + 1];
        let mut cols = Vec::with_capacity(trip.len());
        let mut vals: Vec<f64> = Vec::with_capacity(trip.len());
        let mut last: Option<(usize, usize)> = None;
        for (i, j, v) in trip {
            if last == Some((i, j)) {
                *vals.last_mut().unwrap() += v;
            } else {
                cols.push(j);
                vals.push(v);
                row_ptr[i + 1] += 1;
                last = Some((i, j));
            }
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        Self { n, row_ptr, cols, vals }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[r.clone()].iter().copied().zip(self.vals[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.row(i).find(|&(c, _)| c == j).map_or(0.0, |(_, v)| v)
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n).map(|i| self.row(i).map(|(j, v)| v * x[j]).sum()).collect()
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.n]; self.n];
        for (i, row) in d.iter_mut().enumerate() {
            for (j, v) in self.row(i) {
                row[j] = v;
            }
        }
        d
    }
}

/// Constant gradients of the three P1 basis functions on triangle `t`.
fn p1_gradients(mesh: &Mesh, t: usize) -> ([[f64; 2]; 3], f64) {
    let tri = mesh.triangles()[t];
    let p = tri.map(|i| mesh.nodes()[i]);
    let twice_area = (p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]);
    let mut g = [[0.0; 2]; 3];
    for k in 0..3 {
        let (a, b) = (p[(k + 1) % 3], p[(k + 2) % 3]);
        g[k] = [(a[1] - b[1]) / twice_area, (b[0] - a[0]) / twice_area];
    }
    (g, 0.5 * twice_area.abs())
}

/// P1 stiffness matrix `K_ij = sum_T sigma_T grad phi_i . grad phi_j |T|`.
pub fn assemble_stiffness(mesh: &Mesh, sigma: &ConductivityField) -> Result<SparseSym> {
    sigma.check_mesh(mesh)?;
    let mut trip = Vec::with_capacity(9 * mesh.n_triangles());
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let (g, area) = p1_gradients(mesh, t);
        let s = sigma.values()[t] * area;
        for a in 0..3 {
            for b in 0..3 {
                trip.push((tri[a], tri[b], s * (g[a][0] * g[b][0] + g[a][1] * g[b][1])));
            }
        }
    }
    Ok(SparseSym::from_triplets(mesh.n_nodes(), trip))
}

/// Variable-band (envelope) Cholesky factor `A = L L^T`, stored row-wise.
#[derive(Debug, Clone)]
pub struct SkylineCholesky {
    first: Vec<usize>,
    offset: Vec<usize>,
    data: Vec<f64>,
}

impl SkylineCholesky {
    /// Factors `K + gamma w w^T` where `w` is sparse (index, value) pairs.
    fn factor(k: &SparseSym, rank_one: &[(usize, f64)], gamma: f64) -> Result<Self> {
        let n = k.dim();
        let mut first: Vec<usize> = (0..n)
            .map(|i| k.row(i).map(|(j, _)| j).min().unwrap_or(i).min(i))
            .collect();
        let w_min = rank_one.iter().map(|&(i, _)| i).min().unwrap_or(n);
        for &(i, _) in rank_one {
            first[i] = first[i].min(w_min);
        }
        let mut offset = Vec::with_capacity(n + 1);
        offset.push(0);
        for i in 0..n {
            offset.push(offset[i] + (i - first[i] + 1));
        }
        let mut data = vec![0.0; offset[n]];
        for i in 0..n {
            for (j, v) in k.row(i) {
                if j <= i {
                    data[offset[i] + j - first[i]] += v;
                }
            }
        }
        for &(i, wi) in rank_one {
            for &(j, wj) in rank_one {
                if j <= i {
                    data[offset[i] + j - first[i]] += gamma * wi * wj;
                }
            }
        }

        for i in 0..n {
            let fi = first[i];
            for j in fi..=i {
                let fj = first[j];
                let start = fi.max(fj);
                let (ri, rj) = (offset[i] - fi, offset[j] - fj);
                let mut s = data[ri + j];
                for c in start..j {
                    s -= data[ri + c] * data[rj + c];
                }
                if j < i {
                    data[ri + j] = s / data[rj + j];
                } else {
                    if !(s > 0.0) {
                        return Err(Error::Factorization { row: i, pivot: s });
                    }
                    data[ri + i] = s.sqrt();
                }
            }
        }
        Ok(Self { first, offset, data })
    }

    pub fn dim(&self) -> usize {
        self.first.len()
    }

    pub fn envelope_size(&self) -> usize {
        self.data.len()
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.dim();
        let mut y = b.to_vec();
        for i in 0..n {
            let fi = self.first[i];
            let row = &self.data[self.offset[i]..self.offset[i + 1]];
            let mut s = y[i];
            for (c, l) in (fi..i).zip(row) {
                s -= l * y[c];
            }
            y[i] = s / row[i - fi];
        }
        for i in (0..n).rev() {
            let fi = self.first[i];
            let row = &self.data[self.offset[i]..self.offset[i + 1]];
            y[i] /= row[i - fi];
            let xi = y[i];
            for (c, l) in (fi..i).zip(row) {
                y[c] -= l * xi;
            }
        }
        y
    }
}

/// Piecewise-constant normal current density, one value per boundary edge (A/m).
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryCurrent {
    pub per_edge: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Cos,
    Sin,
}

impl BoundaryCurrent {
    pub fn new(per_edge: Vec<f64>) -> Self {
        Self { per_edge }
    }

    pub fn zeros(n: usize) -> Self {
        Self::new(vec![0.0; n])
    }

    pub fn len(&self) -> usize {
        self.per_edge.len()
    }

    pub fn is_empty(&self) -> bool {
        self.per_edge.is_empty()
    }

    /// `sum_e g_e len_e`.
    pub fn total_current(&self, lengths: &[f64]) -> f64 {
        self.per_edge.iter().zip(lengths).map(|(g, l)| g * l).sum()
    }

    pub fn l2_inner(&self, other: &BoundaryCurrent, lengths: &[f64]) -> f64 {
        self.per_edge
            .iter()
            .zip(&other.per_edge)
            .zip(lengths)
            .map(|((a, b), l)| a * b * l)
            .sum()
    }

    pub fn l2_norm(&self, lengths: &[f64]) -> f64 {
        self.l2_inner(self, lengths).sqrt()
    }

    /// Total current relative to the Cauchy-Schwarz bound `||g|| sqrt(|boundary|)`.
    pub fn relative_violation(&self, lengths: &[f64]) -> f64 {
        let norm = self.l2_norm(lengths);
        if norm == 0.0 {
            return 0.0;
        }
        let perimeter: f64 = lengths.iter().sum();
        self.total_current(lengths).abs() / (norm * perimeter.sqrt())
    }

    /// Projection onto the zero-total-current subspace and the L2 norm of the removed part.
    pub fn project_zero_mean(&self, lengths: &[f64]) -> (BoundaryCurrent, f64) {
        let perimeter: f64 = lengths.iter().sum();
        let mean = self.total_current(lengths) / perimeter;
        let projected = self.per_edge.iter().map(|g| g - mean).collect();
        (BoundaryCurrent::new(projected), mean.abs() * perimeter.sqrt())
    }

    pub fn scaled(&self, f: f64) -> BoundaryCurrent {
        BoundaryCurrent::new(self.per_edge.iter().map(|g| g * f).collect())
    }
}

/// Edge-averaged `cos(n theta)` or `sin(n theta)`, normalized to unit L2 norm on the boundary.
pub fn fourier_current(mesh: &Mesh, n: usize, phase: Phase) -> BoundaryCurrent {
    let lengths = mesh.boundary_lengths();
    let per_edge: Vec<f64> = (0..mesh.n_boundary())
        .map(|e| {
            let (a, b) = mesh.edge_angles(e);
            let nf = n as f64;
            match (n, phase) {
                (0, Phase::Cos) => 1.0,
                (0, Phase::Sin) => 0.0,
                (_, Phase::Cos) => ((nf * b).sin() - (nf * a).sin()) / (nf * (b - a)),
                (_, Phase::Sin) => ((nf * a).cos() - (nf * b).cos()) / (nf * (b - a)),
            }
        })
        .collect();
    let g = BoundaryCurrent::new(per_edge);
    let norm = g.l2_norm(&lengths);
    if norm == 0.0 {
        g
    } else {
        g.scaled(1.0 / norm)
    }
}

/// Continuous analogue used by oracles: `cos(n theta) / sqrt(pi R)` has unit L2 norm on a circle.
pub fn unit_mode_amplitude(radius: f64) -> f64 {
    1.0 / (PI * radius).sqrt()
}

/// Nodal load `f_i = sum_{e containing i} g_e len_e / 2`.
pub fn load_vector(mesh: &Mesh, g: &BoundaryCurrent) -> Vec<f64> {
    let mut f = vec![0.0; mesh.n_nodes()];
    for (e, &[i, j]) in mesh.boundary_edges().iter().enumerate() {
        let half = 0.5 * g.per_edge[e] * mesh.edge_length(e);
        f[i] += half;
        f[j] += half;
    }
    f
}

/// Exact edge integrals of a piecewise-linear nodal field along the boundary.
pub fn edge_integrals(mesh: &Mesh, u: &[f64]) -> Vec<f64> {
    mesh.boundary_edges()
        .iter()
        .enumerate()
        .map(|(e, &[i, j])| 0.5 * mesh.edge_length(e) * (u[i] + u[j]))
        .collect()
}

/// `<g, u>` on the boundary for piecewise-constant g and piecewise-linear u.
pub fn boundary_pairing(mesh: &Mesh, g: &BoundaryCurrent, u: &[f64]) -> f64 {
    edge_integrals(mesh, u)
        .iter()
        .zip(&g.per_edge)
        .map(|(t, g)| t * g)
        .sum()
}

/// Trapezoidal boundary weights: `c^T u` is the boundary integral of u.
fn boundary_weights(mesh: &Mesh) -> Vec<(usize, f64)> {
    let mut w = std::collections::BTreeMap::new();
    for (e, &[i, j]) in mesh.boundary_edges().iter().enumerate() {
        let half = 0.5 * mesh.edge_length(e);
        *w.entry(i).or_insert(0.0) += half;
        *w.entry(j).or_insert(0.0) += half;
    }
    w.into_iter().collect()
}

/// `int_{boundary} u` for nodal u.
pub fn boundary_mean_integral(mesh: &Mesh, u: &[f64]) -> f64 {
    edge_integrals(mesh, u).iter().sum()
}

#[derive(Debug, Clone)]
pub struct FemSolution {
    pub nodal_u: Vec<f64>,
    /// The boundary current actually applied, after projection.
    pub applied: BoundaryCurrent,
    /// L2 norm of the constant removed from the input current.
    pub projection_correction: f64,
    /// Relative residual `||K u - f|| / ||f||`.
    pub residual: f64,
}

/// Factorized reference operator for one (mesh, conductivity) pair. Read-only
/// after construction, so concurrent solves may share it.
#[derive(Debug, Clone)]
pub struct NeumannSolver<'m> {
    mesh: &'m Mesh,
    stiffness: SparseSym,
    weights: Vec<(usize, f64)>,
    gamma: f64,
    factor: SkylineCholesky,
    lengths: Vec<f64>,
}

impl<'m> NeumannSolver<'m> {
    pub fn new(mesh: &'m Mesh, sigma: &ConductivityField) -> Result<Self> {
        let stiffness = assemble_stiffness(mesh, sigma)?;
        let weights = boundary_weights(mesh);
        let max_diag = stiffness.diagonal().into_iter().fold(0.0, f64::max);
        let w2: f64 = weights.iter().map(|(_, w)| w * w).sum();
        let gamma = max_diag / w2;
        let factor = SkylineCholesky::factor(&stiffness, &weights, gamma)?;
        Ok(Self {
            mesh,
            stiffness,
            weights,
            gamma,
            factor,
            lengths: mesh.boundary_lengths(),
        })
    }

    pub fn mesh(&self) -> &Mesh {
        self.mesh
    }

    pub fn stiffness(&self) -> &SparseSym {
        &self.stiffness
    }

    fn apply_augmented(&self, u: &[f64]) -> Vec<f64> {
        let mut y = self.stiffness.mul_vec(u);
        let cu: f64 = self.weights.iter().map(|&(i, w)| w * u[i]).sum();
        for &(i, w) in &self.weights {
            y[i] += self.gamma * w * cu;
        }
        y
    }

    /// Solves for a nodal load vector; one step of iterative refinement.
    fn solve_load(&self, f: &[f64]) -> Result<(Vec<f64>, f64)> {
        let fnorm = norm2(f);
        if fnorm == 0.0 {
            return Ok((vec![0.0; f.len()], 0.0));
        }
        let mut u = self.factor.solve(f);
        let r: Vec<f64> = f.iter().zip(self.apply_augmented(&u)).map(|(a, b)| a - b).collect();
        let du = self.factor.solve(&r);
        for (x, d) in u.iter_mut().zip(du) {
            *x += d;
        }
        let ku = self.stiffness.mul_vec(&u);
        let residual = norm2(&f.iter().zip(ku).map(|(a, b)| a - b).collect::<Vec<_>>()) / fnorm;
        if residual > SOLVE_TOLERANCE {
            return Err(Error::SolveResidual {
                residual,
                tolerance: SOLVE_TOLERANCE,
            });
        }
        Ok((u, residual))
    }

    pub fn solve(&self, g: &BoundaryCurrent) -> Result<FemSolution> {
        if g.len() != self.mesh.n_boundary() {
            return Err(Error::SizeMismatch {
                what: "boundary current",
                expected: self.mesh.n_boundary(),
                got: g.len(),
            });
        }
        let violation = g.relative_violation(&self.lengths);
        if violation > COMPATIBILITY_TOLERANCE {
            return Err(Error::IncompatibleCurrent { violation });
        }
        let (applied, correction) = g.project_zero_mean(&self.lengths);
        let f = load_vector(self.mesh, &applied);
        let (nodal_u, residual) = self.solve_load(&f)?;
        Ok(FemSolution {
            nodal_u,
            applied,
            projection_correction: correction,
            residual,
        })
    }
}

fn norm2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn solve_neumann(mesh: &Mesh, sigma: &ConductivityField, g: &BoundaryCurrent) -> Result<FemSolution> {
    NeumannSolver::new(mesh, sigma)?.solve(g)
}

/// Subtracts the boundary mean so that `int_{boundary} u = 0`.
pub fn regauge(mesh: &Mesh, u: &[f64]) -> Vec<f64> {
    let perimeter: f64 = mesh.boundary_lengths().iter().sum();
    let m = boundary_mean_integral(mesh, u) / perimeter;
    u.iter().map(|x| x - m).collect()
}

/// Ohmic power density `sigma |grad u|^2` per element.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerDensityField {
    pub per_element: Vec<f64>,
}

impl PowerDensityField {
    pub fn total_power(&self, mesh: &Mesh) -> f64 {
        self.per_element.iter().enumerate().map(|(t, p)| p * mesh.area(t)).sum()
    }
}

pub fn power_density(mesh: &Mesh, sigma: &ConductivityField, u: &[f64]) -> Result<PowerDensityField> {
    sigma.check_mesh(mesh)?;
    if u.len() != mesh.n_nodes() {
        return Err(Error::SizeMismatch {
            what: "nodal potential",
            expected: mesh.n_nodes(),
            got: u.len(),
        });
    }
    let per_element = (0..mesh.n_triangles())
        .map(|t| {
            let (g, _) = p1_gradients(mesh, t);
            let tri = mesh.triangles()[t];
            let mut grad = [0.0; 2];
            for k in 0..3 {
                grad[0] += u[tri[k]] * g[k][0];
                grad[1] += u[tri[k]] * g[k][1];
            }
            sigma.values()[t] * (grad[0] * grad[0] + grad[1] * grad[1])
        })
        .collect();
    Ok(PowerDensityField { per_element })
}

/// Relative gap between the dissipated power and the boundary work `<g, u>`.
pub fn energy_identity_defect(mesh: &Mesh, p: &PowerDensityField, sol: &FemSolution) -> f64 {
    let pairing = boundary_pairing(mesh, &sol.applied, &sol.nodal_u);
    let total = p.total_power(mesh);
    let scale = pairing.abs().max(total.abs());
    if scale == 0.0 {
        0.0
    } else {
        (total - pairing).abs() / scale
    }
}

/// `sum_{T in region} p_T |T|`.
pub fn power_in_region(mesh: &Mesh, p: &PowerDensityField, region: &RegionIndicator) -> Result<f64> {
    if region.len() != mesh.n_triangles() || p.per_element.len() != mesh.n_triangles() {
        return Err(Error::SizeMismatch {
            what: "region or power field",
            expected: mesh.n_triangles(),
            got: region.len().min(p.per_element.len()),
        });
    }
    Ok(region
        .per_element
        .iter()
        .zip(&p.per_element)
        .enumerate()
        .filter(|(_, (&b, _))| b)
        .map(|(t, (_, pt))| pt * mesh.area(t))
        .sum())
}
