//! Structured triangulations of a disk.
//!
//! Nodes are laid out on concentric rings at radii `k * R / n_rings`; ring `k`
//! carries a multiple of four nodes, scaled so that the outermost ring holds
//! exactly `n_boundary` nodes. Neighbouring rings are stitched with a merge
//! ("zipper") sweep in angle, which yields `n_{k-1} + n_k` triangles per band.
//! With `n_boundary = 256` and `n_rings = 64` this gives 16384 triangles and
//! 8321 nodes.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fmt::Write as _;

use crate::error::{Error, Result};

pub type Point = [f64; 2];

/// Conforming triangulation of a disk with an ordered boundary cycle.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    nodes: Vec<Point>,
    triangles: Vec<[usize; 3]>,
    boundary_edges: Vec<[usize; 2]>,
    radius: f64,
}

/// Per-element boolean flag, e.g. the anomaly or a reconstruction of it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegionIndicator {
    pub per_element: Vec<bool>,
}

impl RegionIndicator {
    pub fn empty(n: usize) -> Self {
        Self {
            per_element: vec![false; n],
        }
    }

    pub fn full(n: usize) -> Self {
        Self {
            per_element: vec![true; n],
        }
    }

    pub fn len(&self) -> usize {
        self.per_element.len()
    }

    pub fn is_empty(&self) -> bool {
        self.per_element.is_empty()
    }

    pub fn count(&self) -> usize {
        self.per_element.iter().filter(|&&b| b).count()
    }

    pub fn area(&self, mesh: &Mesh) -> f64 {
        self.per_element
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(|(t, _)| mesh.area(t))
            .sum()
    }

    pub fn intersection(&self, other: &RegionIndicator) -> RegionIndicator {
        RegionIndicator {
            per_element: self
                .per_element
                .iter()
                .zip(&other.per_element)
                .map(|(a, b)| *a && *b)
                .collect(),
        }
    }

    pub fn is_subset_of(&self, other: &RegionIndicator) -> bool {
        self.per_element.iter().zip(&other.per_element).all(|(a, b)| !*a || *b)
    }
}

/// Summary of mesh quality and invariant checks. Never repairs anything.
#[derive(Debug, Clone)]
pub struct MeshReport {
    pub min_area: f64,
    pub max_area: f64,
    pub total_area: f64,
    pub min_angle_deg: f64,
    /// (max - min) / mean over boundary edge lengths.
    pub boundary_length_spread: f64,
    pub euler_characteristic: i64,
    pub violations: Vec<String>,
}

impl MeshReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

fn ring_count(k: usize, n_boundary: usize, n_rings: usize) -> usize {
    let quarter = n_boundary / 4;
    let scaled = ((k * quarter) as f64 / n_rings as f64).round() as usize;
    4 * scaled.max(1)
}

/// Builds the concentric-ring disk mesh.
pub fn generate_disk_mesh(radius: f64, n_boundary: usize, n_rings: usize) -> Result<Mesh> {
    if !(radius.is_finite() && radius > 0.0) {
        return Err(Error::MeshParameter(format!("radius must be positive, got {radius}")));
    }
    if n_boundary < 8 || !n_boundary.is_multiple_of(4) {
        return Err(Error::MeshParameter(format!(
            "n_boundary must be >= 8 and divisible by 4, got {n_boundary}"
        )));
    }
    if n_rings == 0 {
        return Err(Error::MeshParameter("n_rings must be >= 1".into()));
    }
    if n_rings > n_boundary / 4 {
        return Err(Error::MeshParameter(format!(
            "n_rings = {n_rings} exceeds n_boundary / 4 = {}; rings would not grow",
            n_boundary / 4
        )));
    }

    let counts: Vec<usize> = (1..=n_rings).map(|k| ring_count(k, n_boundary, n_rings)).collect();
    let n_nodes = 1 + counts.iter().sum::<usize>();
    let mut nodes = Vec::with_capacity(n_nodes);
    nodes.push([0.0, 0.0]);
    let mut offsets = Vec::with_capacity(n_rings + 1);
    offsets.push(0usize);
    for (k, &count) in counts.iter().enumerate() {
        offsets.push(nodes.len());
        let r = if k + 1 == n_rings {
            radius
        } else {
            radius * (k + 1) as f64 / n_rings as f64
        };
        for j in 0..count {
            let theta = 2.0 * PI * j as f64 / count as f64;
            nodes.push([r * theta.cos(), r * theta.sin()]);
        }
    }

    let mut triangles = Vec::new();
    // innermost fan around the centre
    let first = counts[0];
    for j in 0..first {
        triangles.push([0, offsets[1] + j, offsets[1] + (j + 1) % first]);
    }
    for k in 1..n_rings {
        let (a, b) = (counts[k - 1], counts[k]);
        let (ia, ib) = (offsets[k], offsets[k + 1]);
        let (mut i, mut j) = (0usize, 0usize);
        while i < a || j < b {
            // next angles are (i+1)/a and (j+1)/b of a full turn
            let advance_outer = i == a || (j < b && (j + 1) * a < (i + 1) * b);
            if advance_outer {
                triangles.push([ia + i % a, ib + j % b, ib + (j + 1) % b]);
                j += 1;
            } else {
                triangles.push([ia + i % a, ib + j % b, ia + (i + 1) % a]);
                i += 1;
            }
        }
    }

    let outer = offsets[n_rings];
    let boundary_edges = (0..n_boundary)
        .map(|j| [outer + j, outer + (j + 1) % n_boundary])
        .collect();

    let mesh = Mesh {
        nodes,
        triangles,
        boundary_edges,
        radius,
    };
    mesh.validate()?;
    Ok(mesh)
}

/// Default ring count reproducing the reference 16384-element grid for 256 boundary edges.
pub fn default_rings(n_boundary: usize) -> usize {
    n_boundary / 4
}

impl Mesh {
    /// Builds a mesh from parts and checks every invariant.
    pub fn new(
        nodes: Vec<Point>,
        triangles: Vec<[usize; 3]>,
        boundary_edges: Vec<[usize; 2]>,
        radius: f64,
    ) -> Result<Self> {
        let mesh = Self::from_raw_parts(nodes, triangles, boundary_edges, radius);
        mesh.validate()?;
        Ok(mesh)
    }

    /// Builds a mesh without checking invariants. Use [`Mesh::diagnostics`] to inspect it.
    pub fn from_raw_parts(
        nodes: Vec<Point>,
        triangles: Vec<[usize; 3]>,
        boundary_edges: Vec<[usize; 2]>,
        radius: f64,
    ) -> Self {
        Self {
            nodes,
            triangles,
            boundary_edges,
            radius,
        }
    }

    pub fn nodes(&self) -> &[Point] {
        &self.nodes
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn boundary_edges(&self) -> &[[usize; 2]] {
        &self.boundary_edges
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn n_boundary(&self) -> usize {
        self.boundary_edges.len()
    }

    pub fn signed_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t];
        let (pa, pb, pc) = (self.nodes[a], self.nodes[b], self.nodes[c]);
        0.5 * ((pb[0] - pa[0]) * (pc[1] - pa[1]) - (pc[0] - pa[0]) * (pb[1] - pa[1]))
    }

    pub fn area(&self, t: usize) -> f64 {
        self.signed_area(t).abs()
    }

    pub fn centroid(&self, t: usize) -> Point {
        let [a, b, c] = self.triangles[t];
        let (pa, pb, pc) = (self.nodes[a], self.nodes[b], self.nodes[c]);
        [(pa[0] + pb[0] + pc[0]) / 3.0, (pa[1] + pb[1] + pc[1]) / 3.0]
    }

    pub fn total_area(&self) -> f64 {
        (0..self.n_triangles()).map(|t| self.area(t)).sum()
    }

    pub fn edge_length(&self, e: usize) -> f64 {
        let [i, j] = self.boundary_edges[e];
        let (p, q) = (self.nodes[i], self.nodes[j]);
        (q[0] - p[0]).hypot(q[1] - p[1])
    }

    pub fn boundary_lengths(&self) -> Vec<f64> {
        (0..self.n_boundary()).map(|e| self.edge_length(e)).collect()
    }

    /// Polar angles of the two endpoints of boundary edge `e`, unwrapped so that
    /// the second exceeds the first.
    pub fn edge_angles(&self, e: usize) -> (f64, f64) {
        let [i, j] = self.boundary_edges[e];
        let a = self.nodes[i][1].atan2(self.nodes[i][0]);
        let mut b = self.nodes[j][1].atan2(self.nodes[j][0]);
        while b <= a {
            b += 2.0 * PI;
        }
        (a, b)
    }

    /// Element pairs sharing an edge.
    pub fn element_neighbors(&self) -> Vec<Vec<usize>> {
        let mut by_edge: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
        for (t, tri) in self.triangles.iter().enumerate() {
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                by_edge.entry((a.min(b), a.max(b))).or_default().push(t);
            }
        }
        let mut adj = vec![Vec::new(); self.n_triangles()];
        for owners in by_edge.values() {
            if let [s, t] = owners[..] {
                adj[s].push(t);
                adj[t].push(s);
            }
        }
        for list in &mut adj {
            list.sort_unstable();
        }
        adj
    }

    /// Number of edge-connected components of a region.
    pub fn component_count(&self, region: &RegionIndicator) -> usize {
        let adj = self.element_neighbors();
        let mut seen = vec![false; self.n_triangles()];
        let mut components = 0;
        for start in 0..self.n_triangles() {
            if !region.per_element[start] || seen[start] {
                continue;
            }
            components += 1;
            let mut stack = vec![start];
            seen[start] = true;
            while let Some(t) = stack.pop() {
                for &s in &adj[t] {
                    if region.per_element[s] && !seen[s] {
                        seen[s] = true;
                        stack.push(s);
                    }
                }
            }
        }
        components
    }

    pub fn validate(&self) -> Result<()> {
        let report = self.diagnostics();
        if report.is_valid() {
            Ok(())
        } else {
            Err(Error::MeshInvariant(report.violations.join("; ")))
        }
    }

    pub fn diagnostics(&self) -> MeshReport {
        mesh_diagnostics(self)
    }

    /// Plain-text serialization: node, triangle and boundary-edge sections,
    /// each preceded by its count. Coordinates use 17 significant digits.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{:.16e}", self.radius);
        let _ = writeln!(s, "{}", self.nodes.len());
        for p in &self.nodes {
            let _ = writeln!(s, "{:.16e} {:.16e}", p[0], p[1]);
        }
        let _ = writeln!(s, "{}", self.triangles.len());
        for t in &self.triangles {
            let _ = writeln!(s, "{} {} {}", t[0], t[1], t[2]);
        }
        let _ = writeln!(s, "{}", self.boundary_edges.len());
        for e in &self.boundary_edges {
            let _ = writeln!(s, "{} {}", e[0], e[1]);
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
        let mut next = |what: &str| {
            lines
                .next()
                .ok_or_else(|| Error::Parse(format!("unexpected end of mesh file reading {what}")))
        };
        fn num<T: std::str::FromStr>(tok: &str) -> Result<T> {
            tok.parse()
                .map_err(|_| Error::Parse(format!("bad number '{tok}' in mesh file")))
        }
        fn fields<const N: usize, T: std::str::FromStr + Copy + Default>(line: &str) -> Result<[T; N]> {
            let toks: Vec<&str> = line.split_whitespace().collect();
            if toks.len() != N {
                return Err(Error::Parse(format!("expected {N} fields, got '{line}'")));
            }
            let mut out = [T::default(); N];
            for (o, t) in out.iter_mut().zip(toks) {
                *o = num(t)?;
            }
            Ok(out)
        }
        let radius: f64 = num(next("radius")?)?;
        let n: usize = num(next("node count")?)?;
        let nodes = (0..n)
            .map(|_| fields::<2, f64>(next("node")?))
            .collect::<Result<Vec<_>>>()?;
        let m: usize = num(next("triangle count")?)?;
        let triangles = (0..m)
            .map(|_| fields::<3, usize>(next("triangle")?))
            .collect::<Result<Vec<_>>>()?;
        let b: usize = num(next("boundary count")?)?;
        let boundary_edges = (0..b)
            .map(|_| fields::<2, usize>(next("boundary edge")?))
            .collect::<Result<Vec<_>>>()?;
        Mesh::new(nodes, triangles, boundary_edges, radius)
    }
}

fn triangle_min_angle(p: [Point; 3]) -> f64 {
    let mut min = f64::INFINITY;
    for k in 0..3 {
        let (a, b, c) = (p[k], p[(k + 1) % 3], p[(k + 2) % 3]);
        let u = [b[0] - a[0], b[1] - a[1]];
        let v = [c[0] - a[0], c[1] - a[1]];
        let cos = (u[0] * v[0] + u[1] * v[1]) / (u[0].hypot(u[1]) * v[0].hypot(v[1]));
        min = min.min(cos.clamp(-1.0, 1.0).acos());
    }
    min.to_degrees()
}

/// Quality report plus a list of every violated mesh invariant.
pub fn mesh_diagnostics(mesh: &Mesh) -> MeshReport {
    let mut violations = Vec::new();
    let n = mesh.n_nodes();

    let mut min_area = f64::INFINITY;
    let mut max_area = 0.0f64;
    let mut total_area = 0.0;
    let mut min_angle = f64::INFINITY;
    let mut bad_index = false;
    for (t, tri) in mesh.triangles.iter().enumerate() {
        if tri.iter().any(|&i| i >= n) {
            bad_index = true;
            violations.push(format!("triangle {t} references a missing node"));
            continue;
        }
        let a = mesh.signed_area(t);
        if a <= 0.0 {
            violations.push(format!("triangle {t} has non-positive signed area {a:.3e}"));
        }
        min_area = min_area.min(a.abs());
        max_area = max_area.max(a.abs());
        total_area += a.abs();
        min_angle = min_angle.min(triangle_min_angle(tri.map(|i| mesh.nodes[i])));
    }

    // unique undirected edges and boundary detection
    let mut edge_use: HashMap<(usize, usize), usize> = HashMap::new();
    if !bad_index {
        for tri in &mesh.triangles {
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                *edge_use.entry((a.min(b), a.max(b))).or_default() += 1;
            }
        }
    }
    let n_edges = edge_use.len() as i64;
    let used: std::collections::HashSet<usize> = mesh.triangles.iter().flatten().copied().collect();
    let euler = used.len() as i64 - n_edges + mesh.n_triangles() as i64;
    if euler != 1 {
        violations.push(format!("Euler characteristic is {euler}, expected 1"));
    }

    // boundary cycle
    let nb = mesh.boundary_edges.len();
    let mut degree: HashMap<usize, usize> = HashMap::new();
    for (e, edge) in mesh.boundary_edges.iter().enumerate() {
        if edge.iter().any(|&i| i >= n) {
            violations.push(format!("boundary edge {e} references a missing node"));
            continue;
        }
        for &i in edge {
            *degree.entry(i).or_default() += 1;
        }
        let next = mesh.boundary_edges[(e + 1) % nb];
        if edge[1] != next[0] {
            violations.push(format!("boundary edges {e} and {} do not chain", (e + 1) % nb));
        }
        if !bad_index && edge_use.get(&(edge[0].min(edge[1]), edge[0].max(edge[1]))) != Some(&1) {
            violations.push(format!("boundary edge {e} is not a single-owner mesh edge"));
        }
    }
    if nb < 3 {
        violations.push(format!("boundary has only {nb} edges"));
    }
    if degree.values().any(|&d| d != 2) {
        violations.push("a boundary node does not appear in exactly two boundary edges".into());
    }
    let single_owner = edge_use.values().filter(|&&c| c == 1).count();
    if !bad_index && single_owner != nb {
        violations.push(format!(
            "mesh has {single_owner} single-owner edges but {nb} boundary edges"
        ));
    }
    if edge_use.values().any(|&c| c > 2) {
        violations.push("an edge is shared by more than two triangles".into());
    }

    let r = mesh.radius;
    for &i in degree.keys() {
        if i < n {
            let p = mesh.nodes[i];
            if ((p[0].hypot(p[1]) - r) / r).abs() > 1e-12 {
                violations.push(format!("boundary node {i} is off the circle of radius {r}"));
                break;
            }
        }
    }

    let lengths: Vec<f64> = (0..nb)
        .filter(|&e| mesh.boundary_edges[e].iter().all(|&i| i < n))
        .map(|e| mesh.edge_length(e))
        .collect();
    let spread = if lengths.is_empty() {
        0.0
    } else {
        let mean = lengths.iter().sum::<f64>() / lengths.len() as f64;
        let (lo, hi) = lengths
            .iter()
            .fold((f64::INFINITY, 0.0f64), |(lo, hi), &l| (lo.min(l), hi.max(l)));
        (hi - lo) / mean
    };
    if spread > 1e-9 {
        violations.push(format!("boundary edge lengths differ (relative spread {spread:.3e})"));
    }

    // counterclockwise boundary orientation
    let poly_area: f64 = mesh
        .boundary_edges
        .iter()
        .filter(|e| e.iter().all(|&i| i < n))
        .map(|&[i, j]| {
            let (p, q) = (mesh.nodes[i], mesh.nodes[j]);
            0.5 * (p[0] * q[1] - q[0] * p[1])
        })
        .sum();
    if poly_area <= 0.0 {
        violations.push("boundary cycle is not counterclockwise".into());
    }

    if mesh.triangles.is_empty() {
        min_area = 0.0;
        min_angle = 0.0;
    }
    MeshReport {
        min_area,
        max_area,
        total_area,
        min_angle_deg: min_angle,
        boundary_length_spread: spread,
        euler_characteristic: euler,
        violations,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_resolution_counts() {
        let mesh = generate_disk_mesh(0.025, 256, 64).unwrap();
        assert_eq!(mesh.n_triangles(), 16384);
        assert_eq!(mesh.n_nodes(), 8321);
        assert_eq!(mesh.n_boundary(), 256);
    }

    #[test]
    fn minimal_disk() {
        let mesh = generate_disk_mesh(1.0, 8, 1).unwrap();
        assert_eq!(mesh.n_boundary(), 8);
        assert_eq!(mesh.n_triangles(), 8);
        let report = mesh.diagnostics();
        assert_eq!(report.euler_characteristic, 1);
        assert!(report.is_valid(), "{:?}", report.violations);
    }

    #[test]
    fn equal_boundary_edges() {
        let mesh = generate_disk_mesh(0.1, 64, 16).unwrap();
        let l = mesh.boundary_lengths();
        let mean = l.iter().sum::<f64>() / l.len() as f64;
        assert!(l.iter().all(|x| ((x - mean) / mean).abs() < 1e-9));
    }

    #[test]
    fn reference_mesh_min_angle() {
        let mesh = generate_disk_mesh(0.025, 256, 64).unwrap();
        let report = mesh.diagnostics();
        assert!(report.min_angle_deg > 20.0, "min angle {}", report.min_angle_deg);
    }

    #[test]
    fn clockwise_triangle_is_flagged() {
        let mesh = generate_disk_mesh(1.0, 8, 1).unwrap();
        let mut tris = mesh.triangles().to_vec();
        tris[3].swap(1, 2);
        let broken = Mesh::from_raw_parts(mesh.nodes().to_vec(), tris, mesh.boundary_edges().to_vec(), 1.0);
        let report = broken.diagnostics();
        assert!(report
            .violations
            .iter()
            .any(|v| v.contains("triangle 3") && v.contains("signed area")));
        assert!(broken.validate().is_err());
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(generate_disk_mesh(0.0, 64, 4).is_err());
        assert!(generate_disk_mesh(-1.0, 64, 4).is_err());
        assert!(generate_disk_mesh(1.0, 30, 4).is_err());
        assert!(generate_disk_mesh(1.0, 4, 1).is_err());
        assert!(generate_disk_mesh(1.0, 64, 0).is_err());
        assert!(generate_disk_mesh(1.0, 64, 17).is_err());
    }

    #[test]
    fn text_round_trip() {
        let mesh = generate_disk_mesh(0.1, 32, 8).unwrap();
        let back = Mesh::from_text(&mesh.to_text()).unwrap();
        assert_eq!(mesh, back);
    }

    #[test]
    fn truncated_text_is_rejected() {
        let mesh = generate_disk_mesh(0.1, 16, 2).unwrap();
        let text = mesh.to_text();
        let cut: String = text.lines().take(10).collect::<Vec<_>>().join("\n");
        assert!(Mesh::from_text(&cut).is_err());
    }

    #[test]
    fn component_count_of_full_mesh_is_one() {
        let mesh = generate_disk_mesh(0.1, 32, 8).unwrap();
        assert_eq!(mesh.component_count(&RegionIndicator::full(mesh.n_triangles())), 1);
        assert_eq!(mesh.component_count(&RegionIndicator::empty(mesh.n_triangles())), 0);
    }
}
