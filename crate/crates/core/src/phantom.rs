//! Piecewise-constant conductivity phantoms built from geometric anomalies.
//!
//! Elements are classified by centroid: an element takes the conductivity of
//! the first anomaly containing its centroid, otherwise the background value.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::{Mesh, Point, RegionIndicator};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "lowercase")]
pub enum Shape {
    Disk {
        center: Point,
        radius: f64,
    },
    Ellipse {
        center: Point,
        semi_axes: [f64; 2],
        /// Rotation of the first semi-axis from the x axis, radians.
        rotation: f64,
    },
    Annulus {
        center: Point,
        r_inner: f64,
        r_outer: f64,
    },
    Polygon {
        vertices: Vec<Point>,
    },
}

impl Shape {
    pub fn contains(&self, p: Point) -> bool {
        match self {
            Shape::Disk { center, radius } => dist(p, *center) < *radius,
            Shape::Ellipse {
                center,
                semi_axes,
                rotation,
            } => {
                let (dx, dy) = (p[0] - center[0], p[1] - center[1]);
                let (s, c) = rotation.sin_cos();
                let u = c * dx + s * dy;
                let v = -s * dx + c * dy;
                (u / semi_axes[0]).powi(2) + (v / semi_axes[1]).powi(2) < 1.0
            }
            Shape::Annulus {
                center,
                r_inner,
                r_outer,
            } => {
                let d = dist(p, *center);
                d > *r_inner && d < *r_outer
            }
            Shape::Polygon { vertices } => point_in_polygon(p, vertices),
        }
    }

    fn validate(&self) -> Result<()> {
        let positive = |x: f64, what: &str| {
            if x.is_finite() && x > 0.0 {
                Ok(())
            } else {
                Err(Error::Phantom(format!("{what} must be positive, got {x}")))
            }
        };
        match self {
            Shape::Disk { radius, .. } => positive(*radius, "disk radius"),
            Shape::Ellipse { semi_axes, .. } => {
                positive(semi_axes[0], "ellipse semi-axis")?;
                positive(semi_axes[1], "ellipse semi-axis")
            }
            Shape::Annulus { r_inner, r_outer, .. } => {
                positive(*r_inner, "annulus inner radius")?;
                if r_outer <= r_inner {
                    return Err(Error::Phantom(format!(
                        "annulus outer radius {r_outer} must exceed inner radius {r_inner}"
                    )));
                }
                Ok(())
            }
            Shape::Polygon { vertices } => {
                if vertices.len() < 3 {
                    Err(Error::Phantom("polygon needs at least 3 vertices".into()))
                } else {
                    Ok(())
                }
            }
        }
    }

    /// Largest distance from the origin reached by the shape.
    pub fn max_extent(&self) -> f64 {
        match self {
            Shape::Disk { center, radius } => center[0].hypot(center[1]) + radius,
            Shape::Annulus { center, r_outer, .. } => center[0].hypot(center[1]) + r_outer,
            Shape::Ellipse {
                center,
                semi_axes,
                rotation,
            } => {
                let (s, c) = rotation.sin_cos();
                (0..4096)
                    .map(|k| {
                        let t = 2.0 * std::f64::consts::PI * k as f64 / 4096.0;
                        let (u, v) = (semi_axes[0] * t.cos(), semi_axes[1] * t.sin());
                        (center[0] + c * u - s * v).hypot(center[1] + s * u + c * v)
                    })
                    .fold(0.0, f64::max)
            }
            Shape::Polygon { vertices } => vertices.iter().map(|v| v[0].hypot(v[1])).fold(0.0, f64::max),
        }
    }
}

fn dist(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Even-odd ray casting.
fn point_in_polygon(p: Point, poly: &[Point]) -> bool {
    let mut inside = false;
    let n = poly.len();
    let mut j = n - 1;
    for i in 0..n {
        let (a, b) = (poly[i], poly[j]);
        if (a[1] > p[1]) != (b[1] > p[1]) {
            let x = a[0] + (p[1] - a[1]) * (b[0] - a[0]) / (b[1] - a[1]);
            if p[0] < x {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Anomaly {
    #[serde(flatten)]
    pub shape: Shape,
    /// Conductivity inside the anomaly, S/m.
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhantomSpec {
    /// Background conductivity, S/m.
    pub background_sigma: f64,
    #[serde(default)]
    pub anomalies: Vec<Anomaly>,
}

impl PhantomSpec {
    pub fn homogeneous(background_sigma: f64) -> Self {
        Self {
            background_sigma,
            anomalies: Vec::new(),
        }
    }

    pub fn with(mut self, shape: Shape, sigma: f64) -> Self {
        self.anomalies.push(Anomaly { shape, sigma });
        self
    }

    /// (min, max) anomaly conductivity, if any anomaly exists.
    pub fn anomaly_range(&self) -> Option<(f64, f64)> {
        self.anomalies.iter().map(|a| a.sigma).fold(None, |acc, s| match acc {
            None => Some((s, s)),
            Some((lo, hi)) => Some((lo.min(s), hi.max(s))),
        })
    }

    /// Checks positivity, well-separation and shape parameters.
    pub fn validate(&self) -> Result<()> {
        let bg = self.background_sigma;
        if !(bg.is_finite() && bg > 0.0) {
            return Err(Error::Phantom(format!("background_sigma must be positive, got {bg}")));
        }
        for (k, a) in self.anomalies.iter().enumerate() {
            if !(a.sigma.is_finite() && a.sigma > 0.0) {
                return Err(Error::Phantom(format!(
                    "anomaly {k}: sigma must be positive, got {}",
                    a.sigma
                )));
            }
            a.shape
                .validate()
                .map_err(|e| Error::Phantom(format!("anomaly {k}: {e}")))?;
        }
        if let Some((lo, hi)) = self.anomaly_range() {
            if !(hi < bg || lo > bg) {
                return Err(Error::Phantom(format!(
                    "anomaly conductivities [{lo}, {hi}] are not well separated from background {bg}"
                )));
            }
        }
        Ok(())
    }

    /// Per-element index of the anomaly covering the centroid.
    fn classify(&self, mesh: &Mesh) -> Result<Vec<Option<usize>>> {
        self.validate()?;
        for (k, a) in self.anomalies.iter().enumerate() {
            let ext = a.shape.max_extent();
            if ext > mesh.radius() {
                return Err(Error::Phantom(format!(
                    "anomaly {k} extends to radius {ext:.4e}, outside the domain of radius {:.4e}",
                    mesh.radius()
                )));
            }
        }
        (0..mesh.n_triangles())
            .map(|t| {
                let c = mesh.centroid(t);
                let mut hit: Option<usize> = None;
                for (k, a) in self.anomalies.iter().enumerate() {
                    if a.shape.contains(c) {
                        match hit {
                            None => hit = Some(k),
                            Some(first) if self.anomalies[first].sigma != a.sigma => {
                                return Err(Error::Phantom(format!(
                                    "anomalies {first} and {k} overlap with different conductivities"
                                )));
                            }
                            Some(_) => {}
                        }
                    }
                }
                Ok(hit)
            })
            .collect()
    }
}

/// Piecewise-constant conductivity, one value per triangle.
#[derive(Debug, Clone, PartialEq)]
pub struct ConductivityField {
    per_element: Vec<f64>,
}

impl ConductivityField {
    pub fn new(per_element: Vec<f64>) -> Result<Self> {
        if let Some((t, s)) = per_element
            .iter()
            .enumerate()
            .find(|(_, s)| !(s.is_finite() && **s > 0.0))
        {
            return Err(Error::Phantom(format!(
                "conductivity of element {t} must be positive, got {s}"
            )));
        }
        Ok(Self { per_element })
    }

    pub fn uniform(mesh: &Mesh, sigma: f64) -> Result<Self> {
        Self::new(vec![sigma; mesh.n_triangles()])
    }

    pub fn values(&self) -> &[f64] {
        &self.per_element
    }

    pub fn len(&self) -> usize {
        self.per_element.len()
    }

    pub fn is_empty(&self) -> bool {
        self.per_element.is_empty()
    }

    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(self.per_element.iter().map(|s| s * factor).collect())
    }

    pub fn check_mesh(&self, mesh: &Mesh) -> Result<()> {
        if self.len() != mesh.n_triangles() {
            return Err(Error::SizeMismatch {
                what: "conductivity field",
                expected: mesh.n_triangles(),
                got: self.len(),
            });
        }
        Ok(())
    }
}

pub fn build_conductivity(mesh: &Mesh, spec: &PhantomSpec) -> Result<ConductivityField> {
    let classes = spec.classify(mesh)?;
    ConductivityField::new(
        classes
            .into_iter()
            .map(|c| c.map_or(spec.background_sigma, |k| spec.anomalies[k].sigma))
            .collect(),
    )
}

/// Ground-truth anomaly region, consistent with [`build_conductivity`].
pub fn truth_indicator(mesh: &Mesh, spec: &PhantomSpec) -> Result<RegionIndicator> {
    Ok(RegionIndicator {
        per_element: spec.classify(mesh)?.into_iter().map(|c| c.is_some()).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::generate_disk_mesh;

    fn disk(x: f64, y: f64, r: f64) -> Shape {
        Shape::Disk {
            center: [x, y],
            radius: r,
        }
    }

    #[test]
    fn disk_phantom_assignment() {
        let mesh = generate_disk_mesh(0.1, 128, 32).unwrap();
        let spec = PhantomSpec::homogeneous(200.0).with(disk(0.0, 0.0, 0.04), 1.0);
        let field = build_conductivity(&mesh, &spec).unwrap();
        for t in 0..mesh.n_triangles() {
            let c = mesh.centroid(t);
            let expect = if c[0].hypot(c[1]) < 0.04 { 1.0 } else { 200.0 };
            assert_eq!(field.values()[t], expect);
        }
    }

    #[test]
    fn empty_spec_is_uniform() {
        let mesh = generate_disk_mesh(0.1, 32, 8).unwrap();
        let field = build_conductivity(&mesh, &PhantomSpec::homogeneous(3.0)).unwrap();
        assert!(field.values().iter().all(|&s| s == 3.0));
        let truth = truth_indicator(&mesh, &PhantomSpec::homogeneous(3.0)).unwrap();
        assert_eq!(truth.count(), 0);
    }

    #[test]
    fn annulus_membership() {
        let mesh = generate_disk_mesh(0.1, 128, 32).unwrap();
        let spec = PhantomSpec::homogeneous(200.0).with(
            Shape::Annulus {
                center: [0.0, 0.0],
                r_inner: 0.02,
                r_outer: 0.03,
            },
            1.0,
        );
        let truth = truth_indicator(&mesh, &spec).unwrap();
        for t in 0..mesh.n_triangles() {
            let c = mesh.centroid(t);
            let r = c[0].hypot(c[1]);
            assert_eq!(truth.per_element[t], r > 0.02 && r < 0.03);
        }
    }

    #[test]
    fn truth_matches_conductivity() {
        let mesh = generate_disk_mesh(0.1, 64, 16).unwrap();
        let spec = PhantomSpec::homogeneous(200.0).with(disk(0.03, 0.0, 0.02), 1.0).with(
            Shape::Ellipse {
                center: [-0.03, 0.02],
                semi_axes: [0.025, 0.01],
                rotation: 0.3,
            },
            2.0,
        );
        let field = build_conductivity(&mesh, &spec).unwrap();
        let truth = truth_indicator(&mesh, &spec).unwrap();
        for t in 0..mesh.n_triangles() {
            assert_eq!(truth.per_element[t], field.values()[t] != 200.0);
        }
    }

    #[test]
    fn two_disks_two_components() {
        let mesh = generate_disk_mesh(0.1, 128, 32).unwrap();
        let spec = PhantomSpec::homogeneous(200.0)
            .with(disk(0.04, 0.0, 0.02), 1.0)
            .with(disk(-0.04, 0.0, 0.02), 1.0);
        let truth = truth_indicator(&mesh, &spec).unwrap();
        assert_eq!(mesh.component_count(&truth), 2);
    }

    #[test]
    fn polygon_square() {
        let sq = Shape::Polygon {
            vertices: vec![[-0.01, -0.01], [0.01, -0.01], [0.01, 0.01], [-0.01, 0.01]],
        };
        assert!(sq.contains([0.0, 0.0]));
        assert!(sq.contains([0.009, -0.009]));
        assert!(!sq.contains([0.011, 0.0]));
    }

    #[test]
    fn rejects_invalid_specs() {
        let mesh = generate_disk_mesh(0.1, 32, 8).unwrap();
        // overlapping with different sigma
        let spec = PhantomSpec::homogeneous(200.0)
            .with(disk(0.0, 0.0, 0.03), 1.0)
            .with(disk(0.01, 0.0, 0.03), 2.0);
        assert!(build_conductivity(&mesh, &spec).is_err());
        // outside the disk
        let spec = PhantomSpec::homogeneous(200.0).with(disk(0.08, 0.0, 0.03), 1.0);
        assert!(truth_indicator(&mesh, &spec).is_err());
        // not well separated
        let spec = PhantomSpec::homogeneous(200.0)
            .with(disk(0.03, 0.0, 0.01), 1.0)
            .with(disk(-0.03, 0.0, 0.01), 300.0);
        assert!(spec.validate().is_err());
        // non-positive
        assert!(PhantomSpec::homogeneous(-1.0).validate().is_err());
        let spec = PhantomSpec::homogeneous(200.0).with(disk(0.0, 0.0, 0.01), 0.0);
        assert!(spec.validate().is_err());
    }

    #[test]
    fn overlap_with_equal_sigma_is_fine() {
        let mesh = generate_disk_mesh(0.1, 32, 8).unwrap();
        let spec = PhantomSpec::homogeneous(200.0)
            .with(disk(0.0, 0.0, 0.03), 1.0)
            .with(disk(0.01, 0.0, 0.03), 1.0);
        assert!(build_conductivity(&mesh, &spec).is_ok());
    }
}
