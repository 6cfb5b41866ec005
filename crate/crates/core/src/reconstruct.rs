//! Kernel-method reconstruction: drive the reference body with the last
//! reliable eigenvector of `Lambda_D - Lambda_bg`, then keep the elements whose
//! power density lies below the threshold that spends the budget `epsilon*`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::{energy_identity_defect, power_density, NeumannSolver, PowerDensityField};
use crate::mesh::{Mesh, RegionIndicator};
use crate::ntd::{difference_operator, BoundaryOperator, NtDMatrix};
use crate::phantom::ConductivityField;
use crate::spectral::{decompose_operator, select_eigenindex, SpectralDecomposition};
use crate::strategy::{Registry, SigmaBounds};

pub const DEFAULT_SAFETY: f64 = 2.0;
pub const DEFAULT_CLUSTER_TOLERANCE: f64 = 0.05;

fn default_rule() -> String {
    "eigenvalue".into()
}
fn default_safety() -> f64 {
    DEFAULT_SAFETY
}
fn default_true() -> bool {
    true
}
fn default_cluster_tolerance() -> f64 {
    DEFAULT_CLUSTER_TOLERANCE
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelConfig {
    pub sigma_bounds: SigmaBounds,
    /// Registered name of the epsilon rule.
    #[serde(default = "default_rule")]
    pub epsilon_rule: String,
    /// Value used by the `explicit` rule.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon_value: Option<f64>,
    /// Eigenvalues must exceed `safety * max(delta, machine floor)`.
    #[serde(default = "default_safety")]
    pub safety: f64,
    /// Intersect the regions obtained from every member of a near-degenerate cluster.
    #[serde(default = "default_true")]
    pub intersect_clusters: bool,
    #[serde(default = "default_cluster_tolerance")]
    pub cluster_tolerance: f64,
}

impl KernelConfig {
    pub fn new(sigma_bounds: SigmaBounds) -> Self {
        Self {
            sigma_bounds,
            epsilon_rule: default_rule(),
            epsilon_value: None,
            safety: DEFAULT_SAFETY,
            intersect_clusters: true,
            cluster_tolerance: DEFAULT_CLUSTER_TOLERANCE,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.sigma_bounds.validate()?;
        Registry::default().epsilon_rule(&self.epsilon_rule, self.epsilon_value)?;
        if !(self.safety >= 1.0 && self.safety.is_finite()) {
            return Err(Error::Config(format!("safety must be >= 1, got {}", self.safety)));
        }
        if !(self.cluster_tolerance >= 0.0 && self.cluster_tolerance < 1.0) {
            return Err(Error::Config(format!(
                "cluster_tolerance must lie in [0, 1), got {}",
                self.cluster_tolerance
            )));
        }
        Ok(())
    }
}

/// `epsilon*` for an eigenvalue and noise level under the configured rule.
pub fn choose_epsilon(lambda: f64, delta: f64, cfg: &KernelConfig) -> Result<f64> {
    Registry::default()
        .epsilon_rule(&cfg.epsilon_rule, cfg.epsilon_value)?
        .choose(lambda, delta, &cfg.sigma_bounds)
}

/// Bounds on the power dissipated inside the anomaly for a unit-norm drive
/// scaled to `g_norm_sq`.
pub fn power_bounds(lambda: f64, delta: f64, bounds: &SigmaBounds, g_norm_sq: f64) -> (f64, f64) {
    let (lo, hi) = bounds.epsilon_interval(lambda, delta);
    (lo * g_norm_sq, hi * g_norm_sq)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerCurvePoint {
    pub element: usize,
    pub density: f64,
    pub cumulative: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlphaSolution {
    pub alpha: f64,
    /// Elements in ascending density order (ties by index) with running power.
    pub curve: Vec<PowerCurvePoint>,
}

/// Smallest `alpha` whose sublevel set `{p < alpha}` spends at most `target`
/// while the next element would overshoot it.
pub fn solve_alpha(mesh: &Mesh, p: &PowerDensityField, target: f64) -> Result<AlphaSolution> {
    let n = mesh.n_triangles();
    if p.per_element.len() != n {
        return Err(Error::SizeMismatch {
            what: "power density",
            expected: n,
            got: p.per_element.len(),
        });
    }
    if !(target >= 0.0) {
        return Err(Error::Config(format!("power target must be >= 0, got {target}")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| p.per_element[a].total_cmp(&p.per_element[b]).then(a.cmp(&b)));
    let mut running = 0.0;
    let curve: Vec<PowerCurvePoint> = order
        .iter()
        .map(|&t| {
            running += p.per_element[t] * mesh.area(t);
            PowerCurvePoint {
                element: t,
                density: p.per_element[t],
                cumulative: running,
            }
        })
        .collect();
    let total = running;
    if target > total * (1.0 + 1e-9) {
        return Err(Error::TargetExceedsPower { target, total });
    }
    let alpha = if target == 0.0 {
        0.0
    } else if let Some(pt) = curve.iter().find(|pt| pt.cumulative > target) {
        pt.density
    } else {
        curve.last().map_or(0.0, |pt| pt.density).next_up()
    };
    Ok(AlphaSolution { alpha, curve })
}

/// `{T : p_T < alpha}`.
pub fn sublevel_region(p: &PowerDensityField, alpha: f64) -> RegionIndicator {
    RegionIndicator {
        per_element: p.per_element.iter().map(|&x| x < alpha).collect(),
    }
}

#[derive(Debug, Clone)]
pub struct ReconstructionResult {
    pub region: RegionIndicator,
    pub alpha_star: f64,
    pub epsilon_star: f64,
    /// 1-based index of the selected eigenpair.
    pub k_star: usize,
    pub lambda_k_star: f64,
    pub delta: f64,
    pub power_curve: Vec<PowerCurvePoint>,
    /// Power density of the reference solution driven by eigenvector `k_star`.
    pub power: PowerDensityField,
    /// `||g||^2` of that drive.
    pub drive_norm_sq: f64,
    /// 1-based indices of the cluster members whose regions were intersected.
    pub cluster: Vec<usize>,
    pub spectrum: Vec<f64>,
    /// Worst relative energy-identity gap over the forward solves of the run.
    pub energy_defect: f64,
}

struct MemberRegion {
    region: RegionIndicator,
    alpha: AlphaSolution,
    power: PowerDensityField,
    norm_sq: f64,
    energy_defect: f64,
}

fn reconstruct_member(
    solver: &NeumannSolver<'_>,
    sigma_bg: &ConductivityField,
    dec: &SpectralDecomposition,
    op: &dyn BoundaryOperator,
    index: usize,
    epsilon: f64,
) -> Result<MemberRegion> {
    let mesh = solver.mesh();
    let g = dec.current(op.basis(), index);
    let norm_sq = g.l2_norm(op.basis().lengths()).powi(2);
    let sol = solver.solve(&g)?;
    let power = power_density(mesh, sigma_bg, &sol.nodal_u)?;
    let alpha = solve_alpha(mesh, &power, epsilon * norm_sq)?;
    Ok(MemberRegion {
        region: sublevel_region(&power, alpha.alpha),
        energy_defect: energy_identity_defect(mesh, &power, &sol),
        alpha,
        power,
        norm_sq,
    })
}

/// Full pipeline from a measured and a reference NtD matrix to a region.
pub fn run_kernel_method(
    lam_d: &NtDMatrix,
    lam_bg: &NtDMatrix,
    delta: f64,
    cfg: &KernelConfig,
    mesh: &Mesh,
    sigma_bg: &ConductivityField,
) -> Result<ReconstructionResult> {
    cfg.validate()?;
    if !(delta >= 0.0 && delta.is_finite()) {
        return Err(Error::Config(format!("delta must be >= 0, got {delta}")));
    }
    let diff = difference_operator(lam_d, lam_bg)?;
    if diff.basis.n_edges() != mesh.n_boundary() {
        return Err(Error::BasisMismatch(format!(
            "operator basis has {} edges, mesh has {}",
            diff.basis.n_edges(),
            mesh.n_boundary()
        )));
    }
    let dec = decompose_operator(&diff)?;
    let k_star = select_eigenindex(&dec, delta, cfg.safety)?;
    let index = k_star - 1;
    let lambda = dec.eigenvalues[index];
    let epsilon = choose_epsilon(lambda, delta, cfg)?;

    let solver = NeumannSolver::new(mesh, sigma_bg)?;
    let primary = reconstruct_member(&solver, sigma_bg, &dec, &diff, index, epsilon)?;
    let members = if cfg.intersect_clusters {
        let floor = cfg.safety * delta.max(dec.machine_floor());
        dec.cluster(index, cfg.cluster_tolerance, floor)
    } else {
        vec![index]
    };
    let mut region = primary.region.clone();
    let mut energy_defect = primary.energy_defect;
    for &j in members.iter().filter(|&&j| j != index) {
        let other = reconstruct_member(&solver, sigma_bg, &dec, &diff, j, epsilon)?;
        region = region.intersection(&other.region);
        energy_defect = energy_defect.max(other.energy_defect);
    }
    Ok(ReconstructionResult {
        region,
        alpha_star: primary.alpha.alpha,
        epsilon_star: epsilon,
        k_star,
        lambda_k_star: lambda,
        delta,
        power_curve: primary.alpha.curve,
        power: primary.power,
        drive_norm_sq: primary.norm_sq,
        cluster: members.iter().map(|j| j + 1).collect(),
        spectrum: dec.eigenvalues,
        energy_defect,
    })
}

/// `|a ∩ b| / |a ∪ b|` by area; two empty regions score 1.
pub fn jaccard(a: &RegionIndicator, b: &RegionIndicator, mesh: &Mesh) -> Result<f64> {
    let n = mesh.n_triangles();
    if a.len() != n || b.len() != n {
        return Err(Error::SizeMismatch {
            what: "region indicator",
            expected: n,
            got: if a.len() != n { a.len() } else { b.len() },
        });
    }
    let (mut inter, mut union) = (0.0, 0.0);
    for t in 0..n {
        let (x, y) = (a.per_element[t], b.per_element[t]);
        if x || y {
            let area = mesh.area(t);
            union += area;
            if x && y {
                inter += area;
            }
        }
    }
    Ok(if union == 0.0 { 1.0 } else { inter / union })
}

/// Radius of the disk with the same area as the region.
pub fn equivalent_radius(region: &RegionIndicator, mesh: &Mesh) -> f64 {
    (region.area(mesh) / std::f64::consts::PI).sqrt()
}
