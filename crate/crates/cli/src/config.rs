//! Experiment configuration: TOML with unit-bearing quantities, or the
//! `config` block of a previous run's `manifest.json`.

use std::path::{Path, PathBuf};

use kernel_ert::phantom::{Anomaly, PhantomSpec, Shape};
use kernel_ert::{Error, KernelConfig, NoiseSpec, Result, SigmaBounds};
use serde::{Deserialize, Serialize};

use crate::units::{Angle, Conductivity, Length};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Forward,
    Ntd,
    Spectrum,
    Reconstruct,
    Analytic,
    NoiseSweep,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Forward => "forward",
            Mode::Ntd => "ntd",
            Mode::Spectrum => "spectrum",
            Mode::Reconstruct => "reconstruct",
            Mode::Analytic => "analytic",
            Mode::NoiseSweep => "noise-sweep",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshConfig {
    pub radius: Length,
    #[serde(default = "default_boundary")]
    pub n_boundary: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_rings: Option<usize>,
}

fn default_boundary() -> usize {
    256
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "lowercase", deny_unknown_fields)]
pub enum ShapeConfig {
    Disk {
        center: [Length; 2],
        radius: Length,
    },
    Ellipse {
        center: [Length; 2],
        semi_axes: [Length; 2],
        #[serde(default = "zero_angle")]
        rotation: Angle,
    },
    Annulus {
        center: [Length; 2],
        r_inner: Length,
        r_outer: Length,
    },
    Polygon {
        vertices: Vec<[Length; 2]>,
    },
}

fn zero_angle() -> Angle {
    Angle::new(0.0)
}

fn point(p: &[Length; 2]) -> [f64; 2] {
    [p[0].value, p[1].value]
}

impl ShapeConfig {
    pub fn to_shape(&self) -> Shape {
        match self {
            ShapeConfig::Disk { center, radius } => Shape::Disk {
                center: point(center),
                radius: radius.value,
            },
            ShapeConfig::Ellipse {
                center,
                semi_axes,
                rotation,
            } => Shape::Ellipse {
                center: point(center),
                semi_axes: point(semi_axes),
                rotation: rotation.value,
            },
            ShapeConfig::Annulus {
                center,
                r_inner,
                r_outer,
            } => Shape::Annulus {
                center: point(center),
                r_inner: r_inner.value,
                r_outer: r_outer.value,
            },
            ShapeConfig::Polygon { vertices } => Shape::Polygon {
                vertices: vertices.iter().map(point).collect(),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnomalyConfig {
    #[serde(flatten)]
    pub shape: ShapeConfig,
    pub sigma: Conductivity,
}

/// Splits off `sigma`, then parses the rest as a shape so that misspelt
/// shape fields are reported instead of ignored.
impl<'de> Deserialize<'de> for AnomalyConfig {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let mut table = serde_json::Map::<String, serde_json::Value>::deserialize(d)?;
        let sigma = table.remove("sigma").ok_or_else(|| D::Error::missing_field("sigma"))?;
        Ok(Self {
            sigma: Conductivity::deserialize(sigma).map_err(D::Error::custom)?,
            shape: ShapeConfig::deserialize(serde_json::Value::Object(table)).map_err(D::Error::custom)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhantomConfig {
    pub background_sigma: Conductivity,
    #[serde(default)]
    pub anomalies: Vec<AnomalyConfig>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    #[serde(default)]
    pub eta: f64,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsConfig {
    pub anomaly_min: Conductivity,
    pub anomaly_max: Conductivity,
    pub background_min: Conductivity,
    pub background_max: Conductivity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSection {
    /// Defaults to the exact ranges of the phantom.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_bounds: Option<BoundsConfig>,
    #[serde(default = "default_rule")]
    pub epsilon_rule: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon_value: Option<f64>,
    #[serde(default = "default_safety")]
    pub safety: f64,
    #[serde(default = "default_true")]
    pub intersect_clusters: bool,
    #[serde(default = "default_cluster_tolerance")]
    pub cluster_tolerance: f64,
    /// Registered noise-floor estimator used to obtain delta.
    #[serde(default = "default_estimator")]
    pub noise_estimator: String,
}

fn default_rule() -> String {
    "eigenvalue".into()
}
fn default_safety() -> f64 {
    kernel_ert::reconstruct::DEFAULT_SAFETY
}
fn default_true() -> bool {
    true
}
fn default_cluster_tolerance() -> f64 {
    kernel_ert::reconstruct::DEFAULT_CLUSTER_TOLERANCE
}
fn default_estimator() -> String {
    "known".into()
}

impl Default for KernelSection {
    fn default() -> Self {
        Self {
            sigma_bounds: None,
            epsilon_rule: default_rule(),
            epsilon_value: None,
            safety: default_safety(),
            intersect_clusters: true,
            cluster_tolerance: default_cluster_tolerance(),
            noise_estimator: default_estimator(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PhaseConfig {
    #[default]
    Cos,
    Sin,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForwardConfig {
    #[serde(default = "default_mode_index")]
    pub mode_index: usize,
    #[serde(default)]
    pub phase: PhaseConfig,
    /// Per-edge current densities in A/m, one value per line (or `edge,value`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub current_file: Option<PathBuf>,
    /// 1-based value column of a multi-column current file (after the edge index).
    #[serde(default = "default_column")]
    pub current_column: usize,
}

fn default_column() -> usize {
    1
}

fn default_mode_index() -> usize {
    1
}

impl Default for ForwardConfig {
    fn default() -> Self {
        Self {
            mode_index: 1,
            phase: PhaseConfig::Cos,
            current_file: None,
            current_column: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReconstructSection {
    /// Dense CSV of a measured NtD matrix; replaces the simulated one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub measured_ntd: Option<PathBuf>,
    #[serde(default = "default_raster")]
    pub raster_size: usize,
}

fn default_raster() -> usize {
    256
}

impl Default for ReconstructSection {
    fn default() -> Self {
        Self {
            measured_ntd: None,
            raster_size: default_raster(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalyticConfig {
    #[serde(default = "default_n_max")]
    pub n_max: u32,
}

fn default_n_max() -> u32 {
    40
}

impl Default for AnalyticConfig {
    fn default() -> Self {
        Self { n_max: default_n_max() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(default = "default_etas")]
    pub etas: Vec<f64>,
    /// Seeds `noise.seed .. noise.seed + n_seeds`.
    #[serde(default = "default_n_seeds")]
    pub n_seeds: u64,
}

fn default_etas() -> Vec<f64> {
    vec![1e-4, 1e-3, 1e-2]
}
fn default_n_seeds() -> u64 {
    10
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            etas: default_etas(),
            n_seeds: default_n_seeds(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<Mode>,
    /// Not recorded in manifests: where a run writes does not change what it computes.
    #[serde(default, skip_serializing)]
    pub output_dir: Option<PathBuf>,
    pub mesh: MeshConfig,
    pub phantom: PhantomConfig,
    #[serde(default)]
    pub noise: NoiseConfig,
    #[serde(default)]
    pub kernel: KernelSection,
    #[serde(default)]
    pub forward: ForwardConfig,
    #[serde(default)]
    pub reconstruct: ReconstructSection,
    #[serde(default)]
    pub analytic: AnalyticConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
}

fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| config_err(format!("invalid configuration: {e}")))
    }

    /// Reads TOML, or a JSON manifest whose `config` field holds a configuration.
    /// Relative file references are resolved against the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_err(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg = if path.extension().is_some_and(|e| e == "json") {
            let value: serde_json::Value =
                serde_json::from_str(&text).map_err(|e| config_err(format!("invalid JSON config: {e}")))?;
            let inner = value.get("config").cloned().unwrap_or(value);
            serde_json::from_value(inner).map_err(|e| config_err(format!("invalid configuration: {e}")))?
        } else {
            Self::from_toml(&text)?
        };
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &mut Option<PathBuf>| {
            if let Some(q) = p.as_mut() {
                if q.is_relative() {
                    *q = base.join(&*q);
                }
            }
        };
        resolve(&mut cfg.forward.current_file);
        resolve(&mut cfg.reconstruct.measured_ntd);
        resolve(&mut cfg.output_dir);
        Ok(cfg)
    }

    pub fn n_rings(&self) -> usize {
        self.mesh
            .n_rings
            .unwrap_or_else(|| kernel_ert::mesh::default_rings(self.mesh.n_boundary))
    }

    pub fn phantom_spec(&self) -> PhantomSpec {
        PhantomSpec {
            background_sigma: self.phantom.background_sigma.value,
            anomalies: self
                .phantom
                .anomalies
                .iter()
                .map(|a| Anomaly {
                    shape: a.shape.to_shape(),
                    sigma: a.sigma.value,
                })
                .collect(),
        }
    }

    pub fn noise_spec(&self) -> NoiseSpec {
        NoiseSpec {
            eta: self.noise.eta,
            seed: self.noise.seed,
        }
    }

    pub fn sigma_bounds(&self) -> Result<SigmaBounds> {
        match &self.kernel.sigma_bounds {
            Some(b) => Ok(SigmaBounds {
                anomaly_min: b.anomaly_min.value,
                anomaly_max: b.anomaly_max.value,
                background_min: b.background_min.value,
                background_max: b.background_max.value,
            }),
            None => {
                let spec = self.phantom_spec();
                let (lo, hi) = spec
                    .anomaly_range()
                    .ok_or_else(|| config_err("kernel.sigma_bounds is required when the phantom has no anomalies"))?;
                Ok(SigmaBounds {
                    anomaly_min: lo,
                    anomaly_max: hi,
                    background_min: spec.background_sigma,
                    background_max: spec.background_sigma,
                })
            }
        }
    }

    pub fn kernel_config(&self) -> Result<KernelConfig> {
        let k = &self.kernel;
        let cfg = KernelConfig {
            sigma_bounds: self.sigma_bounds()?,
            epsilon_rule: k.epsilon_rule.clone(),
            epsilon_value: k.epsilon_value,
            safety: k.safety,
            intersect_clusters: k.intersect_clusters,
            cluster_tolerance: k.cluster_tolerance,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Checks every invariant, naming the offending field.
    pub fn validate(&self) -> Result<()> {
        if !(self.mesh.radius.value > 0.0) {
            return Err(config_err(format!(
                "mesh.radius must be positive, got {:?}",
                self.mesh.radius
            )));
        }
        let nb = self.mesh.n_boundary;
        if nb < 8 || !nb.is_multiple_of(4) {
            return Err(config_err(format!(
                "mesh.n_boundary must be >= 8 and divisible by 4, got {nb}"
            )));
        }
        let rings = self.n_rings();
        if rings == 0 || rings > nb / 4 {
            return Err(config_err(format!(
                "mesh.n_rings must lie in 1..={}, got {rings}",
                nb / 4
            )));
        }
        if !(self.phantom.background_sigma.value > 0.0) {
            return Err(config_err(format!(
                "phantom.background_sigma must be positive, got {:?}",
                self.phantom.background_sigma
            )));
        }
        for (i, a) in self.phantom.anomalies.iter().enumerate() {
            if !(a.sigma.value > 0.0) {
                return Err(config_err(format!(
                    "phantom.anomalies[{i}].sigma must be positive, got {:?}",
                    a.sigma
                )));
            }
        }
        let spec = self.phantom_spec();
        spec.validate().map_err(|e| config_err(format!("phantom: {e}")))?;
        for (i, a) in spec.anomalies.iter().enumerate() {
            if a.shape.max_extent() > self.mesh.radius.value {
                return Err(config_err(format!(
                    "phantom.anomalies[{i}] extends outside the disk of radius {:?}",
                    self.mesh.radius
                )));
            }
        }
        if !(self.noise.eta >= 0.0 && self.noise.eta.is_finite()) {
            return Err(config_err(format!("noise.eta must be >= 0, got {}", self.noise.eta)));
        }
        if self.kernel.sigma_bounds.is_some() || !spec.anomalies.is_empty() {
            self.kernel_config()
                .map_err(|e| config_err(format!("kernel: {}", strip(&e))))?;
        }
        kernel_ert::Registry::default()
            .noise_floor(&self.kernel.noise_estimator)
            .map_err(|e| config_err(format!("kernel.noise_estimator: {}", strip(&e))))?;
        if self.forward.mode_index == 0 || self.forward.mode_index >= nb / 2 {
            return Err(config_err(format!(
                "forward.mode_index must lie in 1..{}, got {}",
                nb / 2,
                self.forward.mode_index
            )));
        }
        if !(16..=4096).contains(&self.reconstruct.raster_size) {
            return Err(config_err(format!(
                "reconstruct.raster_size must lie in 16..=4096, got {}",
                self.reconstruct.raster_size
            )));
        }
        if self.analytic.n_max == 0 || self.analytic.n_max > 200 {
            return Err(config_err(format!(
                "analytic.n_max must lie in 1..=200, got {}",
                self.analytic.n_max
            )));
        }
        if self.sweep.etas.is_empty() || self.sweep.etas.iter().any(|e| !(*e >= 0.0 && e.is_finite())) {
            return Err(config_err("sweep.etas must be a non-empty list of values >= 0"));
        }
        if self.sweep.n_seeds == 0 {
            return Err(config_err("sweep.n_seeds must be >= 1"));
        }
        Ok(())
    }
}

fn strip(e: &Error) -> String {
    match e {
        Error::Config(m) => m.clone(),
        other => other.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
[mesh]
radius = "2.5 cm"
n_boundary = 64

[phantom]
background_sigma = "200 S/m"

[[phantom.anomalies]]
shape = "disk"
center = ["0 m", "0 m"]
radius = "1 cm"
sigma = "1 S/m"
"#;

    #[test]
    fn parses_and_converts() {
        let cfg = ExperimentConfig::from_toml(BASE).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.mesh.radius.value, 0.025);
        assert_eq!(cfg.n_rings(), 16);
        let b = cfg.sigma_bounds().unwrap();
        assert_eq!((b.anomaly_min, b.background_max), (1.0, 200.0));
    }

    #[test]
    fn negative_sigma_names_field() {
        let text = BASE.replace("\"1 S/m\"", "\"-1 S/m\"");
        let err = ExperimentConfig::from_toml(&text).unwrap().validate().unwrap_err();
        assert!(err.to_string().contains("phantom.anomalies[0].sigma"), "{err}");
    }

    #[test]
    fn misspelt_shape_field_rejected() {
        let text = BASE.replace("radius = \"1 cm\"", "radius = \"1 cm\"\nrotaton = \"3 deg\"");
        let err = ExperimentConfig::from_toml(&text).unwrap_err().to_string();
        assert!(err.contains("rotaton"), "{err}");
        let missing = BASE.replace("sigma = \"1 S/m\"", "");
        assert!(ExperimentConfig::from_toml(&missing).is_err());
        let bare = BASE.replace("sigma = \"1 S/m\"", "sigma = 1");
        let err = ExperimentConfig::from_toml(&bare).unwrap_err().to_string();
        assert!(err.contains("ambiguous"), "{err}");
    }

    #[test]
    fn bare_number_rejected() {
        let text = BASE.replace("radius = \"2.5 cm\"", "radius = 0.025");
        let err = ExperimentConfig::from_toml(&text).unwrap_err().to_string();
        assert!(err.contains("ambiguous"), "{err}");
    }

    #[test]
    fn unknown_field_rejected() {
        let text = format!("{BASE}\n[noise]\nsigma = 3\n");
        assert!(ExperimentConfig::from_toml(&text).is_err());
    }

    #[test]
    fn json_round_trip() {
        let cfg = ExperimentConfig::from_toml(BASE).unwrap();
        let v = serde_json::to_value(&cfg).unwrap();
        let back: ExperimentConfig = serde_json::from_value(v).unwrap();
        assert_eq!(back, cfg);
    }
}
