//! Named, runtime-selectable variants: the rule that picks the power budget
//! `epsilon*` and the estimator for the noise level of a measured operator.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{noise_floor, plateau_estimate, NoiseFloor, SpectralDecomposition};

/// Conductivity ranges of anomaly and background, in S/m.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SigmaBounds {
    pub anomaly_min: f64,
    pub anomaly_max: f64,
    pub background_min: f64,
    pub background_max: f64,
}

impl SigmaBounds {
    /// Exact bounds for piecewise-constant phantoms.
    pub fn exact(anomaly: f64, background: f64) -> Self {
        Self {
            anomaly_min: anomaly,
            anomaly_max: anomaly,
            background_min: background,
            background_max: background,
        }
    }

    /// Requires positive, ordered ranges with the anomaly strictly less conductive.
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.anomaly_min,
            self.anomaly_max,
            self.background_min,
            self.background_max,
        ];
        if all.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::Config(format!("sigma bounds must be positive: {all:?}")));
        }
        if self.anomaly_min > self.anomaly_max || self.background_min > self.background_max {
            return Err(Error::Config("sigma bounds must satisfy min <= max".into()));
        }
        if self.anomaly_max >= self.background_min {
            return Err(Error::Config(format!(
                "sigma bounds not well separated: anomaly max {} must be below background min {}",
                self.anomaly_max, self.background_min
            )));
        }
        Ok(())
    }

    /// `sigma_bg^m - sigma_a^M`.
    pub fn gap(&self) -> f64 {
        self.background_min - self.anomaly_max
    }

    /// `(k_l, k_u)` with `k_l P_D <= <(Lambda_D - Lambda_bg) g, g> <= k_u P_D`, where
    /// `P_D` is the reference power dissipated inside the anomaly.
    pub fn sandwich_constants(&self) -> (f64, f64) {
        (
            self.gap() / self.background_max,
            (self.background_max - self.anomaly_min) / self.anomaly_min,
        )
    }

    /// Admissible `[lower, upper]` range for `epsilon*` given an eigenvalue and the noise level.
    pub fn epsilon_interval(&self, lambda: f64, delta: f64) -> (f64, f64) {
        let gap = self.gap();
        (
            self.anomaly_min / gap * (lambda - delta),
            self.background_max / gap * (lambda + delta),
        )
    }
}

pub trait EpsilonRule: Send + Sync + fmt::Debug {
    fn name(&self) -> &'static str;
    /// Returns `epsilon*`, which must lie in the admissible interval.
    fn choose(&self, lambda: f64, delta: f64, bounds: &SigmaBounds) -> Result<f64>;
}

fn checked_interval(lambda: f64, delta: f64, bounds: &SigmaBounds) -> Result<(f64, f64)> {
    bounds.validate()?;
    if !(delta >= 0.0) || !(lambda > 0.0) || lambda < delta {
        return Err(Error::EigenpairUnusable {
            lower: f64::NAN,
            upper: f64::NAN,
        });
    }
    let (lower, upper) = bounds.epsilon_interval(lambda, delta);
    if lower > upper {
        return Err(Error::EigenpairUnusable { lower, upper });
    }
    Ok((lower, upper))
}

fn in_interval(eps: f64, (lower, upper): (f64, f64)) -> Result<f64> {
    let slack = 1e-12 * upper.abs();
    if eps < lower - slack || eps > upper + slack {
        Err(Error::EigenpairUnusable { lower, upper })
    } else {
        Ok(eps)
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct EigenvalueRule;

impl EpsilonRule for EigenvalueRule {
    fn name(&self) -> &'static str {
        "eigenvalue"
    }
    fn choose(&self, lambda: f64, delta: f64, bounds: &SigmaBounds) -> Result<f64> {
        let interval = checked_interval(lambda, delta, bounds)?;
        in_interval(lambda, interval)
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct MidpointRule;

impl EpsilonRule for MidpointRule {
    fn name(&self) -> &'static str {
        "midpoint"
    }
    fn choose(&self, lambda: f64, delta: f64, bounds: &SigmaBounds) -> Result<f64> {
        let (lower, upper) = checked_interval(lambda, delta, bounds)?;
        Ok(0.5 * (lower + upper))
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ExplicitRule(pub f64);

impl EpsilonRule for ExplicitRule {
    fn name(&self) -> &'static str {
        "explicit"
    }
    fn choose(&self, lambda: f64, delta: f64, bounds: &SigmaBounds) -> Result<f64> {
        let interval = checked_interval(lambda, delta, bounds)?;
        in_interval(self.0, interval)
    }
}

pub trait NoiseFloorEstimator: Send + Sync + fmt::Debug {
    fn name(&self) -> &'static str;
    fn estimate(&self, dec: &SpectralDecomposition, known: Option<f64>) -> Result<NoiseFloor>;
}

/// Uses the supplied noise norm and fails without one.
#[derive(Debug, Clone, Copy, Default)]
pub struct KnownDelta;

impl NoiseFloorEstimator for KnownDelta {
    fn name(&self) -> &'static str {
        "known"
    }
    fn estimate(&self, dec: &SpectralDecomposition, known: Option<f64>) -> Result<NoiseFloor> {
        match known {
            Some(d) => noise_floor(dec, Some(d)),
            None => Err(Error::Config("noise estimator 'known' needs an explicit delta".into())),
        }
    }
}

/// Median magnitude of the trailing half of the spectrum; ignores any supplied value.
#[derive(Debug, Clone, Copy, Default)]
pub struct TrailingMedian;

impl NoiseFloorEstimator for TrailingMedian {
    fn name(&self) -> &'static str {
        "trailing-median"
    }
    fn estimate(&self, dec: &SpectralDecomposition, _known: Option<f64>) -> Result<NoiseFloor> {
        plateau_estimate(&dec.eigenvalues)
    }
}

type EpsilonFactory = fn(Option<f64>) -> Result<Box<dyn EpsilonRule>>;
type FloorFactory = fn() -> Box<dyn NoiseFloorEstimator>;

/// Name-to-constructor tables for the pluggable strategies.
pub struct Registry {
    epsilon: BTreeMap<&'static str, EpsilonFactory>,
    floor: BTreeMap<&'static str, FloorFactory>,
}

impl Default for Registry {
    fn default() -> Self {
        let mut epsilon: BTreeMap<&'static str, EpsilonFactory> = BTreeMap::new();
        epsilon.insert("eigenvalue", |_| Ok(Box::new(EigenvalueRule)));
        epsilon.insert("midpoint", |_| Ok(Box::new(MidpointRule)));
        epsilon.insert("explicit", |v| match v {
            Some(x) if x.is_finite() && x >= 0.0 => Ok(Box::new(ExplicitRule(x))),
            _ => Err(Error::Config(
                "epsilon rule 'explicit' needs a non-negative value".into(),
            )),
        });
        let mut floor: BTreeMap<&'static str, FloorFactory> = BTreeMap::new();
        floor.insert("known", || Box::new(KnownDelta));
        floor.insert("trailing-median", || Box::new(TrailingMedian));
        Self { epsilon, floor }
    }
}

impl Registry {
    pub fn epsilon_rule(&self, name: &str, value: Option<f64>) -> Result<Box<dyn EpsilonRule>> {
        match self.epsilon.get(name) {
            Some(make) => make(value),
            None => Err(Error::UnknownStrategy {
                name: name.to_string(),
                available: self.epsilon_names().join(", "),
            }),
        }
    }

    pub fn noise_floor(&self, name: &str) -> Result<Box<dyn NoiseFloorEstimator>> {
        self.floor
            .get(name)
            .map(|make| make())
            .ok_or_else(|| Error::UnknownStrategy {
                name: name.to_string(),
                available: self.noise_floor_names().join(", "),
            })
    }

    pub fn epsilon_names(&self) -> Vec<&'static str> {
        self.epsilon.keys().copied().collect()
    }

    pub fn noise_floor_names(&self) -> Vec<&'static str> {
        self.floor.keys().copied().collect()
    }
}
