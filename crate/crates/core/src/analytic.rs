//! Closed forms for rotationally symmetric configurations.
//!
//! Two drive normalizations appear here. The `cos(n theta) / sqrt(pi)` drive
//! (unit norm in the angle measure) gives the classical power density
//! `(1 / (sigma pi)) (r/R)^(2n-2)` and the radius formula
//! `R (n sigma lambda / R^2)^(1/2n)`. Drives normalized in arc length,
//! `cos(n theta) / sqrt(pi R)`, which is what the finite element pipeline
//! uses, divide the power by `R` and give `R (n sigma lambda / R)^(1/2n)`.
//! The two radius formulas share the limit `r_i` as `n` grows; all lengths are
//! in meters.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConcentricSpec {
    pub r_i: f64,
    pub radius: f64,
    pub sigma_a: f64,
    pub sigma_bg: f64,
}

impl ConcentricSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.r_i > 0.0 && self.r_i < self.radius) {
            return Err(Error::Config(format!(
                "concentric spec needs 0 < r_i < R, got r_i={}, R={}",
                self.r_i, self.radius
            )));
        }
        if !(self.sigma_a > 0.0 && self.sigma_bg > 0.0) {
            return Err(Error::Config("conductivities must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrownSpec {
    pub r1: f64,
    pub r2: f64,
    pub r3: f64,
    pub sigma_a: f64,
    pub sigma_bg: f64,
}

impl CrownSpec {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.r1 && self.r1 < self.r2 && self.r2 < self.r3) {
            return Err(Error::Config(format!(
                "crown spec needs 0 < r1 < r2 < r3, got {}, {}, {}",
                self.r1, self.r2, self.r3
            )));
        }
        if !(self.sigma_a > 0.0 && self.sigma_bg > 0.0) {
            return Err(Error::Config("conductivities must be positive".into()));
        }
        Ok(())
    }
}

/// Eigenvalue `R / (sigma n)` of the homogeneous-disk NtD map on `cos(n theta)`.
pub fn disk_ntd_eigenvalue(n: u32, radius: f64, sigma: f64) -> f64 {
    radius / (sigma * n as f64)
}

/// Eigenvalue of `Lambda_D - Lambda_bg` for a centred disk anomaly.
pub fn concentric_lambda(n: u32, spec: &ConcentricSpec) -> f64 {
    let ni = n as i32;
    let (r, ri) = (spec.radius, spec.r_i);
    let (sa, sb) = (spec.sigma_a, spec.sigma_bg);
    let inner = (ri / r).powi(ni);
    let outer = (r / ri).powi(ni);
    r / (sb * n as f64) * 2.0 * inner * (sb - sa) / (inner * (sa - sb) + outer * (sa + sb))
}

/// `sigma |grad u|^2` for the angle-normalized drive `cos(n theta) / sqrt(pi)`.
pub fn concentric_power_density(n: u32, r: f64, radius: f64, sigma_bg: f64) -> f64 {
    (r / radius).powi(2 * n as i32 - 2) / (sigma_bg * PI)
}

/// Power density for the arc-length-normalized drive `cos(n theta) / sqrt(pi R)`.
pub fn concentric_power_density_unit(n: u32, r: f64, radius: f64, sigma_bg: f64) -> f64 {
    concentric_power_density(n, r, radius, sigma_bg) / radius
}

/// Power absorbed by the centred anomaly disk under the arc-length-normalized drive:
/// `r_i^(2n) / (sigma_bg n R^(2n-1))`.
pub fn concentric_anomaly_power(n: u32, spec: &ConcentricSpec) -> f64 {
    let ni = n as i32;
    spec.r_i.powi(2 * ni) / (spec.sigma_bg * n as f64 * spec.radius.powi(2 * ni - 1))
}

/// `R (n sigma_bg lambda / R^2)^(1 / 2n)`.
pub fn reconstructed_radius(n: u32, lambda: f64, radius: f64, sigma_bg: f64) -> f64 {
    radius * (n as f64 * sigma_bg * lambda / (radius * radius)).powf(0.5 / n as f64)
}

/// `R (n sigma_bg lambda / R)^(1 / 2n)`: radius of the disk that absorbs power
/// `lambda` under a unit arc-length-normalized drive.
pub fn reconstructed_radius_unit(n: u32, lambda: f64, radius: f64, sigma_bg: f64) -> f64 {
    radius * (n as f64 * sigma_bg * lambda / radius).powf(0.5 / n as f64)
}

/// Eigenvalue of `Lambda_D - Lambda_bg` for the crown `r1 < r < r2` inside a disk of radius `r3`.
pub fn crown_lambda(n: u32, spec: &CrownSpec) -> f64 {
    let ni = n as i32;
    let CrownSpec {
        r1,
        r2,
        r3,
        sigma_a: sd,
        sigma_bg: sb,
    } = *spec;
    let p = |x: f64| x.powi(ni);
    let numerator = 2.0 * p(r2 / r3) * (p(r1 / r2) - p(r2 / r1)) * (sb * sb - sd * sd);
    let d = p(r1 / r2) * (p(r3 / r2) * (sd - sb).powi(2) + p(r2 / r3) * (sd * sd - sb * sb))
        - p(r2 / r1) * (p(r3 / r2) * (sd + sb).powi(2) + p(r2 / r3) * (sd * sd - sb * sb));
    r3 / (n as f64 * sb) * numerator / d
}

/// `r3 (n sigma_bg lambda / r3^2)^(1 / 2n)`.
pub fn crown_outer_radius(n: u32, lambda: f64, r3: f64, sigma_bg: f64) -> f64 {
    reconstructed_radius(n, lambda, r3, sigma_bg)
}

/// Arc-length-normalized counterpart of [`crown_outer_radius`].
pub fn crown_outer_radius_unit(n: u32, lambda: f64, r3: f64, sigma_bg: f64) -> f64 {
    reconstructed_radius_unit(n, lambda, r3, sigma_bg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};

    const FIG: ConcentricSpec = ConcentricSpec {
        r_i: 0.04,
        radius: 0.1,
        sigma_a: 1.0,
        sigma_bg: 200.0,
    };

    /// Independent oracle: match u = A r^n inside, B r^n + C r^-n outside,
    /// with continuity of u and sigma u_r at r_i and unit flux at R.
    fn concentric_oracle(n: u32, s: &ConcentricSpec) -> f64 {
        let nf = n as f64;
        let (ri, r) = (s.r_i, s.radius);
        let m = DMatrix::from_row_slice(
            3,
            3,
            &[
                ri.powf(nf),
                -ri.powf(nf),
                -ri.powf(-nf),
                s.sigma_a * ri.powf(nf - 1.0),
                -s.sigma_bg * ri.powf(nf - 1.0),
                s.sigma_bg * ri.powf(-nf - 1.0),
                0.0,
                s.sigma_bg * nf * r.powf(nf - 1.0),
                -s.sigma_bg * nf * r.powf(-nf - 1.0),
            ],
        );
        let x = m.lu().solve(&DVector::from_column_slice(&[0.0, 0.0, 1.0])).unwrap();
        x[1] * r.powf(nf) + x[2] * r.powf(-nf) - disk_ntd_eigenvalue(n, r, s.sigma_bg)
    }

    /// Same construction with three regions for the crown.
    fn crown_oracle(n: u32, s: &CrownSpec) -> f64 {
        let nf = n as f64;
        let (r1, r2, r3, sa, sb) = (s.r1, s.r2, s.r3, s.sigma_a, s.sigma_bg);
        let pw = |x: f64, e: f64| x.powf(e);
        #[rustfmt::skip]
        let m = DMatrix::from_row_slice(5, 5, &[
            pw(r1, nf), -pw(r1, nf), -pw(r1, -nf), 0.0, 0.0,
            sb * pw(r1, nf - 1.0), -sa * pw(r1, nf - 1.0), sa * pw(r1, -nf - 1.0), 0.0, 0.0,
            0.0, pw(r2, nf), pw(r2, -nf), -pw(r2, nf), -pw(r2, -nf),
            0.0, sa * pw(r2, nf - 1.0), -sa * pw(r2, -nf - 1.0), -sb * pw(r2, nf - 1.0), sb * pw(r2, -nf - 1.0),
            0.0, 0.0, 0.0, sb * nf * pw(r3, nf - 1.0), -sb * nf * pw(r3, -nf - 1.0),
        ]);
        let x = m
            .lu()
            .solve(&DVector::from_column_slice(&[0.0, 0.0, 0.0, 0.0, 1.0]))
            .unwrap();
        x[3] * pw(r3, nf) + x[4] * pw(r3, -nf) - disk_ntd_eigenvalue(n, r3, sb)
    }

    #[test]
    fn disk_eigenvalues() {
        assert!((disk_ntd_eigenvalue(1, 0.1, 200.0) - 5.0e-4).abs() < 1e-18);
        assert!((disk_ntd_eigenvalue(2, 0.1, 200.0) - 2.5e-4).abs() < 1e-18);
        let v: Vec<f64> = (1..50).map(|n| disk_ntd_eigenvalue(n, 0.1, 200.0)).collect();
        assert!(v.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn concentric_leading_value() {
        // 5e-4 * 159.2 / 422.9
        let expect = 5e-4 * (2.0 * 0.4 * 199.0) / (0.4 * -199.0 + 2.5 * 201.0);
        let got = concentric_lambda(1, &FIG);
        assert!((got - expect).abs() < 1e-18);
        assert!((got - 1.8822e-4).abs() < 5e-8);
    }

    #[test]
    fn concentric_matches_independent_oracle() {
        for n in 1..=12 {
            let a = concentric_lambda(n, &FIG);
            let b = concentric_oracle(n, &FIG);
            // the oracle subtracts Lambda_bg, so its absolute accuracy scales with it
            let tol = 1e-9 * a.abs() + 1e-12 * disk_ntd_eigenvalue(n, FIG.radius, FIG.sigma_bg);
            assert!((a - b).abs() <= tol, "n={n}: {a} vs {b}");
        }
    }

    #[test]
    fn concentric_limits() {
        let same = ConcentricSpec { sigma_a: 200.0, ..FIG };
        assert_eq!(concentric_lambda(3, &same), 0.0);
        let tiny = ConcentricSpec { r_i: 1e-6, ..FIG };
        assert!(concentric_lambda(1, &tiny) < 1e-12);
        let v: Vec<f64> = (1..30).map(|n| concentric_lambda(n, &FIG)).collect();
        assert!(v.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn power_density_values() {
        let c = 1.0 / (200.0 * PI);
        assert!((concentric_power_density(1, 0.03, 0.1, 200.0) - c).abs() < 1e-18);
        assert_eq!(concentric_power_density(2, 0.0, 0.1, 200.0), 0.0);
        assert!((concentric_power_density(3, 0.1, 0.1, 200.0) - c).abs() < 1e-18);
    }

    #[test]
    fn anomaly_power_integrates_density() {
        // midpoint quadrature of 2 pi r p(r) over [0, r_i]
        for n in 1..=6u32 {
            let steps = 20000;
            let h = FIG.r_i / steps as f64;
            let q: f64 = (0..steps)
                .map(|k| {
                    let r = (k as f64 + 0.5) * h;
                    2.0 * PI * r * concentric_power_density_unit(n, r, FIG.radius, FIG.sigma_bg) * h
                })
                .sum();
            let exact = concentric_anomaly_power(n, &FIG);
            assert!((q - exact).abs() < 1e-6 * exact);
        }
    }

    #[test]
    fn sandwich_bounds_hold_analytically() {
        let kl = (FIG.sigma_bg - FIG.sigma_a) / FIG.sigma_bg;
        let ku = (FIG.sigma_bg - FIG.sigma_a) / FIG.sigma_a;
        for n in 1..=8 {
            let lam = concentric_lambda(n, &FIG);
            let p = concentric_anomaly_power(n, &FIG);
            assert!(kl * p <= lam && lam <= ku * p, "n={n}");
        }
    }

    #[test]
    fn radius_sequence() {
        let r1 = reconstructed_radius(1, concentric_lambda(1, &FIG), 0.1, 200.0);
        assert!((r1 - 0.1940).abs() < 5e-4, "{r1}");
        let r10 = reconstructed_radius(10, concentric_lambda(10, &FIG), 0.1, 200.0);
        assert!((r10 - 0.0464).abs() < 5e-4, "{r10}");
        let r20 = reconstructed_radius(20, concentric_lambda(20, &FIG), 0.1, 200.0);
        assert!((r20 - 0.0431).abs() < 5e-4, "{r20}");
        // asymptote r_i (2c / R)^(1/2n)
        let c = 199.0 / 201.0;
        assert!((r20 - 0.04 * (2.0 * c / 0.1f64).powf(1.0 / 40.0)).abs() < 1e-4);
    }

    #[test]
    fn unit_radius_recovers_disk_absorbing_lambda() {
        for n in 1..=8u32 {
            let p = concentric_anomaly_power(n, &FIG);
            let r = reconstructed_radius_unit(n, p, FIG.radius, FIG.sigma_bg);
            assert!((r - FIG.r_i).abs() < 1e-12);
        }
    }

    #[test]
    fn crown_matches_independent_oracle() {
        let s = CrownSpec {
            r1: 0.02,
            r2: 0.04,
            r3: 0.1,
            sigma_a: 1.0,
            sigma_bg: 200.0,
        };
        for n in 1..=10 {
            let a = crown_lambda(n, &s);
            let b = crown_oracle(n, &s);
            assert!(a > 0.0);
            let tol = 1e-9 * b.abs() + 1e-12 * disk_ntd_eigenvalue(n, s.r3, s.sigma_bg);
            assert!((a - b).abs() <= tol, "n={n}: {a} vs {b}");
        }
    }

    #[test]
    fn crown_limits() {
        let s = CrownSpec {
            r1: 0.02,
            r2: 0.04,
            r3: 0.1,
            sigma_a: 1.0,
            sigma_bg: 200.0,
        };
        let thin = CrownSpec { r1: 0.04 - 1e-9, ..s };
        assert!(crown_lambda(2, &thin).abs() < 1e-10);
        let same = CrownSpec { sigma_a: 200.0, ..s };
        assert_eq!(crown_lambda(2, &same), 0.0);
        let r20 = crown_outer_radius(20, crown_lambda(20, &s), s.r3, s.sigma_bg);
        assert!((r20 - s.r2).abs() / s.r2 < 0.15, "{r20}");
        let seq: Vec<f64> = (10..=40)
            .map(|n| crown_outer_radius(n, crown_lambda(n, &s), s.r3, s.sigma_bg))
            .collect();
        assert!(seq.windows(2).all(|w| w[1] < w[0]));
        assert!((seq.last().unwrap() - s.r2).abs() < (seq[0] - s.r2).abs());
    }
}
