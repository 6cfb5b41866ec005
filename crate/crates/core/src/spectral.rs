//! Generalized symmetric eigendecomposition `M v = lambda G v`, noise-plateau
//! estimation and selection of the last significant eigenpair.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::fem::BoundaryCurrent;
use crate::ntd::{symmetry_defect, BoundaryOperator, ZeroMeanBasis};

pub const SYMMETRY_TOLERANCE: f64 = 1e-10;
pub const RESIDUAL_TOLERANCE: f64 = 1e-10;
/// Minimum spectrum length for plateau estimation.
pub const MIN_PLATEAU_SAMPLES: usize = 8;

/// Eigenpairs sorted by non-increasing eigenvalue; eigenvectors are G-orthonormal.
#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    pub eigenvalues: Vec<f64>,
    /// Column k holds the coordinates of eigenvector k.
    pub vectors: DMatrix<f64>,
    pub gram_tag: String,
}

impl SpectralDecomposition {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn vector(&self, k: usize) -> DVector<f64> {
        self.vectors.column(k).into_owned()
    }

    /// Eigenvector k as a per-edge boundary current.
    pub fn current(&self, basis: &ZeroMeanBasis, k: usize) -> BoundaryCurrent {
        basis.current(&self.vector(k))
    }

    /// Numerical noise level of a decomposition of a (nominally) PSD operator:
    /// the magnitude of the most negative eigenvalue, bounded below by a few ulps
    /// of the largest one.
    pub fn machine_floor(&self) -> f64 {
        let n = self.eigenvalues.len() as f64;
        let max = self.eigenvalues.iter().fold(0.0f64, |m, l| m.max(l.abs()));
        let min = self.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
        let negative = if min < 0.0 { -min } else { 0.0 };
        negative.max(n * f64::EPSILON * max)
    }

    /// Indices around `index` whose eigenvalues lie within `rel_tol` of it and above `floor`.
    pub fn cluster(&self, index: usize, rel_tol: f64, floor: f64) -> Vec<usize> {
        let lam = self.eigenvalues[index];
        let near = |j: usize| {
            let l = self.eigenvalues[j];
            l > floor && (l - lam).abs() <= rel_tol * lam.abs()
        };
        let mut lo = index;
        while lo > 0 && near(lo - 1) {
            lo -= 1;
        }
        let mut hi = index;
        while hi + 1 < self.len() && near(hi + 1) {
            hi += 1;
        }
        (lo..=hi).collect()
    }
}

/// Solves `M v = lambda G v` via the Cholesky factor of `G`.
pub fn eigendecompose(m: &DMatrix<f64>, gram: &DMatrix<f64>, gram_tag: &str) -> Result<SpectralDecomposition> {
    if !m.is_square() || m.shape() != gram.shape() {
        return Err(Error::SizeMismatch {
            what: "eigenproblem matrices",
            expected: m.nrows(),
            got: gram.nrows(),
        });
    }
    let defect = symmetry_defect(m);
    if defect > SYMMETRY_TOLERANCE {
        return Err(Error::NotSymmetric(defect));
    }
    if symmetry_defect(gram) > SYMMETRY_TOLERANCE {
        return Err(Error::IndefiniteGram);
    }
    let chol = nalgebra::Cholesky::new(gram.clone()).ok_or(Error::IndefiniteGram)?;
    let l = chol.l();
    // C = L^{-1} M L^{-T}
    let left = l.solve_lower_triangular(m).ok_or(Error::IndefiniteGram)?;
    let c = l
        .solve_lower_triangular(&left.transpose())
        .ok_or(Error::IndefiniteGram)?;
    let c = (&c + c.transpose()) * 0.5;
    let eig = SymmetricEigen::new(c);

    let n = m.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let lt = l.transpose();
    let mut vectors = DMatrix::zeros(n, n);
    let mut eigenvalues = Vec::with_capacity(n);
    for (k, &src) in order.iter().enumerate() {
        let y = eig.eigenvectors.column(src).into_owned();
        let mut x = lt.solve_upper_triangular(&y).ok_or(Error::IndefiniteGram)?;
        let lead = x
            .iter()
            .enumerate()
            .fold(
                (0usize, 0.0f64),
                |(bi, bv), (i, &v)| {
                    if v.abs() > bv {
                        (i, v.abs())
                    } else {
                        (bi, bv)
                    }
                },
            )
            .0;
        if x[lead] < 0.0 {
            x.neg_mut();
        }
        vectors.set_column(k, &x);
        eigenvalues.push(eig.eigenvalues[src]);
    }

    let mnorm = m.norm();
    for (k, &lam) in eigenvalues.iter().enumerate() {
        let x = vectors.column(k);
        let r = (m * x - gram * x * lam).norm();
        let scale = (mnorm + lam.abs() * gram.norm()) * x.norm();
        if r > RESIDUAL_TOLERANCE * scale {
            return Err(Error::EigenResidual {
                index: k,
                residual: r / scale.max(f64::MIN_POSITIVE),
            });
        }
    }
    Ok(SpectralDecomposition {
        eigenvalues,
        vectors,
        gram_tag: gram_tag.to_string(),
    })
}

/// Decomposition of a boundary operator in its own basis.
pub fn decompose_operator<O: BoundaryOperator + ?Sized>(op: &O) -> Result<SpectralDecomposition> {
    eigendecompose(op.matrix(), op.basis().gram(), op.basis().tag())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseFloor {
    pub value: f64,
    /// False when the trailing spectrum keeps decaying instead of levelling off.
    pub plateau: bool,
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Plateau level of the spectrum: the median magnitude over the trailing half.
pub fn plateau_estimate(eigenvalues: &[f64]) -> Result<NoiseFloor> {
    let n = eigenvalues.len();
    if n < MIN_PLATEAU_SAMPLES {
        return Err(Error::TooFewEigenvalues {
            needed: MIN_PLATEAU_SAMPLES,
            got: n,
        });
    }
    let half = median(eigenvalues[n - n / 2..].iter().map(|l| l.abs()).collect());
    let quarter = median(eigenvalues[n - n / 4..].iter().map(|l| l.abs()).collect());
    Ok(NoiseFloor {
        value: half,
        plateau: quarter >= 0.25 * half,
    })
}

/// Noise level: the known value when supplied, otherwise the plateau estimate.
pub fn noise_floor(dec: &SpectralDecomposition, known_delta: Option<f64>) -> Result<NoiseFloor> {
    if dec.len() < MIN_PLATEAU_SAMPLES {
        return Err(Error::TooFewEigenvalues {
            needed: MIN_PLATEAU_SAMPLES,
            got: dec.len(),
        });
    }
    match known_delta {
        Some(d) => Ok(NoiseFloor {
            value: d,
            plateau: true,
        }),
        None => plateau_estimate(&dec.eigenvalues),
    }
}

/// 1-based index of the last eigenvalue with `lambda > safety * max(delta, machine floor)`.
pub fn select_eigenindex(dec: &SpectralDecomposition, delta: f64, safety: f64) -> Result<usize> {
    if !(delta >= 0.0) || !(safety >= 1.0) {
        return Err(Error::Config(format!(
            "need delta >= 0 and safety >= 1, got delta={delta}, safety={safety}"
        )));
    }
    let threshold = safety * delta.max(dec.machine_floor());
    let k = dec.eigenvalues.iter().take_while(|&&l| l > threshold).count();
    if k == 0 {
        Err(Error::AllAtNoiseFloor { threshold })
    } else {
        Ok(k)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeylReport {
    pub max_deviation: f64,
    pub pass: bool,
}

/// Checks `|noisy_k - clean_k| <= delta` for descending-sorted spectra.
pub fn weyl_check(clean: &[f64], noisy: &[f64], delta: f64) -> Result<WeylReport> {
    if clean.len() != noisy.len() {
        return Err(Error::SizeMismatch {
            what: "spectra",
            expected: clean.len(),
            got: noisy.len(),
        });
    }
    let max_deviation = clean.iter().zip(noisy).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    Ok(WeylReport {
        max_deviation,
        pass: max_deviation <= delta * (1.0 + 1e-12),
    })
}
