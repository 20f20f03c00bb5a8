//! Pairwise-deletion estimates of the quadratic objective's coefficients.
//!
//! For an observed matrix `Z` (missing cells read as zero) with per-column
//! counts `N_j` and pairwise counts `N_jk`, the eta-weighted estimate is
//!
//! ```text
//! c_zz[j][k] = ((1 - eta) / N_jk + eta / N) * <Z_j, Z_k>     (j != k)
//! c_zz[j][j] = ((1 - eta) / N_j  + eta / N) * |Z_j|^2
//! c_yz[j]    = ((1 - eta) / N_j  + eta / N) * <Y, Z_j>
//! ```
//!
//! `eta = 0` is the unbiased pairwise estimate, `eta = 1` the Gram matrix of
//! the zero-filled (mean-imputed, once standardized) design divided by `N`.

use nalgebra::DMatrix;

use crate::data::{ObservedMatrix, ResponseVector};
use crate::error::{Error, Result};
use crate::linalg;

/// Observed counts per column (`n_j`) and per column pair (`n_jk`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairwiseCounts {
    n_j: Vec<usize>,
    n_jk: Vec<usize>,
    p: usize,
}

impl PairwiseCounts {
    pub fn n_j(&self, j: usize) -> usize {
        self.n_j[j]
    }

    pub fn n_jk(&self, j: usize, k: usize) -> usize {
        self.n_jk[j * self.p + k]
    }

    pub fn n_cols(&self) -> usize {
        self.p
    }

    /// First pair `(j, k)` with `j <= k` that is never observed together.
    pub fn first_zero_overlap(&self) -> Option<(usize, usize)> {
        (0..self.p)
            .flat_map(|j| (j..self.p).map(move |k| (j, k)))
            .find(|&(j, k)| self.n_jk(j, k) == 0)
    }
}

pub fn pairwise_counts(x: &ObservedMatrix) -> PairwiseCounts {
    let p = x.n_cols();
    let mut n_jk = vec![0usize; p * p];
    for i in 0..x.n_rows() {
        for j in 0..p {
            if !x.is_observed(i, j) {
                continue;
            }
            for k in j..p {
                if x.is_observed(i, k) {
                    n_jk[j * p + k] += 1;
                }
            }
        }
    }
    for j in 0..p {
        for k in (j + 1)..p {
            n_jk[k * p + j] = n_jk[j * p + k];
        }
    }
    let n_j = (0..p).map(|j| n_jk[j * p + j]).collect();
    PairwiseCounts { n_j, n_jk, p }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceEstimate {
    c_zz: DMatrix<f64>,
    c_yz: Vec<f64>,
    y_sq_norm: f64,
    lambda_min: f64,
    eta: f64,
    counts: Option<PairwiseCounts>,
}

impl CovarianceEstimate {
    /// Wraps externally computed coefficients. `c_zz` is symmetrized and its
    /// smallest eigenvalue computed.
    pub fn from_parts(
        mut c_zz: DMatrix<f64>,
        c_yz: Vec<f64>,
        y_sq_norm: f64,
        eta: f64,
    ) -> Result<Self> {
        if c_zz.nrows() != c_yz.len() {
            return Err(Error::DimensionMismatch {
                expected: c_zz.nrows(),
                found: c_yz.len(),
            });
        }
        check_eta(eta)?;
        let lambda_min = linalg::min_eigenvalue(&c_zz)?;
        linalg::symmetrize(&mut c_zz);
        Ok(CovarianceEstimate {
            c_zz,
            c_yz,
            y_sq_norm,
            lambda_min,
            eta,
            counts: None,
        })
    }

    pub fn c_zz(&self) -> &DMatrix<f64> {
        &self.c_zz
    }

    pub fn c_yz(&self) -> &[f64] {
        &self.c_yz
    }

    pub fn y_sq_norm(&self) -> f64 {
        self.y_sq_norm
    }

    /// Smallest eigenvalue of `c_zz`.
    pub fn lambda_min(&self) -> f64 {
        self.lambda_min
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    /// Present when built from data.
    pub fn counts(&self) -> Option<&PairwiseCounts> {
        self.counts.as_ref()
    }

    pub fn n_cols(&self) -> usize {
        self.c_yz.len()
    }
}

fn check_eta(eta: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&eta) {
        return Err(Error::InvalidParameter(format!("eta must lie in [0, 1], got {eta}")));
    }
    Ok(())
}

/// Applies the eta weighting to an inner product observed on `count` rows out of `n`.
#[inline]
fn weighted(inner: f64, count: usize, n: usize, eta: f64) -> f64 {
    let full = inner / n as f64;
    if eta == 1.0 {
        full
    } else if eta == 0.0 {
        inner / count as f64
    } else {
        (1.0 - eta) * (inner / count as f64) + eta * full
    }
}

pub fn covariance_estimate(
    x: &ObservedMatrix,
    y: &ResponseVector,
    eta: f64,
) -> Result<CovarianceEstimate> {
    check_eta(eta)?;
    if y.len() != x.n_rows() {
        return Err(Error::DimensionMismatch {
            expected: x.n_rows(),
            found: y.len(),
        });
    }
    let counts = pairwise_counts(x);
    if eta < 1.0 {
        if let Some((j, k)) = counts.first_zero_overlap() {
            return Err(Error::ZeroOverlap { j, k });
        }
    }
    let n = x.n_rows();
    let p = x.n_cols();

    let mut columns = vec![0.0; n * p];
    for i in 0..n {
        for j in 0..p {
            let v = x.zeroed(i, j);
            if !v.is_finite() {
                return Err(Error::NonFinite(format!("observed entry ({i}, {j})")));
            }
            columns[j * n + i] = v;
        }
    }
    let col = |j: usize| &columns[j * n..(j + 1) * n];
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(u, v)| u * v).sum::<f64>();

    let mut c_zz = DMatrix::zeros(p, p);
    for j in 0..p {
        for k in j..p {
            let inner = dot(col(j), col(k));
            let v = weighted(inner, counts.n_jk(j, k), n, eta);
            c_zz[(j, k)] = v;
            c_zz[(k, j)] = v;
        }
    }
    linalg::symmetrize(&mut c_zz);
    let yv = y.values();
    let c_yz = (0..p)
        .map(|j| weighted(dot(yv, col(j)), counts.n_j(j), n, eta))
        .collect();
    let y_sq_norm = dot(yv, yv);
    let lambda_min = linalg::min_eigenvalue(&c_zz)?;
    Ok(CovarianceEstimate {
        c_zz,
        c_yz,
        y_sq_norm,
        lambda_min,
        eta,
        counts: Some(counts),
    })
}

/// Admissible `(lambda, alpha)` region for a covariance estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParameterRange {
    /// Above this value of `lambda * alpha` the solution is identically zero.
    pub lambda_alpha_max: f64,
    pub alpha_max: f64,
    /// Lower bound on `lambda * (1 - alpha)` for a convex objective.
    pub lambda_min_required: f64,
}

pub fn parameter_range(c: &CovarianceEstimate) -> ParameterRange {
    let lambda_alpha_max = c.c_yz().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let shift = (-c.lambda_min()).max(0.0);
    let denom = shift + lambda_alpha_max;
    let alpha_max = if denom == 0.0 { 1.0 } else { lambda_alpha_max / denom };
    ParameterRange {
        lambda_alpha_max,
        alpha_max,
        lambda_min_required: shift,
    }
}
