//! Column-mean imputation and conditional-Gaussian imputation of incomplete rows.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::covariance::CovarianceEstimate;
use crate::data::ObservedMatrix;
use crate::error::{Error, Result};
use crate::linalg;
use crate::solver::PenaltyConfig;

pub const DEFAULT_PINV_TOL: f64 = 1e-10;

/// Replaces every missing cell by its column's observed mean.
pub fn mean_impute(x: &ObservedMatrix) -> Result<ObservedMatrix> {
    let p = x.n_cols();
    let mut means = Vec::with_capacity(p);
    for j in 0..p {
        let observed: Vec<f64> = (0..x.n_rows()).filter_map(|i| x.get(i, j)).collect();
        if observed.is_empty() {
            return Err(Error::DegenerateColumn {
                column: j,
                observed: 0,
                required: 1,
            });
        }
        means.push(observed.iter().sum::<f64>() / observed.len() as f64);
    }
    Ok(x.filled_with(|_, j| means[j]))
}

/// How to solve the observed-block system in [`GaussianImputer::conditional_impute_with`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveMethod {
    /// Direct solve, switching to the pseudo-inverse when the block is singular.
    Auto,
    Direct,
    PseudoInverse,
}

/// A multivariate normal `N(mu, sigma)` used to fill in missing coordinates
/// with their conditional expectation.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianImputer {
    mu: Vec<f64>,
    sigma: DMatrix<f64>,
    pinv_tol: f64,
}

impl GaussianImputer {
    pub fn new(mu: Vec<f64>, mut sigma: DMatrix<f64>, pinv_tol: f64) -> Result<Self> {
        if sigma.nrows() != mu.len() || sigma.ncols() != mu.len() {
            return Err(Error::DimensionMismatch {
                expected: mu.len(),
                found: sigma.nrows(),
            });
        }
        if !(pinv_tol > 0.0) {
            return Err(Error::InvalidParameter(format!("pinv_tol must be > 0, got {pinv_tol}")));
        }
        if mu.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("imputer mean".into()));
        }
        let asym = linalg::max_asymmetry(&sigma);
        if asym > 1e-12 * sigma.amax().max(1.0) {
            return Err(Error::Asymmetric { max_asymmetry: asym });
        }
        linalg::symmetrize(&mut sigma);
        let lmin = linalg::min_eigenvalue(&sigma)?;
        if lmin < -1e-10 {
            return Err(Error::InvalidParameter(format!(
                "imputation covariance is not non-negative definite (smallest eigenvalue {lmin})"
            )));
        }
        Ok(GaussianImputer { mu, sigma, pinv_tol })
    }

    /// `N(0, I)`: every missing coordinate is filled with zero.
    pub fn identity(p: usize) -> Self {
        GaussianImputer {
            mu: vec![0.0; p],
            sigma: DMatrix::identity(p, p),
            pinv_tol: DEFAULT_PINV_TOL,
        }
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn sigma(&self) -> &DMatrix<f64> {
        &self.sigma
    }

    pub fn pinv_tol(&self) -> f64 {
        self.pinv_tol
    }

    pub fn n_cols(&self) -> usize {
        self.mu.len()
    }

    pub fn conditional_impute(&self, row: &[Option<f64>]) -> Result<Vec<f64>> {
        self.conditional_impute_with(row, SolveMethod::Auto)
    }

    /// Conditional mean `mu_m + Sigma_mo Sigma_oo^{-1} (x_o - mu_o)` of the
    /// missing block `m` given the observed block `o`. Observed entries are
    /// returned unchanged; a row with nothing observed becomes `mu`.
    pub fn conditional_impute_with(&self, row: &[Option<f64>], method: SolveMethod) -> Result<Vec<f64>> {
        let p = self.n_cols();
        if row.len() != p {
            return Err(Error::DimensionMismatch {
                expected: p,
                found: row.len(),
            });
        }
        let observed: Vec<usize> = (0..p).filter(|&j| row[j].is_some()).collect();
        let missing: Vec<usize> = (0..p).filter(|&j| row[j].is_none()).collect();
        if let Some(&j) = observed.iter().find(|&&j| !row[j].unwrap().is_finite()) {
            return Err(Error::NonFinite(format!("observed coordinate {j}")));
        }
        let mut out: Vec<f64> = row.iter().zip(&self.mu).map(|(v, m)| v.unwrap_or(*m)).collect();
        if missing.is_empty() || observed.is_empty() {
            return Ok(out);
        }

        let s_oo = DMatrix::from_fn(observed.len(), observed.len(), |a, b| {
            self.sigma[(observed[a], observed[b])]
        });
        let resid = DVector::from_iterator(
            observed.len(),
            observed.iter().map(|&j| row[j].unwrap() - self.mu[j]),
        );
        let use_pinv = match method {
            SolveMethod::PseudoInverse => true,
            SolveMethod::Direct => false,
            SolveMethod::Auto => linalg::is_numerically_singular(&s_oo, self.pinv_tol),
        };
        let weights = if use_pinv {
            linalg::pinv_solve(&s_oo, &resid, self.pinv_tol)
        } else {
            match s_oo.clone().cholesky() {
                Some(ch) => ch.solve(&resid),
                None => s_oo
                    .lu()
                    .solve(&resid)
                    .ok_or_else(|| Error::Factorization("singular observed block".into()))?,
            }
        };
        for &m in &missing {
            let shift: f64 = observed
                .iter()
                .zip(weights.iter())
                .map(|(&o, w)| self.sigma[(m, o)] * w)
                .sum();
            out[m] = self.mu[m] + shift;
        }
        Ok(out)
    }

    /// Row-wise [`GaussianImputer::conditional_impute`]; returns a fully observed matrix.
    pub fn impute_matrix(&self, x: &ObservedMatrix) -> Result<ObservedMatrix> {
        if x.n_cols() != self.n_cols() {
            return Err(Error::DimensionMismatch {
                expected: self.n_cols(),
                found: x.n_cols(),
            });
        }
        let rows: Vec<Vec<f64>> = (0..x.n_rows())
            .into_par_iter()
            .map(|i| self.conditional_impute(&x.row(i)))
            .collect::<Result<_>>()?;
        let values = rows.into_iter().flatten().collect();
        ObservedMatrix::fully_observed(values, x.n_rows(), x.n_cols())
    }
}

/// `Sigma_est = c_zz + (max(-lambda_min, 0) + lambda (1 - alpha)) I` with zero mean
/// (standardized coordinates).
pub fn build_sigma_est(c: &CovarianceEstimate, cfg: &PenaltyConfig) -> Result<GaussianImputer> {
    let shift = (-c.lambda_min()).max(0.0) + cfg.ridge();
    let p = c.n_cols();
    let sigma = c.c_zz() + DMatrix::<f64>::identity(p, p) * shift;
    // smallest eigenvalue of sigma is lambda_min + shift >= 0 by construction
    Ok(GaussianImputer {
        mu: vec![0.0; p],
        sigma,
        pinv_tol: DEFAULT_PINV_TOL,
    })
}

pub fn impute_test_matrix(imputer: &GaussianImputer, x_test: &ObservedMatrix) -> Result<ObservedMatrix> {
    imputer.impute_matrix(x_test)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_impute_fills_column_means() {
        let x = ObservedMatrix::from_rows(&[vec![Some(1.0)], vec![None], vec![Some(3.0)]]).unwrap();
        let f = mean_impute(&x).unwrap();
        assert_eq!(f.get(1, 0), Some(2.0));
        assert_eq!(f.get(0, 0), Some(1.0));
        assert!(f.is_complete());
    }

    #[test]
    fn mean_impute_identity_on_complete_data() {
        let x = ObservedMatrix::fully_observed(vec![1.0, 2.0, 3.0, 4.0], 2, 2).unwrap();
        assert_eq!(mean_impute(&x).unwrap(), x);
    }

    #[test]
    fn mean_impute_all_missing_column() {
        let x = ObservedMatrix::from_rows(&[vec![Some(1.0), None]]).unwrap();
        assert!(matches!(mean_impute(&x), Err(Error::DegenerateColumn { column: 1, .. })));
    }

    #[test]
    fn bivariate_regression_coefficient() {
        let sigma = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0]);
        let imp = GaussianImputer::new(vec![0.0, 0.0], sigma, DEFAULT_PINV_TOL).unwrap();
        let out = imp.conditional_impute(&[None, Some(2.0)]).unwrap();
        assert!((out[0] - 1.0).abs() < 1e-15);
        assert_eq!(out[1], 2.0);
    }

    #[test]
    fn identity_imputes_means() {
        let imp = GaussianImputer::new(vec![1.0, -2.0, 3.0], DMatrix::identity(3, 3), 1e-10).unwrap();
        let out = imp.conditional_impute(&[Some(7.0), None, None]).unwrap();
        assert_eq!(out, vec![7.0, -2.0, 3.0]);
        assert_eq!(imp.conditional_impute(&[None, None, None]).unwrap(), vec![1.0, -2.0, 3.0]);
    }

    #[test]
    fn sigma_est_shift() {
        let czz = DMatrix::from_row_slice(2, 2, &[1.0, 1.5, 1.5, 1.0]);
        // eigenvalues 2.5 and -0.5
        let c = CovarianceEstimate::from_parts(czz.clone(), vec![0.0, 0.0], 0.0, 0.0).unwrap();
        let imp = build_sigma_est(&c, &PenaltyConfig::new(1.0, 0.8).unwrap()).unwrap();
        let diff = imp.sigma() - &czz;
        assert!((diff[(0, 0)] - 0.7).abs() < 1e-12);
        assert!((diff[(1, 1)] - 0.7).abs() < 1e-12);
        assert_eq!(diff[(0, 1)], 0.0);
        assert!(imp.mu().iter().all(|m| *m == 0.0));
    }

    #[test]
    fn sigma_est_unshifted_when_psd_and_pure_lasso() {
        let czz = DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.2, 1.0]);
        let c = CovarianceEstimate::from_parts(czz.clone(), vec![0.0, 0.0], 0.0, 0.0).unwrap();
        let imp = build_sigma_est(&c, &PenaltyConfig::new(0.7, 1.0).unwrap()).unwrap();
        assert_eq!(imp.sigma(), &czz);
        let c = CovarianceEstimate::from_parts(DMatrix::identity(3, 3), vec![0.0; 3], 0.0, 0.0).unwrap();
        let imp = build_sigma_est(&c, &PenaltyConfig::new(0.6, 0.5).unwrap()).unwrap();
        assert!((imp.sigma() - DMatrix::<f64>::identity(3, 3) * 1.3).amax() < 1e-15);
    }

    #[test]
    fn singular_block_falls_back_to_pinv() {
        // x1 = x2 exactly; observing both with equal values must still impute x3
        let sigma = DMatrix::from_row_slice(3, 3, &[1.0, 1.0, 0.5, 1.0, 1.0, 0.5, 0.5, 0.5, 1.0]);
        let imp = GaussianImputer::new(vec![0.0; 3], sigma, DEFAULT_PINV_TOL).unwrap();
        let out = imp.conditional_impute(&[Some(2.0), Some(2.0), None]).unwrap();
        assert!((out[2] - 1.0).abs() < 1e-10);
    }

    #[test]
    fn rejects_indefinite_sigma_and_bad_rows() {
        let sigma = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(GaussianImputer::new(vec![0.0; 2], sigma, 1e-10).is_err());
        let imp = GaussianImputer::identity(2);
        assert!(matches!(
            imp.conditional_impute(&[Some(f64::NAN), None]),
            Err(Error::NonFinite(_))
        ));
        assert!(imp.conditional_impute(&[None]).is_err());
    }

    #[test]
    fn test_matrix_rows_are_independent() {
        let sigma = DMatrix::from_row_slice(2, 2, &[2.0, 0.6, 0.6, 1.0]);
        let imp = GaussianImputer::new(vec![0.5, -0.5], sigma, 1e-10).unwrap();
        let x = ObservedMatrix::from_rows(&[
            vec![Some(1.0), None],
            vec![None, None],
            vec![Some(0.2), Some(0.3)],
        ])
        .unwrap();
        let out = impute_test_matrix(&imp, &x).unwrap();
        for i in 0..3 {
            let single = imp.conditional_impute(&x.row(i)).unwrap();
            for j in 0..2 {
                assert_eq!(out.get(i, j), Some(single[j]));
            }
        }
        assert_eq!(out.row(1), vec![Some(0.5), Some(-0.5)]);
        assert_eq!(out.row(2), vec![Some(0.2), Some(0.3)]);
    }
}
