//! Cyclic coordinate descent for the covariance-form elastic-net objective
//!
//! ```text
//! 1/2 (b' C_zz b - 2 c_yz' b + |Y|^2) + lambda (alpha |b|_1 + (1 - alpha)/2 |b|_2^2)
//! ```
//!
//! When `C_zz` is indefinite the objective is convex only if the ridge part
//! `lambda (1 - alpha)` covers the most negative eigenvalue.

use crate::covariance::CovarianceEstimate;
use crate::error::{Error, Result};

/// Slack accepted on the convexity boundary `lambda (1 - alpha) >= -lambda_min`.
pub const CONVEXITY_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PenaltyConfig {
    pub lambda: f64,
    pub alpha: f64,
}

impl PenaltyConfig {
    pub fn new(lambda: f64, alpha: f64) -> Result<Self> {
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(Error::InvalidParameter(format!("lambda must be >= 0, got {lambda}")));
        }
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::InvalidParameter(format!("alpha must lie in [0, 1], got {alpha}")));
        }
        Ok(PenaltyConfig { lambda, alpha })
    }

    /// Weight of the l1 term, `lambda * alpha`.
    pub fn l1(&self) -> f64 {
        self.lambda * self.alpha
    }

    /// Weight of the ridge term, `lambda * (1 - alpha)`.
    pub fn ridge(&self) -> f64 {
        self.lambda * (1.0 - self.alpha)
    }

    fn validate(&self) -> Result<()> {
        Self::new(self.lambda, self.alpha).map(|_| ())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub tol: f64,
    pub max_sweeps: usize,
    pub enforce_convexity: bool,
    /// Keep the objective value after every sweep in [`FitResult::trace`].
    pub record_trace: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            tol: 1e-8,
            max_sweeps: 10_000,
            enforce_convexity: true,
            record_trace: false,
        }
    }
}

impl SolverConfig {
    fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::InvalidParameter(format!("tol must be > 0, got {}", self.tol)));
        }
        if self.max_sweeps == 0 {
            return Err(Error::InvalidParameter("max_sweeps must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub beta: Vec<f64>,
    /// Always zero: the solver works on centered data.
    pub intercept: f64,
    pub sweeps: usize,
    pub converged: bool,
    pub objective: f64,
    pub kkt_violation: f64,
    /// Objective after each sweep, index 0 being the starting point.
    pub trace: Option<Vec<f64>>,
}

impl FitResult {
    pub fn nonzero_count(&self) -> usize {
        self.beta.iter().filter(|b| **b != 0.0).count()
    }
}

/// `sign(z) * max(|z| - gamma, 0)`; exactly zero when `|z| <= gamma`.
#[inline]
pub fn soft_threshold(z: f64, gamma: f64) -> f64 {
    if z > gamma {
        z - gamma
    } else if z < -gamma {
        z + gamma
    } else {
        0.0
    }
}

pub fn evaluate_objective(c: &CovarianceEstimate, beta: &[f64], cfg: &PenaltyConfig) -> Result<f64> {
    let p = c.n_cols();
    if beta.len() != p {
        return Err(Error::DimensionMismatch {
            expected: p,
            found: beta.len(),
        });
    }
    Ok(objective_unchecked(c, beta, cfg))
}

fn objective_unchecked(c: &CovarianceEstimate, beta: &[f64], cfg: &PenaltyConfig) -> f64 {
    let czz = c.c_zz();
    let p = beta.len();
    let mut quad = 0.0;
    for j in 0..p {
        if beta[j] == 0.0 {
            continue;
        }
        let mut row = 0.0;
        for k in 0..p {
            row += czz[(j, k)] * beta[k];
        }
        quad += beta[j] * row;
    }
    let lin: f64 = c.c_yz().iter().zip(beta).map(|(a, b)| a * b).sum();
    let l1: f64 = beta.iter().map(|b| b.abs()).sum();
    let l2: f64 = beta.iter().map(|b| b * b).sum();
    0.5 * (quad - 2.0 * lin + c.y_sq_norm()) + cfg.lambda * (cfg.alpha * l1 + 0.5 * (1.0 - cfg.alpha) * l2)
}

/// Largest violation of the stationarity conditions at `beta`.
///
/// With `g_j = c_yz[j] - (C_zz beta)[j] - lambda (1 - alpha) beta_j`, a minimizer has
/// `|g_j| <= lambda alpha` where `beta_j = 0` and `g_j = lambda alpha sign(beta_j)` elsewhere.
pub fn kkt_violation(c: &CovarianceEstimate, beta: &[f64], cfg: &PenaltyConfig) -> f64 {
    let czz = c.c_zz();
    let p = beta.len();
    let (l1, ridge) = (cfg.l1(), cfg.ridge());
    let mut worst = 0.0f64;
    for j in 0..p {
        let mut g = c.c_yz()[j] - ridge * beta[j];
        for k in 0..p {
            g -= czz[(j, k)] * beta[k];
        }
        let v = if beta[j] == 0.0 {
            (g.abs() - l1).max(0.0)
        } else {
            (g - l1 * beta[j].signum()).abs()
        };
        worst = worst.max(v);
    }
    worst
}

/// Checks `lambda (1 - alpha) >= max(0, -lambda_min)` up to [`CONVEXITY_SLACK`].
pub fn check_convexity(c: &CovarianceEstimate, cfg: &PenaltyConfig) -> Result<()> {
    let required = (-c.lambda_min()).max(0.0);
    let provided = cfg.ridge();
    if provided > required - CONVEXITY_SLACK {
        Ok(())
    } else {
        Err(Error::NonConvex {
            lambda_min: c.lambda_min(),
            required,
            provided,
        })
    }
}

pub fn fit(
    c: &CovarianceEstimate,
    cfg: &PenaltyConfig,
    solver: &SolverConfig,
    beta_init: Option<&[f64]>,
) -> Result<FitResult> {
    cfg.validate()?;
    solver.validate()?;
    let p = c.n_cols();
    if solver.enforce_convexity {
        check_convexity(c, cfg)?;
    }
    let czz = c.c_zz();
    let c_yz = c.c_yz();
    let (l1, ridge) = (cfg.l1(), cfg.ridge());

    let denom: Vec<f64> = (0..p).map(|j| czz[(j, j)] + ridge).collect();
    if let Some(j) = denom.iter().position(|d| !(*d > 0.0)) {
        return Err(Error::DegenerateCoordinate {
            coordinate: j,
            curvature: denom[j],
        });
    }

    let mut beta = match beta_init {
        Some(b) if b.len() != p => {
            return Err(Error::DimensionMismatch {
                expected: p,
                found: b.len(),
            })
        }
        Some(b) => b.to_vec(),
        None => vec![0.0; p],
    };
    if beta.iter().any(|b| !b.is_finite()) {
        return Err(Error::NonFinite("initial coefficients".into()));
    }

    let mut trace = solver
        .record_trace
        .then(|| vec![objective_unchecked(c, &beta, cfg)]);
    let mut converged = false;
    let mut sweeps = 0;
    let mut kkt = f64::INFINITY;
    while sweeps < solver.max_sweeps {
        sweeps += 1;
        let mut max_change = 0.0f64;
        for j in 0..p {
            let mut z = c_yz[j];
            for (k, &bk) in beta.iter().enumerate() {
                if k != j && bk != 0.0 {
                    z -= bk * czz[(j, k)];
                }
            }
            let updated = soft_threshold(z, l1) / denom[j];
            if !updated.is_finite() {
                return Err(Error::Diverged { sweep: sweeps });
            }
            max_change = max_change.max((updated - beta[j]).abs());
            beta[j] = updated;
        }
        if let Some(t) = trace.as_mut() {
            t.push(objective_unchecked(c, &beta, cfg));
        }
        if max_change <= solver.tol {
            // the coefficient criterion alone can leave a stationarity residual of
            // up to (row sum of C_zz) * tol, so also require the certificate
            kkt = kkt_violation(c, &beta, cfg);
            if kkt <= 10.0 * solver.tol {
                converged = true;
                break;
            }
        }
    }
    if !converged {
        kkt = kkt_violation(c, &beta, cfg);
    }
    let objective = objective_unchecked(c, &beta, cfg);
    if !objective.is_finite() {
        return Err(Error::Diverged { sweep: sweeps });
    }
    Ok(FitResult {
        beta,
        intercept: 0.0,
        sweeps,
        converged,
        objective,
        kkt_violation: kkt,
        trace,
    })
}

/// Fits every `(lambda, alpha)` pair, walking each alpha's lambdas in the
/// given (descending) order and warm-starting from the previous solution.
///
/// Results are ordered alpha-major: `results[a * lambdas.len() + l]`.
pub fn fit_path(
    c: &CovarianceEstimate,
    alphas: &[f64],
    lambdas: &[f64],
    solver: &SolverConfig,
) -> Result<Vec<FitResult>> {
    if lambdas.windows(2).any(|w| w[0] < w[1]) {
        return Err(Error::InvalidParameter("lambdas must be sorted in descending order".into()));
    }
    let mut out = Vec::with_capacity(alphas.len() * lambdas.len());
    for &alpha in alphas {
        let mut warm: Option<Vec<f64>> = None;
        for &lambda in lambdas {
            let cfg = PenaltyConfig::new(lambda, alpha)?;
            let res = fit(c, &cfg, solver, warm.as_deref())?;
            warm = Some(res.beta.clone());
            out.push(res);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn scalar(czz: f64, cyz: f64, ysq: f64) -> CovarianceEstimate {
        CovarianceEstimate::from_parts(DMatrix::from_element(1, 1, czz), vec![cyz], ysq, 0.0).unwrap()
    }

    #[test]
    fn soft_threshold_definition() {
        assert_eq!(soft_threshold(3.0, 1.0), 2.0);
        assert_eq!(soft_threshold(-3.0, 1.0), -2.0);
        assert_eq!(soft_threshold(0.5, 1.0), 0.0);
        assert_eq!(soft_threshold(1.0, 1.0), 0.0);
        assert_eq!(soft_threshold(-1.0, 1.0), 0.0);
    }

    #[test]
    fn objective_hand_values() {
        let c = scalar(1.0, 2.0, 4.0);
        let cfg = PenaltyConfig::new(1.0, 0.5).unwrap();
        assert_eq!(evaluate_objective(&c, &[0.0], &cfg).unwrap(), 2.0);
        assert!((evaluate_objective(&c, &[1.0], &cfg).unwrap() - 1.25).abs() < 1e-15);
        let doubled = PenaltyConfig::new(2.0, 0.5).unwrap();
        let diff = evaluate_objective(&c, &[1.0], &doubled).unwrap()
            - evaluate_objective(&c, &[1.0], &cfg).unwrap();
        assert!((diff - 0.75).abs() < 1e-15);
        assert!(matches!(
            evaluate_objective(&c, &[1.0, 2.0], &cfg),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn single_coordinate_closed_form() {
        let c = scalar(1.0, 2.0, 4.0);
        let cfg = PenaltyConfig::new(1.0, 0.5).unwrap();
        let r = fit(&c, &cfg, &SolverConfig::default(), None).unwrap();
        assert_eq!(r.beta, vec![1.0]);
        assert!(r.converged);
        assert_eq!(r.kkt_violation, 0.0);
    }

    #[test]
    fn threshold_zeroes_everything() {
        let czz = DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 1.0]);
        let c = CovarianceEstimate::from_parts(czz, vec![0.4, -0.7], 1.0, 0.0).unwrap();
        let cfg = PenaltyConfig::new(1.0, 0.7).unwrap();
        let r = fit(&c, &cfg, &SolverConfig::default(), None).unwrap();
        assert_eq!(r.beta, vec![0.0, 0.0]);
    }

    #[test]
    fn nonconvex_configuration_is_rejected() {
        let czz = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        let c = CovarianceEstimate::from_parts(czz, vec![0.4, -0.7], 1.0, 0.0).unwrap();
        let cfg = PenaltyConfig::new(1.0, 0.5).unwrap();
        match fit(&c, &cfg, &SolverConfig::default(), None) {
            Err(Error::NonConvex { required, provided, .. }) => {
                assert!((required - 1.0).abs() < 1e-12);
                assert_eq!(provided, 0.5);
            }
            other => panic!("unexpected {other:?}"),
        }
        // exactly on the boundary is accepted
        let cfg = PenaltyConfig::new(2.0, 0.5).unwrap();
        assert!(fit(&c, &cfg, &SolverConfig::default(), None).is_ok());
    }

    #[test]
    fn degenerate_coordinate() {
        let c = CovarianceEstimate::from_parts(DMatrix::zeros(1, 1), vec![1.0], 1.0, 0.0).unwrap();
        let cfg = PenaltyConfig::new(1.0, 1.0).unwrap();
        assert!(matches!(
            fit(&c, &cfg, &SolverConfig::default(), None),
            Err(Error::DegenerateCoordinate { coordinate: 0, .. })
        ));
    }

    #[test]
    fn invalid_configs() {
        assert!(PenaltyConfig::new(-1.0, 0.5).is_err());
        assert!(PenaltyConfig::new(1.0, 1.5).is_err());
        let c = scalar(1.0, 1.0, 1.0);
        let cfg = PenaltyConfig::new(1.0, 0.5).unwrap();
        let bad = SolverConfig {
            tol: 0.0,
            ..SolverConfig::default()
        };
        assert!(fit(&c, &cfg, &bad, None).is_err());
    }

    #[test]
    fn path_single_pair_matches_fit() {
        let czz = DMatrix::from_row_slice(2, 2, &[1.0, 0.4, 0.4, 1.0]);
        let c = CovarianceEstimate::from_parts(czz, vec![0.9, -0.3], 1.0, 0.0).unwrap();
        let s = SolverConfig::default();
        let path = fit_path(&c, &[0.6], &[0.2], &s).unwrap();
        let direct = fit(&c, &PenaltyConfig::new(0.2, 0.6).unwrap(), &s, None).unwrap();
        assert_eq!(path[0], direct);
    }

    #[test]
    fn path_rejects_ascending_lambdas() {
        let c = scalar(1.0, 1.0, 1.0);
        assert!(fit_path(&c, &[0.5], &[0.1, 0.2], &SolverConfig::default()).is_err());
    }

    #[test]
    fn nonconvex_run_still_reports_when_not_enforced() {
        let czz = DMatrix::from_row_slice(2, 2, &[1.0, 0.9, 0.9, 1.0]);
        let czz = &czz - DMatrix::identity(2, 2) * 0.05;
        let c = CovarianceEstimate::from_parts(czz, vec![0.5, 0.4], 1.0, 0.0).unwrap();
        let cfg = PenaltyConfig::new(0.05, 0.9).unwrap();
        let s = SolverConfig {
            enforce_convexity: false,
            max_sweeps: 50,
            ..SolverConfig::default()
        };
        let r = fit(&c, &cfg, &s, None).unwrap();
        assert!(r.kkt_violation.is_finite());
    }
}
