//! Fitting on raw data and the serialized model file.
//!
//! Everything below the public functions here works in standardized
//! coordinates; this is the one place where raw inputs are standardized and
//! raw-coordinate predictions are produced.

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::covariance::{covariance_estimate, CovarianceEstimate};
use crate::data::{standardize, ObservedMatrix, ResponseVector, Standardization};
use crate::error::{Error, Result};
use crate::imputation::{build_sigma_est, GaussianImputer};
use crate::solver::{fit, FitResult, PenaltyConfig, SolverConfig};

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// How incomplete rows are completed before prediction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ImputeMode {
    /// Conditional expectation under `N(0, Sigma_est)`.
    SigmaEst,
    /// Conditional expectation under `N(0, I)`, i.e. training column means.
    Identity,
}

impl ImputeMode {
    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "sigma_est" | "gaussian" => Ok(ImputeMode::SigmaEst),
            "identity" | "mean" => Ok(ImputeMode::Identity),
            other => Err(Error::InvalidParameter(format!("unknown impute mode {other:?}"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ImputeMode::SigmaEst => "sigma_est",
            ImputeMode::Identity => "identity",
        }
    }
}

/// A fit together with everything needed to predict on new raw rows.
#[derive(Debug, Clone)]
pub struct FittedModel {
    pub standardization: Standardization,
    pub penalty: PenaltyConfig,
    pub eta: f64,
    pub fit: FitResult,
    pub imputer: GaussianImputer,
    pub lambda_min: f64,
}

/// Standardizes, builds the eta-weighted covariance estimate and fits.
pub fn fit_raw(
    x: &ObservedMatrix,
    y: &ResponseVector,
    penalty: PenaltyConfig,
    eta: f64,
    solver: &SolverConfig,
) -> Result<FittedModel> {
    let (xs, ys, standardization) = standardize(x, y)?;
    let cov = covariance_estimate(&xs, &ys, eta)?;
    fit_standardized(&cov, standardization, penalty, solver, None)
}

pub(crate) fn fit_standardized(
    cov: &CovarianceEstimate,
    standardization: Standardization,
    penalty: PenaltyConfig,
    solver: &SolverConfig,
    warm: Option<&[f64]>,
) -> Result<FittedModel> {
    let result = fit(cov, &penalty, solver, warm)?;
    let imputer = build_sigma_est(cov, &penalty)?;
    Ok(FittedModel {
        standardization,
        penalty,
        eta: cov.eta(),
        fit: result,
        imputer,
        lambda_min: cov.lambda_min(),
    })
}

/// Completes the standardized rows of `xs` and returns `y_mean + z' beta` per row.
pub(crate) fn predict_standardized(
    xs: &ObservedMatrix,
    beta: &[f64],
    y_mean: f64,
    imputer: &GaussianImputer,
    mode: ImputeMode,
) -> Result<Vec<f64>> {
    let p = beta.len();
    let identity;
    let imp = match mode {
        ImputeMode::SigmaEst => imputer,
        ImputeMode::Identity => {
            identity = GaussianImputer::identity(p);
            &identity
        }
    };
    (0..xs.n_rows())
        .map(|i| {
            let z = imp.conditional_impute(&xs.row(i))?;
            Ok(y_mean + z.iter().zip(beta).map(|(a, b)| a * b).sum::<f64>())
        })
        .collect()
}

impl FittedModel {
    pub fn raw_coefficients(&self) -> (f64, Vec<f64>) {
        self.standardization.raw_coefficients(&self.fit.beta)
    }

    pub fn predict(&self, x_raw: &ObservedMatrix, mode: ImputeMode) -> Result<Vec<f64>> {
        let xs = self.standardization.apply(x_raw)?;
        predict_standardized(&xs, &self.fit.beta, self.standardization.y_mean, &self.imputer, mode)
    }

    pub fn to_model_file(&self, feature_names: Vec<String>) -> ModelFile {
        let (intercept, beta) = self.raw_coefficients();
        let sigma = self.imputer.sigma();
        ModelFile {
            format_version: MODEL_FORMAT_VERSION,
            feature_names,
            beta,
            intercept,
            beta_standardized: self.fit.beta.clone(),
            standardization: StandardizationRecord {
                col_means: self.standardization.col_means.clone(),
                col_scales: self.standardization.col_scales.clone(),
                y_mean: self.standardization.y_mean,
            },
            penalty: PenaltyRecord {
                lambda: self.penalty.lambda,
                alpha: self.penalty.alpha,
                eta: self.eta,
            },
            sigma_est: (0..sigma.nrows())
                .map(|i| (0..sigma.ncols()).map(|j| sigma[(i, j)]).collect())
                .collect(),
            diagnostics: FitDiagnostics {
                converged: self.fit.converged,
                sweeps: self.fit.sweeps,
                kkt_violation: self.fit.kkt_violation,
                objective: self.fit.objective,
                lambda_min: self.lambda_min,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardizationRecord {
    pub col_means: Vec<f64>,
    pub col_scales: Vec<f64>,
    pub y_mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PenaltyRecord {
    pub lambda: f64,
    pub alpha: f64,
    pub eta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub converged: bool,
    pub sweeps: usize,
    pub kkt_violation: f64,
    pub objective: f64,
    pub lambda_min: f64,
}

/// On-disk model (JSON). `beta` and `intercept` are in raw coordinates;
/// `beta_standardized` and `sigma_est` are in standardized coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format_version: u32,
    pub feature_names: Vec<String>,
    pub beta: Vec<f64>,
    pub intercept: f64,
    pub beta_standardized: Vec<f64>,
    pub standardization: StandardizationRecord,
    pub penalty: PenaltyRecord,
    pub sigma_est: Vec<Vec<f64>>,
    pub diagnostics: FitDiagnostics,
}

impl ModelFile {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: ModelFile =
            serde_json::from_str(text).map_err(|e| Error::Schema(format!("model file: {e}")))?;
        m.validate()?;
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json() + "\n")
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    fn validate(&self) -> Result<()> {
        if self.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::Schema(format!(
                "unsupported model format_version {}",
                self.format_version
            )));
        }
        let p = self.feature_names.len();
        let lens = [
            self.beta.len(),
            self.beta_standardized.len(),
            self.standardization.col_means.len(),
            self.standardization.col_scales.len(),
            self.sigma_est.len(),
        ];
        if lens.iter().any(|&l| l != p) || self.sigma_est.iter().any(|r| r.len() != p) {
            return Err(Error::Schema("model fields have inconsistent lengths".into()));
        }
        Ok(())
    }

    pub fn standardization(&self) -> Standardization {
        Standardization {
            col_means: self.standardization.col_means.clone(),
            col_scales: self.standardization.col_scales.clone(),
            y_mean: self.standardization.y_mean,
        }
    }

    pub fn imputer(&self) -> Result<GaussianImputer> {
        let p = self.feature_names.len();
        let sigma = DMatrix::from_fn(p, p, |i, j| self.sigma_est[i][j]);
        GaussianImputer::new(vec![0.0; p], sigma, crate::imputation::DEFAULT_PINV_TOL)
    }

    /// Raw-coordinate predictions: incomplete rows are completed in
    /// standardized coordinates, mapped back, and scored as `intercept + x' beta`.
    pub fn predict(&self, x_raw: &ObservedMatrix, mode: ImputeMode) -> Result<Vec<f64>> {
        let t = self.standardization();
        let xs = t.apply(x_raw)?;
        let imputer = match mode {
            ImputeMode::SigmaEst => self.imputer()?,
            ImputeMode::Identity => GaussianImputer::identity(self.feature_names.len()),
        };
        (0..xs.n_rows())
            .map(|i| {
                let z = imputer.conditional_impute(&xs.row(i))?;
                let x = t.unstandardize_row(&z);
                Ok(self.intercept + x.iter().zip(&self.beta).map(|(a, b)| a * b).sum::<f64>())
            })
            .collect()
    }
}
