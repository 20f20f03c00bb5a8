//! Elastic-net regression for design matrices with missing entries.
//!
//! The estimator replaces the Gram matrix of the usual covariance-form
//! objective with a pairwise-deletion estimate (optionally blended toward mean
//! imputation by `eta`), shifts its spectrum to keep the problem convex and
//! solves it by cyclic coordinate descent. Incomplete test rows are completed
//! with their conditional mean under the fitted covariance.

pub mod cli;
pub mod covariance;
pub mod data;
pub mod error;
pub mod imputation;
pub mod linalg;
pub mod model;
pub mod modelsel;
pub mod rng;
pub mod simulate;
pub mod solver;

pub use covariance::{covariance_estimate, parameter_range, CovarianceEstimate, ParameterRange};
pub use data::{standardize, ObservedMatrix, ResponseVector, Standardization};
pub use error::{Error, Result};
pub use imputation::{build_sigma_est, mean_impute, GaussianImputer};
pub use model::{fit_raw, FittedModel, ImputeMode, ModelFile};
pub use modelsel::{cross_validate, select_and_refit, CvConfig, CvResult, LambdaGrid};
pub use solver::{fit, FitResult, PenaltyConfig, SolverConfig};
