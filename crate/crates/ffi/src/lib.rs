//! C interface to the `misnet` solver.
//!
//! Objects cross the boundary as opaque handles created by `*_new`/`misnet_fit`
//! and released by the matching `*_free`. Every function returns a
//! [`MisnetStatus`]; on failure a description is available from
//! [`misnet_last_error_message`] on the same thread.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use misnet::{
    covariance_estimate, fit_raw, parameter_range, standardize, CovarianceEstimate, Error, FittedModel, ImputeMode,
    ObservedMatrix, PenaltyConfig, ResponseVector, SolverConfig,
};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MisnetStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DataError = 3,
    /// The penalty leaves the objective non-convex, or nothing was feasible.
    Nonconvex = 4,
    Diverged = 5,
    Panic = 6,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MisnetImpute {
    /// Conditional mean under the fitted covariance.
    Gaussian = 0,
    /// Training column means.
    Mean = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MisnetParameterRange {
    pub lambda_alpha_max: f64,
    pub alpha_max: f64,
    pub lambda_min_required: f64,
}

/// Feature matrix with missing entries plus a complete response.
pub struct MisnetDataset {
    x: ObservedMatrix,
    y: ResponseVector,
}

/// Covariance estimate of a standardized dataset.
pub struct MisnetCovariance {
    inner: CovarianceEstimate,
}

/// Fitted model; predicts on raw rows.
pub struct MisnetModel {
    inner: FittedModel,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn status_of(e: &Error) -> MisnetStatus {
    match e {
        Error::NonConvex { .. } | Error::EmptyGrid => MisnetStatus::Nonconvex,
        Error::Diverged { .. } | Error::DegenerateCoordinate { .. } => MisnetStatus::Diverged,
        Error::InvalidParameter(_) | Error::DimensionMismatch { .. } => MisnetStatus::InvalidArgument,
        _ => MisnetStatus::DataError,
    }
}

struct Failure(MisnetStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(MisnetStatus::NullPointer, format!("{what} is null"))
}

fn guard<F: FnOnce() -> Result<(), Failure>>(f: F) -> MisnetStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => MisnetStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            MisnetStatus::Panic
        }
    }
}

fn checked_len(n_rows: usize, n_cols: usize) -> Result<usize, Failure> {
    n_rows
        .checked_mul(n_cols)
        .ok_or_else(|| Failure(MisnetStatus::InvalidArgument, "matrix size overflows".into()))
}

/// Builds an observed matrix from row-major values and an optional mask
/// (nonzero = observed). Without a mask, NaN marks a missing entry.
///
/// # Safety
/// `values` must hold `n_rows * n_cols` doubles; `mask`, when non-null, as many bytes.
unsafe fn read_matrix(
    values: *const f64,
    mask: *const u8,
    n_rows: usize,
    n_cols: usize,
) -> Result<ObservedMatrix, Failure> {
    if values.is_null() {
        return Err(null("values"));
    }
    let len = checked_len(n_rows, n_cols)?;
    let v = slice::from_raw_parts(values, len);
    let m: Vec<bool> = if mask.is_null() {
        v.iter().map(|x| !x.is_nan()).collect()
    } else {
        slice::from_raw_parts(mask, len).iter().map(|&b| b != 0).collect()
    };
    let filled: Vec<f64> = v.iter().zip(&m).map(|(&x, &o)| if o { x } else { 0.0 }).collect();
    Ok(ObservedMatrix::new(filled, m, n_rows, n_cols)?)
}

/// Creates a dataset from a row-major `n_rows x n_cols` feature matrix and an
/// `n_rows` response.
///
/// # Safety
/// `values` and `y` must point to arrays of the stated sizes; `mask` is either
/// null or points to `n_rows * n_cols` bytes; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn misnet_dataset_new(
    values: *const f64,
    mask: *const u8,
    y: *const f64,
    n_rows: usize,
    n_cols: usize,
    out: *mut *mut MisnetDataset,
) -> MisnetStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        if y.is_null() {
            return Err(null("y"));
        }
        let x = read_matrix(values, mask, n_rows, n_cols)?;
        let y = ResponseVector::new(slice::from_raw_parts(y, n_rows).to_vec())?;
        *out = Box::into_raw(Box::new(MisnetDataset { x, y }));
        Ok(())
    })
}

/// # Safety
/// `ds` must be null or a handle from [`misnet_dataset_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn misnet_dataset_free(ds: *mut MisnetDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

/// Standardizes the dataset and builds its eta-weighted covariance estimate.
///
/// # Safety
/// `ds` must be a live dataset handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn misnet_covariance_new(
    ds: *const MisnetDataset,
    eta: f64,
    out: *mut *mut MisnetCovariance,
) -> MisnetStatus {
    guard(|| {
        let ds = ds.as_ref().ok_or_else(|| null("dataset"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let (xs, ys, _) = standardize(&ds.x, &ds.y)?;
        let inner = covariance_estimate(&xs, &ys, eta)?;
        *out = Box::into_raw(Box::new(MisnetCovariance { inner }));
        Ok(())
    })
}

/// Smallest eigenvalue of the estimated feature covariance.
///
/// # Safety
/// `cov` must be a live covariance handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn misnet_covariance_lambda_min(cov: *const MisnetCovariance, out: *mut f64) -> MisnetStatus {
    guard(|| {
        let cov = cov.as_ref().ok_or_else(|| null("covariance"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = cov.inner.lambda_min();
        Ok(())
    })
}

/// # Safety
/// `cov` must be a live covariance handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn misnet_covariance_parameter_range(
    cov: *const MisnetCovariance,
    out: *mut MisnetParameterRange,
) -> MisnetStatus {
    guard(|| {
        let cov = cov.as_ref().ok_or_else(|| null("covariance"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let r = parameter_range(&cov.inner);
        *out = MisnetParameterRange {
            lambda_alpha_max: r.lambda_alpha_max,
            alpha_max: r.alpha_max,
            lambda_min_required: r.lambda_min_required,
        };
        Ok(())
    })
}

/// # Safety
/// `cov` must be null or a handle from [`misnet_covariance_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn misnet_covariance_free(cov: *mut MisnetCovariance) {
    if !cov.is_null() {
        drop(Box::from_raw(cov));
    }
}

/// Fits at `(lambda, alpha, eta)`. A non-positive `tol` or zero `max_sweeps`
/// selects the default.
///
/// # Safety
/// `ds` must be a live dataset handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn misnet_fit(
    ds: *const MisnetDataset,
    lambda: f64,
    alpha: f64,
    eta: f64,
    tol: f64,
    max_sweeps: usize,
    out: *mut *mut MisnetModel,
) -> MisnetStatus {
    guard(|| {
        let ds = ds.as_ref().ok_or_else(|| null("dataset"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        if !(0.0..=1.0).contains(&eta) {
            return Err(Failure(MisnetStatus::InvalidArgument, format!("eta {eta} outside [0, 1]")));
        }
        let mut solver = SolverConfig::default();
        if tol > 0.0 {
            solver.tol = tol;
        }
        if max_sweeps > 0 {
            solver.max_sweeps = max_sweeps;
        }
        let penalty = PenaltyConfig::new(lambda, alpha)?;
        let inner = fit_raw(&ds.x, &ds.y, penalty, eta, &solver)?;
        *out = Box::into_raw(Box::new(MisnetModel { inner }));
        Ok(())
    })
}

/// Number of features the model was fitted on.
///
/// # Safety
/// `model` must be a live model handle.
#[no_mangle]
pub unsafe extern "C" fn misnet_model_n_features(model: *const MisnetModel) -> usize {
    model.as_ref().map_or(0, |m| m.inner.fit.beta.len())
}

/// Copies the raw-coordinate coefficients into `out[0..len]`; `len` must equal
/// the number of features.
///
/// # Safety
/// `model` must be a live model handle and `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn misnet_model_coefficients(model: *const MisnetModel, out: *mut f64, len: usize) -> MisnetStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let (_, beta) = m.inner.raw_coefficients();
        if len != beta.len() {
            return Err(Error::DimensionMismatch {
                expected: beta.len(),
                found: len,
            }
            .into());
        }
        slice::from_raw_parts_mut(out, len).copy_from_slice(&beta);
        Ok(())
    })
}

/// # Safety
/// `model` must be a live model handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn misnet_model_intercept(model: *const MisnetModel, out: *mut f64) -> MisnetStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = m.inner.raw_coefficients().0;
        Ok(())
    })
}

/// Writes 1 to `out` if coordinate descent met its tolerance, else 0.
///
/// # Safety
/// `model` must be a live model handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn misnet_model_converged(model: *const MisnetModel, out: *mut i32) -> MisnetStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = i32::from(m.inner.fit.converged);
        Ok(())
    })
}

/// Predicts `n_rows` raw rows, completing missing entries per `impute`.
/// Missing entries follow the same mask/NaN convention as [`misnet_dataset_new`].
///
/// # Safety
/// `values` must hold `n_rows * n_cols` doubles, `mask` is null or as many
/// bytes, and `out` must hold `n_rows` doubles.
#[no_mangle]
pub unsafe extern "C" fn misnet_model_predict(
    model: *const MisnetModel,
    values: *const f64,
    mask: *const u8,
    n_rows: usize,
    n_cols: usize,
    impute: MisnetImpute,
    out: *mut f64,
) -> MisnetStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let x = read_matrix(values, mask, n_rows, n_cols)?;
        let mode = match impute {
            MisnetImpute::Gaussian => ImputeMode::SigmaEst,
            MisnetImpute::Mean => ImputeMode::Identity,
        };
        let preds = m.inner.predict(&x, mode)?;
        slice::from_raw_parts_mut(out, n_rows).copy_from_slice(&preds);
        Ok(())
    })
}

/// # Safety
/// `model` must be null or a handle from [`misnet_fit`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn misnet_model_free(model: *mut MisnetModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Description of the last failure on this thread, or null. The string stays
/// valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn misnet_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}
