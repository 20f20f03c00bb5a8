//! K-fold cross-validation over `(alpha, lambda, eta)`.
//!
//! Each fold standardizes its training rows, fits on them, completes the
//! held-out rows (conditional Gaussian under `Sigma_est`, or column means) and
//! scores squared prediction error. A grid point enters the table only when it
//! is feasible (convex) in every fold.

use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::covariance::{covariance_estimate, pairwise_counts, parameter_range};
use crate::data::{standardize, ObservedMatrix, ResponseVector};
use crate::error::{Error, Result};
use crate::imputation::{build_sigma_est, GaussianImputer};
use crate::model::{fit_standardized, predict_standardized, FittedModel, ImputeMode};
use crate::rng;
use crate::solver::{check_convexity, fit, PenaltyConfig, SolverConfig};

const MAX_SPLIT_ATTEMPTS: u64 = 10;

#[derive(Debug, Clone, PartialEq)]
pub enum LambdaGrid {
    Explicit(Vec<f64>),
    /// `count` log-spaced values from `lambda_alpha_max / alpha` down to
    /// `ratio` times that, floored at the convexity bound.
    Auto { count: usize, ratio: f64 },
}

impl Default for LambdaGrid {
    fn default() -> Self {
        LambdaGrid::Auto {
            count: 50,
            ratio: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvConfig {
    pub k_folds: usize,
    pub alphas: Vec<f64>,
    pub lambdas: LambdaGrid,
    pub etas: Vec<f64>,
    pub seed: u64,
    pub impute_mode: ImputeMode,
    pub solver: SolverConfig,
}

impl Default for CvConfig {
    fn default() -> Self {
        CvConfig {
            k_folds: 5,
            alphas: vec![0.1, 0.3, 0.5, 0.7, 0.9],
            lambdas: LambdaGrid::default(),
            etas: vec![0.0, 0.25, 0.5, 0.75, 1.0],
            seed: 0,
            impute_mode: ImputeMode::SigmaEst,
            solver: SolverConfig::default(),
        }
    }
}

impl CvConfig {
    fn validate(&self, n_rows: usize) -> Result<()> {
        if self.k_folds < 2 || self.k_folds > n_rows {
            return Err(Error::InvalidParameter(format!(
                "k_folds must lie in [2, {n_rows}], got {}",
                self.k_folds
            )));
        }
        if self.alphas.is_empty() || self.etas.is_empty() {
            return Err(Error::InvalidParameter("alpha and eta grids must be non-empty".into()));
        }
        if let Some(a) = self.alphas.iter().find(|a| !(0.0..=1.0).contains(*a)) {
            return Err(Error::InvalidParameter(format!("alpha {a} outside [0, 1]")));
        }
        if let Some(e) = self.etas.iter().find(|e| !(0.0..=1.0).contains(*e)) {
            return Err(Error::InvalidParameter(format!("eta {e} outside [0, 1]")));
        }
        match &self.lambdas {
            LambdaGrid::Explicit(l) if l.is_empty() => {
                Err(Error::InvalidParameter("lambda grid must be non-empty".into()))
            }
            LambdaGrid::Explicit(l) if l.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) => {
                Err(Error::InvalidParameter("lambdas must be finite and >= 0".into()))
            }
            LambdaGrid::Auto { count, ratio } if *count == 0 || !(*ratio > 0.0 && *ratio < 1.0) => {
                Err(Error::InvalidParameter("auto lambda grid needs count >= 1 and 0 < ratio < 1".into()))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridPoint {
    pub alpha: f64,
    pub lambda: f64,
    pub eta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvEntry {
    pub point: GridPoint,
    /// Mean squared prediction error over all held-out rows.
    pub mean_error: f64,
    /// Standard error of the per-fold mean errors.
    pub se: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvResult {
    pub entries: Vec<CvEntry>,
    pub best: GridPoint,
    /// `fold_assignments[row]` is the fold holding `row` out.
    pub fold_assignments: Vec<usize>,
    /// Grid points infeasible in at least one fold.
    pub skipped: Vec<GridPoint>,
}

impl CvResult {
    pub fn best_entry(&self) -> &CvEntry {
        self.entries
            .iter()
            .find(|e| e.point == self.best)
            .expect("best is a table entry")
    }

    /// Table as CSV: `alpha,lambda,eta,mean_error,se`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("alpha,lambda,eta,mean_error,se\n");
        for e in &self.entries {
            s.push_str(&format!(
                "{},{},{},{},{}\n",
                e.point.alpha, e.point.lambda, e.point.eta, e.mean_error, e.se
            ));
        }
        s
    }
}

/// One `(alpha, eta)` line of the grid with its descending lambdas.
#[derive(Debug, Clone)]
struct GridLine {
    alpha: f64,
    eta: f64,
    lambdas: Vec<f64>,
}

/// Log-spaced lambdas for one `(alpha, eta)`, feasible for the given range.
pub fn auto_lambdas(
    range: &crate::covariance::ParameterRange,
    alpha: f64,
    count: usize,
    ratio: f64,
) -> Vec<f64> {
    let hi = range.lambda_alpha_max / alpha.max(1e-3);
    let floor = if range.lambda_min_required > 0.0 {
        if alpha >= 1.0 {
            return Vec::new();
        }
        range.lambda_min_required / (1.0 - alpha) * (1.0 + 1e-6)
    } else {
        0.0
    };
    let lo = (hi * ratio).max(floor);
    if !(hi > lo) || count == 1 {
        let v = lo.max(hi);
        return if v > 0.0 { vec![v] } else { vec![ratio] };
    }
    let (lhi, llo) = (hi.ln(), lo.ln());
    (0..count)
        .map(|i| (lhi + (llo - lhi) * i as f64 / (count - 1) as f64).exp())
        .collect()
}

fn build_grid(x: &ObservedMatrix, y: &ResponseVector, cfg: &CvConfig) -> Result<Vec<GridLine>> {
    let mut lines = Vec::new();
    match &cfg.lambdas {
        LambdaGrid::Explicit(list) => {
            let mut l = list.clone();
            l.sort_by(|a, b| b.partial_cmp(a).unwrap());
            l.dedup();
            for &alpha in &cfg.alphas {
                for &eta in &cfg.etas {
                    lines.push(GridLine {
                        alpha,
                        eta,
                        lambdas: l.clone(),
                    });
                }
            }
        }
        LambdaGrid::Auto { count, ratio } => {
            let (xs, ys, _) = standardize(x, y)?;
            let ranges = cfg
                .etas
                .iter()
                .map(|&eta| covariance_estimate(&xs, &ys, eta).map(|c| parameter_range(&c)))
                .collect::<Result<Vec<_>>>()?;
            for &alpha in &cfg.alphas {
                for (&eta, range) in cfg.etas.iter().zip(&ranges) {
                    lines.push(GridLine {
                        alpha,
                        eta,
                        lambdas: auto_lambdas(range, alpha, *count, *ratio),
                    });
                }
            }
        }
    }
    Ok(lines)
}

/// Random balanced fold labels: sizes differ by at most one.
pub fn assign_folds(n: usize, k: usize, seed: u64, attempt: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::stream(seed, rng::PURPOSE_FOLDS, 0, attempt));
    let mut folds = vec![0; n];
    for (pos, &row) in order.iter().enumerate() {
        folds[row] = pos % k;
    }
    folds
}

/// Why a training part cannot be used, naming the offending column.
fn training_problem(x: &ObservedMatrix, y: &ResponseVector, needs_overlap: bool) -> Option<(usize, String)> {
    if let Err(e) = standardize(x, y) {
        return Some(match e {
            Error::DegenerateColumn { column, .. } | Error::ConstantColumn { column } => {
                (column, e.to_string())
            }
            other => (0, other.to_string()),
        });
    }
    if needs_overlap {
        if let Some((j, k)) = pairwise_counts(x).first_zero_overlap() {
            return Some((j, Error::ZeroOverlap { j, k }.to_string()));
        }
    }
    None
}

fn fold_rows(folds: &[usize], k: usize) -> Vec<(Vec<usize>, Vec<usize>)> {
    (0..k)
        .map(|f| {
            let train = (0..folds.len()).filter(|&i| folds[i] != f).collect();
            let valid = (0..folds.len()).filter(|&i| folds[i] == f).collect();
            (train, valid)
        })
        .collect()
}

/// Per grid point, the held-out squared-error sum on one fold (`None` when infeasible).
fn score_fold(
    x: &ObservedMatrix,
    y: &ResponseVector,
    train: &[usize],
    valid: &[usize],
    grid: &[GridLine],
    cfg: &CvConfig,
) -> Result<Vec<Vec<Option<f64>>>> {
    let xt = x.select_rows(train)?;
    let yt = y.select(train);
    let (xs, ys, t) = standardize(&xt, &yt)?;
    let xv = t.apply(&x.select_rows(valid)?)?;
    let yv = y.select(valid);
    let identity = GaussianImputer::identity(x.n_cols());

    let mut cov_cache: Vec<(f64, crate::covariance::CovarianceEstimate)> = Vec::new();
    let mut out = Vec::with_capacity(grid.len());
    for line in grid {
        let cov = match cov_cache.iter().find(|(e, _)| *e == line.eta) {
            Some((_, c)) => c.clone(),
            None => {
                let c = covariance_estimate(&xs, &ys, line.eta)?;
                cov_cache.push((line.eta, c.clone()));
                c
            }
        };
        let mut warm: Option<Vec<f64>> = None;
        let mut scores = Vec::with_capacity(line.lambdas.len());
        for &lambda in &line.lambdas {
            let penalty = PenaltyConfig::new(lambda, line.alpha)?;
            if check_convexity(&cov, &penalty).is_err() {
                scores.push(None);
                continue;
            }
            let res = fit(&cov, &penalty, &cfg.solver, warm.as_deref())?;
            let pred = match cfg.impute_mode {
                ImputeMode::SigmaEst => {
                    let imp = build_sigma_est(&cov, &penalty)?;
                    predict_standardized(&xv, &res.beta, t.y_mean, &imp, ImputeMode::SigmaEst)?
                }
                ImputeMode::Identity => {
                    predict_standardized(&xv, &res.beta, t.y_mean, &identity, ImputeMode::Identity)?
                }
            };
            let sse: f64 = pred
                .iter()
                .zip(yv.values())
                .map(|(p, y)| (p - y).powi(2))
                .sum();
            scores.push(Some(sse));
            warm = Some(res.beta);
        }
        out.push(scores);
    }
    Ok(out)
}

/// `a` beats `b`: lower error, then larger lambda, larger eta, smaller alpha.
fn better(a: &CvEntry, b: &CvEntry) -> bool {
    use std::cmp::Ordering::*;
    match a.mean_error.partial_cmp(&b.mean_error) {
        Some(Less) => return true,
        Some(Greater) => return false,
        _ => {}
    }
    if a.point.lambda != b.point.lambda {
        return a.point.lambda > b.point.lambda;
    }
    if a.point.eta != b.point.eta {
        return a.point.eta > b.point.eta;
    }
    a.point.alpha < b.point.alpha
}

pub fn cross_validate(x: &ObservedMatrix, y: &ResponseVector, cfg: &CvConfig) -> Result<CvResult> {
    let n = x.n_rows();
    if y.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: y.len(),
        });
    }
    cfg.validate(n)?;
    let grid = build_grid(x, y, cfg)?;
    let needs_overlap = cfg.etas.iter().any(|&e| e < 1.0);

    let mut folds = Vec::new();
    let mut last_problem = None;
    for attempt in 0..MAX_SPLIT_ATTEMPTS {
        let candidate = assign_folds(n, cfg.k_folds, cfg.seed, attempt);
        let problem = fold_rows(&candidate, cfg.k_folds).iter().find_map(|(train, _)| {
            let xt = x.select_rows(train).ok()?;
            training_problem(&xt, &y.select(train), needs_overlap)
        });
        match problem {
            None => {
                folds = candidate;
                last_problem = None;
                break;
            }
            Some(p) => last_problem = Some(p),
        }
    }
    if let Some((column, reason)) = last_problem {
        return Err(Error::FoldDegenerate { column, reason });
    }

    let splits = fold_rows(&folds, cfg.k_folds);
    let per_fold: Vec<Vec<Vec<Option<f64>>>> = splits
        .par_iter()
        .map(|(train, valid)| score_fold(x, y, train, valid, &grid, cfg))
        .collect::<Result<_>>()?;

    let k = cfg.k_folds as f64;
    let mut entries = Vec::new();
    let mut skipped = Vec::new();
    for (li, line) in grid.iter().enumerate() {
        for (lj, &lambda) in line.lambdas.iter().enumerate() {
            let point = GridPoint {
                alpha: line.alpha,
                lambda,
                eta: line.eta,
            };
            let sses: Option<Vec<f64>> = per_fold.iter().map(|f| f[li][lj]).collect();
            let Some(sses) = sses else {
                skipped.push(point);
                continue;
            };
            let mean_error = sses.iter().sum::<f64>() / n as f64;
            let fold_means: Vec<f64> = sses
                .iter()
                .zip(&splits)
                .map(|(s, (_, v))| s / v.len() as f64)
                .collect();
            let fm = fold_means.iter().sum::<f64>() / k;
            let var = fold_means.iter().map(|v| (v - fm).powi(2)).sum::<f64>() / (k - 1.0);
            entries.push(CvEntry {
                point,
                mean_error,
                se: (var / k).sqrt(),
            });
        }
    }
    let best = entries
        .iter()
        .fold(None::<&CvEntry>, |acc, e| match acc {
            Some(b) if !better(e, b) => Some(b),
            _ => Some(e),
        })
        .ok_or(Error::EmptyGrid)?
        .point;
    Ok(CvResult {
        entries,
        best,
        fold_assignments: folds,
        skipped,
    })
}

#[derive(Debug, Clone)]
pub struct Selection {
    pub model: FittedModel,
    pub cv: CvResult,
}

impl Selection {
    pub fn fit(&self) -> &crate::solver::FitResult {
        &self.model.fit
    }

    pub fn imputer(&self) -> &GaussianImputer {
        &self.model.imputer
    }
}

/// Cross-validates, then refits on every row at the selected point.
pub fn select_and_refit(x: &ObservedMatrix, y: &ResponseVector, cfg: &CvConfig) -> Result<Selection> {
    let cv = cross_validate(x, y, cfg)?;
    let (xs, ys, t) = standardize(x, y)?;
    let cov = covariance_estimate(&xs, &ys, cv.best.eta)?;
    let penalty = PenaltyConfig::new(cv.best.lambda, cv.best.alpha)?;
    let model = fit_standardized(&cov, t, penalty, &cfg.solver, None)?;
    Ok(Selection { model, cv })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn folds_are_balanced_partitions() {
        for (n, k) in [(10, 3), (7, 7), (50, 5), (11, 2)] {
            let f = assign_folds(n, k, 42, 0);
            let mut sizes = vec![0; k];
            for &g in &f {
                sizes[g] += 1;
            }
            let (lo, hi) = (sizes.iter().min().unwrap(), sizes.iter().max().unwrap());
            assert!(hi - lo <= 1, "{sizes:?}");
            assert_eq!(sizes.iter().sum::<usize>(), n);
        }
    }

    #[test]
    fn tie_break_prefers_larger_lambda_then_eta_then_smaller_alpha() {
        let e = |alpha, lambda, eta| CvEntry {
            point: GridPoint { alpha, lambda, eta },
            mean_error: 1.0,
            se: 0.0,
        };
        assert!(better(&e(0.5, 2.0, 0.0), &e(0.5, 1.0, 1.0)));
        assert!(better(&e(0.5, 1.0, 1.0), &e(0.1, 1.0, 0.5)));
        assert!(better(&e(0.1, 1.0, 0.5), &e(0.5, 1.0, 0.5)));
        let mut low = e(0.9, 0.1, 0.0);
        low.mean_error = 0.5;
        assert!(better(&low, &e(0.1, 5.0, 1.0)));
    }

    #[test]
    fn auto_grid_respects_convexity_floor() {
        let r = crate::covariance::ParameterRange {
            lambda_alpha_max: 2.0,
            alpha_max: 0.8,
            lambda_min_required: 0.5,
        };
        let l = auto_lambdas(&r, 0.5, 50, 1e-3);
        assert_eq!(l.len(), 50);
        assert!((l[0] - 4.0).abs() < 1e-12);
        assert!(l.windows(2).all(|w| w[0] > w[1]));
        assert!(l.iter().all(|v| v * 0.5 > 0.5));
        assert!(auto_lambdas(&r, 1.0, 50, 1e-3).is_empty());
    }
}
