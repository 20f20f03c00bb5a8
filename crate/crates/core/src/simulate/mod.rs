//! Monte Carlo study of the missing-data estimators.
//!
//! Every repetition draws its data from its own seeded stream, so repetitions
//! run in parallel and still aggregate to bit-identical tables.

mod scenario;

pub use scenario::{
    default_beta, log_grid, Method, MissingPattern, ScenarioGrid, ScenarioSpec, SigmaStruct, SnrConvention,
};

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::covariance::{covariance_estimate, pairwise_counts, CovarianceEstimate};
use crate::data::{standardize, ObservedMatrix, ResponseVector, Standardization};
use crate::error::{Error, Result};
use crate::imputation::{build_sigma_est, mean_impute, GaussianImputer, DEFAULT_PINV_TOL};
use crate::model::ImputeMode;
use crate::modelsel::{cross_validate, CvConfig, LambdaGrid};
use crate::rng;
use crate::solver::{check_convexity, fit, PenaltyConfig, SolverConfig};

/// Attempts per repetition before the scenario gives up on it.
const MAX_ATTEMPTS_PER_REP: u64 = 1000;

pub fn make_sigma(structure: SigmaStruct, p: usize) -> DMatrix<f64> {
    match structure {
        SigmaStruct::CompoundSymmetry(rho) => {
            DMatrix::from_fn(p, p, |i, j| if i == j { 1.0 } else { rho })
        }
        SigmaStruct::Ar1(rho) => {
            DMatrix::from_fn(p, p, |i, j| rho.powi((i as i32 - j as i32).abs()))
        }
    }
}

/// Per-column missingness probabilities; their mean is `gamma` for every pattern.
pub fn column_missing_rates(pattern: MissingPattern, gamma: f64, p: usize) -> Result<Vec<f64>> {
    if !(gamma >= 0.0) {
        return Err(Error::InvalidParameter(format!("gamma must be >= 0, got {gamma}")));
    }
    let two_p = 2.0 * p as f64;
    let rates: Vec<f64> = (1..=p)
        .map(|j| {
            let j = j as f64;
            match pattern {
                MissingPattern::Uniform => gamma,
                MissingPattern::HighOnSignals => 2.0 * gamma * (two_p - 2.0 * j + 1.0) / two_p,
                MissingPattern::HighOnDummies => 2.0 * gamma * (2.0 * j - 1.0) / two_p,
            }
        })
        .collect();
    if let Some((j, r)) = rates.iter().enumerate().find(|(_, r)| !(0.0..=1.0).contains(*r)) {
        return Err(Error::InvalidParameter(format!(
            "missing rate {r} for column {j} lies outside [0, 1]"
        )));
    }
    Ok(rates)
}

/// `n x p` observation mask, row-major; entry `(i, j)` is missing with
/// probability `rate_j`, independently.
pub fn make_mask<R: Rng + ?Sized>(
    pattern: MissingPattern,
    gamma: f64,
    n: usize,
    p: usize,
    rng: &mut R,
) -> Result<Vec<bool>> {
    let rates = column_missing_rates(pattern, gamma, p)?;
    let mut mask = Vec::with_capacity(n * p);
    for _ in 0..n {
        for &r in &rates {
            let u: f64 = rng.random();
            mask.push(u >= r);
        }
    }
    Ok(mask)
}

/// One simulated data set.
#[derive(Debug, Clone)]
pub struct Dataset {
    /// Complete design, row-major `n x p`.
    pub x_full: Vec<f64>,
    pub x_observed: ObservedMatrix,
    pub y: ResponseVector,
    /// Noise standard deviation.
    pub sigma_noise: f64,
}

impl Dataset {
    pub fn n_rows(&self) -> usize {
        self.x_observed.n_rows()
    }
}

pub fn noise_sd(spec: &ScenarioSpec, sigma: &DMatrix<f64>) -> f64 {
    let b = nalgebra::DVector::from_column_slice(&spec.beta_true);
    let signal = (b.transpose() * sigma * &b)[(0, 0)];
    match spec.snr_convention {
        SnrConvention::Variance => (signal / spec.snr).sqrt(),
        SnrConvention::Amplitude => signal.sqrt() / spec.snr,
    }
}

fn draw_rows<R: Rng + ?Sized>(
    spec: &ScenarioSpec,
    chol_l: &DMatrix<f64>,
    sigma_noise: f64,
    n: usize,
    rng: &mut R,
) -> Result<Dataset> {
    let p = spec.n_cols;
    let mut x_full = vec![0.0; n * p];
    let mut z = vec![0.0; p];
    for i in 0..n {
        for v in z.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        for a in 0..p {
            let mut s = 0.0;
            for b in 0..=a {
                s += chol_l[(a, b)] * z[b];
            }
            x_full[i * p + a] = s;
        }
    }
    let y: Vec<f64> = (0..n)
        .map(|i| {
            let e: f64 = rng.sample(StandardNormal);
            let signal: f64 = (0..p).map(|j| x_full[i * p + j] * spec.beta_true[j]).sum();
            signal + sigma_noise * e
        })
        .collect();
    let mask = make_mask(spec.missing_pattern, spec.gamma, n, p, rng)?;
    Ok(Dataset {
        x_observed: ObservedMatrix::new(x_full.clone(), mask, n, p)?,
        x_full,
        y: ResponseVector::new(y)?,
        sigma_noise,
    })
}

fn cholesky(sigma: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    sigma
        .clone()
        .cholesky()
        .map(|c| c.l())
        .ok_or_else(|| Error::Factorization("covariance is not positive definite".into()))
}

/// Draws `spec.n_rows` rows from `N(0, Sigma)`, the response `X beta + eps`
/// and the scenario's mask.
pub fn generate_dataset<R: Rng + ?Sized>(spec: &ScenarioSpec, rng: &mut R) -> Result<Dataset> {
    spec.validate()?;
    let sigma = make_sigma(spec.sigma_struct, spec.n_cols);
    let l = cholesky(&sigma)?;
    draw_rows(spec, &l, noise_sd(spec, &sigma), spec.n_rows, rng)
}

/// Shared, precomputed pieces of a scenario.
struct Context<'a> {
    spec: &'a ScenarioSpec,
    sigma: DMatrix<f64>,
    chol_l: DMatrix<f64>,
    sigma_noise: f64,
}

impl<'a> Context<'a> {
    fn new(spec: &'a ScenarioSpec) -> Result<Self> {
        spec.validate()?;
        let sigma = make_sigma(spec.sigma_struct, spec.n_cols);
        let chol_l = cholesky(&sigma)?;
        let sigma_noise = noise_sd(spec, &sigma);
        Ok(Context {
            spec,
            sigma,
            chol_l,
            sigma_noise,
        })
    }

    /// Training data for repetition `rep`, redrawn until it is usable.
    /// Returns the data, its standardized form and the number of redraws.
    fn training(&self, rep: usize, needs_overlap: bool) -> Result<(Prepared, usize)> {
        for attempt in 0..MAX_ATTEMPTS_PER_REP {
            let mut r = rng::stream(self.spec.seed, rng::PURPOSE_TRAIN, rep as u64, attempt);
            let data = draw_rows(self.spec, &self.chol_l, self.sigma_noise, self.spec.n_rows, &mut r)?;
            if needs_overlap && pairwise_counts(&data.x_observed).first_zero_overlap().is_some() {
                continue;
            }
            match standardize(&data.x_observed, &data.y) {
                Ok((xs, ys, t)) => {
                    return Ok((
                        Prepared {
                            data,
                            xs,
                            ys,
                            transform: t,
                        },
                        attempt as usize,
                    ))
                }
                Err(Error::DegenerateColumn { .. } | Error::ConstantColumn { .. }) => continue,
                Err(e) => return Err(e),
            }
        }
        Err(Error::TooManyRedraws {
            redraws: MAX_ATTEMPTS_PER_REP as usize,
            reps: 1,
        })
    }
}

struct Prepared {
    data: Dataset,
    xs: ObservedMatrix,
    ys: ResponseVector,
    transform: Standardization,
}

impl Prepared {
    /// `mean_i ((b0 + x_i' b) - x_i' beta_true)^2` over the complete design.
    fn mse(&self, beta_std: &[f64], beta_true: &[f64]) -> f64 {
        let (b0, b) = self.transform.raw_coefficients(beta_std);
        let p = b.len();
        let n = self.data.n_rows();
        let x = &self.data.x_full;
        (0..n)
            .map(|i| {
                let row = &x[i * p..(i + 1) * p];
                let d: f64 = row.iter().zip(b.iter().zip(beta_true)).map(|(xv, (bh, bt))| xv * (bh - bt)).sum();
                (b0 + d).powi(2)
            })
            .sum::<f64>()
            / n as f64
    }

    fn estimates(&self, method: Method, etas: &[f64]) -> Result<Vec<CovarianceEstimate>> {
        match method {
            Method::Nondc => Ok(vec![covariance_estimate(&self.xs, &self.ys, 0.0)?]),
            Method::MeanImpute => {
                let filled = mean_impute(&self.xs)?;
                let c = covariance_estimate(&filled, &self.ys, 1.0)?;
                Ok(vec![c])
            }
            Method::Combined => etas
                .iter()
                .map(|&e| covariance_estimate(&self.xs, &self.ys, e))
                .collect(),
        }
    }
}

/// Grid coordinates of every cell of a method's table, in table order:
/// eta-major, then alpha, then lambda (descending).
fn method_cells(method: Method, grid: &ScenarioGrid) -> Vec<(f64, f64, f64)> {
    let etas: Vec<f64> = match method {
        Method::Nondc => vec![0.0],
        Method::MeanImpute => vec![1.0],
        Method::Combined => grid.etas.clone(),
    };
    let lambdas = sorted_desc(&grid.lambdas);
    let mut cells = Vec::new();
    for &eta in &etas {
        for &alpha in &grid.alphas {
            for &lambda in &lambdas {
                cells.push((alpha, lambda, eta));
            }
        }
    }
    cells
}

fn sorted_desc(v: &[f64]) -> Vec<f64> {
    let mut l = v.to_vec();
    l.sort_by(|a, b| b.partial_cmp(a).unwrap());
    l.dedup();
    l
}

/// MSE of every cell (`None` where the cell is non-convex for this data).
fn score_grid(
    prep: &Prepared,
    method: Method,
    grid: &ScenarioGrid,
    beta_true: &[f64],
    solver: &SolverConfig,
) -> Result<Vec<Option<f64>>> {
    let lambdas = sorted_desc(&grid.lambdas);
    let mut out = Vec::new();
    for cov in prep.estimates(method, &grid.etas)? {
        for &alpha in &grid.alphas {
            let mut warm: Option<Vec<f64>> = None;
            for &lambda in &lambdas {
                let penalty = PenaltyConfig::new(lambda, alpha)?;
                if check_convexity(&cov, &penalty).is_err() {
                    out.push(None);
                    continue;
                }
                let res = fit(&cov, &penalty, solver, warm.as_deref())?;
                out.push(Some(prep.mse(&res.beta, beta_true)));
                warm = Some(res.beta);
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellStat {
    pub alpha: f64,
    pub lambda: f64,
    pub eta: f64,
    pub mean_mse: f64,
    /// Standard error of the mean over repetitions.
    pub se: f64,
    /// Repetitions in which the cell was feasible.
    pub n_reps: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodTable {
    pub method: Method,
    pub cells: Vec<CellStat>,
    /// Index of the smallest mean MSE among cells feasible in every repetition.
    pub best: Option<usize>,
}

impl MethodTable {
    pub fn best_cell(&self) -> Option<&CellStat> {
        self.best.map(|i| &self.cells[i])
    }

    /// Smallest mean MSE per eta over complete cells, as `(eta, cell)`.
    pub fn best_per_eta(&self, reps: usize) -> Vec<(f64, &CellStat)> {
        let mut out: Vec<(f64, &CellStat)> = Vec::new();
        for c in self.cells.iter().filter(|c| c.n_reps == reps) {
            match out.iter_mut().find(|(e, _)| *e == c.eta) {
                Some(slot) if c.mean_mse < slot.1.mean_mse => slot.1 = c,
                Some(_) => {}
                None => out.push((c.eta, c)),
            }
        }
        out
    }

    /// `alpha,lambda,eta,mean_mse,se,n_reps`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("alpha,lambda,eta,mean_mse,se,n_reps\n");
        for c in &self.cells {
            s.push_str(&format!(
                "{},{},{},{},{},{}\n",
                c.alpha, c.lambda, c.eta, c.mean_mse, c.se, c.n_reps
            ));
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioResult {
    pub spec: ScenarioSpec,
    pub tables: Vec<MethodTable>,
    /// Repetitions redrawn because the data was unusable.
    pub redraws: usize,
}

impl ScenarioResult {
    pub fn table(&self, method: Method) -> Option<&MethodTable> {
        self.tables.iter().find(|t| t.method == method)
    }
}

fn mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// `sqrt(se_a^2 + se_b^2)`.
pub fn pooled_se(a: f64, b: f64) -> f64 {
    (a * a + b * b).sqrt()
}

fn check_redraws(redraws: usize, reps: usize) -> Result<()> {
    // at most 5% of the repetitions may be redrawn
    if redraws * 20 > reps {
        return Err(Error::TooManyRedraws { redraws, reps });
    }
    Ok(())
}

/// Runs `spec.reps` repetitions of every method over `spec.grid`.
pub fn run_scenario(spec: &ScenarioSpec) -> Result<ScenarioResult> {
    let ctx = Context::new(spec)?;
    let solver = SolverConfig::default();
    let needs_overlap = spec.methods.iter().any(|m| match m {
        Method::Nondc => true,
        Method::MeanImpute => false,
        Method::Combined => spec.grid.etas.iter().any(|&e| e < 1.0),
    });
    let per_rep: Vec<(Vec<Vec<Option<f64>>>, usize)> = (0..spec.reps)
        .into_par_iter()
        .map(|rep| {
            let (prep, redraws) = ctx.training(rep, needs_overlap)?;
            let scores = spec
                .methods
                .iter()
                .map(|&m| score_grid(&prep, m, &spec.grid, &spec.beta_true, &solver))
                .collect::<Result<Vec<_>>>()?;
            Ok((scores, redraws))
        })
        .collect::<Result<_>>()?;
    let redraws: usize = per_rep.iter().map(|(_, r)| r).sum();
    check_redraws(redraws, spec.reps)?;

    let mut tables = Vec::new();
    for (mi, &method) in spec.methods.iter().enumerate() {
        let coords = method_cells(method, &spec.grid);
        let cells: Vec<CellStat> = coords
            .iter()
            .enumerate()
            .map(|(ci, &(alpha, lambda, eta))| {
                let vals: Vec<f64> = per_rep.iter().filter_map(|(s, _)| s[mi][ci]).collect();
                let (mean_mse, se) = mean_se(&vals);
                CellStat {
                    alpha,
                    lambda,
                    eta,
                    mean_mse,
                    se,
                    n_reps: vals.len(),
                }
            })
            .collect();
        let best = best_complete_cell(&cells, spec.reps);
        tables.push(MethodTable { method, cells, best });
    }
    Ok(ScenarioResult {
        spec: spec.clone(),
        tables,
        redraws,
    })
}

/// Lowest mean among cells feasible in all `reps`; ties go to larger lambda,
/// larger eta, then smaller alpha.
fn best_complete_cell(cells: &[CellStat], reps: usize) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, c) in cells.iter().enumerate() {
        if c.n_reps != reps {
            continue;
        }
        let take = match best {
            None => true,
            Some(b) => {
                let o = &cells[b];
                if c.mean_mse != o.mean_mse {
                    c.mean_mse < o.mean_mse
                } else if c.lambda != o.lambda {
                    c.lambda > o.lambda
                } else if c.eta != o.eta {
                    c.eta > o.eta
                } else {
                    c.alpha < o.alpha
                }
            }
        };
        if take {
            best = Some(i);
        }
    }
    best
}

/// Covariance used to complete incomplete test rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SigmaMode {
    SigmaEst,
    Identity,
    /// The generating covariance (known only inside the simulator).
    SigmaTrue,
}

impl SigmaMode {
    pub fn name(&self) -> &'static str {
        match self {
            SigmaMode::SigmaEst => "sigma_est",
            SigmaMode::Identity => "identity",
            SigmaMode::SigmaTrue => "sigma_true",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Chosen {
    pub alpha: f64,
    pub lambda: f64,
    pub eta: f64,
}

impl From<&CellStat> for Chosen {
    fn from(c: &CellStat) -> Self {
        Chosen {
            alpha: c.alpha,
            lambda: c.lambda,
            eta: c.eta,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorSummary {
    pub mean: f64,
    pub se: f64,
    pub n_trials: usize,
    /// Trials dropped because the chosen parameters were non-convex for that data.
    pub skipped: usize,
}

impl ErrorSummary {
    fn from_values(values: &[f64], skipped: usize) -> Self {
        let (mean, se) = mean_se(values);
        ErrorSummary {
            mean,
            se,
            n_trials: values.len(),
            skipped,
        }
    }
}

/// Test-set mean squared prediction error at fixed parameters.
///
/// Trial `t` trains on the same data as repetition `t` of [`run_scenario`] and
/// scores a fresh test set of `n_test` rows with the scenario's covariance and
/// missing pattern. The returned summaries follow the order of `modes`.
pub fn run_test_error_modes(
    spec: &ScenarioSpec,
    chosen: Chosen,
    modes: &[SigmaMode],
    trials: usize,
) -> Result<Vec<ErrorSummary>> {
    let ctx = Context::new(spec)?;
    let penalty = PenaltyConfig::new(chosen.lambda, chosen.alpha)?;
    let solver = SolverConfig::default();
    let per_trial: Vec<Option<Vec<f64>>> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let (prep, _) = ctx.training(t, chosen.eta < 1.0)?;
            let cov = covariance_estimate(&prep.xs, &prep.ys, chosen.eta)?;
            if check_convexity(&cov, &penalty).is_err() {
                return Ok(None);
            }
            let res = fit(&cov, &penalty, &solver, None)?;
            let mut r = rng::stream(spec.seed, rng::PURPOSE_TEST, t as u64, 0);
            let test = draw_rows(spec, &ctx.chol_l, ctx.sigma_noise, spec.n_test, &mut r)?;
            let xt = prep.transform.apply(&test.x_observed)?;
            let errors = modes
                .iter()
                .map(|&mode| {
                    let imputer = match mode {
                        SigmaMode::SigmaEst => build_sigma_est(&cov, &penalty)?,
                        SigmaMode::Identity => GaussianImputer::identity(spec.n_cols),
                        SigmaMode::SigmaTrue => true_imputer(&ctx.sigma, &prep.transform)?,
                    };
                    let sq: f64 = (0..xt.n_rows())
                        .map(|i| {
                            let z = imputer.conditional_impute(&xt.row(i))?;
                            let pred = prep.transform.y_mean
                                + z.iter().zip(&res.beta).map(|(a, b)| a * b).sum::<f64>();
                            Ok((test.y.values()[i] - pred).powi(2))
                        })
                        .sum::<Result<f64>>()?;
                    Ok(sq / xt.n_rows() as f64)
                })
                .collect::<Result<Vec<f64>>>()?;
            Ok(Some(errors))
        })
        .collect::<Result<_>>()?;
    let skipped = per_trial.iter().filter(|v| v.is_none()).count();
    Ok((0..modes.len())
        .map(|m| {
            let vals: Vec<f64> = per_trial.iter().flatten().map(|v| v[m]).collect();
            ErrorSummary::from_values(&vals, skipped)
        })
        .collect())
}

pub fn run_test_error(
    spec: &ScenarioSpec,
    chosen: Chosen,
    mode: SigmaMode,
    trials: usize,
) -> Result<ErrorSummary> {
    Ok(run_test_error_modes(spec, chosen, &[mode], trials)?.remove(0))
}

/// The generating `N(0, Sigma)` expressed in the training standardization.
fn true_imputer(sigma: &DMatrix<f64>, t: &Standardization) -> Result<GaussianImputer> {
    let p = sigma.nrows();
    let s = DMatrix::from_fn(p, p, |i, j| sigma[(i, j)] / (t.col_scales[i] * t.col_scales[j]));
    let mu = (0..p).map(|j| -t.col_means[j] / t.col_scales[j]).collect();
    GaussianImputer::new(mu, s, DEFAULT_PINV_TOL)
}

/// Ratio of the MSE at the cross-validated parameters to the best MSE on the
/// same grid, per trial, summarized for each imputation mode (in `modes` order).
///
/// Uses `spec.cv_grid` for both the oracle and the cross-validation search.
pub fn run_cv_ratio(
    spec: &ScenarioSpec,
    modes: &[ImputeMode],
    folds: usize,
    trials: usize,
) -> Result<Vec<ErrorSummary>> {
    let ctx = Context::new(spec)?;
    let grid = &spec.cv_grid;
    let solver = SolverConfig::default();
    let needs_overlap = grid.etas.iter().any(|&e| e < 1.0);
    let coords = method_cells(Method::Combined, grid);
    let per_trial: Vec<Vec<Option<f64>>> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let (prep, _) = ctx.training(t, needs_overlap)?;
            let mses = score_grid(&prep, Method::Combined, grid, &spec.beta_true, &solver)?;
            let oracle = mses.iter().flatten().copied().fold(f64::INFINITY, f64::min);
            modes
                .iter()
                .map(|&mode| {
                    let cfg = CvConfig {
                        k_folds: folds,
                        alphas: grid.alphas.clone(),
                        lambdas: LambdaGrid::Explicit(grid.lambdas.clone()),
                        etas: grid.etas.clone(),
                        seed: rng_seed(spec.seed, t),
                        impute_mode: mode,
                        solver,
                    };
                    let cv = match cross_validate(&prep.data.x_observed, &prep.data.y, &cfg) {
                        Ok(cv) => cv,
                        Err(Error::EmptyGrid | Error::FoldDegenerate { .. }) => return Ok(None),
                        Err(e) => return Err(e),
                    };
                    let b = cv.best;
                    let idx = coords
                        .iter()
                        .position(|&(a, l, e)| a == b.alpha && l == b.lambda && e == b.eta)
                        .expect("cv grid matches scenario grid");
                    Ok(mses[idx].map(|m| m / oracle))
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    Ok((0..modes.len())
        .map(|m| {
            let vals: Vec<f64> = per_trial.iter().filter_map(|v| v[m]).collect();
            ErrorSummary::from_values(&vals, trials - vals.len())
        })
        .collect())
}

fn rng_seed(seed: u64, trial: usize) -> u64 {
    use rand::RngCore;
    rng::stream(seed, rng::PURPOSE_CV, trial as u64, 0).next_u64()
}
