//! Command-line front end.
//!
//! Exit codes: 0 on success, 1 for input or data errors, 2 when the requested
//! penalty is infeasible (non-convex) or no grid point is feasible.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::data::{read_csv, read_csv_table, CsvData};
use crate::error::{Error, Result};
use crate::model::{fit_raw, ImputeMode, ModelFile};
use crate::modelsel::{select_and_refit, CvConfig, LambdaGrid};
use crate::simulate::{
    pooled_se, run_cv_ratio, run_scenario, run_test_error_modes, Chosen, Method, ScenarioResult, ScenarioSpec,
    SigmaMode,
};
use crate::solver::{PenaltyConfig, SolverConfig};

/// Caps the worker pool used for repetitions and folds.
pub const THREADS_ENV: &str = "MISNET_THREADS";

#[derive(Debug, Parser)]
#[command(name = "misnet", version, about = "Elastic-net regression with missing covariates")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit at a single (lambda, alpha, eta) and write a model file.
    Fit(FitArgs),
    /// Predict a CSV of (possibly incomplete) rows with a saved model.
    Predict(PredictArgs),
    /// Cross-validate over a grid, then refit at the selected point.
    Cv(CvArgs),
    /// Run a Monte Carlo scenario.
    Simulate(SimulateArgs),
}

#[derive(Debug, Args)]
struct FitArgs {
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    response: String,
    #[arg(long)]
    lambda: f64,
    #[arg(long)]
    alpha: f64,
    #[arg(long, default_value_t = 0.0)]
    eta: f64,
    #[arg(long, default_value = "NA")]
    na_token: String,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_sweeps: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    test: PathBuf,
    /// gaussian (conditional mean under the fitted covariance) or mean.
    #[arg(long, default_value = "gaussian")]
    impute: String,
    #[arg(long, default_value = "NA")]
    na_token: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct CvArgs {
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    response: String,
    /// Comma-separated alpha grid.
    #[arg(long, default_value = "0.1,0.3,0.5,0.7,0.9")]
    alphas: String,
    /// `auto` or a comma-separated lambda grid.
    #[arg(long, default_value = "auto")]
    lambdas: String,
    /// Comma-separated eta grid.
    #[arg(long, default_value = "0,0.25,0.5,0.75,1")]
    etas: String,
    #[arg(long, default_value_t = 5)]
    folds: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// sigma_est or identity.
    #[arg(long, default_value = "sigma_est")]
    impute: String,
    #[arg(long, default_value = "NA")]
    na_token: String,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_sweeps: Option<usize>,
    /// Model file for the refit; the table goes to `<out>.cv.csv` unless `--table` is set.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    table: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated subset of nondc, mean_impute, combined.
    #[arg(long)]
    methods: Option<String>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

/// Runs the CLI on `args` (including the program name) and returns the exit code.
pub fn run(args: &[String], out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let text = e.render().to_string();
            let _ = if e.use_stderr() {
                write!(err, "{text}")
            } else {
                write!(out, "{text}")
            };
            return code;
        }
    };
    configure_threads();
    let result = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| dispatch(cli.command, out)));
    match result {
        Ok(Ok(())) => 0,
        Ok(Err(e)) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
        Err(_) => {
            let _ = writeln!(err, "error: internal failure");
            1
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    if e.is_infeasible_configuration() {
        2
    } else {
        1
    }
}

fn configure_threads() {
    if let Some(n) = std::env::var(THREADS_ENV).ok().and_then(|v| v.trim().parse::<usize>().ok()) {
        if n > 0 {
            // fails harmlessly if the pool already exists
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
}

fn dispatch(cmd: Command, out: &mut dyn Write) -> Result<()> {
    match cmd {
        Command::Fit(a) => cmd_fit(&a, out),
        Command::Predict(a) => cmd_predict(&a, out),
        Command::Cv(a) => cmd_cv(&a, out),
        Command::Simulate(a) => cmd_simulate(&a, out),
    }
}

fn solver_config(tol: Option<f64>, max_sweeps: Option<usize>) -> Result<SolverConfig> {
    let mut s = SolverConfig::default();
    if let Some(t) = tol {
        if !(t > 0.0) || !t.is_finite() {
            return Err(Error::InvalidParameter(format!("tol must be positive, got {t}")));
        }
        s.tol = t;
    }
    if let Some(m) = max_sweeps {
        if m == 0 {
            return Err(Error::InvalidParameter("max-sweeps must be at least 1".into()));
        }
        s.max_sweeps = m;
    }
    Ok(s)
}

fn check_eta(eta: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&eta) {
        return Err(Error::InvalidParameter(format!("eta must lie in [0, 1], got {eta}")));
    }
    Ok(())
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn io(e: std::io::Error) -> Error {
    Error::Io(e.to_string())
}

fn cmd_fit(a: &FitArgs, out: &mut dyn Write) -> Result<()> {
    check_eta(a.eta)?;
    let solver = solver_config(a.tol, a.max_sweeps)?;
    let penalty = PenaltyConfig::new(a.lambda, a.alpha)?;
    let CsvData {
        feature_names,
        features,
        response,
    } = read_csv(&a.train, &a.na_token, &a.response)?;
    let model = fit_raw(&features, &response, penalty, a.eta, &solver)?;
    model.to_model_file(feature_names).save(&a.out)?;
    let f = &model.fit;
    writeln!(out, "converged: {}", f.converged).map_err(io)?;
    writeln!(out, "sweeps: {}", f.sweeps).map_err(io)?;
    writeln!(out, "kkt_violation: {:e}", f.kkt_violation).map_err(io)?;
    writeln!(out, "nonzero: {}", f.nonzero_count()).map_err(io)?;
    writeln!(out, "objective: {}", f.objective).map_err(io)?;
    Ok(())
}

fn parse_predict_mode(s: &str) -> Result<ImputeMode> {
    match s.trim().to_ascii_lowercase().as_str() {
        "gaussian" => Ok(ImputeMode::SigmaEst),
        "mean" => Ok(ImputeMode::Identity),
        other => Err(Error::InvalidParameter(format!(
            "--impute must be gaussian or mean, got {other:?}"
        ))),
    }
}

fn cmd_predict(a: &PredictArgs, out: &mut dyn Write) -> Result<()> {
    let mode = parse_predict_mode(&a.impute)?;
    let model = ModelFile::load(&a.model)?;
    let file = fs::File::open(&a.test).map_err(|e| Error::Io(format!("{}: {e}", a.test.display())))?;
    let table = read_csv_table(file, &a.na_token)?;
    let x = table.select(&model.feature_names)?;
    let preds = model.predict(&x, mode)?;
    let mut s = String::from("prediction\n");
    for p in &preds {
        s.push_str(&format!("{p}\n"));
    }
    write_file(&a.out, &s)?;
    writeln!(out, "predicted {} rows", preds.len()).map_err(io)?;
    Ok(())
}

/// Comma-separated list of reals.
pub fn parse_list(s: &str) -> Result<Vec<f64>> {
    let v = s
        .split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse::<f64>()
                .map_err(|_| Error::InvalidParameter(format!("cannot parse {t:?} as a number")))
        })
        .collect::<Result<Vec<_>>>()?;
    if v.is_empty() {
        return Err(Error::InvalidParameter(format!("empty list {s:?}")));
    }
    Ok(v)
}

fn cmd_cv(a: &CvArgs, out: &mut dyn Write) -> Result<()> {
    let solver = solver_config(a.tol, a.max_sweeps)?;
    let lambdas = if a.lambdas.trim().eq_ignore_ascii_case("auto") {
        LambdaGrid::default()
    } else {
        LambdaGrid::Explicit(parse_list(&a.lambdas)?)
    };
    let cfg = CvConfig {
        k_folds: a.folds,
        alphas: parse_list(&a.alphas)?,
        lambdas,
        etas: parse_list(&a.etas)?,
        seed: a.seed,
        impute_mode: ImputeMode::parse(&a.impute)?,
        solver,
    };
    let data = read_csv(&a.train, &a.na_token, &a.response)?;
    let sel = select_and_refit(&data.features, &data.response, &cfg)?;
    let table_path = a.table.clone().unwrap_or_else(|| {
        let mut p = a.out.clone().into_os_string();
        p.push(".cv.csv");
        PathBuf::from(p)
    });
    write_file(&table_path, &sel.cv.to_csv())?;
    sel.model.to_model_file(data.feature_names).save(&a.out)?;
    let best = sel.cv.best_entry();
    writeln!(
        out,
        "selected alpha={} lambda={} eta={} cv_error={} se={}",
        best.point.alpha, best.point.lambda, best.point.eta, best.mean_error, best.se
    )
    .map_err(io)?;
    if !sel.cv.skipped.is_empty() {
        writeln!(out, "skipped {} infeasible grid points", sel.cv.skipped.len()).map_err(io)?;
    }
    Ok(())
}

fn cmd_simulate(a: &SimulateArgs, out: &mut dyn Write) -> Result<()> {
    let text = fs::read_to_string(&a.scenario).map_err(|e| Error::Io(format!("{}: {e}", a.scenario.display())))?;
    let mut spec = ScenarioSpec::parse(&text)?;
    if let Some(r) = a.reps {
        spec.reps = r;
    }
    if let Some(s) = a.seed {
        spec.seed = s;
    }
    if let Some(m) = &a.methods {
        spec.methods = parse_methods(m)?;
    }
    spec.validate()?;
    fs::create_dir_all(&a.out).map_err(|e| Error::Io(format!("{}: {e}", a.out.display())))?;
    let files = write_simulation(&spec, &a.out)?;
    for f in files {
        writeln!(out, "wrote {}", f.display()).map_err(io)?;
    }
    Ok(())
}

pub fn parse_methods(s: &str) -> Result<Vec<Method>> {
    let v = s
        .split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| Method::parse(t).ok_or_else(|| Error::InvalidParameter(format!("unknown method {t:?}"))))
        .collect::<Result<Vec<_>>>()?;
    if v.is_empty() {
        return Err(Error::InvalidParameter("no methods given".into()));
    }
    Ok(v)
}

/// Runs every study the scenario asks for and writes its CSVs into `dir`.
pub fn write_simulation(spec: &ScenarioSpec, dir: &Path) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    let result = run_scenario(spec)?;
    for t in &result.tables {
        let p = dir.join(format!("grid_{}.csv", t.method.name()));
        write_file(&p, &t.to_csv())?;
        written.push(p);
    }
    let p = dir.join("summary.csv");
    write_file(&p, &summary_csv(&result))?;
    written.push(p);

    if spec.test_trials > 0 {
        let chosen = chosen_point(&result)?;
        let modes = [SigmaMode::SigmaEst, SigmaMode::Identity, SigmaMode::SigmaTrue];
        let sums = run_test_error_modes(spec, chosen, &modes, spec.test_trials)?;
        let mut s = String::from("sigma,sigma_struct,rho,pattern,gamma,alpha,lambda,eta,mean_error,se,n_trials,skipped\n");
        for (m, e) in modes.iter().zip(&sums) {
            s.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{},{}\n",
                m.name(),
                spec.sigma_struct.kind(),
                spec.sigma_struct.rho(),
                spec.missing_pattern.name(),
                spec.gamma,
                chosen.alpha,
                chosen.lambda,
                chosen.eta,
                e.mean,
                e.se,
                e.n_trials,
                e.skipped
            ));
        }
        let p = dir.join("test_error.csv");
        write_file(&p, &s)?;
        written.push(p);
    }

    if spec.cv_trials > 0 {
        let sums = run_cv_ratio(spec, &spec.cv_impute_modes, spec.cv_folds, spec.cv_trials)?;
        let mut s = String::from("impute,sigma_struct,rho,pattern,gamma,mean_ratio,se,n_trials,skipped\n");
        for (m, e) in spec.cv_impute_modes.iter().zip(&sums) {
            s.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                m.name(),
                spec.sigma_struct.kind(),
                spec.sigma_struct.rho(),
                spec.missing_pattern.name(),
                spec.gamma,
                e.mean,
                e.se,
                e.n_trials,
                e.skipped
            ));
        }
        let p = dir.join("cv_ratio.csv");
        write_file(&p, &s)?;
        written.push(p);
    }
    Ok(written)
}

/// The combined method's best cell, or the best among the methods run.
fn chosen_point(result: &ScenarioResult) -> Result<Chosen> {
    if let Some(c) = result.table(Method::Combined).and_then(|t| t.best_cell()) {
        return Ok(c.into());
    }
    result
        .tables
        .iter()
        .filter_map(|t| t.best_cell())
        .min_by(|a, b| a.mean_mse.total_cmp(&b.mean_mse))
        .map(Chosen::from)
        .ok_or(Error::EmptyGrid)
}

/// One row per method: the global-minimum cell of its table.
pub fn summary_csv(result: &ScenarioResult) -> String {
    let spec = &result.spec;
    let mut s = String::from(
        "method,sigma_struct,rho,pattern,gamma,min_mse,se,alpha,lambda,eta,n_reps,redraws\n",
    );
    for t in &result.tables {
        let prefix = format!(
            "{},{},{},{},{}",
            t.method.name(),
            spec.sigma_struct.kind(),
            spec.sigma_struct.rho(),
            spec.missing_pattern.name(),
            spec.gamma
        );
        match t.best_cell() {
            Some(c) => s.push_str(&format!(
                "{prefix},{},{},{},{},{},{},{}\n",
                c.mean_mse, c.se, c.alpha, c.lambda, c.eta, c.n_reps, result.redraws
            )),
            None => s.push_str(&format!("{prefix},NA,NA,NA,NA,NA,0,{}\n", result.redraws)),
        }
    }
    s
}

/// Gap between two summary cells in units of their pooled standard error.
pub fn gap_in_pooled_se(lower: (f64, f64), higher: (f64, f64)) -> f64 {
    (higher.0 - lower.0) / pooled_se(lower.1, higher.1)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_args(args: &[&str]) -> (i32, String, String) {
        let args: Vec<String> = args.iter().map(|s| s.to_string()).collect();
        let (mut o, mut e) = (Vec::new(), Vec::new());
        let code = run(&args, &mut o, &mut e);
        (code, String::from_utf8(o).unwrap(), String::from_utf8(e).unwrap())
    }

    #[test]
    fn lists_parse() {
        assert_eq!(parse_list("0.1, 0.5,1").unwrap(), vec![0.1, 0.5, 1.0]);
        assert!(parse_list("a,b").is_err());
        assert!(parse_list("").is_err());
    }

    #[test]
    fn unknown_subcommand_is_a_usage_error() {
        let (code, _, err) = run_args(&["misnet", "frobnicate"]);
        assert_eq!(code, 1);
        assert!(!err.is_empty());
    }

    #[test]
    fn help_exits_zero() {
        let (code, out, _) = run_args(&["misnet", "--help"]);
        assert_eq!(code, 0);
        assert!(out.contains("simulate"));
    }

    #[test]
    fn missing_file_is_a_data_error() {
        let (code, _, err) = run_args(&[
            "misnet", "fit", "--train", "/nonexistent.csv", "--response", "y", "--lambda", "1", "--alpha", "0.5",
            "--out", "/tmp/never.json",
        ]);
        assert_eq!(code, 1);
        assert!(err.contains("error"));
    }

    #[test]
    fn predict_modes() {
        assert_eq!(parse_predict_mode("gaussian").unwrap(), ImputeMode::SigmaEst);
        assert_eq!(parse_predict_mode("MEAN").unwrap(), ImputeMode::Identity);
        assert!(parse_predict_mode("sigma_true").is_err());
    }
}
