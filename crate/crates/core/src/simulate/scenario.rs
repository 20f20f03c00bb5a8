//! Scenario description and its `key = value` file format.
//!
//! ```text
//! # Sigma_2, missingness concentrated on the dummy columns
//! sigma_struct = compound_symmetry
//! rho = 0.5
//! missing_pattern = high_on_dummies
//! gamma = 0.25
//! reps = 300
//! alphas = 0.1, 0.2, 0.5, 1
//! ```
//!
//! Blank lines and `#` comments are ignored. Unlisted keys keep their defaults.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::model::ImputeMode;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SigmaStruct {
    /// Unit diagonal, `rho` everywhere else.
    CompoundSymmetry(f64),
    /// `rho^|i - j|`.
    Ar1(f64),
}

impl SigmaStruct {
    pub fn rho(&self) -> f64 {
        match *self {
            SigmaStruct::CompoundSymmetry(r) | SigmaStruct::Ar1(r) => r,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            SigmaStruct::CompoundSymmetry(_) => "compound_symmetry",
            SigmaStruct::Ar1(_) => "ar1",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MissingPattern {
    Uniform,
    HighOnSignals,
    HighOnDummies,
}

impl MissingPattern {
    pub fn name(&self) -> &'static str {
        match self {
            MissingPattern::Uniform => "uniform",
            MissingPattern::HighOnSignals => "high_on_signals",
            MissingPattern::HighOnDummies => "high_on_dummies",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "uniform" => Some(MissingPattern::Uniform),
            "high_on_signals" => Some(MissingPattern::HighOnSignals),
            "high_on_dummies" => Some(MissingPattern::HighOnDummies),
            _ => None,
        }
    }
}

/// How `snr` fixes the noise level.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SnrConvention {
    /// `snr = beta' Sigma beta / sigma^2`.
    Variance,
    /// `snr = sqrt(beta' Sigma beta) / sigma`.
    Amplitude,
}

impl SnrConvention {
    pub fn name(&self) -> &'static str {
        match self {
            SnrConvention::Variance => "variance",
            SnrConvention::Amplitude => "amplitude",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    /// Pairwise-deletion estimate (`eta = 0`).
    Nondc,
    /// Column-mean imputation followed by the ordinary elastic net.
    MeanImpute,
    /// The eta-weighted family over the scenario's eta grid.
    Combined,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Nondc => "nondc",
            Method::MeanImpute => "mean_impute",
            Method::Combined => "combined",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "nondc" => Some(Method::Nondc),
            "mean_impute" | "mi" => Some(Method::MeanImpute),
            "combined" | "comb" => Some(Method::Combined),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioGrid {
    pub alphas: Vec<f64>,
    /// Absolute lambdas, shared by every repetition.
    pub lambdas: Vec<f64>,
    pub etas: Vec<f64>,
}

/// `count` log-spaced values from `hi` down to `lo`.
pub fn log_grid(hi: f64, lo: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![hi];
    }
    let (a, b) = (hi.ln(), lo.ln());
    (0..count)
        .map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp())
        .collect()
}

impl Default for ScenarioGrid {
    fn default() -> Self {
        ScenarioGrid {
            alphas: (1..=10).map(|i| i as f64 / 10.0).collect(),
            lambdas: log_grid(30.0, 1e-3, 46),
            etas: vec![0.0, 0.25, 0.5, 0.75, 1.0],
        }
    }
}

impl ScenarioGrid {
    /// A smaller grid for cross-validation experiments.
    pub fn coarse() -> Self {
        ScenarioGrid {
            alphas: vec![0.1, 0.3, 0.5, 0.7, 0.9],
            lambdas: log_grid(10.0, 0.01, 13),
            etas: vec![0.0, 0.25, 0.5, 0.75, 1.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSpec {
    pub n_rows: usize,
    pub n_cols: usize,
    pub beta_true: Vec<f64>,
    pub sigma_struct: SigmaStruct,
    pub missing_pattern: MissingPattern,
    /// Average missing rate over columns.
    pub gamma: f64,
    pub snr: f64,
    pub snr_convention: SnrConvention,
    pub reps: usize,
    pub seed: u64,
    pub n_test: usize,
    pub methods: Vec<Method>,
    pub grid: ScenarioGrid,
    /// Test-error trials (0 disables the test-error study).
    pub test_trials: usize,
    /// Cross-validation trials (0 disables the CV-to-oracle study).
    pub cv_trials: usize,
    pub cv_folds: usize,
    pub cv_grid: ScenarioGrid,
    pub cv_impute_modes: Vec<ImputeMode>,
}

pub fn default_beta(p: usize) -> Vec<f64> {
    (0..p).map(|j| if (1..=3).contains(&j) { 2.0 } else { 0.0 }).collect()
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        ScenarioSpec {
            n_rows: 50,
            n_cols: 15,
            beta_true: default_beta(15),
            sigma_struct: SigmaStruct::CompoundSymmetry(0.0),
            missing_pattern: MissingPattern::Uniform,
            gamma: 0.25,
            snr: 4.0,
            snr_convention: SnrConvention::Variance,
            reps: 300,
            seed: 1,
            n_test: 100,
            methods: vec![Method::Nondc, Method::MeanImpute, Method::Combined],
            grid: ScenarioGrid::default(),
            test_trials: 0,
            cv_trials: 0,
            cv_folds: 5,
            cv_grid: ScenarioGrid::coarse(),
            cv_impute_modes: vec![ImputeMode::SigmaEst, ImputeMode::Identity],
        }
    }
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::Scenario {
        line: 0,
        message: msg.into(),
    }
}

fn check_grid(name: &str, g: &ScenarioGrid) -> Result<()> {
    if g.alphas.is_empty() || g.lambdas.is_empty() || g.etas.is_empty() {
        return Err(invalid(format!("{name}: grids must be non-empty")));
    }
    if g.alphas.iter().chain(&g.etas).any(|v| !(0.0..=1.0).contains(v)) {
        return Err(invalid(format!("{name}: alphas and etas must lie in [0, 1]")));
    }
    if g.lambdas.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
        return Err(invalid(format!("{name}: lambdas must be finite and >= 0")));
    }
    Ok(())
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_rows < 3 || self.n_cols < 1 {
            return Err(invalid("need n_rows >= 3 and n_cols >= 1"));
        }
        if self.beta_true.len() != self.n_cols {
            return Err(invalid(format!(
                "beta_true has {} entries but n_cols = {}",
                self.beta_true.len(),
                self.n_cols
            )));
        }
        let rho = self.sigma_struct.rho();
        let p = self.n_cols as f64;
        match self.sigma_struct {
            SigmaStruct::CompoundSymmetry(_) => {
                let lo = if self.n_cols > 1 { -1.0 / (p - 1.0) } else { -1.0 };
                if !(rho > lo && rho < 1.0) {
                    return Err(invalid(format!("compound symmetry needs rho in ({lo}, 1), got {rho}")));
                }
            }
            SigmaStruct::Ar1(_) => {
                if !(rho > -1.0 && rho < 1.0) {
                    return Err(invalid(format!("ar1 needs rho in (-1, 1), got {rho}")));
                }
            }
        }
        super::column_missing_rates(self.missing_pattern, self.gamma, self.n_cols)
            .map_err(|e| invalid(e.to_string()))?;
        if !(self.snr > 0.0) {
            return Err(invalid("snr must be > 0"));
        }
        if self.reps == 0 || self.n_test == 0 {
            return Err(invalid("reps and n_test must be >= 1"));
        }
        if self.methods.is_empty() {
            return Err(invalid("at least one method is required"));
        }
        if self.cv_trials > 0 && (self.cv_folds < 2 || self.cv_folds > self.n_rows) {
            return Err(invalid("cv_folds must lie in [2, n_rows]"));
        }
        check_grid("grid", &self.grid)?;
        check_grid("cv grid", &self.cv_grid)?;
        Ok(())
    }

    /// Short label such as `compound_symmetry(0.5)/high_on_dummies`.
    pub fn label(&self) -> String {
        format!(
            "{}({})/{}",
            self.sigma_struct.kind(),
            self.sigma_struct.rho(),
            self.missing_pattern.name()
        )
    }

    /// Parses a scenario file. Errors carry the 1-based line number.
    pub fn parse(text: &str) -> Result<Self> {
        let mut spec = ScenarioSpec::default();
        let mut sigma_kind = "compound_symmetry".to_string();
        let mut rho = None;
        let mut beta_given = false;
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let err = |message: String| Error::Scenario {
                line: line_no,
                message,
            };
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected `key = value`, got {line:?}")))?;
            let (key, value) = (key.trim(), value.trim());
            let num = |v: &str| -> Result<f64> {
                v.parse::<f64>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| err(format!("{key}: {v:?} is not a number")))
            };
            let int = |v: &str| -> Result<usize> {
                v.parse::<usize>()
                    .map_err(|_| err(format!("{key}: {v:?} is not a non-negative integer")))
            };
            let list = |v: &str| -> Result<Vec<f64>> {
                v.split(',').map(|s| num(s.trim())).collect()
            };
            match key {
                "n_rows" => spec.n_rows = int(value)?,
                "n_cols" => spec.n_cols = int(value)?,
                "beta_true" => {
                    spec.beta_true = list(value)?;
                    beta_given = true;
                }
                "sigma_struct" => match value {
                    "compound_symmetry" | "ar1" => sigma_kind = value.to_string(),
                    other => return Err(err(format!("unknown sigma_struct {other:?}"))),
                },
                "rho" => rho = Some(num(value)?),
                "missing_pattern" => {
                    spec.missing_pattern = MissingPattern::parse(value)
                        .ok_or_else(|| err(format!("unknown missing_pattern {value:?}")))?
                }
                "gamma" => spec.gamma = num(value)?,
                "snr" => spec.snr = num(value)?,
                "snr_convention" => {
                    spec.snr_convention = match value {
                        "variance" => SnrConvention::Variance,
                        "amplitude" => SnrConvention::Amplitude,
                        other => return Err(err(format!("unknown snr_convention {other:?}"))),
                    }
                }
                "reps" => spec.reps = int(value)?,
                "seed" => {
                    spec.seed = value
                        .parse()
                        .map_err(|_| err(format!("seed: {value:?} is not an unsigned integer")))?
                }
                "n_test" => spec.n_test = int(value)?,
                "methods" => {
                    spec.methods = value
                        .split(',')
                        .map(|m| {
                            Method::parse(m.trim()).ok_or_else(|| err(format!("unknown method {m:?}")))
                        })
                        .collect::<Result<_>>()?
                }
                "alphas" => spec.grid.alphas = list(value)?,
                "lambdas" => spec.grid.lambdas = list(value)?,
                "etas" => spec.grid.etas = list(value)?,
                "test_trials" => spec.test_trials = int(value)?,
                "cv_trials" => spec.cv_trials = int(value)?,
                "cv_folds" => spec.cv_folds = int(value)?,
                "cv_alphas" => spec.cv_grid.alphas = list(value)?,
                "cv_lambdas" => spec.cv_grid.lambdas = list(value)?,
                "cv_etas" => spec.cv_grid.etas = list(value)?,
                "cv_impute" => {
                    spec.cv_impute_modes = value
                        .split(',')
                        .map(|m| ImputeMode::parse(m).map_err(|e| err(e.to_string())))
                        .collect::<Result<_>>()?
                }
                other => return Err(err(format!("unknown key {other:?}"))),
            }
        }
        let r = rho.unwrap_or(0.0);
        spec.sigma_struct = if sigma_kind == "ar1" {
            SigmaStruct::Ar1(r)
        } else {
            SigmaStruct::CompoundSymmetry(r)
        };
        if !beta_given {
            spec.beta_true = default_beta(spec.n_cols);
        }
        spec.validate()?;
        Ok(spec)
    }

    /// Serializes to the scenario file format; `parse(to_text())` restores the spec.
    pub fn to_text(&self) -> String {
        let join = |v: &[f64]| v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(", ");
        let mut s = String::new();
        let _ = writeln!(s, "n_rows = {}", self.n_rows);
        let _ = writeln!(s, "n_cols = {}", self.n_cols);
        let _ = writeln!(s, "beta_true = {}", join(&self.beta_true));
        let _ = writeln!(s, "sigma_struct = {}", self.sigma_struct.kind());
        let _ = writeln!(s, "rho = {:?}", self.sigma_struct.rho());
        let _ = writeln!(s, "missing_pattern = {}", self.missing_pattern.name());
        let _ = writeln!(s, "gamma = {:?}", self.gamma);
        let _ = writeln!(s, "snr = {:?}", self.snr);
        let _ = writeln!(s, "snr_convention = {}", self.snr_convention.name());
        let _ = writeln!(s, "reps = {}", self.reps);
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "n_test = {}", self.n_test);
        let methods: Vec<&str> = self.methods.iter().map(Method::name).collect();
        let _ = writeln!(s, "methods = {}", methods.join(", "));
        let _ = writeln!(s, "alphas = {}", join(&self.grid.alphas));
        let _ = writeln!(s, "lambdas = {}", join(&self.grid.lambdas));
        let _ = writeln!(s, "etas = {}", join(&self.grid.etas));
        let _ = writeln!(s, "test_trials = {}", self.test_trials);
        let _ = writeln!(s, "cv_trials = {}", self.cv_trials);
        let _ = writeln!(s, "cv_folds = {}", self.cv_folds);
        let _ = writeln!(s, "cv_alphas = {}", join(&self.cv_grid.alphas));
        let _ = writeln!(s, "cv_lambdas = {}", join(&self.cv_grid.lambdas));
        let _ = writeln!(s, "cv_etas = {}", join(&self.cv_grid.etas));
        let modes: Vec<&str> = self.cv_impute_modes.iter().map(ImputeMode::name).collect();
        let _ = writeln!(s, "cv_impute = {}", modes.join(", "));
        s
    }
}
