use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("column {column} has {observed} observed entries, at least {required} required")]
    DegenerateColumn {
        column: usize,
        observed: usize,
        required: usize,
    },

    #[error("column {column} has zero variance over its observed entries")]
    ConstantColumn { column: usize },

    #[error("cannot parse {value:?} as a number at row {row}, column {column:?}")]
    Parse {
        row: usize,
        column: String,
        value: String,
    },

    #[error("response column {column:?} has a missing value at row {row}; missing responses are unsupported")]
    MissingResponse { column: String, row: usize },

    #[error("csv: {0}")]
    Csv(String),

    #[error("io: {0}")]
    Io(String),

    #[error("schema mismatch: {0}")]
    Schema(String),

    #[error("columns {j} and {k} are never observed together; raise eta or drop a column")]
    ZeroOverlap { j: usize, k: usize },

    #[error("matrix is not symmetric (max |M - M^T| = {max_asymmetry:e})")]
    Asymmetric { max_asymmetry: f64 },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error(
        "non-convex configuration: lambda*(1-alpha) = {provided} but smallest eigenvalue is {lambda_min}; \
         lambda*(1-alpha) must be at least {required}"
    )]
    NonConvex {
        lambda_min: f64,
        required: f64,
        provided: f64,
    },

    #[error("coordinate {coordinate} has non-positive curvature {curvature}")]
    DegenerateCoordinate { coordinate: usize, curvature: f64 },

    #[error("coordinate descent diverged (non-finite value at sweep {sweep})")]
    Diverged { sweep: usize },

    #[error("non-finite value in input: {0}")]
    NonFinite(String),

    #[error("no feasible grid point")]
    EmptyGrid,

    #[error("could not find a fold split whose training part is usable (column {column}): {reason}")]
    FoldDegenerate { column: usize, reason: String },

    #[error("factorization failed: {0}")]
    Factorization(String),

    #[error("scenario line {line}: {message}")]
    Scenario { line: usize, message: String },

    #[error("too many redrawn repetitions: {redraws} redraws for {reps} repetitions")]
    TooManyRedraws { redraws: usize, reps: usize },
}

impl Error {
    /// True for errors caused by a (lambda, alpha) choice rather than by the data.
    pub fn is_infeasible_configuration(&self) -> bool {
        matches!(self, Error::NonConvex { .. } | Error::EmptyGrid)
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Csv(e.to_string())
    }
}
