use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Every failure mode surfaced by the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid matrix: {0}")]
    InvalidMatrix(String),
    #[error("matrix is not positive semidefinite (smallest eigenvalue {min_eigenvalue:e}, tolerance {tolerance:e})")]
    NotPsd { min_eigenvalue: f64, tolerance: f64 },
    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),
    #[error("quadrature did not converge after {subdivisions} subdivisions (error estimate {error_estimate:e})")]
    QuadratureFailure {
        subdivisions: usize,
        error_estimate: f64,
    },

    #[error("column {column} has (near) zero norm")]
    DegenerateColumn { column: usize },
    #[error("design is rank deficient: {0}")]
    RankDeficient(String),
    #[error(
        "knockoff construction needs n >= 2m (got n = {n}, m = {m}); \
         the row-augmentation construction for m < n < 2m is not supported"
    )]
    InsufficientRows { n: usize, m: usize },
    #[error("infeasible knockoff diagonal D: {0}")]
    InfeasibleD(String),

    #[error("residual degrees of freedom must be positive (n = {n}, m = {m})")]
    InsufficientDf { n: usize, m: usize },
    #[error("degenerate fit: residual scale is zero, p-values are undefined")]
    DegenerateFit,

    #[error("value {value} at index {index} is outside the calibrator domain [0, 1]")]
    Domain { index: usize, value: f64 },
    #[error("all e-values are zero; weights cannot be normalized")]
    ZeroEvidence,
    #[error("empty input")]
    EmptyInput,
    #[error("bad tuning parameter: {0}")]
    BadTuning(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("lasso coordinate descent did not converge at penalty {penalty:e} after {sweeps} sweeps")]
    LassoDiverged { penalty: f64, sweeps: usize },

    #[error("no completed replications")]
    NoData,

    #[error("schema error: {0}")]
    Schema(String),
    #[error("cannot parse a position from label {0:?}")]
    Label(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        match e.kind() {
            csv::ErrorKind::Io(_) => Error::Io(e.to_string()),
            _ => Error::Schema(e.to_string()),
        }
    }
}
