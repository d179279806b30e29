use std::path::PathBuf;

/// Errors produced anywhere in the crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{what}: {rows} rows cannot be split into {blocks} equal blocks")]
    NotDivisible {
        what: &'static str,
        rows: usize,
        blocks: usize,
    },

    #[error("salient loading {0} is outside the open interval (0, 1)")]
    SalientOutOfRange(f64),

    #[error("row {row} has communality {communality} >= 1; no unique variance is left")]
    PopulationHeywood { row: usize, communality: f64 },

    #[error("shape mismatch in {op}: expected {expected}, found {found}")]
    ShapeMismatch {
        op: &'static str,
        expected: String,
        found: String,
    },

    #[error("invalid population spec: {field} {reason}")]
    InvalidSpec { field: &'static str, reason: String },

    #[error("invalid argument `{arg}`: {reason}")]
    InvalidArgument { arg: &'static str, reason: String },

    #[error("row {row} of the Q-part has zero variance and cannot be standardized")]
    ZeroVarianceRow { row: usize },

    #[error("variable {index} is constant")]
    ConstantVariable { index: usize },

    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NonSymmetric(f64),

    #[error("correlation matrix is not positive definite, even after ridging")]
    NotPositiveDefinite,

    #[error("covariance matrix is singular")]
    SingularCovariance,

    #[error("covariance has a zero eigenvalue ({0:e})")]
    ZeroEigenvalue(f64),

    #[error("variables {i} and {j} are perfectly correlated; the kurtosis weight matrix is singular")]
    PerfectCorrelation { i: usize, j: usize },

    #[error("too few cases: need at least {needed}, got {got}")]
    TooFewCases { needed: usize, got: usize },

    #[error("p-value {0} lies outside [0, 1]")]
    InvalidPValue(f64),

    #[error("infeasible construction: {0}")]
    Infeasible(String),

    #[error("config key `{key}`: {reason}")]
    Config { key: String, reason: String },

    #[error("no grid condition matches {0}")]
    UnknownCondition(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("{path}: line {line}: {reason}")]
    Parse { path: PathBuf, line: usize, reason: String },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn shape(op: &'static str, expected: (usize, usize), found: (usize, usize)) -> Self {
        Error::ShapeMismatch {
            op,
            expected: format!("{}x{}", expected.0, expected.1),
            found: format!("{}x{}", found.0, found.1),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
