use thiserror::Error;

#[derive(Debug, Error)]
pub enum GaplmError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("x = {value} is outside the unit interval")]
    Domain { value: f64 },

    #[error("variance function underflows at linear predictor m = {m}")]
    Boundary { m: f64 },

    #[error("design matrix is rank deficient; dependent columns: {}", columns.join(", "))]
    RankDeficient { columns: Vec<String> },

    #[error("spline basis column {basis} of covariate {covariate} is identically zero on the sample (empty knot span)")]
    EmptySpan { covariate: String, basis: usize },

    #[error("matrix could not be factorized even with ridge jitter: {0}")]
    Singular(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("unknown column `{name}`; available columns: {}", available.join(", "))]
    UnknownColumn { name: String, available: Vec<String> },

    #[error("non-numeric value `{value}` at row {row}, column `{column}`")]
    NonNumeric { row: usize, column: String, value: String },

    #[error("no rows left after removing incomplete observations")]
    NoRows,

    #[error("{count} linear covariates give 2^{count} subsets; best-subset search is limited to 20, use SCAD instead")]
    TooManySubsets { count: usize },

    #[error("every fit failed: {}", .0.join("; "))]
    AllFitsFailed(Vec<String>),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, GaplmError>;
