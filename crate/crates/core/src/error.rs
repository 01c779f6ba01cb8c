use thiserror::Error;

pub type Result<T, E = SpcError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum SpcError {
    #[error("matrix is not positive semi-definite: pivot {pivot:.3e} at index {index}")]
    NotPsd { index: usize, pivot: f64 },

    #[error("partial correlations are jointly infeasible: correlation matrix has eigenvalue {eigenvalue:.4} along direction {direction:?}")]
    InfeasibleRho { eigenvalue: f64, direction: Vec<f64> },

    #[error("singular pivot {pivot:.3e} while sweeping index {index}")]
    SingularPivot { index: usize, pivot: f64 },

    #[error("observed arm {arm} has non-positive residual variance {variance:.3e}")]
    SingularObservedBlock { arm: usize, variance: f64 },

    #[error("invalid chi-square degrees of freedom {0}")]
    InvalidDf(u64),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("design matrix is rank deficient: column `{column}` is collinear with earlier columns")]
    RankDeficient { column: String },

    #[error("too few rows for regression: {rows} rows, {columns} columns (need at least columns + 2)")]
    TooFewRows { rows: usize, columns: usize },

    #[error("column `{0}` has no observed values")]
    AllMissing(String),

    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),

    #[error("non-numeric value `{value}` in column `{column}` at line {line}")]
    NonNumeric { column: String, line: usize, value: String },

    #[error("arm `{0}` has no units")]
    EmptyArm(String),

    #[error("unit on line {line} is assigned to arm `{arm}` but has no observed outcome")]
    MissingOutcome { line: usize, arm: String },

    #[error("unit on line {line} has no treatment code")]
    MissingTreatment { line: usize },

    #[error("arm `{arm}` has {units} units but {covariates} covariates: posterior degrees of freedom {df} < 2")]
    InsufficientArm {
        arm: String,
        units: usize,
        covariates: usize,
        df: i64,
    },

    #[error("partial correlation {0} is outside [-1, 1]")]
    OutOfRange(f64),

    #[error("unit ids of truth and imputations are misaligned at position {0}")]
    Misaligned(usize),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl SpcError {
    /// True for faults in user-supplied data or configuration, as opposed to
    /// numerical or I/O failures at run time.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            SpcError::InfeasibleRho { .. }
                | SpcError::InvalidArgument(_)
                | SpcError::RankDeficient { .. }
                | SpcError::TooFewRows { .. }
                | SpcError::AllMissing(_)
                | SpcError::SchemaMismatch(_)
                | SpcError::NonNumeric { .. }
                | SpcError::EmptyArm(_)
                | SpcError::MissingOutcome { .. }
                | SpcError::MissingTreatment { .. }
                | SpcError::InsufficientArm { .. }
                | SpcError::OutOfRange(_)
                | SpcError::Misaligned(_)
                | SpcError::Json(_)
                | SpcError::Csv(_)
        )
    }
}
