//! Error type shared by every module in the crate.

use thiserror::Error;

/// Errors raised while loading panels or building covariance models.
#[derive(Debug, Error)]
pub enum CovError {
    /// Malformed cell or row-length mismatch in an input table.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// Empty or non-numeric-missing cell (N/A). Missing data is never imputed.
    #[error("missing value for asset '{asset}' at observation {observation}")]
    MissingValue { asset: String, observation: usize },

    #[error("too few observations: need at least 2, got {0}")]
    TooFewObservations(usize),

    #[error("too few assets: need at least 2, got {0}")]
    TooFewAssets(usize),

    #[error("duplicate asset id '{0}'")]
    DuplicateAssetId(String),

    #[error("asset {index} has zero variance")]
    ZeroVarianceAsset { index: usize },

    #[error("matrix is not symmetric: |c[{row}][{col}] - c[{col}][{row}]| = {gap:e}")]
    NotSymmetric { row: usize, col: usize, gap: f64 },

    #[error("eigenvalue {value:e} is below -{threshold:e}; matrix is not positive semi-definite")]
    NegativeEigenvalue { value: f64, threshold: f64 },

    #[error("dimension mismatch for {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    /// Woodbury inversion needs every specific variance to be strictly positive.
    #[error("specific risk of asset {index} is zero; model is not invertible by the low-rank identity")]
    SingularSpecificRisk { index: usize },

    #[error("inner factor system is ill-conditioned (condition estimate {condition:e})")]
    IllConditioned { condition: f64 },

    #[error("rho = {0} is outside [0, 1)")]
    RhoOutOfRange(f64),

    #[error("shrinkage constant q = {0} is outside [0, 1]")]
    InvalidShrinkage(f64),

    #[error("target diagonal {target} differs from covariance diagonal {covariance} at asset {index}")]
    DiagonalMismatch {
        index: usize,
        target: f64,
        covariance: f64,
    },

    #[error("f_hat = {f_hat} exceeds the number of positive eigenvalues {max}")]
    FhatOutOfRange { f_hat: usize, max: usize },

    #[error("factor covariance matrix is not positive semi-definite (eigenvalue {0:e})")]
    FcmNotPsd(f64),

    #[error("negative specific risk {value} at asset {index}")]
    NegativeSpecificRisk { index: usize, value: f64 },

    /// The factor form and the dense shrunk matrix disagree beyond tolerance.
    #[error("factor-model equivalence check failed: relative Frobenius error {0:e}")]
    EquivalenceFailed(f64),

    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),

    #[error("split leaves too few observations: train {train}, test {test} (each needs >= 2)")]
    SplitTooSmall { train: usize, test: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl CovError {
    /// Process exit code for the command-line front end:
    /// 2 for parse/validation problems, 3 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            CovError::ZeroVarianceAsset { .. }
            | CovError::NegativeEigenvalue { .. }
            | CovError::SingularSpecificRisk { .. }
            | CovError::IllConditioned { .. }
            | CovError::FcmNotPsd(_)
            | CovError::EquivalenceFailed(_) => 3,
            _ => 2,
        }
    }
}

pub type Result<T, E = CovError> = std::result::Result<T, E>;
