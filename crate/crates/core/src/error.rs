use std::fmt;

use thiserror::Error;

/// Inequality of the strong-stability definition that a candidate factorization broke.
#[derive(Debug, Clone, PartialEq)]
pub enum StabilityViolation {
    /// `‖L‖ ≤ 1−γ`
    ContractionMargin { norm: f64, bound: f64 },
    /// `‖K‖ ≤ κ`
    GainNorm { norm: f64, bound: f64 },
    /// `‖H‖ ≤ κ`
    BasisNorm { norm: f64, bound: f64 },
    /// `‖H⁻¹‖ ≤ κ`
    InverseBasisNorm { norm: f64, bound: f64 },
    /// `A−BK = H·L·H⁻¹` within tolerance
    Reconstruction { relative_error: f64 },
    /// H could not be inverted
    SingularBasis,
}

impl fmt::Display for StabilityViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::ContractionMargin { norm, bound } => {
                write!(f, "‖L‖ ≤ 1−γ violated: ‖L‖ = {norm:.6} > {bound:.6}")
            }
            Self::GainNorm { norm, bound } => {
                write!(f, "‖K‖ ≤ κ violated: ‖K‖ = {norm:.6} > {bound:.6}")
            }
            Self::BasisNorm { norm, bound } => {
                write!(f, "‖H‖ ≤ κ violated: ‖H‖ = {norm:.6} > {bound:.6}")
            }
            Self::InverseBasisNorm { norm, bound } => {
                write!(f, "‖H⁻¹‖ ≤ κ violated: ‖H⁻¹‖ = {norm:.6} > {bound:.6}")
            }
            Self::Reconstruction { relative_error } => write!(
                f,
                "A−BK = H·L·H⁻¹ violated: relative error {relative_error:.3e}"
            ),
            Self::SingularBasis => write!(f, "H is singular"),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: String,
        actual: String,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfiguration(String),

    #[error("strong stability rejected: {0}")]
    Rejected(StabilityViolation),

    #[error("stabilizer synthesis failed: {0}")]
    SynthesisFailed(String),

    #[error("numeric failure: {0}")]
    NumericFailure(String),

    #[error("state diverged at t = {t}: ‖x‖ = {norm:.3e}")]
    Divergence { t: usize, norm: f64 },

    #[error("task {index} failed: {source}")]
    TaskFailed {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn dims(context: &'static str, expected: impl fmt::Display, actual: impl fmt::Display) -> Error {
    Error::DimensionMismatch {
        context,
        expected: expected.to_string(),
        actual: actual.to_string(),
    }
}
