use thiserror::Error;

/// Errors raised by the numerical routines.
///
/// Precondition violations carry enough context to name the offending
/// parameter; numerical failures (quadrature, eigensolve) are kept distinct
/// so callers can map them to different exit paths.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("unsupported chain: {0}")]
    UnsupportedChain(String),

    #[error("density ratio dβ/dμ is not square integrable: {0}")]
    DivergentRatio(String),

    #[error("trajectory is empty")]
    EmptyTrajectory,

    #[error("quadrature self-test failed: {0}")]
    QuadratureFailure(String),

    #[error("cell {cell} received no transition mass")]
    EmptyCell { cell: usize },

    #[error("eigensolve did not converge: {0}")]
    EigensolveFailure(String),

    #[error("sample length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("exponential moment overflow at lambda = {lambda}")]
    MomentOverflow { lambda: f64 },

    #[error("invalid exponent: {0}")]
    InvalidExponent(String),

    #[error("transport-entropy constant is unknown")]
    UnknownTEConstant,

    #[error("norm condition violated: ‖P‖ = {norm} is not below {threshold}")]
    NormConditionViolated { norm: f64, threshold: f64 },

    #[error("sample-complexity denominator is non-positive ({denominator}) for n = {n}")]
    NegativeDenominator { denominator: f64, n: u64 },

    #[error("p = {p} is outside the validity region p < {limit}")]
    OutsideValidityRegion { p: f64, limit: f64 },
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    /// True for failures of the numerical machinery itself, as opposed to
    /// rejected inputs or unmet theorem preconditions.
    pub fn is_numerical_failure(&self) -> bool {
        matches!(
            self,
            Error::QuadratureFailure(_)
                | Error::EigensolveFailure(_)
                | Error::MomentOverflow { .. }
                | Error::EmptyCell { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
