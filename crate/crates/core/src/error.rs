use thiserror::Error;

/// Errors raised by the estimation pipeline.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("matrix is not Hermitian (residual {residual:.3e})")]
    NonHermitian { residual: f64 },
    #[error("eigensolver did not converge")]
    NoConvergence,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("degenerate samples for power fit: {0}")]
    DegenerateSamples(String),
    #[error("invalid parameter vector: {0}")]
    InvalidParameter(String),
    #[error("channel is not trace preserving / completely positive here: {0}")]
    TpcpViolation(String),
    #[error("inconsistent Kraus data: {0}")]
    InconsistentKrausData(String),
    #[error("finite-difference step too large: {0}")]
    StepTooLarge(String),
    #[error("Lambda reduction needs K <= N-1 (K = {k}, N = {n})")]
    ReductionInvalid { k: usize, n: usize },
    #[error("no order-one eigenvalue shift available")]
    EmptySum,
    #[error("Fisher matrix is singular (det {det:.3e}, floor {floor:.3e})")]
    SingularFisher { det: f64, floor: f64 },
    #[error("invalid outcome probabilities: {0}")]
    BadProbabilities(String),
    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),
    #[error("i/o failure: {0}")]
    Io(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
