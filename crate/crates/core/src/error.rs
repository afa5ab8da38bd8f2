use thiserror::Error;

/// Errors raised by library operations.
///
/// Every variant maps to exactly one process exit code through
/// [`Error::exit_code`]: input/validation problems map to 2, numerical
/// failures to 3.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("point {point:?} lies outside the chart domain")]
    DomainViolation { point: Vec<f64> },
    #[error("derivative of order {order} unavailable for {field}")]
    DerivativeUnavailable { field: &'static str, order: u8 },
    #[error("degenerate plane: Gram determinant {gram} below 1e-12")]
    DegeneratePlane { gram: f64 },
    #[error("zero vector where a nonzero vector is required")]
    ZeroVector,
    #[error("speed must be positive, got {0}")]
    NonpositiveSpeed(f64),
    #[error("vector is not unit length (g-norm {norm})")]
    NonUnitVector { norm: f64 },
    #[error("frame is not orthonormal (residual {residual})")]
    NonOrthonormalFrame { residual: f64 },
    #[error("immersion is rank deficient (smallest singular value {sigma_min})")]
    RankDeficient { sigma_min: f64 },
    #[error("vector is not tangent to the submanifold (residual {residual})")]
    NotTangent { residual: f64 },
    #[error("orbit left the chart domain at t = {time}")]
    DomainExit { time: f64 },
    #[error("step limit {max_steps} exceeded")]
    StepLimitExceeded { max_steps: usize },
    #[error("projection onto submanifold failed to converge after {iterations} iterations")]
    ProjectionFailure { iterations: usize },
    #[error("bad dimension: {0}")]
    BadDimension(String),
    #[error("pushed hyperplane basis is rank deficient (sigma_min {sigma_min})")]
    DegenerateImage { sigma_min: f64 },
    #[error("no closed orbit found near the period guess (return distance {distance})")]
    NotPeriodic { distance: f64 },
    #[error("sample grid mismatch: {0}")]
    GridMismatch(String),
    #[error("unreliable splitting: expansion gap {gap} below 10")]
    UnreliableSplitting { gap: f64 },
    #[error("2-form is not closed (residual {residual})")]
    NotClosed { residual: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("unknown model `{0}`")]
    UnknownModel(String),
    #[error("linear algebra failure: {0}")]
    Singular(&'static str),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::DomainViolation { .. }
            | Error::DegeneratePlane { .. }
            | Error::ZeroVector
            | Error::NonpositiveSpeed(_)
            | Error::NonUnitVector { .. }
            | Error::NonOrthonormalFrame { .. }
            | Error::NotTangent { .. }
            | Error::BadDimension(_)
            | Error::GridMismatch(_)
            | Error::NotClosed { .. }
            | Error::DimensionMismatch { .. }
            | Error::InvalidConfig(_)
            | Error::UnknownModel(_)
            | Error::DerivativeUnavailable { .. } => 2,
            Error::RankDeficient { .. }
            | Error::DomainExit { .. }
            | Error::StepLimitExceeded { .. }
            | Error::ProjectionFailure { .. }
            | Error::DegenerateImage { .. }
            | Error::NotPeriodic { .. }
            | Error::UnreliableSplitting { .. }
            | Error::Singular(_) => 3,
        }
    }
}
