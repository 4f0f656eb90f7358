use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Every failure the toolkit can report. Each variant carries a stable
/// machine-readable code (see [`Error::code`]) and maps onto a process exit
/// code through [`Error::exit_code`].
#[derive(Debug, Error)]
pub enum Error {
    #[error("point ({x}, {y}) lies outside the domain")]
    PointOutsideDomain { x: f64, y: f64 },

    #[error("ray trapped: no boundary exit before s_max = {s_max}")]
    TrappedRay { s_max: f64 },

    #[error("step underflow while locating the boundary crossing at s = {s}")]
    StepUnderflow { s: f64 },

    #[error("vector is not tangent to the boundary (normal component {normal_component:e})")]
    NonTangent { normal_component: f64 },

    #[error("vector is not of unit length (norm {norm})")]
    NonUnit { norm: f64 },

    #[error("matrix dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("step grid mismatch: {0}")]
    GridMismatch(String),

    #[error("parameter {value} lies outside the maximal interval [0, {limit}]")]
    OutOfInterval { value: f64, limit: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("conformal factor not bounded below on the ray (min {min})")]
    ConformalFactor { min: f64 },

    #[error("cached geometry does not match: {0}")]
    CacheMismatch(String),

    #[error("scene hash mismatch: sinogram {found:016x}, scene {expected:016x}")]
    HashMismatch { expected: u64, found: u64 },

    #[error("CGLS diverged: residual increased for {0} consecutive iterations")]
    Divergence(usize),

    #[error("{path}:{line}:{column}: {message}")]
    Syntax {
        path: String,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("scene error: {0}")]
    Scene(String),

    #[error("scene validation failed: {0}")]
    Validation(String),

    #[error("bad file format: {0}")]
    Format(String),

    #[error("tolerance breach: {0}")]
    Tolerance(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn code(&self) -> &'static str {
        match self {
            Error::PointOutsideDomain { .. } => "point-outside-domain",
            Error::TrappedRay { .. } => "trapped-ray",
            Error::StepUnderflow { .. } => "step-underflow",
            Error::NonTangent { .. } => "non-tangent",
            Error::NonUnit { .. } => "non-unit",
            Error::DimensionMismatch { .. } => "dimension-mismatch",
            Error::GridMismatch(_) => "grid-mismatch",
            Error::OutOfInterval { .. } => "out-of-interval",
            Error::InvalidParameter(_) => "invalid-parameter",
            Error::ConformalFactor { .. } => "conformal-factor",
            Error::CacheMismatch(_) => "cache-mismatch",
            Error::HashMismatch { .. } => "hash-mismatch",
            Error::Divergence(_) => "divergence",
            Error::Syntax { .. } => "syntax",
            Error::Scene(_) => "scene",
            Error::Validation(_) => "validation",
            Error::Format(_) => "format",
            Error::Tolerance(_) => "tolerance",
            Error::Io(_) => "io",
        }
    }

    /// 0 ok, 1 tolerance breach, 2 input error, 3 trapped-ray/validation failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Tolerance(_) | Error::Divergence(_) => 1,
            Error::TrappedRay { .. } | Error::Validation(_) | Error::StepUnderflow { .. } => 3,
            _ => 2,
        }
    }
}
