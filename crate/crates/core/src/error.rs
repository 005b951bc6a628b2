use thiserror::Error;

/// Errors raised by the form kernels and everything built on top of them.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("unsupported coframe dimension {0} (expected 6 or 7)")]
    InvalidDimension(usize),
    #[error("degree {degree} is out of range for dimension {dim}")]
    InvalidDegree { dim: usize, degree: usize },
    #[error("expected {expected} coefficients, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("non-finite coefficient at position {0}")]
    NonFinite(usize),
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("degree mismatch: expected {expected}, got {got}")]
    DegreeMismatch { expected: usize, got: usize },
    #[error("degree overflow: {0} + {1} exceeds the coframe dimension {2}")]
    DegreeOverflow(usize, usize, usize),
    #[error("cannot contract a degree-0 form")]
    ContractDegreeZero,
    #[error("exterior derivative of a top-degree form")]
    TopDegreeDerivative,
    #[error("invalid multi-index {0:?}: {1}")]
    InvalidIndex(Vec<usize>, &'static str),
    #[error("metric is not symmetric (asymmetry {0:e})")]
    MetricNotSymmetric(f64),
    #[error("metric is not positive definite (smallest eigenvalue {0:e})")]
    MetricNotPositiveDefinite(f64),
    #[error("Lefschetz map is singular or ill-conditioned (condition ratio {0:e})")]
    SingularLefschetz(f64),
    #[error("d^2 != 0: residual {0:e}")]
    NotClosed(f64),
    #[error("unknown built-in algebra `{0}`")]
    UnknownAlgebra(String),

    #[error("2-form is degenerate (omega^3 coefficient {0:e})")]
    DegenerateOmega(f64),
    #[error("omega and psi_plus are not compatible (|omega ^ psi_plus| = {0:e})")]
    Incompatible(f64),
    #[error("3-form is not stable of negative type (lambda = {0:e})")]
    NotStable(f64),
    #[error("induced metric is not positive definite (smallest eigenvalue {0:e})")]
    MetricIndefinite(f64),
    #[error("structure is not normalized; rescale psi_plus by {scale} (ratio {ratio})")]
    Unnormalized { ratio: f64, scale: f64 },

    #[error("torsion reconstruction residual {0:e} exceeds tolerance")]
    TorsionReconstruction(f64),
    #[error("2-form is not primitive of type (1,1) (defect {0:e})")]
    NotPrimitive11(f64),
    #[error("rescaling factor must be nonzero")]
    ZeroRescale,

    #[error("t = {t} is outside the {profile} interval")]
    OutsideInterval { profile: &'static str, t: f64 },

    #[error("initial data is not half-flat (|d psi_plus| = {dpsi:e}, |d(omega^2)| = {domega2:e})")]
    NotHalfFlat { dpsi: f64, domega2: f64 },
    #[error("restricted flow precondition failed: {0}")]
    RestrictedPrecondition(String),
    #[error("gamma is not admissible: {0}")]
    InvalidGamma(String),

    #[error("invalid search problem: {0}")]
    InvalidSearch(String),
}

pub type Result<T> = std::result::Result<T, Error>;
