use thiserror::Error;

/// Errors raised by the library. Variant names follow the failure they report.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("step distribution has nonzero drift: mean = {0:?}")]
    NonZeroDrift(Vec<f64>),
    #[error("step support spans {rank} of {dim} dimensions")]
    DegenerateSupport { rank: usize, dim: usize },
    #[error("covariance matrix is singular or not positive definite")]
    SingularCovariance,
    #[error("invalid step distribution: {0}")]
    InvalidModel(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("point {0:?} lies outside the open cone")]
    PointOutsideCone(Vec<f64>),
    #[error("start point {0:?} lies outside the open cone")]
    StartOutsideCone(Vec<i64>),
    #[error("invalid cone: {0}")]
    InvalidCone(String),
    #[error("transform cannot be applied to this cone: {0}")]
    UnsupportedTransform(String),
    #[error("no closed-form reduite for this cone variant")]
    NoClosedForm,
    #[error("series did not converge: last-term ratio {ratio:e} after {terms} terms")]
    SeriesNotConverged { terms: usize, ratio: f64 },
    #[error("asymptotic fit diverged: residual {0}")]
    FitDiverged(f64),
    #[error("non-positive value {value} at n = {n}; cannot take logarithms")]
    NonPositiveValue { n: u64, value: f64 },
    #[error("series mixes residue classes of a period-{0} walk; select a residue class")]
    MixedResidueClasses(u64),
    #[error("fit window [{0}, {1}] contains fewer than two points")]
    EmptyWindow(u64, u64),
    #[error("no lattice point qualifies for the comparison grid")]
    EmptyGrid,
    #[error("exact rational arithmetic requested but {0}")]
    NotExact(String),
    #[error("configuration error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
