use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("unknown model `{0}`")]
    UnknownModel(String),

    #[error("non-finite {what} at t = {t}")]
    NonFinite { what: &'static str, t: f64 },

    #[error("boundary is not smooth at the given point (edge or corner)")]
    NonSmoothBoundary,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("point {index} lies outside the domain")]
    PointOutsideDomain { index: usize },

    #[error("insufficient survivors: {achieved} of {target} after {replicas} replicas")]
    InsufficientSurvivors { achieved: usize, target: usize, replicas: usize },

    #[error("time step underflow at t = {time} after {retries} all-killed retries (dt = {dt})")]
    StepUnderflow { time: f64, dt: f64, retries: u32 },

    #[error("histogram binnings differ")]
    BinningMismatch,

    #[error("empty measure")]
    EmptyMeasure,

    #[error("insufficient points above noise floor: {above} (need at least 3)")]
    InsufficientPointsAboveFloor { above: usize },

    #[error("fitted rate is not positive (gamma = {gamma})")]
    NonDecayingFit { gamma: f64 },

    #[error("matrix not positive definite (min eigenvalue {min_eigenvalue})")]
    NotPositiveDefinite { min_eigenvalue: f64 },

    #[error("coupling matrix undefined on the diagonal x = y")]
    CoincidentPoints,
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
