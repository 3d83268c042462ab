//! Crate-wide error type. Every fallible operation returns [`Result`].

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimension {0}: supported range is 2..=5")]
    InvalidDimension(usize),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("polytope is unbounded")]
    Unbounded,

    #[error("polytope is empty or has empty interior")]
    EmptyInterior,

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("singular transform (|det| = {det:.3e})")]
    SingularTransform { det: f64 },

    #[error("no convergence in {op} after {iters} iterations (residual {residual:.3e})")]
    NoConvergence {
        op: &'static str,
        iters: usize,
        residual: f64,
    },

    #[error("body is not in John position: {0}")]
    NotJohnPosition(String),

    #[error("contact decomposition failed: {0}")]
    DecompositionFailed(String),

    #[error("measure is not centred isotropic: {0}")]
    InvalidMeasure(String),

    #[error("not a regular circumscribed simplex: {0}")]
    InvalidSimplex(String),

    #[error("{count} atoms outside every cap (first stray index {first})")]
    CapsNotCovering { count: usize, first: usize },

    #[error("generator failed: {0}")]
    GeneratorFailed(String),

    #[error("reduction stalled: {diagnostics}")]
    ReductionStalled {
        diagnostics: String,
        partial: Box<crate::measures::SphericalMeasure>,
    },

    #[error("invalid frame: {0}")]
    InvalidFrame(String),

    #[error("cardinality {k} exceeds cap {cap} for subset enumeration")]
    CardinalityTooLarge { k: usize, cap: usize },

    #[error("argument outside domain: {0}")]
    OutOfDomain(String),

    #[error("point outside the lifted cone (coordinate {index} has slope {value:.3e})")]
    OutOfCone { index: usize, value: f64 },

    #[error("origin is not interior to the body")]
    OriginOutside,

    #[error("hypothesis violated: {0}")]
    HypothesisViolated(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("normalization failed: {0}")]
    NormalizationFailed(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}
