//! Error type shared across the crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("factor has vanishing Frobenius norm")]
    ZeroFactor,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("channel completeness residual {residual:.3e} exceeds tolerance {tol:.3e}")]
    IncompleteChannel { residual: f64, tol: f64 },

    #[error("channel has no operators")]
    EmptyChannel,

    #[error("channels have different geometries")]
    GeometryMismatch,

    #[error("composed Kraus rank {kappa} exceeds cap {cap}")]
    KappaOverflow { kappa: usize, cap: usize },

    #[error("operation requires Euclidean geometry")]
    UnsupportedGeometry,

    #[error("matrix is not positive semidefinite (eigenvalue {eigenvalue:.3e})")]
    NotPsd { eigenvalue: f64 },

    #[error("matrix has zero Frobenius norm")]
    ZeroMatrix,

    #[error("Cayley linear solve residual {residual:.3e} exceeds tolerance")]
    SolveFailure { residual: f64 },

    #[error("I + A is near-singular (condition estimate {cond:.3e})")]
    NearSingular { cond: f64 },

    #[error("weight w[{index}] = {value} must be positive")]
    NonPositiveWeight { index: usize, value: f64 },

    #[error("product blocks disagree on Kraus rank")]
    KappaMismatch,

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("positive triple has no negatives")]
    EmptyNegatives,

    #[error("negative sampling exhausted after {attempts} attempts")]
    ExhaustedCandidates { attempts: usize },

    #[error("missing {kind} parameter for id {id}")]
    MissingParam { kind: &'static str, id: u32 },

    #[error("gradient check failed: max relative error {max_rel_err:.3e}")]
    GradCheckFailed { max_rel_err: f64 },

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    #[error("{0} split is empty")]
    EmptySplit(&'static str),

    #[error("relation {0} has no triples in the requested split")]
    EmptyRelation(u32),

    #[error("exact rank requested for {rows}x{cols} matrix above dense cutoff {cutoff}")]
    TooLargeExact {
        rows: usize,
        cols: usize,
        cutoff: usize,
    },

    #[error("invalid fixture parameters: {0}")]
    InvalidParams(String),

    #[error("unknown entity or relation id {0}")]
    UnknownId(u32),

    #[error("no ranks to aggregate")]
    EmptyRanks,

    #[error("need at least 3 relations for a rank correlation, got {0}")]
    TooFewRelations(usize),

    #[error("matrix is not orthogonal (residual {residual:.3e})")]
    NotOrthogonal { residual: f64 },

    #[error("sign vector entries must be exactly +1 or -1")]
    InvalidSign,

    #[error("matrix is not w-orthogonal (residual {residual:.3e})")]
    NotWOrthogonal { residual: f64 },

    #[error("unknown model '{0}'")]
    UnknownModel(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
