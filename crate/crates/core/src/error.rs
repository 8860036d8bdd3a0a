use thiserror::Error;

/// Errors produced by mesh construction, assembly, the linear solvers and
/// the time integrator.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("invalid boundary region: {0}")]
    InvalidRegion(String),

    #[error("triplet ({row}, {col}) outside a {nrows}x{ncols} matrix")]
    InvalidTriplet {
        row: usize,
        col: usize,
        nrows: usize,
        ncols: usize,
    },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("iterative solver did not converge after {iterations} iterations (relative residual {residual:e})")]
    SolverFailure { iterations: usize, residual: f64 },

    #[error("matrix is numerically singular at column {column}")]
    SingularMatrix { column: usize },

    #[error("fields live on different meshes")]
    MeshMismatch,

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("meshes are not nested: {0}")]
    NonNested(String),

    #[error("Newton iteration did not converge; residual history {history:?}")]
    Nonconvergence { history: Vec<f64> },

    #[error("no sample with nonzero gradients")]
    NoValidSample,

    #[error("invalid configuration: {0}")]
    InvalidConfiguration(String),

    #[error("decay fit: {0}")]
    FitDomain(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
