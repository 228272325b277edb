use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("potential coefficients are not Hermitian at frequency {0:?}")]
    NonHermitianPotential(Vec<i32>),

    #[error("plane-wave cutoff {cutoff} cannot represent potential frequency {frequency:?}")]
    BasisTooSmall { cutoff: usize, frequency: Vec<i32> },

    #[error("eigensolver failed at quasi-momentum {p:?}: {reason}")]
    FiberSolve { p: Vec<f64>, reason: String },

    #[error("edge refused: {0}")]
    EdgeRefused(String),

    #[error("weighted Bloch functions numerically dependent (min Gram eigenvalue {0:e}); refine grid")]
    DependentBloch(f64),

    #[error("quadrature did not converge: {0}")]
    Quadrature(String),

    #[error("discrete gap check failed: {0}")]
    DiscreteGap(String),

    #[error("linear solve failed: {0}")]
    LinearSolve(String),

    #[error("iterative eigensolver failed: {0}")]
    Eigensolver(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("lattice sum tail bound {tail:e} not reached within radius cap {cap}")]
    LatticeSum { tail: f64, cap: usize },

    #[error("config error at `{pointer}`: {message}")]
    Config { pointer: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
