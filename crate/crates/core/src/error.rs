use thiserror::Error;

/// Errors produced by the solver library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error(
        "window [{a}, {b}] is not inside the estimated spectral bounds [{lo}, {hi}]; \
         re-estimate the bounds with a larger margin"
    )]
    WindowOutsideBounds { a: f64, b: f64, lo: f64, hi: f64 },

    #[error("degenerate spectral bounds [{lo}, {hi}]; the operator looks like a multiple of the identity")]
    DegenerateBounds { lo: f64, hi: f64 },

    #[error(
        "coefficient quadrature did not converge: worst coefficient delta {worst_delta:.3e} \
         at {nodes} nodes (cap {cap})"
    )]
    QuadratureNotConverged {
        worst_delta: f64,
        nodes: usize,
        cap: usize,
    },

    #[error("Lanczos start vector vanished after {0} reseeding attempts")]
    LanczosBreakdown(usize),

    #[error("matrix is not Hermitian: {0}")]
    NotHermitian(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

pub type Result<T> = std::result::Result<T, Error>;
