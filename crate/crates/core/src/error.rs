use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid grid: {0}")]
    Grid(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("covariance matrix of size {0} is not positive definite after jitter")]
    NotPositiveDefinite(usize),

    #[error("circulant embedding eigenvalue {0:e} is below the clipping tolerance")]
    NegativeEigenvalue(f64),

    #[error("drift `{0}` is not smooth: spatial derivatives are unavailable")]
    NotSmooth(String),

    #[error("CFL condition violated: {0}")]
    Cfl(String),

    #[error("test function support escapes the grid: {0}")]
    SupportEscape(String),

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("size guard exceeded: {0}")]
    SizeGuard(String),

    #[error("malformed input: {0}")]
    Parse(String),

    #[error("Picard iteration stopped after {iterations} iterations with residual {residual:e}")]
    NonConvergence { iterations: usize, residual: f64, last: Box<crate::flow::Trajectory> },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
