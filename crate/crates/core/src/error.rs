use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("q must lie in (0, 1], got {0}")]
    InvalidQ(f64),

    #[error("q-binomial requires n >= k >= 0, got n = {n}, k = {k}")]
    BinomialDomain { n: i64, k: i64 },

    #[error("invalid interval [{x1}, {xn}]: endpoints must be finite with x1 < xN")]
    InvalidInterval { x1: f64, xn: f64 },

    #[error("argument out of domain: {0}")]
    Domain(String),

    #[error("series truncation failed: {terms} terms at t = {t} reached only mass {mass}")]
    Truncation { t: f64, terms: usize, mass: f64 },

    #[error("invalid partition: {0}")]
    InvalidPartition(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid scaling vector: {0}")]
    InvalidScaling(String),

    #[error("operator is not a contraction: factor {0} >= 1")]
    NonContraction(f64),

    #[error("no convergence after {iterations} iterations: residual {residual:e} > tol {tol:e}")]
    NonConvergence {
        iterations: usize,
        residual: f64,
        tol: f64,
    },

    #[error("L^p exponent must satisfy p >= 1, got {0} (the integral MKZ operator is not defined on L^p for 0 < p < 1)")]
    InvalidExponent(f64),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("degenerate denominator: {0}")]
    DegenerateDenominator(String),

    #[error("interpolation points are collinear")]
    Collinear,

    #[error("germ `{0}` has no closed-form derivative")]
    MissingDerivative(String),

    #[error("csv: {0}")]
    Csv(String),
}
