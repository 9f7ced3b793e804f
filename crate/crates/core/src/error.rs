use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("matrix is not symmetric (relative asymmetry {asymmetry:.3e})")]
    NotSymmetric { asymmetry: f64 },
    #[error("matrix is not positive definite (eigenvalues {min:.3e} .. {max:.3e})")]
    NotPositiveDefinite { min: f64, max: f64 },
    #[error("matrix has non-finite entries")]
    NonFinite,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("dimension {dim} exceeds the supported maximum {max}")]
    DimTooLarge { dim: usize, max: usize },
    #[error("quadrature reference unavailable for dimension {dim} (max {max})")]
    DimTooLargeForQuadrature { dim: usize, max: usize },
    #[error("quadrature did not converge: residual {residual:.3e} > tolerance {tolerance:.3e}")]
    QuadratureNotConverged { residual: f64, tolerance: f64 },
    #[error("finite-difference Hessian dominated by quadrature noise (discrepancy {discrepancy:.3e})")]
    NumericallyUnstable { discrepancy: f64 },
    #[error("partial covariance P_{k} is not positive definite")]
    SingularTail { k: usize },
    #[error("invalid moment constant: {0}")]
    InvalidMoment(String),
    #[error("support of {paths} paths exceeds the enumeration cap {cap}")]
    SupportTooLarge { paths: u128, cap: u128 },
    #[error("iteration diverged at step {step}: |delta| = {norm:.3e}")]
    DivergenceDetected { step: usize, norm: f64 },
    #[error("index order violated: need 1 <= j <= i, got j = {j}, i = {i}")]
    IndexOrder { j: usize, i: usize },
    #[error("test function has unbounded {0}")]
    InvalidSmoothness(&'static str),
    #[error("horizon {horizon} exceeds the ledger limit {max}")]
    HorizonTooLarge { horizon: usize, max: usize },
    #[error("step size too large for spectral constants: eta_1 * lambda_max = {product:.4} > 1")]
    StepTooLarge { product: f64 },
    #[error("reference expectation unavailable: {0}")]
    ReferenceUnavailable(String),
    #[error("need at least 2 replications, got {0}")]
    InsufficientReplications(usize),
}
