//! Polyak-Ruppert averaged SGD, non-asymptotic normal-approximation bounds
//! for martingales and averaged SGD iterates, a numerical Stein solver, and
//! the Monte Carlo harness used to certify the bounds empirically.

pub mod bounds;
pub mod error;
pub mod experiment;
pub mod linalg;
pub mod martingale;
pub mod montecarlo;
pub mod quadrature;
pub mod sgd;
pub mod stein;
pub mod test_functions;

pub use error::{Error, Result};
pub use linalg::{matrix_power, norms, spectral_decompose, MatrixNorms, SpdMatrix, Spectrum};
