//! Numerical harness for bi-Poisson quadratic harnesses.
//!
//! The crate covers the orthogonal polynomial recurrences of the process,
//! exact verification of the connection-coefficient identities, Gauss
//! quadrature for the marginal and transition laws, Monte Carlo sampling of
//! the Markov chain, and the exact `q = 1` and `q = -1` cases.

pub mod checks;
pub mod connection;
pub mod markov;
pub mod polynomials;
pub mod precision;
pub mod q1;
pub mod qm1;
pub mod qcore;
pub mod report;
pub mod spectral;

pub use polynomials::{HarnessParams, ParamError};
pub use qcore::{Rational, Scalar};
