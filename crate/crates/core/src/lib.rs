//! Numerical laboratory for KMS-detailed-balanced Lindbladians of few-body qubit
//! Hamiltonians: construction, metastability functionals, recovery experiments,
//! information-theoretic audits and a classical Ising analogue.

pub mod classical;
pub mod cli;
pub mod error;
pub mod functionals;
pub mod infotheory;
pub mod linalg;
pub mod lindblad;
pub mod markov;
pub mod ode;
pub mod pauli_ham;
pub mod quad;
pub mod random;
pub mod spectral;

pub use error::{Error, Result};
