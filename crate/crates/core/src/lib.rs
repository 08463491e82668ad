//! Variational ground-state search for tilted Ising models with restricted
//! Boltzmann machine quantum states.
//!
//! The wavefunction is a complex RBM over spin configurations; expectation
//! values are estimated with Metropolis-Hastings sampling and parameters are
//! optimized by stochastic reconfiguration, applied either to the full
//! parameter set at once or to blocks of parameters coupled to contiguous
//! groups of visible spins, swept across the lattice forward and backward in
//! DMRG fashion. Small systems can be cross-checked against an exact
//! diagonalization reference.

pub mod ansatz;
pub mod error;
pub mod estimator;
pub mod model;
pub mod optimizer;
pub mod oracle;
pub mod runner;
pub mod sampler;

pub use error::{Error, Result};
