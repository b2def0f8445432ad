//! Hamiltonian tomography from quantum quenches on spin-1/2 chains.
//!
//! The crate simulates quench dynamics exactly, reconstructs coupling
//! constants from initial/final expectation values, and provides the
//! diagnostics that explain when reconstruction is stable.
//!
//! * [`pauli`]: bitmask Pauli strings and operator bases.
//! * [`quantum`]: states, Hamiltonians, exact evolution, correlations.
//! * [`ensembles`]: seeded initial-state ensembles and benchmark models.
//! * [`linear`]: the multi-quench constraint matrix and kernel estimator.
//! * [`moments`]: single-quench moment tensors, solver, closure and scale recovery.
//! * [`spectral`]: covariance, operator expansion and gap bounds.
//! * [`harness`]: declarative experiment configs, sweeps and tabular output.

pub mod ensembles;
pub mod error;
pub mod harness;
pub mod linear;
pub mod moments;
pub mod pauli;
pub mod policy;
pub mod quantum;
pub mod rng;
pub mod spectral;

pub use error::{Error, Result};
pub use pauli::{Letter, OperatorBasis, PauliString, PauliSum, Phase};
pub use policy::NumericalPolicy;
pub use quantum::{EigenSystem, HamiltonianSpec, QuenchPair, StateVector};
