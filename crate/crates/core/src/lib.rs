//! Recursion-map simulator for Quantum Darwinism on expanding binary trees.
//!
//! The posterior state of the reference qubit after measuring an environment
//! fraction is a random 2x2 matrix; its distribution obeys closed recursions
//! on the tree depth. This crate evolves those distributions exactly and by
//! Monte Carlo, evaluates the observables of the phase diagram, and checks
//! everything against a dense statevector construction on small trees.

pub mod bloch;
pub mod clifford;
pub mod coarse;
pub mod criticality;
pub mod ensemble;
pub mod error;
pub mod exact;
pub mod io;
pub mod observables;
pub mod oracle;
pub mod run;
pub mod sampler;

pub use bloch::{branch_map, branch_weight, initial_ensemble, rotate, BlochPoint, ModelParams, Variant};
pub use ensemble::{Peak, WeightedEnsemble};
pub use error::{QdError, QdResult};

/// Crate version, written into every output header.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
