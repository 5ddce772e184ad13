//! Multiconfigurational time-dependent Hartree solver for bosonic atoms that
//! convert into diatomic molecules (2a <-> m) on a periodic 1-D grid.

pub mod config;
pub mod eom;
pub mod error;
pub mod fock;
pub mod grid;
pub mod hamiltonian;
pub mod oracle;
pub mod propagation;
pub mod rdm;
pub mod run;
pub mod two_mode;

pub use error::{Result, SolverError};
