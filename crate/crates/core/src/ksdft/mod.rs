//! Kohn-Sham energy, Hamiltonian, self-consistent field and direct
//! minimization on a finite-element space.

mod direct;
mod io;
mod problem;
mod scf;

pub use direct::{direct_minimize, DirectOptions};
pub use io::{GroundStateRecord, GROUND_STATE_FORMAT, GROUND_STATE_VERSION};
pub use problem::{orthonormalize, EnergyTerms, Hamiltonian, KsProblem, OrbitalSet};
pub use scf::{
    aufbau_audit, initial_orbitals, scf_solve, scf_solve_from, AufbauReport, GroundState, InitialGuess, Method, Mixing,
    ScfConfig, ScfStep,
};
