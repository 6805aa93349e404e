//! Model systems: pseudopotentials, exchange-correlation and Hartree terms.

mod hartree;
mod pseudo;
mod system;
pub mod xc;

pub use hartree::{coulomb_d, solve_hartree, BoundaryRule, HartreeSolution, HartreeSolver, HARTREE_CG_TOL};
pub use pseudo::{
    apply_nonlocal, local_potential_at, screened_coulomb, NonlocalOperator, Nucleus, Projector, ProjectorKind,
    PseudoSpec,
};
pub use system::{diatomic, free_box, oscillator, tetrahedral, ModelSystem, DIATOMIC_BOND, PRESETS};
pub use xc::XcFunctional;
