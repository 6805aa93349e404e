//! Alignment modulo orthogonal transforms, the tangent decomposition, the
//! second-order operator with its inf-sup audit, and convergence-rate studies.

mod align;
mod hessian;
mod study;

pub use align::{procrustes_align, tangent_split, Alignment, TangentSplit, DEGENERATE_OVERLAP};
pub use hessian::{hessian_apply, infsup_audit, InfSupReport, SecondOrder, TANGENT_TOL};
pub use study::{
    convergence_study, fit_slope, fit_with_exclusion, solve_level, study_against, Level, RateReport, RateRow,
    Reference, ReferenceInfo, ReferenceSolution, Slope, StudyOptions, CSV_COLUMNS, ERROR_COLUMNS,
};
