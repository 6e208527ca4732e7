//! Discrete generalized Mather measures: holonomy rows, the action LP, measures
//! from adjoint densities and uniqueness sets.

mod adjoint;
mod lp;
mod measure;
pub mod simplex;
mod uniqueness;

pub use adjoint::{measure_from_adjoint, riesz_measure};
pub use lp::{
    assemble_lp, optimal_face, sample_optimal_vertices, solve_mather_lp, HolonomyLp,
    MatherLpSolution, MatherLpSummary, ATOM_BUDGET,
};
pub use measure::{
    action, holonomy_residual, AtomKey, DiscreteMeasure, MeasureSummary, VelocityGrid,
};
pub use simplex::SimplexOptions;
pub use uniqueness::{uniqueness_set, UniquenessSet};
