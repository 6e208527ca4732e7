//! Explicit solution families, the example measure and checks of the
//! comparison and uniqueness-set implications.

mod comparison;
mod eikonal;

pub use comparison::{
    check_comparison, duality_check, uniqueness_set_check, ComparisonReport, DualityReport,
    MeasureIntegral, UniquenessCheck, Verdict,
};
pub use eikonal::{
    eikonal_solutions, eikonal_solutions_with_values, example_measure, ZERO_SET_TOLERANCE,
};
