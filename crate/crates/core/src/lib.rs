//! Weak KAM numerics for weakly coupled Hamilton-Jacobi systems
//!
//! ```text
//! H(x, Dv(x, i), i) + Σ_j c_ij (v(x, i) - v(x, j)) = λ,   x ∈ 𝕋^d, i ∈ {1..m}
//! ```
//!
//! on the flat torus with `d ∈ {1, 2}`. The crate computes the ergodic
//! constant `λ`, the viscous Cauchy evolution and its adjoint densities,
//! Mather measures both from a linear program over holonomic measures and
//! from the adjoint push-forward, and checks the comparison principle and
//! the uniqueness-set property on explicit solution families.
//!
//! Components are 0-based in the API and 1-based in user-facing text.

pub mod assumptions;
pub mod coupling;
pub mod error;
pub mod evolve;
pub mod grid;
pub mod hamiltonian;
pub mod mather;
pub mod potential;
pub mod suite;
pub mod verify;

pub use assumptions::{check_assumptions, AssumptionReport};
pub use coupling::{apply_coupling, CouplingMatrix};
pub use error::{Error, Result};
pub use grid::{GridFunction, PeriodicGrid};
pub use hamiltonian::{Family, Hamiltonian, HamiltonianSpec};
pub use potential::Potential;
