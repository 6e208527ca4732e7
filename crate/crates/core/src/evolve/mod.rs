//! Time stepping: the viscous Cauchy problem, the ergodic problem and the
//! backward adjoint of the linearized evolution.

mod adjoint;
mod cauchy;
mod ergodic;
mod slab;

pub use adjoint::{
    convexity_defect, linearized_step, solve_adjoint, AdjointDensity, ConvexityDefect, Drift,
};
pub use cauchy::{solve_cauchy_regularized, CauchyOptions, CauchyRun};
pub use ergodic::{normalize_spec, solve_ergodic, ErgodicOptions, ErgodicSolution};
pub use slab::{TimeSlab, SLAB_MAGIC};

use crate::coupling::CouplingMatrix;
use crate::grid::{local_dissipation, Dissipation, GridFunction, MAX_DIM};
use crate::hamiltonian::Hamiltonian;

/// Writes `Ĥ(x, p⁻, p⁺, i) + Θu` for every entry of `u` into `out` and returns
/// the largest per-axis dissipation `|∂_k H|` met on the one-sided boxes.
pub(crate) fn stationary_operator<H: Hamiltonian + ?Sized>(
    ham: &H,
    c: &CouplingMatrix,
    u: &GridFunction,
    dissipation: Dissipation,
    out: &mut [f64],
) -> f64 {
    let g = *u.grid();
    let d = g.dim();
    let m = g.components();
    let mut pm = [0.0; MAX_DIM];
    let mut pp = [0.0; MAX_DIM];
    let mut theta = [0.0; MAX_DIM];
    let mut coupling = vec![0.0; m];
    let mut worst: f64 = 0.0;
    for node in 0..g.nodes() {
        let x = g.coords(node);
        c.apply_at(u.at(node), &mut coupling);
        for i in 0..m {
            u.one_sided_into(node, i, &mut pm, &mut pp);
            local_dissipation(ham, &x[..d], &pm[..d], &pp[..d], i, &mut theta);
            worst = theta[..d].iter().fold(worst, |a, t| a.max(*t));
            let mut avg = [0.0; MAX_DIM];
            let mut visc = 0.0;
            for k in 0..d {
                avg[k] = 0.5 * (pm[k] + pp[k]);
                let t = match dissipation {
                    Dissipation::Global(t) => t,
                    Dissipation::Local => theta[k],
                };
                visc += 0.5 * t * (pp[k] - pm[k]);
            }
            out[node * m + i] = ham.value(&x[..d], &avg[..d], i) - visc + coupling[i];
        }
    }
    worst
}

/// Largest `|∂_k H|` over nodes, components and the corners of the box
/// `[-bound, bound]^d`.
pub(crate) fn dissipation_bound<H: Hamiltonian + ?Sized>(
    ham: &H,
    grid: &crate::grid::PeriodicGrid,
    bound: f64,
) -> f64 {
    let d = grid.dim();
    let lo = [-bound; MAX_DIM];
    let hi = [bound; MAX_DIM];
    let mut theta = [0.0; MAX_DIM];
    let mut worst: f64 = 0.0;
    for node in 0..grid.nodes() {
        let x = grid.coords(node);
        for i in 0..grid.components() {
            local_dissipation(ham, &x[..d], &lo[..d], &hi[..d], i, &mut theta);
            worst = theta[..d].iter().fold(worst, |a, t| a.max(*t));
        }
    }
    worst
}
