//! Measures built from an adjoint density: the time-averaged momentum
//! measure `ν` and its push-forward `μ` to velocities.

use super::measure::{AtomKey, DiscreteMeasure, VelocityGrid};
use crate::error::{Error, Result};
use crate::evolve::{AdjointDensity, TimeSlab};
use crate::grid::MAX_DIM;
use crate::hamiltonian::Hamiltonian;

/// Trapezoid weights of the frames, `dt` inside and `dt/2` at both ends.
fn frame_weights(slab: &TimeSlab) -> Vec<f64> {
    let n = slab.len();
    let dt = slab.dt();
    (0..n)
        .map(|k| if k == 0 || k + 1 == n { 0.5 * dt } else { dt })
        .collect()
}

fn check_inputs(u2: &TimeSlab, sigma: &AdjointDensity, vgrid: &VelocityGrid) -> Result<()> {
    u2.check_compatible(&sigma.slab)?;
    if vgrid.dim() != u2.grid().dim() {
        return Err(Error::DimensionMismatch {
            expected: u2.grid().dim(),
            got: vgrid.dim(),
        });
    }
    Ok(())
}

/// Visits every `(node, frame, component)` with its mass `σ h^d w_n` and the
/// central difference `p = D_h u2`.
fn for_each_sample(
    u2: &TimeSlab,
    sigma: &AdjointDensity,
    mut visit: impl FnMut(usize, usize, &[f64], f64) -> Result<()>,
) -> Result<()> {
    let g = *u2.grid();
    let d = g.dim();
    let cell = g.cell_volume();
    let mut p = [0.0; MAX_DIM];
    for (n, wt) in frame_weights(u2).into_iter().enumerate() {
        let u = u2.frame(n);
        let s = sigma.slab.frame(n);
        for node in 0..g.nodes() {
            for i in 0..g.components() {
                let mass = s.get(node, i) * cell * wt;
                if mass <= 0.0 {
                    continue;
                }
                u.central_into(node, i, &mut p);
                visit(node, i, &p[..d], mass)?;
            }
        }
    }
    Ok(())
}

fn snap_or_explain(vgrid: &VelocityGrid, v: &[f64], what: &str) -> Result<usize> {
    vgrid.snap(v).map_err(|e| {
        log::error!("{what} {v:?} outside the velocity box of radius {}; raise Qmax", vgrid.q_max());
        e
    })
}

/// `ν`: mass `σ(x, t_n, i) h^d dt` at the lattice point nearest
/// `p = D_h u2(x, t_n, i)`, renormalized.
pub fn riesz_measure(
    u2: &TimeSlab,
    sigma: &AdjointDensity,
    vgrid: &VelocityGrid,
) -> Result<DiscreteMeasure> {
    check_inputs(u2, sigma, vgrid)?;
    let mut atoms = Vec::new();
    for_each_sample(u2, sigma, |x, i, p, mass| {
        let q = snap_or_explain(vgrid, p, "momentum")?;
        atoms.push((AtomKey { x, q, i }, mass));
        Ok(())
    })?;
    DiscreteMeasure::normalized(*u2.grid(), *vgrid, atoms)
}

/// `μ`: the same samples moved to `q = D_pH(x, p, i)` and snapped to the
/// velocity lattice, renormalized. Fails with a truncation error, never
/// clips, when some `q` leaves the box.
pub fn measure_from_adjoint<H: Hamiltonian + ?Sized>(
    ham: &H,
    u2: &TimeSlab,
    sigma: &AdjointDensity,
    vgrid: &VelocityGrid,
) -> Result<DiscreteMeasure> {
    check_inputs(u2, sigma, vgrid)?;
    let g = *u2.grid();
    let d = g.dim();
    let mut atoms = Vec::new();
    let mut q = [0.0; MAX_DIM];
    for_each_sample(u2, sigma, |x, i, p, mass| {
        let xc = g.coords(x);
        ham.grad_p(&xc[..d], p, i, &mut q[..d]);
        let node = snap_or_explain(vgrid, &q[..d], "velocity")?;
        atoms.push((AtomKey { x, q: node, i }, mass));
        Ok(())
    })?;
    DiscreteMeasure::normalized(g, *vgrid, atoms)
}
