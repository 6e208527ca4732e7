//! Lax-Friedrichs numerical Hamiltonians.

use crate::hamiltonian::Hamiltonian;

use super::MAX_DIM;

/// How the artificial dissipation in the Lax-Friedrichs flux is chosen.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Dissipation {
    /// One coefficient for every node and axis.
    Global(f64),
    /// Per node and axis, the largest `|∂_k H|` over the corners of the box
    /// spanned by `p⁻` and `p⁺`.
    Local,
}

impl Dissipation {
    /// Local dissipation in 1D, global `θ` otherwise.
    pub fn default_for(dim: usize, theta: f64) -> Self {
        if dim == 1 {
            Dissipation::Local
        } else {
            Dissipation::Global(theta)
        }
    }
}

/// `H(x, (p⁻+p⁺)/2, i) - (θ/2) Σ_k (p⁺_k - p⁻_k)`.
pub fn numerical_hamiltonian<H: Hamiltonian + ?Sized>(
    ham: &H,
    x: &[f64],
    pm: &[f64],
    pp: &[f64],
    i: usize,
    theta: f64,
) -> f64 {
    let d = ham.dim();
    let mut avg = [0.0; MAX_DIM];
    let mut jump = 0.0;
    for k in 0..d {
        avg[k] = 0.5 * (pm[k] + pp[k]);
        jump += pp[k] - pm[k];
    }
    ham.value(x, &avg[..d], i) - 0.5 * theta * jump
}

/// Per-axis local dissipation: `θ_k = max |∂_k H|` over the `2^d` corners.
///
/// In one dimension the resulting flux is monotone for every convex `H`. In
/// two dimensions `θ_k` also moves with the other axis' differences, and
/// when `∂_k H` depends on `p_j` (anisotropic or quartic kinetic energy) the
/// flux can lose monotonicity; see [`Dissipation::default_for`].
pub fn local_dissipation<H: Hamiltonian + ?Sized>(
    ham: &H,
    x: &[f64],
    pm: &[f64],
    pp: &[f64],
    i: usize,
    out: &mut [f64],
) {
    let d = ham.dim();
    let mut corner = [0.0; MAX_DIM];
    let mut grad = [0.0; MAX_DIM];
    out[..d].iter_mut().for_each(|t| *t = 0.0);
    for mask in 0..(1usize << d) {
        for k in 0..d {
            corner[k] = if mask >> k & 1 == 1 { pp[k] } else { pm[k] };
        }
        ham.grad_p(x, &corner[..d], i, &mut grad[..d]);
        for k in 0..d {
            out[k] = out[k].max(grad[k].abs());
        }
    }
}

/// Lax-Friedrichs flux with the chosen dissipation.
#[inline]
pub fn scheme_hamiltonian<H: Hamiltonian + ?Sized>(
    ham: &H,
    x: &[f64],
    pm: &[f64],
    pp: &[f64],
    i: usize,
    dissipation: Dissipation,
) -> f64 {
    match dissipation {
        Dissipation::Global(theta) => numerical_hamiltonian(ham, x, pm, pp, i, theta),
        Dissipation::Local => {
            let d = ham.dim();
            let mut theta = [0.0; MAX_DIM];
            local_dissipation(ham, x, pm, pp, i, &mut theta);
            let mut avg = [0.0; MAX_DIM];
            let mut visc = 0.0;
            for k in 0..d {
                avg[k] = 0.5 * (pm[k] + pp[k]);
                visc += 0.5 * theta[k] * (pp[k] - pm[k]);
            }
            ham.value(x, &avg[..d], i) - visc
        }
    }
}
