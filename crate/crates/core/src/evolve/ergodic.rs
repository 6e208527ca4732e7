//! The ergodic problem `Ĥ(x, Dv, i) + Θv = λ` on the grid.
//!
//! `λ` comes from discounted problems `α v_α + Ĥ + Θv_α = 0` on the ladder
//! `α ∈ {1e-1, 1e-2, 1e-3}`, extrapolated to `α = 0` by the quadratic through
//! the three values of `-α mean(v_α)`. The discounted solution at the
//! smallest `α` is then relaxed without discount (relative value iteration,
//! i.e. the undiscounted evolution with its mean drift removed) to get `v`
//! and an independent long-time estimate of `λ`.

use serde::Serialize;

use super::{cauchy::theta_for, stationary_operator};
use crate::coupling::CouplingMatrix;
use crate::error::{Error, Result};
use crate::grid::{Dissipation, GridFunction, PeriodicGrid};
use crate::hamiltonian::{Hamiltonian, HamiltonianSpec};

#[derive(Clone, Debug)]
pub struct ErgodicOptions {
    /// Node-wise residual target for every fixed-point solve.
    pub tolerance: f64,
    pub alphas: Vec<f64>,
    pub max_iterations: usize,
    pub dissipation: Option<Dissipation>,
}

impl Default for ErgodicOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-9,
            alphas: vec![1e-1, 1e-2, 1e-3],
            max_iterations: 5_000_000,
            dissipation: None,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ErgodicSolution {
    /// Extrapolated ergodic constant.
    pub lambda: f64,
    #[serde(skip)]
    pub v: GridFunction,
    /// `max |Ĥ(v) + Θv - lambda_long_time|` over entries.
    pub residual: f64,
    /// `(α, -α mean v_α)` for each rung of the ladder.
    pub discounted: Vec<(f64, f64)>,
    /// Mean drift of the undiscounted evolution at convergence.
    pub lambda_long_time: f64,
    /// `|lambda - lambda_long_time|`.
    pub disagreement: f64,
    /// Set when the disagreement exceeds ten times the tolerance.
    pub flagged: bool,
    pub iterations: usize,
    pub tolerance: f64,
}

struct Relaxed {
    lambda: f64,
    residual: f64,
    iterations: usize,
}

/// Damped iteration `w ← w - τ(αw + G(w) - mean G(w))` with `G = Ĥ + Θ`.
/// `w` keeps zero mean, and `-α mean v_α = mean G(w)` at the fixed point.
fn relax<H: Hamiltonian + ?Sized>(
    ham: &H,
    c: &CouplingMatrix,
    w: &mut GridFunction,
    alpha: f64,
    opts: &ErgodicOptions,
    dissipation: Dissipation,
    floor_theta: f64,
) -> Result<Relaxed> {
    let g = *w.grid();
    let inv_h = 1.0 / g.h();
    let d = g.dim() as f64;
    let sum_c = c.max_row_sum();
    let mut op = vec![0.0; g.len()];
    for it in 0..opts.max_iterations {
        let worst = stationary_operator(ham, c, w, dissipation, &mut op);
        let mean = op.iter().sum::<f64>() / op.len() as f64;
        let mut residual: f64 = 0.0;
        for (r, wv) in op.iter_mut().zip(w.values()) {
            *r += alpha * wv - mean;
            residual = residual.max(r.abs());
        }
        if !residual.is_finite() {
            return Err(Error::Divergence {
                frame: it,
                detail: format!("ergodic iteration at α = {alpha:e}"),
            });
        }
        if residual <= opts.tolerance {
            return Ok(Relaxed {
                lambda: mean,
                residual,
                iterations: it,
            });
        }
        let theta = match dissipation {
            Dissipation::Global(t) => t,
            Dissipation::Local => worst.max(floor_theta),
        };
        let tau = 0.9 / (alpha + d * theta * inv_h + sum_c);
        for (wv, r) in w.values_mut().iter_mut().zip(&op) {
            *wv -= tau * r;
        }
    }
    let mut residual: f64 = 0.0;
    stationary_operator(ham, c, w, dissipation, &mut op);
    let mean = op.iter().sum::<f64>() / op.len() as f64;
    for (r, wv) in op.iter().zip(w.values()) {
        residual = residual.max((r + alpha * wv - mean).abs());
    }
    Err(Error::NoConvergence {
        iterations: opts.max_iterations,
        residual,
    })
}

/// Value at `α = 0` of the interpolating polynomial through `(α_k, λ_k)`.
pub(crate) fn extrapolate_to_zero(points: &[(f64, f64)]) -> f64 {
    let mut total = 0.0;
    for (k, &(ak, lk)) in points.iter().enumerate() {
        let mut weight = 1.0;
        for (j, &(aj, _)) in points.iter().enumerate() {
            if j != k {
                weight *= aj / (aj - ak);
            }
        }
        total += weight * lk;
    }
    total
}

pub fn solve_ergodic<H: Hamiltonian + ?Sized>(
    ham: &H,
    c: &CouplingMatrix,
    grid: &PeriodicGrid,
    opts: &ErgodicOptions,
) -> Result<ErgodicSolution> {
    if c.components() != grid.components() || ham.components() != grid.components() {
        return Err(Error::DimensionMismatch {
            expected: grid.components(),
            got: c.components(),
        });
    }
    if ham.dim() != grid.dim() {
        return Err(Error::DimensionMismatch {
            expected: grid.dim(),
            got: ham.dim(),
        });
    }
    if opts.alphas.is_empty() || opts.alphas.iter().any(|a| !(*a > 0.0)) {
        return Err(Error::InvalidParameter("discount rates must be positive".into()));
    }
    let mut w = GridFunction::zeros(*grid);
    // Floor for the local dissipation used in the step size, so the first
    // steps from flat data are not oversized.
    let floor_theta = theta_for(ham, &w);
    let dissipation = opts
        .dissipation
        .unwrap_or_else(|| Dissipation::default_for(grid.dim(), floor_theta));
    let mut discounted = Vec::with_capacity(opts.alphas.len());
    let mut iterations = 0;
    for &alpha in &opts.alphas {
        let r = relax(ham, c, &mut w, alpha, opts, dissipation, floor_theta)?;
        iterations += r.iterations;
        discounted.push((alpha, r.lambda));
    }
    let lambda = extrapolate_to_zero(&discounted);
    let polished = relax(ham, c, &mut w, 0.0, opts, dissipation, floor_theta)?;
    iterations += polished.iterations;
    let mean = w.mean();
    w.add_constant(-mean);
    let disagreement = (lambda - polished.lambda).abs();
    Ok(ErgodicSolution {
        lambda,
        v: w,
        residual: polished.residual,
        discounted,
        lambda_long_time: polished.lambda,
        disagreement,
        flagged: disagreement > 10.0 * opts.tolerance,
        iterations,
        tolerance: opts.tolerance,
    })
}

/// The same problem with `H` replaced by `H - λ`.
pub fn normalize_spec(spec: &HamiltonianSpec, lambda: f64) -> HamiltonianSpec {
    spec.clone().with_shift(spec.shift - lambda)
}
