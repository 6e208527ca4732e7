//! Explicit pseudo-time integration of
//! `ε u_t + H(x, Du, i) + Θu = ε⁴ Δu` on `t ∈ [0, 1]`.

use serde::Serialize;

use super::{dissipation_bound, stationary_operator, TimeSlab};
use crate::coupling::CouplingMatrix;
use crate::error::{Error, Result};
use crate::grid::{Dissipation, GridFunction};
use crate::hamiltonian::Hamiltonian;

#[derive(Clone, Debug)]
pub struct CauchyOptions {
    /// Fraction of the stability limit actually used.
    pub safety: f64,
    /// Keep every `stride`-th frame (the adjoint needs stride 1).
    pub stride: usize,
    /// `None` picks [`Dissipation::default_for`].
    pub dissipation: Option<Dissipation>,
    /// Global dissipation bound; `None` estimates it from the initial data.
    pub theta: Option<f64>,
}

impl Default for CauchyOptions {
    fn default() -> Self {
        Self {
            safety: 0.5,
            stride: 1,
            dissipation: None,
            theta: None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct CauchyRun {
    pub slab: TimeSlab,
    pub epsilon: f64,
    /// Step actually used, `1 / steps`.
    pub dt: f64,
    pub steps: usize,
    pub theta: f64,
    pub dissipation: Dissipation,
    pub stride: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct StepInfo {
    pub epsilon: f64,
    pub dt: f64,
    pub steps: usize,
    pub theta: f64,
}

impl CauchyRun {
    pub fn info(&self) -> StepInfo {
        StepInfo {
            epsilon: self.epsilon,
            dt: self.dt,
            steps: self.steps,
            theta: self.theta,
        }
    }
}

/// Global dissipation for initial data with one-sided differences bounded by
/// `lipschitz`: `sup |D_pH|` on the box of half-width `1.5 L + 0.5`.
pub(crate) fn theta_for<H: Hamiltonian + ?Sized>(ham: &H, v: &GridFunction) -> f64 {
    let bound = 1.5 * v.lipschitz() + 0.5;
    dissipation_bound(ham, v.grid(), bound).max(1e-12)
}

/// `dt = safety · ε · min(h / (2dθ), h² / (4dε⁴), 1 / (2 max_i Σ_j c_ij))`,
/// rounded down so that an integer number of steps (a multiple of `stride`)
/// reaches `t = 1`.
pub(crate) fn cfl_steps(
    epsilon: f64,
    h: f64,
    d: usize,
    theta: f64,
    coupling: f64,
    safety: f64,
    stride: usize,
) -> (usize, f64) {
    let d = d as f64;
    let mut limit = h / (2.0 * d * theta);
    let e4 = epsilon.powi(4);
    if e4 > 0.0 {
        limit = limit.min(h * h / (4.0 * d * e4));
    }
    if coupling > 0.0 {
        limit = limit.min(1.0 / (2.0 * coupling));
    }
    let dt = safety * epsilon * limit;
    let mut steps = (1.0 / dt).ceil() as usize;
    steps = steps.div_ceil(stride) * stride;
    (steps, 1.0 / steps as f64)
}

/// Forward Euler `u^{n+1} = u^n - (dt/ε)(Ĥ + Θu^n - ε⁴ Δ_h u^n)` from `v_init`.
///
/// The caller is expected to have mollified `v_init` with width `ε⁴`.
pub fn solve_cauchy_regularized<H: Hamiltonian + ?Sized>(
    ham: &H,
    c: &CouplingMatrix,
    epsilon: f64,
    v_init: &GridFunction,
    opts: &CauchyOptions,
) -> Result<CauchyRun> {
    let g = *v_init.grid();
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        return Err(Error::InvalidParameter(format!("ε = {epsilon} must lie in (0, 1]")));
    }
    if c.components() != g.components() || ham.components() != g.components() {
        return Err(Error::DimensionMismatch {
            expected: g.components(),
            got: c.components(),
        });
    }
    if ham.dim() != g.dim() {
        return Err(Error::DimensionMismatch {
            expected: g.dim(),
            got: ham.dim(),
        });
    }
    if opts.stride == 0 || !(opts.safety > 0.0 && opts.safety <= 1.0) {
        return Err(Error::InvalidParameter(
            "stride must be positive and safety in (0, 1]".into(),
        ));
    }
    let theta = opts.theta.unwrap_or_else(|| theta_for(ham, v_init));
    let dissipation = opts
        .dissipation
        .unwrap_or_else(|| Dissipation::default_for(g.dim(), theta));
    let h = g.h();
    let d = g.dim();
    let e4 = epsilon.powi(4);
    let sum_c = c.max_row_sum();
    let (steps, dt) = cfl_steps(epsilon, h, d, theta, sum_c, opts.safety, opts.stride);
    let ratio = dt / epsilon;
    let diffusion_bound = 2.0 * d as f64 * e4 / (h * h);

    let mut u = v_init.clone();
    let mut op = vec![0.0; g.len()];
    let mut times = vec![0.0];
    let mut frames = vec![u.clone()];
    for n in 0..steps {
        let worst = stationary_operator(ham, c, &u, dissipation, &mut op);
        let scheme_theta = match dissipation {
            Dissipation::Global(t) => t,
            Dissipation::Local => worst,
        };
        let stability = ratio * (d as f64 * scheme_theta / h + sum_c + diffusion_bound);
        if stability > 1.0 {
            return Err(Error::Cfl(format!(
                "step {n}: dt/ε · (dθ/h + Σc + 2dε⁴/h²) = {stability:.3} > 1 with local θ = {worst:.3} \
                 against the bound θ = {theta:.3}"
            )));
        }
        let mut next = u.clone();
        {
            let vals = next.values_mut();
            let m = g.components();
            for node in 0..g.nodes() {
                for i in 0..m {
                    let lap = u.laplacian_at(node, i);
                    vals[node * m + i] -= ratio * (op[node * m + i] - e4 * lap);
                }
            }
        }
        if let Some(k) = next.values().iter().position(|v| !v.is_finite()) {
            return Err(Error::Divergence {
                frame: n + 1,
                detail: format!("non-finite value at entry {k}"),
            });
        }
        u = next;
        if (n + 1) % opts.stride == 0 {
            times.push((n + 1) as f64 * dt);
            frames.push(u.clone());
        }
    }
    let slab = TimeSlab::new(g, times, frames)?;
    Ok(CauchyRun {
        slab,
        epsilon,
        dt,
        steps,
        theta,
        dissipation,
        stride: opts.stride,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::PeriodicGrid;
    use crate::hamiltonian::HamiltonianSpec;
    use crate::potential::Potential;

    #[test]
    fn zero_data_is_a_fixed_point() {
        let g = PeriodicGrid::new(1, 32, 2).unwrap();
        let spec = HamiltonianSpec::quadratic(Potential::zero(1, 2));
        let c = CouplingMatrix::uniform(2, 1.0).unwrap();
        for kappa in [0.0, 2.5] {
            let run = solve_cauchy_regularized(
                &spec,
                &c,
                0.2,
                &GridFunction::constant(g, kappa),
                &CauchyOptions::default(),
            )
            .unwrap();
            assert_eq!(run.slab.max_deviation(&GridFunction::constant(g, kappa)).unwrap(), 0.0);
            assert_eq!(*run.slab.times().last().unwrap(), 1.0);
            assert!((run.dt * run.steps as f64 - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn step_respects_bound() {
        let (steps, dt) = cfl_steps(0.1, 1.0 / 64.0, 1, 2.0, 1.0, 0.5, 1);
        let limit = 0.5 * 0.1 * (1.0 / 64.0 / 4.0);
        assert!(dt <= limit);
        assert_eq!(steps, (1.0 / limit).ceil() as usize);
        let (steps, _) = cfl_steps(0.1, 1.0 / 64.0, 1, 2.0, 1.0, 0.5, 7);
        assert_eq!(steps % 7, 0);
    }

    #[test]
    fn stride_keeps_endpoints() {
        let g = PeriodicGrid::new(1, 16, 1).unwrap();
        let spec = HamiltonianSpec::quadratic(Potential::zero(1, 1));
        let c = CouplingMatrix::uniform(1, 0.0).unwrap();
        let v = GridFunction::from_fn(g, |x, _| (2.0 * std::f64::consts::PI * x[0]).sin());
        let opts = CauchyOptions {
            stride: 5,
            ..Default::default()
        };
        let run = solve_cauchy_regularized(&spec, &c, 0.5, &v, &opts).unwrap();
        assert_eq!(run.slab.len(), run.steps / 5 + 1);
        assert_eq!(*run.slab.times().last().unwrap(), 1.0);
        assert!((run.slab.dt() - 5.0 * run.dt).abs() < 1e-14);
    }

    #[test]
    fn rejects_bad_epsilon() {
        let g = PeriodicGrid::new(1, 16, 1).unwrap();
        let spec = HamiltonianSpec::quadratic(Potential::zero(1, 1));
        let c = CouplingMatrix::uniform(1, 0.0).unwrap();
        let v = GridFunction::zeros(g);
        for eps in [0.0, -0.1, 1.5] {
            assert!(solve_cauchy_regularized(&spec, &c, eps, &v, &CauchyOptions::default()).is_err());
        }
    }
}
