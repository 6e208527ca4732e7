//! Backward adjoint of the linearized viscous evolution.
//!
//! Around a solution `u2`, the evolution of differences `w = u1 - u2` is
//! driven by
//!
//! ```text
//! M^n w = B·D^up w + Θw - ε⁴ Δ_h w,   B = D_pH(x, D_h u2(·, t_n, ·), i),
//! ```
//!
//! with `D_h` central and `D^up` the upwind difference selected by the sign
//! of `B`. One forward step is `A_n = I - (dt/ε) M^n`; the density is marched
//! backward with the exact transpose, `σ^n = A_nᵀ σ^{n+1}`, so that
//! `Σ w^n σ^n h^d` is invariant when `w^{n+1} = A_n w^n`.

use log::debug;
use serde::Serialize;

use super::TimeSlab;
use crate::coupling::CouplingMatrix;
use crate::error::{Error, Result};
use crate::grid::{GridFunction, PeriodicGrid, MAX_DIM};
use crate::hamiltonian::Hamiltonian;

/// Largest tolerated mass error of a density frame.
pub const MASS_TOLERANCE: f64 = 1e-10;
/// Negative values down to this size are clipped; below it the solve fails.
pub const CLIP_TOLERANCE: f64 = 1e-12;

/// Drift `B(x, i) = D_pH(x, D_h u(x, i), i)` frozen at one time level.
#[derive(Clone, Debug)]
pub struct Drift {
    grid: PeriodicGrid,
    /// `b[(node * m + i) * d + k]`
    b: Vec<f64>,
}

impl Drift {
    pub fn from_frame<H: Hamiltonian + ?Sized>(ham: &H, u: &GridFunction) -> Self {
        let g = *u.grid();
        let d = g.dim();
        let m = g.components();
        let mut b = vec![0.0; g.len() * d];
        let mut p = [0.0; MAX_DIM];
        for node in 0..g.nodes() {
            let x = g.coords(node);
            for i in 0..m {
                u.central_into(node, i, &mut p);
                let at = (node * m + i) * d;
                ham.grad_p(&x[..d], &p[..d], i, &mut b[at..at + d]);
            }
        }
        Self { grid: g, b }
    }

    #[inline]
    pub fn at(&self, node: usize, i: usize) -> &[f64] {
        let d = self.grid.dim();
        let at = (node * self.grid.components() + i) * d;
        &self.b[at..at + d]
    }

    pub fn max_speed(&self) -> f64 {
        self.b.iter().fold(0.0, |a, v| a.max(v.abs()))
    }

    /// `M w` at every entry.
    pub fn apply(&self, c: &CouplingMatrix, e4: f64, w: &GridFunction, out: &mut [f64]) {
        let g = self.grid;
        let d = g.dim();
        let m = g.components();
        let inv_h = 1.0 / g.h();
        let mut coupling = vec![0.0; m];
        for node in 0..g.nodes() {
            c.apply_at(w.at(node), &mut coupling);
            for i in 0..m {
                let here = w.get(node, i);
                let mut acc = coupling[i] - e4 * w.laplacian_at(node, i);
                for (k, &bk) in self.at(node, i).iter().enumerate().take(d) {
                    if bk > 0.0 {
                        acc += bk * (here - w.get(g.offset(node, k, -1), i)) * inv_h;
                    } else {
                        acc += bk * (w.get(g.offset(node, k, 1), i) - here) * inv_h;
                    }
                }
                out[node * m + i] = acc;
            }
        }
    }

    /// `Mᵀ σ` at every entry.
    pub fn apply_transpose(
        &self,
        c: &CouplingMatrix,
        e4: f64,
        sigma: &GridFunction,
        out: &mut [f64],
    ) {
        let g = self.grid;
        let d = g.dim();
        let m = g.components();
        let inv_h = 1.0 / g.h();
        let mut coupling = vec![0.0; m];
        for node in 0..g.nodes() {
            c.apply_transpose_at(sigma.at(node), &mut coupling);
            for i in 0..m {
                let here = sigma.get(node, i);
                let mut acc = coupling[i] - e4 * sigma.laplacian_at(node, i);
                for k in 0..d {
                    let fwd = g.offset(node, k, 1);
                    let back = g.offset(node, k, -1);
                    let a_here = self.at(node, i)[k].max(0.0);
                    let b_here = self.at(node, i)[k].min(0.0);
                    let a_fwd = self.at(fwd, i)[k].max(0.0);
                    let b_back = self.at(back, i)[k].min(0.0);
                    acc += (a_here * here - a_fwd * sigma.get(fwd, i)
                        + b_back * sigma.get(back, i)
                        - b_here * here)
                        * inv_h;
                }
                out[node * m + i] = acc;
            }
        }
    }

    /// Largest diagonal weight `Σ_k |B_k|/h + Σ_j c_ij + 2dε⁴/h²` of `M`.
    fn diagonal_bound(&self, c: &CouplingMatrix, e4: f64) -> f64 {
        let g = self.grid;
        let d = g.dim();
        let m = g.components();
        let inv_h = 1.0 / g.h();
        let mut worst: f64 = 0.0;
        for node in 0..g.nodes() {
            for i in 0..m {
                let speed: f64 = self.at(node, i).iter().map(|v| v.abs()).sum();
                let rates: f64 = (0..m).filter(|&j| j != i).map(|j| c.rate(i, j)).sum();
                worst = worst.max(speed * inv_h + rates + 2.0 * d as f64 * e4 * inv_h * inv_h);
            }
        }
        worst
    }
}

/// One forward step of the linearized evolution around `u_frame`:
/// `w - (dt/ε) M w`.
pub fn linearized_step<H: Hamiltonian + ?Sized>(
    ham: &H,
    c: &CouplingMatrix,
    epsilon: f64,
    dt: f64,
    u_frame: &GridFunction,
    w: &GridFunction,
) -> Result<GridFunction> {
    u_frame.check_same_grid(w)?;
    let drift = Drift::from_frame(ham, u_frame);
    let mut mw = vec![0.0; w.values().len()];
    drift.apply(c, epsilon.powi(4), w, &mut mw);
    let ratio = dt / epsilon;
    let vals = w.values().iter().zip(&mw).map(|(a, b)| a - ratio * b).collect();
    GridFunction::from_values(*w.grid(), vals)
}

#[derive(Clone, Debug)]
pub struct AdjointDensity {
    pub slab: TimeSlab,
    pub source_node: usize,
    pub component: usize,
    pub epsilon: f64,
    /// Smallest value met before clipping.
    pub min_before_clip: f64,
    /// Total mass removed by clipping, over all frames.
    pub clipped: f64,
    /// Largest `|h^d Σ σ - 1|` over frames.
    pub max_mass_error: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct AdjointSummary {
    pub source_node: usize,
    pub component: usize,
    pub epsilon: f64,
    pub frames: usize,
    pub min_before_clip: f64,
    pub clipped: f64,
    pub max_mass_error: f64,
}

impl AdjointDensity {
    pub fn summary(&self) -> AdjointSummary {
        AdjointSummary {
            source_node: self.source_node,
            component: self.component + 1,
            epsilon: self.epsilon,
            frames: self.slab.len(),
            min_before_clip: self.min_before_clip,
            clipped: self.clipped,
            max_mass_error: self.max_mass_error,
        }
    }

    /// `h^d Σ σ` of one frame.
    pub fn mass(&self, n: usize) -> f64 {
        self.slab.frame(n).values().iter().sum::<f64>() * self.slab.grid().cell_volume()
    }
}

/// Marches `σ` backward from the grid delta of unit mass at
/// `(x0_node, k)` at `t = 1`, using the time grid of `u2`.
pub fn solve_adjoint<H: Hamiltonian + ?Sized>(
    ham: &H,
    c: &CouplingMatrix,
    epsilon: f64,
    u2: &TimeSlab,
    x0_node: usize,
    k: usize,
) -> Result<AdjointDensity> {
    let g = *u2.grid();
    if x0_node >= g.nodes() {
        return Err(Error::InvalidParameter(format!(
            "source node {x0_node} outside the grid of {} nodes",
            g.nodes()
        )));
    }
    if k >= g.components() {
        return Err(Error::ComponentIndex {
            index: k,
            count: g.components(),
        });
    }
    if u2.len() < 2 {
        return Err(Error::InvalidParameter("slab needs at least two frames".into()));
    }
    let dt = u2.dt();
    let ratio = dt / epsilon;
    let e4 = epsilon.powi(4);
    let vol = g.cell_volume();

    let mut sigma = GridFunction::zeros(g);
    sigma.set(x0_node, k, 1.0 / vol);
    let steps = u2.len() - 1;
    let mut frames = vec![GridFunction::zeros(g); steps + 1];
    frames[steps] = sigma.clone();
    let mut mts = vec![0.0; g.len()];
    let mut min_before_clip: f64 = 0.0;
    let mut clipped = 0.0;
    let mut max_mass_error: f64 = 0.0;
    for n in (0..steps).rev() {
        let drift = Drift::from_frame(ham, u2.frame(n));
        let diag = ratio * drift.diagonal_bound(c, e4);
        if diag > 1.0 {
            return Err(Error::Cfl(format!(
                "adjoint step {n}: dt/ε times the diagonal of M is {diag:.3} > 1"
            )));
        }
        drift.apply_transpose(c, e4, &sigma, &mut mts);
        for (s, t) in sigma.values_mut().iter_mut().zip(&mts) {
            *s -= ratio * t;
        }
        let lowest = sigma.min();
        min_before_clip = min_before_clip.min(lowest);
        if lowest < -CLIP_TOLERANCE {
            return Err(Error::NegativeDensity {
                step: n,
                value: lowest,
            });
        }
        let mass = sigma.values().iter().sum::<f64>() * vol;
        let drift_err = (mass - 1.0).abs();
        if drift_err > MASS_TOLERANCE {
            return Err(Error::MassDrift {
                step: n,
                drift: drift_err,
            });
        }
        max_mass_error = max_mass_error.max(drift_err);
        if lowest < 0.0 {
            let mut removed = 0.0;
            for s in sigma.values_mut() {
                if *s < 0.0 {
                    removed -= *s;
                    *s = 0.0;
                }
            }
            clipped += removed;
            let total = sigma.values().iter().sum::<f64>() * vol;
            sigma.values_mut().iter_mut().for_each(|s| *s /= total);
        }
        frames[n] = sigma.clone();
    }
    if clipped > 0.0 {
        debug!("adjoint clipped a total mass of {clipped:e}");
    }
    Ok(AdjointDensity {
        slab: TimeSlab::new(g, u2.times().to_vec(), frames)?,
        source_node: x0_node,
        component: k,
        epsilon,
        min_before_clip,
        clipped,
        max_mass_error,
    })
}

/// Positive part of the convexity defect of the scheme along two solutions.
#[derive(Clone, Debug, Serialize)]
pub struct ConvexityDefect {
    /// Largest value of `ε(w^{n+1} - w^n)/dt + M^n w^n` over steps and entries.
    pub max: f64,
    /// `(dt/ε) Σ_n max(0, max_x defect_n)`: bounds how much the adjoint
    /// pairing of `w = u1 - u2` can grow from `t = 0` to `t = 1`.
    pub slack: f64,
    #[serde(skip)]
    pub per_step: Vec<f64>,
}

/// Defect of the linearization around `u2` along `w = u1 - u2`,
/// `ε(w^{n+1} - w^n)/dt + M^n w^n`. For a convex `H` it is at most the
/// consistency error of the monotone scheme.
pub fn convexity_defect<H: Hamiltonian + ?Sized>(
    ham: &H,
    c: &CouplingMatrix,
    epsilon: f64,
    u1: &TimeSlab,
    u2: &TimeSlab,
) -> Result<ConvexityDefect> {
    u1.check_compatible(u2)?;
    let dt = u2.dt();
    let e4 = epsilon.powi(4);
    let g = *u2.grid();
    let mut mw = vec![0.0; g.len()];
    let mut per_step = Vec::with_capacity(u2.len().saturating_sub(1));
    let mut max = f64::NEG_INFINITY;
    let mut w_now = u1.frame(0).sub(u2.frame(0))?;
    for n in 0..u2.len().saturating_sub(1) {
        let w_next = u1.frame(n + 1).sub(u2.frame(n + 1))?;
        Drift::from_frame(ham, u2.frame(n)).apply(c, e4, &w_now, &mut mw);
        let mut step_max = f64::NEG_INFINITY;
        for ((a, b), m) in w_next.values().iter().zip(w_now.values()).zip(&mw) {
            step_max = step_max.max(epsilon * (a - b) / dt + m);
        }
        max = max.max(step_max);
        per_step.push(step_max);
        w_now = w_next;
    }
    if per_step.is_empty() {
        max = 0.0;
    }
    let slack = dt / epsilon * per_step.iter().map(|v| v.max(0.0)).sum::<f64>();
    Ok(ConvexityDefect {
        max,
        slack,
        per_step,
    })
}
