//! Sampled checks of the standing structural assumptions:
//!
//! * (A1) `p ↦ H(x, p, i)` is convex,
//! * (A2) `H(x, p, i) / |p|` and `H² / (2d) + D_xH · p` grow without bound,
//! * (A3) `|D_xH(x, p, i)| ≤ C (1 + |p|²)`,
//! * (A4) the switching rates are symmetric.
//!
//! (A1) to (A3) quantify over all of `ℝ^d`; they are sampled on the box
//! `|p| ≤ p_max`, which the report records.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::coupling::CouplingMatrix;
use crate::hamiltonian::Hamiltonian;

pub const DEFAULT_P_MAX: f64 = 10.0;
pub const MIN_SAMPLE_BUDGET: usize = 100;
const CONVEXITY_TOL: f64 = -1e-10;
const RAY_POINTS: usize = 16;

#[derive(Clone, Debug, Serialize)]
pub struct AssumptionCheck {
    pub name: &'static str,
    pub passed: bool,
    /// Worst sampled value of the quantity the check is based on.
    pub margin: f64,
    pub detail: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct AssumptionReport {
    pub convexity: AssumptionCheck,
    pub coercivity: AssumptionCheck,
    pub growth: AssumptionCheck,
    pub symmetry: AssumptionCheck,
    pub p_max: f64,
    pub samples_used: usize,
}

impl AssumptionReport {
    pub fn all_passed(&self) -> bool {
        self.checks().iter().all(|c| c.passed)
    }

    pub fn checks(&self) -> [&AssumptionCheck; 4] {
        [&self.convexity, &self.coercivity, &self.growth, &self.symmetry]
    }
}

/// Samples `(x, p, i)` from a fixed seed so reports are reproducible.
/// Budgets below [`MIN_SAMPLE_BUDGET`] are raised to it.
pub fn check_assumptions<H: Hamiltonian + ?Sized>(
    ham: &H,
    c: &CouplingMatrix,
    sample_budget: usize,
    p_max: f64,
) -> AssumptionReport {
    let budget = sample_budget.max(MIN_SAMPLE_BUDGET);
    let d = ham.dim();
    let m = ham.components();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut used = 0;

    // (A1) and (A3) share point samples.
    let point_budget = budget / 2;
    let mut min_eig = f64::INFINITY;
    let mut growth_c: f64 = 0.0;
    let mut hess = vec![0.0; d * d];
    let mut gx = vec![0.0; d];
    for s in 0..point_budget {
        let x: Vec<f64> = (0..d).map(|_| rng.gen()).collect();
        let p: Vec<f64> = (0..d).map(|_| rng.gen_range(-p_max..p_max)).collect();
        let i = s % m;
        ham.hessian_p(&x, &p, i, &mut hess);
        let sym = DMatrix::from_fn(d, d, |r, c| 0.5 * (hess[r * d + c] + hess[c * d + r]));
        let eig = SymmetricEigen::new(sym).eigenvalues.min();
        min_eig = min_eig.min(eig);
        ham.grad_x(&x, &p, i, &mut gx);
        let p2: f64 = p.iter().map(|v| v * v).sum();
        let gnorm = gx.iter().map(|v| v * v).sum::<f64>().sqrt();
        growth_c = growth_c.max(gnorm / (1.0 + p2));
        used += 1;
    }

    // (A2) along rays: both quantities must be increasing on the outer half
    // of each ray, where the limit behaviour should already show.
    let rays = ((budget - point_budget) / RAY_POINTS).max(1);
    let mut worst_ratio = f64::INFINITY;
    let mut monotone = true;
    let mut failure = String::new();
    for s in 0..rays {
        let x: Vec<f64> = (0..d).map(|_| rng.gen()).collect();
        let mut e: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let norm = e.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
        e.iter_mut().for_each(|v| *v /= norm);
        let i = s % m;
        let mut prev: Option<(f64, f64)> = None;
        for k in 0..RAY_POINTS {
            let r = p_max * (0.5 + 0.5 * k as f64 / (RAY_POINTS - 1) as f64);
            let p: Vec<f64> = e.iter().map(|v| r * v).collect();
            let hv = ham.value(&x, &p, i);
            ham.grad_x(&x, &p, i, &mut gx);
            let ratio = hv / r;
            let second = hv * hv / (2.0 * d as f64)
                + gx.iter().zip(&p).map(|(a, b)| a * b).sum::<f64>();
            if let Some((pr, ps)) = prev {
                if (ratio <= pr || second <= ps) && monotone {
                    monotone = false;
                    failure = format!(
                        "not increasing at |p| = {r:.3} along {e:?}, component {}",
                        i + 1
                    );
                }
            }
            prev = Some((ratio, second));
            used += 1;
        }
        worst_ratio = worst_ratio.min(prev.map(|p| p.0).unwrap_or(f64::INFINITY));
    }

    let asym = c.max_asymmetry();
    let symmetric = asym == 0.0 && c.components() == m;

    AssumptionReport {
        convexity: AssumptionCheck {
            name: "A1",
            passed: min_eig >= CONVEXITY_TOL,
            margin: min_eig,
            detail: format!("minimum sampled eigenvalue of D²_pH over {point_budget} points"),
        },
        coercivity: AssumptionCheck {
            name: "A2",
            passed: monotone && worst_ratio > 0.0,
            margin: worst_ratio,
            detail: if monotone {
                format!("smallest H/|p| at |p| = {p_max} over {rays} rays")
            } else {
                failure
            },
        },
        growth: AssumptionCheck {
            name: "A3",
            passed: growth_c.is_finite(),
            margin: growth_c,
            detail: "fitted C in |D_xH| <= C (1 + |p|^2)".into(),
        },
        symmetry: AssumptionCheck {
            name: "A4",
            passed: symmetric,
            margin: asym,
            detail: if c.components() != m {
                format!("coupling has {} components, Hamiltonian has {m}", c.components())
            } else {
                "largest |c_ij - c_ji|".into()
            },
        },
        p_max,
        samples_used: used,
    }
}
