//! Explicit solutions and measures for `H = |p|²/2 - f(x)` with the same `f`
//! in every component.

use crate::error::{Error, Result};
use crate::grid::{GridFunction, PeriodicGrid};
use crate::mather::{AtomKey, DiscreteMeasure, VelocityGrid};
use crate::potential::Potential;

/// Largest potential value accepted at an anchor or at the example's point.
pub const ZERO_SET_TOLERANCE: f64 = 1e-10;

/// Samples `f` at the nodes, checking that all components carry the same
/// values.
fn common_samples(potential: &Potential, grid: &PeriodicGrid) -> Result<Vec<f64>> {
    if potential.dim() != grid.dim() {
        return Err(Error::DimensionMismatch {
            expected: grid.dim(),
            got: potential.dim(),
        });
    }
    let d = grid.dim();
    let mut out = Vec::with_capacity(grid.nodes());
    for node in 0..grid.nodes() {
        let x = grid.coords(node);
        let f0 = potential.value(&x[..d], 0);
        for i in 1..potential.components() {
            let fi = potential.value(&x[..d], i);
            if (fi - f0).abs() > 1e-12 * (1.0 + f0.abs()) {
                return Err(Error::Precondition(format!(
                    "components 1 and {} of the potential differ at x = {:?}",
                    i + 1,
                    &x[..d]
                )));
            }
        }
        out.push(f0);
    }
    Ok(out)
}

/// `w(x) = min_a (value_a + d_f(x, a))` on every component, where `d_f` is
/// the shorter of the two arcs' `∫ √(2f)` by the composite trapezoid rule.
pub fn eikonal_solutions_with_values(
    potential: &Potential,
    anchors: &[(usize, f64)],
    grid: &PeriodicGrid,
) -> Result<GridFunction> {
    if grid.dim() != 1 {
        return Err(Error::UnsupportedDimension(grid.dim()));
    }
    if anchors.is_empty() {
        return Err(Error::Precondition("no anchors given".into()));
    }
    if potential.components() != grid.components() {
        return Err(Error::DimensionMismatch {
            expected: grid.components(),
            got: potential.components(),
        });
    }
    let f = common_samples(potential, grid)?;
    let n = grid.nodes();
    for &(a, _) in anchors {
        if a >= n {
            return Err(Error::InvalidParameter(format!("anchor node {a} outside the grid")));
        }
        if f[a] > ZERO_SET_TOLERANCE {
            return Err(Error::Precondition(format!(
                "anchor x = {} has f = {:e}, not in the zero set",
                grid.coords(a)[0],
                f[a]
            )));
        }
    }
    let h = grid.h();
    let speed: Vec<f64> = f.iter().map(|v| (2.0 * v.max(0.0)).sqrt()).collect();
    // cumulative[k] = ∫_0^{x_k} √(2f); the last entry closes the loop.
    let mut cumulative = vec![0.0; n + 1];
    for k in 0..n {
        cumulative[k + 1] = cumulative[k] + 0.5 * h * (speed[k] + speed[(k + 1) % n]);
    }
    let total = cumulative[n];
    let w = GridFunction::from_fn(*grid, |_, _| 0.0);
    let mut vals = w.into_values();
    let m = grid.components();
    for k in 0..n {
        let best = anchors
            .iter()
            .map(|&(a, value)| {
                let arc = (cumulative[k] - cumulative[a]).abs();
                value + arc.min(total - arc)
            })
            .fold(f64::INFINITY, f64::min);
        vals[k * m..(k + 1) * m].fill(best);
    }
    GridFunction::from_values(*grid, vals)
}

/// [`eikonal_solutions_with_values`] with every anchor at value zero.
pub fn eikonal_solutions(
    potential: &Potential,
    anchors: &[usize],
    grid: &PeriodicGrid,
) -> Result<GridFunction> {
    let pairs: Vec<(usize, f64)> = anchors.iter().map(|&a| (a, 0.0)).collect();
    eikonal_solutions_with_values(potential, &pairs, grid)
}

/// `(1/m) Σ_i δ_(x0, 0, i)`; `x0` must be a common zero of `f`.
pub fn example_measure(
    potential: &Potential,
    grid: &PeriodicGrid,
    vgrid: &VelocityGrid,
    x0_node: usize,
) -> Result<DiscreteMeasure> {
    if x0_node >= grid.nodes() {
        return Err(Error::InvalidParameter(format!("node {x0_node} outside the grid")));
    }
    let x = grid.coords(x0_node);
    let d = grid.dim();
    let m = grid.components();
    for i in 0..m {
        let fi = potential.value(&x[..d], i);
        if fi > ZERO_SET_TOLERANCE {
            return Err(Error::Precondition(format!(
                "f(x0, {}) = {fi:e} > 0; x0 must lie in the common zero set",
                i + 1
            )));
        }
    }
    let q = vgrid.zero_node();
    let w = 1.0 / m as f64;
    DiscreteMeasure::new(*grid, *vgrid, (0..m).map(|i| (AtomKey { x: x0_node, q, i }, w)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::{ScalarField, TrigPolynomial};

    fn double_well(m: usize) -> Potential {
        Potential::uniform(1, m, ScalarField::Trig(TrigPolynomial::sin_squared(1, 2))).unwrap()
    }

    #[test]
    fn anchored_at_zero() {
        // ∫_0^{1/2} √2 |sin 2πx| dx = √2/π.
        let g = PeriodicGrid::new(1, 64, 2).unwrap();
        let w = eikonal_solutions(&double_well(2), &[0], &g).unwrap();
        assert_eq!(w.get(0, 0), 0.0);
        let oracle = std::f64::consts::SQRT_2 / std::f64::consts::PI;
        assert!((w.get(32, 1) - oracle).abs() <= 2.0 * g.h());
        assert_eq!(w.get(17, 0), w.get(17, 1));
    }

    #[test]
    fn more_anchors_is_the_pointwise_min() {
        let g = PeriodicGrid::new(1, 64, 2).unwrap();
        let f = double_well(2);
        let w0 = eikonal_solutions(&f, &[0], &g).unwrap();
        let w1 = eikonal_solutions(&f, &[32], &g).unwrap();
        let both = eikonal_solutions(&f, &[0, 32], &g).unwrap();
        for k in 0..g.len() {
            assert_eq!(both.values()[k], w0.values()[k].min(w1.values()[k]));
        }
    }

    #[test]
    fn zero_potential_gives_zero() {
        let g = PeriodicGrid::new(1, 16, 3).unwrap();
        let w = eikonal_solutions(&Potential::zero(1, 3), &[5], &g).unwrap();
        assert_eq!(w.max_abs(), 0.0);
    }

    #[test]
    fn preconditions() {
        let g = PeriodicGrid::new(1, 64, 2).unwrap();
        let v = VelocityGrid::new(1, 3.0, 17).unwrap();
        assert!(matches!(eikonal_solutions(&double_well(2), &[8], &g), Err(Error::Precondition(_))));
        assert!(matches!(example_measure(&double_well(2), &g, &v, 8), Err(Error::Precondition(_))));
        let mixed = Potential::new(
            1,
            vec![
                ScalarField::Trig(TrigPolynomial::sin_squared(1, 2)),
                ScalarField::Trig(TrigPolynomial::sin_squared(1, 1)),
            ],
        )
        .unwrap();
        assert!(eikonal_solutions(&mixed, &[0], &g).is_err());
        let single = PeriodicGrid::new(1, 64, 1).unwrap();
        let mu = example_measure(&double_well(1), &single, &v, 32).unwrap();
        assert_eq!(mu.support_size(), 1);
    }
}
