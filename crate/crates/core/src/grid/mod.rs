//! Periodic grids on the torus and finite-difference calculus on them.
//!
//! Nodes are numbered with the first coordinate slowest, so in 2D node
//! `k0 * N + k1` sits at `(k0 h, k1 h)`. Grid function values are stored
//! node-major: `values[node * m + i]`.

mod mollify;
mod scheme;

pub use mollify::mollify;
pub use scheme::{local_dissipation, numerical_hamiltonian, scheme_hamiltonian, Dissipation};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest supported spatial dimension.
pub const MAX_DIM: usize = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PeriodicGrid {
    dim: usize,
    n: usize,
    m: usize,
}

impl PeriodicGrid {
    pub fn new(dim: usize, n: usize, m: usize) -> Result<Self> {
        if !(1..=MAX_DIM).contains(&dim) {
            return Err(Error::UnsupportedDimension(dim));
        }
        if n < 8 {
            return Err(Error::InvalidParameter(format!(
                "grid needs at least 8 nodes per dimension, got {n}"
            )));
        }
        if m == 0 {
            return Err(Error::InvalidParameter("component count must be positive".into()));
        }
        Ok(Self { dim, n, m })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Nodes per dimension.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn components(&self) -> usize {
        self.m
    }

    pub fn h(&self) -> f64 {
        1.0 / self.n as f64
    }

    /// `h^d`, the quadrature weight of one node.
    pub fn cell_volume(&self) -> f64 {
        self.h().powi(self.dim as i32)
    }

    pub fn nodes(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    /// Number of (node, component) entries.
    pub fn len(&self) -> usize {
        self.nodes() * self.m
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Same nodes, different component count.
    pub fn with_components(&self, m: usize) -> Result<Self> {
        Self::new(self.dim, self.n, m)
    }

    fn stride(&self, axis: usize) -> usize {
        if self.dim == 2 && axis == 0 {
            self.n
        } else {
            1
        }
    }

    pub fn multi_index(&self, node: usize) -> [usize; MAX_DIM] {
        if self.dim == 1 {
            [node, 0]
        } else {
            [node / self.n, node % self.n]
        }
    }

    pub fn node_at(&self, idx: &[usize]) -> usize {
        idx.iter().fold(0, |acc, &k| acc * self.n + k % self.n)
    }

    /// Coordinates of a node; only the first `dim` entries are meaningful.
    pub fn coords(&self, node: usize) -> [f64; MAX_DIM] {
        let idx = self.multi_index(node);
        let h = self.h();
        [idx[0] as f64 * h, idx[1] as f64 * h]
    }

    /// Node reached by moving `delta` cells along `axis`, wrapping.
    #[inline]
    pub fn offset(&self, node: usize, axis: usize, delta: isize) -> usize {
        let stride = self.stride(axis);
        let n = self.n as isize;
        let k = ((node / stride) % self.n) as isize;
        let shifted = (k + delta).rem_euclid(n) as usize;
        node - (k as usize) * stride + shifted * stride
    }

    /// Node nearest to a point of the torus.
    pub fn nearest_node(&self, x: &[f64]) -> usize {
        let idx: Vec<usize> = x
            .iter()
            .map(|c| ((c.rem_euclid(1.0) * self.n as f64).round() as usize) % self.n)
            .collect();
        self.node_at(&idx)
    }

    /// Periodic distance between two nodes (max over axes of the wrapped gap).
    pub fn torus_distance(&self, a: usize, b: usize) -> f64 {
        let ia = self.multi_index(a);
        let ib = self.multi_index(b);
        (0..self.dim)
            .map(|k| {
                let gap = ia[k].abs_diff(ib[k]);
                gap.min(self.n - gap) as f64 * self.h()
            })
            .fold(0.0, f64::max)
    }

    /// Periodic distance from a node to a point.
    pub fn distance_to_point(&self, node: usize, x: &[f64]) -> f64 {
        let c = self.coords(node);
        (0..self.dim)
            .map(|k| {
                let gap = (c[k] - x[k]).rem_euclid(1.0);
                gap.min(1.0 - gap)
            })
            .fold(0.0, f64::max)
    }
}

/// Values on (node, component) pairs, stored node-major.
#[derive(Clone, Debug, PartialEq)]
pub struct GridFunction {
    grid: PeriodicGrid,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn zeros(grid: PeriodicGrid) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: PeriodicGrid, value: f64) -> Self {
        Self {
            grid,
            values: vec![value; grid.len()],
        }
    }

    pub fn from_values(grid: PeriodicGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::DimensionMismatch {
                expected: grid.len(),
                got: values.len(),
            });
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "grid value at node {}, component {}",
                k / grid.m,
                k % grid.m
            )));
        }
        Ok(Self { grid, values })
    }

    /// Samples `f(x, i)` at every node.
    pub fn from_fn<F: Fn(&[f64], usize) -> f64>(grid: PeriodicGrid, f: F) -> Self {
        let mut values = Vec::with_capacity(grid.len());
        for node in 0..grid.nodes() {
            let x = grid.coords(node);
            for i in 0..grid.m {
                values.push(f(&x[..grid.dim], i));
            }
        }
        Self { grid, values }
    }

    pub fn grid(&self) -> &PeriodicGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn get(&self, node: usize, i: usize) -> f64 {
        self.values[node * self.grid.m + i]
    }

    #[inline]
    pub fn set(&mut self, node: usize, i: usize, v: f64) {
        self.values[node * self.grid.m + i] = v;
    }

    /// The `m` component values at one node.
    pub fn at(&self, node: usize) -> &[f64] {
        let m = self.grid.m;
        &self.values[node * m..(node + 1) * m]
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |a, v| a.max(v.abs()))
    }

    pub fn check_same_grid(&self, other: &GridFunction) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch(format!(
                "{:?} vs {:?}",
                self.grid, other.grid
            )));
        }
        Ok(())
    }

    pub fn max_abs_diff(&self, other: &GridFunction) -> Result<f64> {
        self.check_same_grid(other)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .fold(0.0, |a, (x, y)| a.max((x - y).abs())))
    }

    /// `self - other`.
    pub fn sub(&self, other: &GridFunction) -> Result<GridFunction> {
        self.check_same_grid(other)?;
        Ok(GridFunction {
            grid: self.grid,
            values: self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect(),
        })
    }

    pub fn add_constant(&mut self, c: f64) {
        self.values.iter_mut().for_each(|v| *v += c);
    }

    /// Backward and forward differences at `(node, i)` written into `pm`, `pp`.
    #[inline]
    pub fn one_sided_into(&self, node: usize, i: usize, pm: &mut [f64], pp: &mut [f64]) {
        let g = &self.grid;
        let inv_h = g.n as f64;
        let here = self.get(node, i);
        for k in 0..g.dim {
            let back = self.get(g.offset(node, k, -1), i);
            let fwd = self.get(g.offset(node, k, 1), i);
            pm[k] = (here - back) * inv_h;
            pp[k] = (fwd - here) * inv_h;
        }
    }

    /// Central difference gradient at `(node, i)`.
    #[inline]
    pub fn central_into(&self, node: usize, i: usize, out: &mut [f64]) {
        let g = &self.grid;
        let half_inv_h = 0.5 * g.n as f64;
        for k in 0..g.dim {
            let back = self.get(g.offset(node, k, -1), i);
            let fwd = self.get(g.offset(node, k, 1), i);
            out[k] = (fwd - back) * half_inv_h;
        }
    }

    /// `(2d+1)`-point Laplacian at `(node, i)`.
    #[inline]
    pub fn laplacian_at(&self, node: usize, i: usize) -> f64 {
        let g = &self.grid;
        let inv_h2 = (g.n * g.n) as f64;
        let here = self.get(node, i);
        let mut acc = 0.0;
        for k in 0..g.dim {
            acc += self.get(g.offset(node, k, -1), i) - 2.0 * here
                + self.get(g.offset(node, k, 1), i);
        }
        acc * inv_h2
    }

    /// Largest one-sided difference in absolute value, over all nodes,
    /// components and axes.
    pub fn lipschitz(&self) -> f64 {
        let g = &self.grid;
        let mut worst: f64 = 0.0;
        let mut pm = [0.0; MAX_DIM];
        let mut pp = [0.0; MAX_DIM];
        for node in 0..g.nodes() {
            for i in 0..g.m {
                self.one_sided_into(node, i, &mut pm, &mut pp);
                for k in 0..g.dim {
                    worst = worst.max(pm[k].abs()).max(pp[k].abs());
                }
            }
        }
        worst
    }
}

/// `(p⁻, p⁺)` at one node and component.
pub fn one_sided_differences(phi: &GridFunction, node: usize, i: usize) -> (Vec<f64>, Vec<f64>) {
    let d = phi.grid.dim;
    let mut pm = vec![0.0; d];
    let mut pp = vec![0.0; d];
    phi.one_sided_into(node, i, &mut pm, &mut pp);
    (pm, pp)
}

/// Periodic `(2d+1)`-point Laplacian of every component.
pub fn discrete_laplacian(phi: &GridFunction) -> GridFunction {
    let g = phi.grid;
    let mut out = GridFunction::zeros(g);
    for node in 0..g.nodes() {
        for i in 0..g.m {
            out.set(node, i, phi.laplacian_at(node, i));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    #[test]
    fn make_grid() {
        let g = PeriodicGrid::new(1, 64, 2).unwrap();
        assert_eq!(g.nodes(), 64);
        assert_eq!(g.h(), 0.015625);
        let g = PeriodicGrid::new(2, 32, 3).unwrap();
        assert_eq!(g.nodes(), 1024);
        assert_eq!(g.len(), 3072);
        assert!(matches!(
            PeriodicGrid::new(3, 16, 1),
            Err(Error::UnsupportedDimension(3))
        ));
        assert!(PeriodicGrid::new(1, 4, 1).is_err());
        assert!(PeriodicGrid::new(1, 16, 0).is_err());
    }

    #[test]
    fn offsets_wrap() {
        let g = PeriodicGrid::new(2, 8, 1).unwrap();
        let node = g.node_at(&[0, 7]);
        assert_eq!(g.multi_index(g.offset(node, 1, 1)), [0, 0]);
        assert_eq!(g.multi_index(g.offset(node, 0, -1)), [7, 7]);
        assert_eq!(g.coords(g.node_at(&[2, 4])), [0.25, 0.5]);
        assert_eq!(g.nearest_node(&[0.99, -0.26]), g.node_at(&[0, 6]));
    }

    #[test]
    fn one_sided_small_example() {
        // N = 4 is below the grid minimum, so build the same pattern on N = 8.
        let g = PeriodicGrid::new(1, 8, 1).unwrap();
        let phi = GridFunction::from_values(
            g,
            (0..8).map(|k| (k % 2) as f64).collect(),
        )
        .unwrap();
        let (pm, pp) = one_sided_differences(&phi, 0, 0);
        assert_eq!(pm, vec![-8.0]);
        assert_eq!(pp, vec![8.0]);

        let c = GridFunction::constant(g, 3.5);
        let (pm, pp) = one_sided_differences(&c, 5, 0);
        assert_eq!((pm, pp), (vec![0.0], vec![0.0]));
    }

    #[test]
    fn one_sided_sine() {
        let g = PeriodicGrid::new(1, 64, 1).unwrap();
        let phi = GridFunction::from_fn(g, |x, _| (2.0 * PI * x[0]).sin());
        let (pm, pp) = one_sided_differences(&phi, 0, 0);
        assert!((pm[0] - 2.0 * PI).abs() < 0.02);
        assert!((pp[0] - 2.0 * PI).abs() < 0.02);
    }

    #[test]
    fn laplacian_stencil() {
        let g = PeriodicGrid::new(1, 8, 1).unwrap();
        let mut phi = GridFunction::zeros(g);
        phi.set(0, 0, 1.0);
        let lap = discrete_laplacian(&phi);
        assert_eq!(lap.get(0, 0), -128.0);
        assert_eq!(lap.get(1, 0), 64.0);
        assert_eq!(lap.get(7, 0), 64.0);
        assert_eq!(lap.get(3, 0), 0.0);
        let flat = discrete_laplacian(&GridFunction::constant(g, 2.0));
        assert!(flat.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn laplacian_sine() {
        let g = PeriodicGrid::new(1, 64, 1).unwrap();
        let phi = GridFunction::from_fn(g, |x, _| (2.0 * PI * x[0]).sin());
        let lap = discrete_laplacian(&phi);
        let h = g.h();
        // Leading truncation term: h² φ'''' / 12 = (2π)^4 h² sin / 12.
        let bound = 1.01 * (2.0 * PI).powi(4) * h * h / 12.0;
        for node in 0..g.nodes() {
            let x = g.coords(node)[0];
            let exact = -4.0 * PI * PI * (2.0 * PI * x).sin();
            assert!((lap.get(node, 0) - exact).abs() <= bound);
        }
    }

    #[test]
    fn laplacian_2d_matches_separable_sum() {
        let g = PeriodicGrid::new(2, 16, 1).unwrap();
        let phi = GridFunction::from_fn(g, |x, _| (2.0 * PI * x[0]).cos() * (4.0 * PI * x[1]).sin());
        let lap = discrete_laplacian(&phi);
        let h = g.h();
        let sym = |k: f64| (2.0 - 2.0 * (2.0 * PI * k * h).cos()) / (h * h);
        for node in 0..g.nodes() {
            let expected = -(sym(1.0) + sym(2.0)) * phi.get(node, 0);
            assert!((lap.get(node, 0) - expected).abs() < 1e-9);
        }
    }

    fn random_function(d: usize, n: usize, m: usize) -> impl Strategy<Value = GridFunction> {
        let g = PeriodicGrid::new(d, n, m).unwrap();
        proptest::collection::vec(-5.0..5.0f64, g.len())
            .prop_map(move |v| GridFunction::from_values(g, v).unwrap())
    }

    proptest! {
        #[test]
        fn laplacian_summation_by_parts(
            phi in random_function(2, 8, 2),
            psi in random_function(2, 8, 2),
        ) {
            let a: f64 = psi.values().iter().zip(discrete_laplacian(&phi).values()).map(|(x, y)| x * y).sum();
            let b: f64 = phi.values().iter().zip(discrete_laplacian(&psi).values()).map(|(x, y)| x * y).sum();
            prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a.abs()));
            let total: f64 = discrete_laplacian(&phi).values().iter().sum();
            prop_assert!(total.abs() <= 1e-9);
        }

        #[test]
        fn translation_equivariance(phi in random_function(1, 16, 1), shift in 0usize..16) {
            let g = *phi.grid();
            let moved = GridFunction::from_values(
                g,
                (0..16).map(|k| phi.get((k + 16 - shift) % 16, 0)).collect(),
            ).unwrap();
            let lap = discrete_laplacian(&phi);
            let lap_moved = discrete_laplacian(&moved);
            for k in 0..16 {
                prop_assert_eq!(lap_moved.get(k, 0), lap.get((k + 16 - shift) % 16, 0));
                let (a, b) = one_sided_differences(&moved, k, 0);
                let (c, d) = one_sided_differences(&phi, (k + 16 - shift) % 16, 0);
                prop_assert_eq!((a, b), (c, d));
            }
        }
    }
}
