//! Velocity lattices, discrete measures on (position, velocity, component),
//! the holonomy constraint rows and the action.

use std::collections::BTreeMap;
use std::io::{BufWriter, Write};

use serde::Serialize;

use crate::coupling::CouplingMatrix;
use crate::error::{Error, Result};
use crate::grid::{PeriodicGrid, MAX_DIM};
use crate::hamiltonian::Hamiltonian;

/// Uniform lattice of `N_q` points per axis on `[-Qmax, Qmax]^d`, with
/// `N_q` odd so that `q = 0` is a node.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct VelocityGrid {
    dim: usize,
    q_max: f64,
    n_q: usize,
}

impl VelocityGrid {
    pub fn new(dim: usize, q_max: f64, n_q: usize) -> Result<Self> {
        if !(1..=MAX_DIM).contains(&dim) {
            return Err(Error::UnsupportedDimension(dim));
        }
        if n_q < 3 || n_q % 2 == 0 {
            return Err(Error::InvalidParameter(format!(
                "velocity lattice needs an odd N_q >= 3, got {n_q}"
            )));
        }
        if !(q_max > 0.0 && q_max.is_finite()) {
            return Err(Error::InvalidParameter(format!("Qmax = {q_max} must be positive")));
        }
        Ok(Self { dim, q_max, n_q })
    }

    /// `n_q` nodes per axis on `[-Qmax, Qmax]` with `Qmax = sup |D_pH|` over
    /// `|p_k| ≤ lipschitz + 1`.
    pub fn covering<H: Hamiltonian + ?Sized>(
        ham: &H,
        grid: &PeriodicGrid,
        lipschitz: f64,
        n_q: usize,
    ) -> Result<Self> {
        let bound = crate::evolve::dissipation_bound(ham, grid, lipschitz + 1.0);
        Self::new(grid.dim(), bound, n_q)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn q_max(&self) -> f64 {
        self.q_max
    }

    pub fn n_q(&self) -> usize {
        self.n_q
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.q_max / (self.n_q - 1) as f64
    }

    pub fn nodes(&self) -> usize {
        self.n_q.pow(self.dim as u32)
    }

    pub fn zero_node(&self) -> usize {
        let mid = self.n_q / 2;
        if self.dim == 1 {
            mid
        } else {
            mid * self.n_q + mid
        }
    }

    pub fn coords(&self, node: usize) -> [f64; MAX_DIM] {
        let idx = if self.dim == 1 {
            [node, 0]
        } else {
            [node / self.n_q, node % self.n_q]
        };
        let s = self.spacing();
        let mut out = [0.0; MAX_DIM];
        for k in 0..self.dim {
            out[k] = -self.q_max + s * idx[k] as f64;
        }
        out
    }

    /// Nearest lattice node, or a truncation error outside the box.
    pub fn snap(&self, q: &[f64]) -> Result<usize> {
        let s = self.spacing();
        let tol = 1e-9 * s;
        let mut node = 0;
        for &v in q.iter().take(self.dim) {
            if !v.is_finite() || v.abs() > self.q_max + tol {
                return Err(Error::VelocityTruncation {
                    q: q.to_vec(),
                    q_max: self.q_max,
                });
            }
            let k = ((v + self.q_max) / s).round().clamp(0.0, (self.n_q - 1) as f64) as usize;
            node = node * self.n_q + k;
        }
        Ok(node)
    }
}

/// One atom `(x node, q node, component)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct AtomKey {
    pub x: usize,
    pub q: usize,
    pub i: usize,
}

/// Nonnegative weights on finitely many atoms, summing to one.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteMeasure {
    grid: PeriodicGrid,
    vgrid: VelocityGrid,
    /// Sorted by key, no duplicates, no zero weights.
    atoms: Vec<(AtomKey, f64)>,
}

impl DiscreteMeasure {
    /// Merges duplicate keys and drops zero weights. Weights must be
    /// nonnegative and sum to one within `1e-10`.
    pub fn new(
        grid: PeriodicGrid,
        vgrid: VelocityGrid,
        atoms: impl IntoIterator<Item = (AtomKey, f64)>,
    ) -> Result<Self> {
        if vgrid.dim() != grid.dim() {
            return Err(Error::DimensionMismatch {
                expected: grid.dim(),
                got: vgrid.dim(),
            });
        }
        let mut merged: BTreeMap<AtomKey, f64> = BTreeMap::new();
        for (key, w) in atoms {
            if !w.is_finite() || w < 0.0 {
                return Err(Error::InvalidParameter(format!("atom weight {w} at {key:?}")));
            }
            if key.x >= grid.nodes() || key.q >= vgrid.nodes() || key.i >= grid.components() {
                return Err(Error::InvalidParameter(format!("atom {key:?} outside the grids")));
            }
            *merged.entry(key).or_insert(0.0) += w;
        }
        let atoms: Vec<(AtomKey, f64)> = merged.into_iter().filter(|(_, w)| *w > 0.0).collect();
        let total: f64 = atoms.iter().map(|a| a.1).sum();
        if (total - 1.0).abs() > 1e-10 {
            return Err(Error::InvalidParameter(format!(
                "measure has mass {total}, expected 1"
            )));
        }
        Ok(Self { grid, vgrid, atoms })
    }

    /// Like [`DiscreteMeasure::new`] but rescales positive total mass to one.
    pub fn normalized(
        grid: PeriodicGrid,
        vgrid: VelocityGrid,
        atoms: impl IntoIterator<Item = (AtomKey, f64)>,
    ) -> Result<Self> {
        let atoms: Vec<(AtomKey, f64)> = atoms.into_iter().collect();
        let total: f64 = atoms.iter().map(|a| a.1).sum();
        if !(total > 0.0) {
            return Err(Error::InvalidParameter("measure has no mass".into()));
        }
        Self::new(grid, vgrid, atoms.into_iter().map(|(k, w)| (k, w / total)))
    }

    pub fn grid(&self) -> &PeriodicGrid {
        &self.grid
    }

    pub fn vgrid(&self) -> &VelocityGrid {
        &self.vgrid
    }

    pub fn atoms(&self) -> &[(AtomKey, f64)] {
        &self.atoms
    }

    pub fn support_size(&self) -> usize {
        self.atoms.len()
    }

    pub fn component_masses(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.grid.components()];
        for (k, w) in &self.atoms {
            out[k.i] += w;
        }
        out
    }

    /// Mass of each `(x node, component)`, indexed `x * m + i`.
    pub fn position_marginal(&self) -> Vec<f64> {
        let m = self.grid.components();
        let mut out = vec![0.0; self.grid.nodes() * m];
        for (k, w) in &self.atoms {
            out[k.x * m + k.i] += w;
        }
        out
    }

    /// Mass within periodic distance `radius` of the point `x`.
    pub fn mass_near(&self, x: &[f64], radius: f64) -> f64 {
        self.atoms
            .iter()
            .filter(|(k, _)| self.grid.distance_to_point(k.x, x) <= radius + 1e-12)
            .map(|a| a.1)
            .sum()
    }

    /// Mass on velocities with `max_k |q_k| ≤ radius`.
    pub fn mass_slow(&self, radius: f64) -> f64 {
        let d = self.grid.dim();
        self.atoms
            .iter()
            .filter(|(k, _)| {
                let q = self.vgrid.coords(k.q);
                q[..d].iter().all(|v| v.abs() <= radius + 1e-12)
            })
            .map(|a| a.1)
            .sum()
    }

    /// `∫ φ(x, i) dμ` for a function of position and component given on nodes.
    pub fn integrate_nodal(&self, values: &[f64]) -> f64 {
        let m = self.grid.components();
        self.atoms.iter().map(|(k, w)| w * values[k.x * m + k.i]).sum()
    }

    /// Rows `x[,y],q1[,q2],i,weight` with components numbered from 1.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = BufWriter::new(out);
        let d = self.grid.dim();
        let header = if d == 1 { "x,q,i,weight" } else { "x,y,q1,q2,i,weight" };
        writeln!(w, "{header}")?;
        for (k, weight) in &self.atoms {
            let x = self.grid.coords(k.x);
            let q = self.vgrid.coords(k.q);
            for v in x[..d].iter().chain(&q[..d]) {
                write!(w, "{v},")?;
            }
            writeln!(w, "{},{weight:e}", k.i + 1)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn summary<H: Hamiltonian + ?Sized>(
        &self,
        ham: &H,
        c: &CouplingMatrix,
    ) -> Result<MeasureSummary> {
        Ok(MeasureSummary {
            action: action(self, ham)?,
            holonomy_residual: holonomy_residual(self, c, self.grid.h())?,
            component_masses: self.component_masses(),
            support_size: self.support_size(),
        })
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct MeasureSummary {
    pub action: f64,
    pub holonomy_residual: f64,
    pub component_masses: Vec<f64>,
    pub support_size: usize,
}

/// Index of the test-function row `(y, j)`; the mass row comes last.
#[inline]
pub(crate) fn test_row(grid: &PeriodicGrid, node: usize, j: usize) -> usize {
    node * grid.components() + j
}

/// Coefficients of the atom `(x, q, i)` in every holonomy row it touches:
/// `q·D_hφ + η Σ_k (|q_k|/2) ∂²_kφ + Θφ` evaluated on the nodal indicator
/// test functions, with `D_h` central and `∂²_k` the three-point second
/// difference. Entries for the same row are merged; the mass row is not
/// included.
pub(crate) fn holonomy_column(
    grid: &PeriodicGrid,
    c: &CouplingMatrix,
    eta: f64,
    x: usize,
    q: &[f64],
    i: usize,
    out: &mut Vec<(usize, f64)>,
) {
    out.clear();
    let h = grid.h();
    let m = grid.components();
    for (k, &qk) in q.iter().enumerate().take(grid.dim()) {
        let transport = qk / (2.0 * h);
        let viscous = eta * 0.5 * qk.abs() / (h * h);
        out.push((test_row(grid, grid.offset(x, k, 1), i), transport + viscous));
        out.push((test_row(grid, grid.offset(x, k, -1), i), -transport + viscous));
        out.push((test_row(grid, x, i), -2.0 * viscous));
    }
    for l in 0..m {
        if l != i {
            let rate = c.rate(i, l);
            if rate != 0.0 {
                out.push((test_row(grid, x, i), rate));
                out.push((test_row(grid, x, l), -rate));
            }
        }
    }
    out.sort_by_key(|e| e.0);
    let mut merged: Vec<(usize, f64)> = Vec::with_capacity(out.len());
    for &(r, v) in out.iter() {
        match merged.last_mut() {
            Some(last) if last.0 == r => last.1 += v,
            _ => merged.push((r, v)),
        }
    }
    merged.retain(|e| e.1 != 0.0);
    *out = merged;
}

/// Largest `|Σ_atoms w (q·D_hφ + η Σ_k (|q_k|/2) ∂²_kφ + Θφ)|` over the
/// nodal indicator test functions `φ = 1_{(y, j)}`.
pub fn holonomy_residual(mu: &DiscreteMeasure, c: &CouplingMatrix, eta: f64) -> Result<f64> {
    let g = mu.grid;
    if c.components() != g.components() {
        return Err(Error::DimensionMismatch {
            expected: g.components(),
            got: c.components(),
        });
    }
    let mut rows = vec![0.0; g.len()];
    let mut col = Vec::new();
    for (k, w) in &mu.atoms {
        let q = mu.vgrid.coords(k.q);
        holonomy_column(&g, c, eta, k.x, &q[..g.dim()], k.i, &mut col);
        for &(r, v) in &col {
            rows[r] += w * v;
        }
    }
    Ok(rows.iter().fold(0.0, |a, v| a.max(v.abs())))
}

/// `Σ_atoms w L(x, q, i)`.
pub fn action<H: Hamiltonian + ?Sized>(mu: &DiscreteMeasure, ham: &H) -> Result<f64> {
    let d = mu.grid.dim();
    let mut total = 0.0;
    for (k, w) in &mu.atoms {
        let x = mu.grid.coords(k.x);
        let q = mu.vgrid.coords(k.q);
        total += w * ham.lagrangian(&x[..d], &q[..d], k.i)?;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonian::HamiltonianSpec;
    use crate::potential::{Potential, ScalarField, TrigPolynomial};

    fn setup() -> (PeriodicGrid, VelocityGrid, CouplingMatrix) {
        (
            PeriodicGrid::new(1, 64, 2).unwrap(),
            VelocityGrid::new(1, 3.0, 17).unwrap(),
            CouplingMatrix::uniform(2, 1.0).unwrap(),
        )
    }

    #[test]
    fn velocity_lattice() {
        let v = VelocityGrid::new(1, 3.0, 17).unwrap();
        assert_eq!(v.spacing(), 0.375);
        assert_eq!(v.coords(v.zero_node())[0], 0.0);
        assert_eq!(v.snap(&[0.1]).unwrap(), v.zero_node());
        assert_eq!(v.snap(&[-3.0]).unwrap(), 0);
        assert!(matches!(v.snap(&[3.2]), Err(Error::VelocityTruncation { .. })));
        assert!(VelocityGrid::new(1, 3.0, 16).is_err());
        let v2 = VelocityGrid::new(2, 1.0, 5).unwrap();
        assert_eq!(v2.coords(v2.zero_node()), [0.0, 0.0]);
        assert_eq!(v2.coords(v2.snap(&[0.6, -0.4]).unwrap()), [0.5, -0.5]);
    }

    #[test]
    fn example_measure_is_exact() {
        let (g, v, c) = setup();
        let half = [
            (AtomKey { x: 0, q: v.zero_node(), i: 0 }, 0.5),
            (AtomKey { x: 0, q: v.zero_node(), i: 1 }, 0.5),
        ];
        let mu = DiscreteMeasure::new(g, v, half).unwrap();
        assert!(holonomy_residual(&mu, &c, g.h()).unwrap() <= 1e-12);
        let spec = HamiltonianSpec::quadratic(
            Potential::uniform(1, 2, ScalarField::Trig(TrigPolynomial::sin_squared(1, 1)))
                .unwrap(),
        );
        assert_eq!(action(&mu, &spec).unwrap(), 0.0);
    }

    #[test]
    fn nonuniform_weights_break_holonomy() {
        // Row (x0, 1): a c₁₂ - (1 - a) c₂₁ = 2a - 1.
        let (g, v, c) = setup();
        let a = 0.75;
        let mu = DiscreteMeasure::new(
            g,
            v,
            [
                (AtomKey { x: 0, q: v.zero_node(), i: 0 }, a),
                (AtomKey { x: 0, q: v.zero_node(), i: 1 }, 1.0 - a),
            ],
        )
        .unwrap();
        assert!((holonomy_residual(&mu, &c, g.h()).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn uniform_rest_measure_is_holonomic() {
        let (g, v, c) = setup();
        let w = 1.0 / g.len() as f64;
        let atoms = (0..g.nodes())
            .flat_map(|x| (0..2).map(move |i| (AtomKey { x, q: v.zero_node(), i }, w)));
        let mu = DiscreteMeasure::new(g, v, atoms).unwrap();
        assert!(holonomy_residual(&mu, &c, g.h()).unwrap() <= 1e-12);
    }

    #[test]
    fn uniform_translation_is_holonomic() {
        // Constant velocity spread uniformly in x: transport rows cancel.
        let (g, v, c) = setup();
        let q = v.snap(&[1.5]).unwrap();
        let w = 1.0 / g.len() as f64;
        let atoms = (0..g.nodes()).flat_map(|x| (0..2).map(move |i| (AtomKey { x, q, i }, w)));
        let mu = DiscreteMeasure::new(g, v, atoms).unwrap();
        assert!(holonomy_residual(&mu, &c, g.h()).unwrap() <= 1e-12);
    }

    #[test]
    fn point_mass_action() {
        let g = PeriodicGrid::new(1, 16, 1).unwrap();
        let v = VelocityGrid::new(1, 2.0, 5).unwrap();
        let spec = HamiltonianSpec::quadratic(Potential::zero(1, 1));
        let q1 = v.snap(&[1.0]).unwrap();
        let mu = DiscreteMeasure::new(g, v, [(AtomKey { x: 3, q: q1, i: 0 }, 1.0)]).unwrap();
        assert_eq!(action(&mu, &spec).unwrap(), 0.5);
    }

    #[test]
    fn measure_validation_and_csv() {
        let (g, v, _) = setup();
        let key = AtomKey { x: 1, q: 2, i: 1 };
        assert!(DiscreteMeasure::new(g, v, [(key, 0.5)]).is_err());
        assert!(DiscreteMeasure::new(g, v, [(key, 1.5), (key, -0.5)]).is_err());
        let mu = DiscreteMeasure::new(g, v, [(key, 0.25), (key, 0.75)]).unwrap();
        assert_eq!(mu.support_size(), 1);
        let mut buf = Vec::new();
        mu.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "x,q,i,weight\n0.015625,-2.25,2,1e0\n");
    }
}
