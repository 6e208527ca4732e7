//! The action-minimization LP over discrete holonomic measures.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::measure::{
    holonomy_column, holonomy_residual, test_row, AtomKey, DiscreteMeasure, VelocityGrid,
};
use super::simplex::{self, LpSolution, SimplexOptions, SparseColumns};
use crate::coupling::CouplingMatrix;
use crate::error::{Error, Result};
use crate::grid::PeriodicGrid;
use crate::hamiltonian::Hamiltonian;

/// Largest number of atoms `assemble_lp` accepts by default.
pub const ATOM_BUDGET: usize = 2_000_000;

/// Weights at or below this are dropped when a primal vector becomes a measure.
const WEIGHT_FLOOR: f64 = 1e-14;

/// `min Σ w L` over `w ≥ 0` with one holonomy row per `(node, component)`
/// and a final unit-mass row. Atom `j` is `(x, q, i)` with
/// `j = (x · N_q^d + q) · m + i`.
#[derive(Clone, Debug)]
pub struct HolonomyLp {
    grid: PeriodicGrid,
    vgrid: VelocityGrid,
    eta: f64,
    matrix: SparseColumns,
    rhs: Vec<f64>,
    costs: Vec<f64>,
    /// `matrix` without one test row per coupling class: within a class
    /// the test rows sum to zero in every column, so that row is implied.
    solve_matrix: SparseColumns,
    solve_rhs: Vec<f64>,
    dropped: Vec<usize>,
}

impl HolonomyLp {
    pub fn grid(&self) -> &PeriodicGrid {
        &self.grid
    }

    pub fn vgrid(&self) -> &VelocityGrid {
        &self.vgrid
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn atoms(&self) -> usize {
        self.costs.len()
    }

    pub fn rows(&self) -> usize {
        self.rhs.len()
    }

    pub fn costs(&self) -> &[f64] {
        &self.costs
    }

    pub fn matrix(&self) -> &SparseColumns {
        &self.matrix
    }

    /// Test rows left out of the simplex as implied by the others.
    pub fn implied_rows(&self) -> &[usize] {
        &self.dropped
    }

    pub fn atom(&self, j: usize) -> AtomKey {
        let m = self.grid.components();
        let nq = self.vgrid.nodes();
        AtomKey {
            x: j / (m * nq),
            q: (j / m) % nq,
            i: j % m,
        }
    }

    pub fn index(&self, key: AtomKey) -> usize {
        (key.x * self.vgrid.nodes() + key.q) * self.grid.components() + key.i
    }

    /// Largest violation of the equality rows by `w`.
    pub fn row_violation(&self, w: &[f64]) -> f64 {
        self.matrix
            .mul(w)
            .iter()
            .zip(&self.rhs)
            .fold(0.0, |a, (u, v)| a.max((u - v).abs()))
    }

    /// The measure with weights `w`, dropping negligible atoms.
    pub fn measure_from(&self, w: &[f64]) -> Result<DiscreteMeasure> {
        let atoms = w
            .iter()
            .enumerate()
            .filter(|(_, v)| **v > WEIGHT_FLOOR)
            .map(|(j, v)| (self.atom(j), *v));
        DiscreteMeasure::normalized(self.grid, self.vgrid, atoms)
    }
}

/// Builds the LP with `η_vis = h`. Costs are `L(x, q, i)` at the atoms.
pub fn assemble_lp<H: Hamiltonian + ?Sized>(
    ham: &H,
    c: &CouplingMatrix,
    grid: &PeriodicGrid,
    vgrid: &VelocityGrid,
    budget: usize,
) -> Result<HolonomyLp> {
    if vgrid.dim() != grid.dim() || ham.dim() != grid.dim() {
        return Err(Error::DimensionMismatch {
            expected: grid.dim(),
            got: vgrid.dim(),
        });
    }
    if c.components() != grid.components() || ham.components() != grid.components() {
        return Err(Error::DimensionMismatch {
            expected: grid.components(),
            got: c.components(),
        });
    }
    let m = grid.components();
    let nq = vgrid.nodes();
    let atoms = grid.nodes() * nq * m;
    if atoms > budget {
        return Err(Error::AtomBudget { atoms, budget });
    }
    let d = grid.dim();
    let eta = grid.h();
    let mass_row = grid.len();
    // Node-parallel: every node yields its atoms' costs and columns in order.
    let per_node: Vec<Result<Vec<(f64, Vec<(usize, f64)>)>>> = (0..grid.nodes())
        .into_par_iter()
        .map(|x| {
            let xc = grid.coords(x);
            let mut out = Vec::with_capacity(nq * m);
            let mut col = Vec::new();
            for q in 0..nq {
                let qc = vgrid.coords(q);
                for i in 0..m {
                    let cost = ham.lagrangian(&xc[..d], &qc[..d], i)?;
                    holonomy_column(grid, c, eta, x, &qc[..d], i, &mut col);
                    let mut entries = col.clone();
                    entries.push((mass_row, 1.0));
                    out.push((cost, entries));
                }
            }
            Ok(out)
        })
        .collect();
    let mut matrix = SparseColumns::new(mass_row + 1);
    let mut costs = Vec::with_capacity(atoms);
    for node in per_node {
        for (cost, entries) in node? {
            costs.push(cost);
            matrix.push_column(entries);
        }
    }
    let mut rhs = vec![0.0; mass_row + 1];
    rhs[mass_row] = 1.0;
    let dropped: Vec<usize> =
        coupling_classes(c).into_iter().map(|i| test_row(grid, 0, i)).collect();
    let mut keep = vec![usize::MAX; mass_row + 1];
    let mut next = 0;
    for (r, slot) in keep.iter_mut().enumerate() {
        if !dropped.contains(&r) {
            *slot = next;
            next += 1;
        }
    }
    let mut solve_matrix = SparseColumns::new(next);
    for j in 0..matrix.cols() {
        solve_matrix.push_column(
            matrix.column(j).filter(|e| keep[e.0] != usize::MAX).map(|(r, v)| (keep[r], v)),
        );
    }
    let solve_rhs = (0..=mass_row).filter(|r| keep[*r] != usize::MAX).map(|r| rhs[r]).collect();
    Ok(HolonomyLp {
        grid: *grid,
        vgrid: *vgrid,
        eta,
        matrix,
        rhs,
        costs,
        solve_matrix,
        solve_rhs,
        dropped,
    })
}

/// Lowest component of each class of components linked by nonzero rates;
/// its row at node 0 is the implied test row of the class.
fn coupling_classes(c: &CouplingMatrix) -> Vec<usize> {
    let m = c.components();
    let mut label: Vec<usize> = (0..m).collect();
    // m is small, so repeated relabeling to the minimum suffices.
    loop {
        let mut changed = false;
        for i in 0..m {
            for j in 0..m {
                if i != j && (c.rate(i, j) > 0.0 || c.rate(j, i) > 0.0) && label[j] > label[i] {
                    label[j] = label[i];
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    (0..m).filter(|&i| label[i] == i).collect()
}

#[derive(Clone, Debug)]
pub struct MatherLpSolution {
    pub measure: DiscreteMeasure,
    /// Minimal action; the ergodic constant is its negative.
    pub value: f64,
    pub lp: LpSolution,
}

#[derive(Clone, Debug, Serialize)]
pub struct MatherLpSummary {
    pub value: f64,
    pub lambda: f64,
    pub atoms: usize,
    pub rows: usize,
    pub iterations: usize,
    pub row_violation: f64,
    pub holonomy_residual: f64,
    pub support_size: usize,
    pub component_masses: Vec<f64>,
}

impl MatherLpSolution {
    pub fn summary(&self, lp: &HolonomyLp, c: &CouplingMatrix) -> Result<MatherLpSummary> {
        Ok(MatherLpSummary {
            value: self.value,
            lambda: -self.value,
            atoms: lp.atoms(),
            rows: lp.rows(),
            iterations: self.lp.iterations,
            row_violation: lp.row_violation(&self.lp.x),
            holonomy_residual: holonomy_residual(&self.measure, c, lp.eta())?,
            support_size: self.measure.support_size(),
            component_masses: self.measure.component_masses(),
        })
    }
}

pub fn solve_mather_lp(lp: &HolonomyLp, opts: &SimplexOptions) -> Result<MatherLpSolution> {
    let sol = simplex::solve(&lp.solve_matrix, &lp.solve_rhs, &lp.costs, opts)?;
    let measure = lp.measure_from(&sol.x)?;
    Ok(MatherLpSolution {
        measure,
        value: sol.value,
        lp: sol,
    })
}

/// Columns whose reduced cost at the optimum is at most `tolerance`: any
/// feasible point supported there is also optimal.
pub fn optimal_face(sol: &MatherLpSolution, tolerance: f64) -> Vec<bool> {
    sol.lp.reduced_costs.iter().map(|d| *d <= tolerance).collect()
}

/// Further optimal vertices: the LP re-solved on the optimal face under `k`
/// seeded random objectives with entries uniform in `[0, 1)`. The draws are
/// independent and run concurrently.
pub fn sample_optimal_vertices(
    lp: &HolonomyLp,
    sol: &MatherLpSolution,
    k: usize,
    seed: u64,
    opts: &SimplexOptions,
) -> Result<Vec<DiscreteMeasure>> {
    let face = optimal_face(sol, 1e-9);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let objectives: Vec<Vec<f64>> = (0..k)
        .map(|_| face.iter().map(|&on| if on { rng.gen::<f64>() } else { 0.0 }).collect())
        .collect();
    objectives
        .par_iter()
        .map(|r| {
            let v = simplex::resolve(&lp.solve_matrix, &lp.solve_rhs, r, &face, &sol.lp, opts)?;
            lp.measure_from(&v.x)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonian::HamiltonianSpec;
    use crate::potential::{Potential, ScalarField, TrigPolynomial};

    fn example(n: usize) -> (HamiltonianSpec, CouplingMatrix, PeriodicGrid, VelocityGrid) {
        let f = ScalarField::Trig(TrigPolynomial::sin_squared(1, 1));
        (
            HamiltonianSpec::quadratic(Potential::uniform(1, 2, f).unwrap()),
            CouplingMatrix::uniform(2, 1.0).unwrap(),
            PeriodicGrid::new(1, n, 2).unwrap(),
            VelocityGrid::new(1, 3.0, 17).unwrap(),
        )
    }

    #[test]
    fn sizes_costs_and_feasible_point() {
        let (spec, c, g, v) = example(32);
        let lp = assemble_lp(&spec, &c, &g, &v, ATOM_BUDGET).unwrap();
        assert_eq!(lp.atoms(), 1088);
        assert_eq!(lp.rows(), 65);
        for i in 0..2 {
            let j = lp.index(AtomKey { x: 0, q: v.zero_node(), i });
            assert_eq!(lp.atom(j), AtomKey { x: 0, q: v.zero_node(), i });
            assert_eq!(lp.costs()[j], 0.0);
        }
        let mut w = vec![0.0; lp.atoms()];
        for i in 0..2 {
            w[lp.index(AtomKey { x: 0, q: v.zero_node(), i })] = 0.5;
        }
        assert!(lp.row_violation(&w) <= 1e-15);
        assert!(matches!(
            assemble_lp(&spec, &c, &g, &v, 1000),
            Err(Error::AtomBudget { atoms: 1088, budget: 1000 })
        ));
    }

    #[test]
    fn test_rows_annihilate_constants() {
        // Every column sums to zero over the test rows, so the test rows
        // are dependent and only the mass row fixes the scale.
        let (spec, c, g, v) = example(16);
        let lp = assemble_lp(&spec, &c, &g, &v, ATOM_BUDGET).unwrap();
        let mass_row = lp.rows() - 1;
        for j in 0..lp.atoms() {
            let s: f64 = lp.matrix().column(j).filter(|e| e.0 != mass_row).map(|e| e.1).sum();
            assert!(s.abs() < 1e-12);
        }
    }
}
