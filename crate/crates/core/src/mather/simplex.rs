//! Revised simplex for `min cᵀx, Ax = b, x ≥ 0` with `b ≥ 0`, sparse columns
//! and a dense basis inverse.
//!
//! Phase 1 starts from one artificial per row. Pricing is Dantzig's rule
//! with ties to the lowest column index. Ratio-test ties are broken
//! lexicographically on the rows of `B⁻¹` scaled by the pivot, which is the
//! perturbation method carried out exactly and rules out cycling. Bland's
//! rule is available as an option but stalls badly on the very degenerate
//! holonomy LPs.

use log::debug;
use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Column-compressed matrix.
#[derive(Clone, Debug, Default)]
pub struct SparseColumns {
    rows: usize,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    vals: Vec<f64>,
}

impl SparseColumns {
    pub fn new(rows: usize) -> Self {
        Self {
            rows,
            col_ptr: vec![0],
            row_idx: Vec::new(),
            vals: Vec::new(),
        }
    }

    /// Appends a column given as `(row, value)` pairs.
    pub fn push_column(&mut self, entries: impl IntoIterator<Item = (usize, f64)>) {
        for (r, v) in entries {
            debug_assert!(r < self.rows);
            self.row_idx.push(r);
            self.vals.push(v);
        }
        self.col_ptr.push(self.row_idx.len());
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.col_ptr.len() - 1
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn column(&self, j: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.col_ptr[j]..self.col_ptr[j + 1];
        self.row_idx[span.clone()].iter().copied().zip(self.vals[span].iter().copied())
    }

    /// `Ax`.
    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.rows];
        for (j, &xj) in x.iter().enumerate() {
            if xj != 0.0 {
                for (r, v) in self.column(j) {
                    out[r] += v * xj;
                }
            }
        }
        out
    }

    fn dot_column(&self, j: usize, y: &[f64]) -> f64 {
        self.column(j).map(|(r, v)| y[r] * v).sum()
    }
}

#[derive(Clone, Debug)]
pub struct SimplexOptions {
    pub max_iterations: usize,
    /// Reduced costs below `-tolerance` are improving.
    pub tolerance: f64,
    /// Smallest pivot magnitude accepted in the ratio test.
    pub pivot_tolerance: f64,
    /// Phase-1 objective above this means infeasible.
    pub feasibility_tolerance: f64,
    pub refactor_every: usize,
    /// Use Bland's rule (lowest improving column, lowest leaving index)
    /// instead of Dantzig pricing with the lexicographic ratio test.
    pub bland_only: bool,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        Self {
            max_iterations: 1_000_000,
            tolerance: 1e-9,
            pivot_tolerance: 1e-9,
            feasibility_tolerance: 1e-9,
            refactor_every: 100,
            bland_only: false,
        }
    }
}

/// A basic optimal solution with its certificate.
#[derive(Clone, Debug)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub value: f64,
    /// Row multipliers `y = c_Bᵀ B⁻¹`.
    pub duals: Vec<f64>,
    /// `c_j - yᵀA_j`.
    pub reduced_costs: Vec<f64>,
    /// Basic variable of each row; indices `≥ cols` are artificials left
    /// at zero on redundant rows.
    pub basis: Vec<usize>,
    pub iterations: usize,
}

struct Tableau<'a> {
    a: &'a SparseColumns,
    b: &'a [f64],
    n: usize,
    m: usize,
    basis: Vec<usize>,
    is_basic: Vec<bool>,
    /// Row-major `m × m`.
    binv: Vec<f64>,
    xb: Vec<f64>,
    iterations: usize,
}

enum Step {
    Optimal,
    Pivoted,
}

impl<'a> Tableau<'a> {
    fn new(a: &'a SparseColumns, b: &'a [f64]) -> Self {
        let m = a.rows();
        let n = a.cols();
        let mut binv = vec![0.0; m * m];
        for r in 0..m {
            binv[r * m + r] = 1.0;
        }
        let mut is_basic = vec![false; n + m];
        for flag in &mut is_basic[n..] {
            *flag = true;
        }
        Self {
            a,
            b,
            n,
            m,
            basis: (n..n + m).collect(),
            is_basic,
            binv,
            xb: b.to_vec(),
            iterations: 0,
        }
    }

    fn from_basis(a: &'a SparseColumns, b: &'a [f64], basis: &[usize]) -> Result<Self> {
        let mut t = Self::new(a, b);
        if basis.len() != t.m {
            return Err(Error::InvalidParameter("warm basis has the wrong size".into()));
        }
        t.is_basic.iter_mut().for_each(|f| *f = false);
        for &j in basis {
            t.is_basic[j] = true;
        }
        t.basis = basis.to_vec();
        t.refactor()?;
        Ok(t)
    }

    /// Column `j` of `[A | I]` densely.
    fn dense_column(&self, j: usize) -> Vec<f64> {
        let mut col = vec![0.0; self.m];
        if j < self.n {
            for (r, v) in self.a.column(j) {
                col[r] += v;
            }
        } else {
            col[j - self.n] = 1.0;
        }
        col
    }

    fn refactor(&mut self) -> Result<()> {
        let m = self.m;
        let mut bmat = DMatrix::<f64>::zeros(m, m);
        for (pos, &j) in self.basis.iter().enumerate() {
            let col = self.dense_column(j);
            for r in 0..m {
                bmat[(r, pos)] = col[r];
            }
        }
        let inv = bmat
            .try_inverse()
            .ok_or_else(|| Error::InvalidParameter("singular simplex basis".into()))?;
        for r in 0..m {
            for k in 0..m {
                self.binv[r * m + k] = inv[(r, k)];
            }
        }
        for r in 0..m {
            let mut s = 0.0;
            for k in 0..m {
                s += self.binv[r * m + k] * self.b[k];
            }
            self.xb[r] = if s.abs() < 1e-13 { 0.0 } else { s };
        }
        Ok(())
    }

    fn duals(&self, cost: &dyn Fn(usize) -> f64) -> Vec<f64> {
        let m = self.m;
        let mut y = vec![0.0; m];
        for (r, &j) in self.basis.iter().enumerate() {
            let cb = cost(j);
            if cb != 0.0 {
                let row = &self.binv[r * m..(r + 1) * m];
                for (yk, bk) in y.iter_mut().zip(row) {
                    *yk += cb * bk;
                }
            }
        }
        y
    }

    fn reduced_cost(&self, j: usize, y: &[f64], cost: &dyn Fn(usize) -> f64) -> f64 {
        if j < self.n {
            cost(j) - self.a.dot_column(j, y)
        } else {
            cost(j) - y[j - self.n]
        }
    }

    fn ftran(&self, j: usize) -> Vec<f64> {
        let m = self.m;
        let mut alpha = vec![0.0; m];
        if j < self.n {
            for (k, v) in self.a.column(j) {
                for r in 0..m {
                    alpha[r] += self.binv[r * m + k] * v;
                }
            }
        } else {
            let k = j - self.n;
            for r in 0..m {
                alpha[r] = self.binv[r * m + k];
            }
        }
        alpha
    }

    fn pivot(&mut self, row: usize, entering: usize, alpha: &[f64], step: f64) {
        let m = self.m;
        for r in 0..m {
            if r != row {
                self.xb[r] -= step * alpha[r];
                if self.xb[r].abs() < 1e-13 {
                    self.xb[r] = 0.0;
                }
            }
        }
        self.xb[row] = step;
        let p = alpha[row];
        let pivot_row: Vec<f64> = self.binv[row * m..(row + 1) * m].iter().map(|v| v / p).collect();
        for r in 0..m {
            let f = alpha[r];
            if r == row || f == 0.0 {
                continue;
            }
            let target = &mut self.binv[r * m..(r + 1) * m];
            for (t, pr) in target.iter_mut().zip(&pivot_row) {
                *t -= f * pr;
            }
        }
        self.binv[row * m..(row + 1) * m].copy_from_slice(&pivot_row);
        self.is_basic[self.basis[row]] = false;
        self.is_basic[entering] = true;
        self.basis[row] = entering;
    }

    /// Runs pivots until optimal for `cost` over the columns with
    /// `enterable(j)`. Artificials still basic are forced out as soon as an
    /// entering column touches their row, so they stay at zero.
    fn optimize(
        &mut self,
        cost: &dyn Fn(usize) -> f64,
        enterable: &dyn Fn(usize) -> bool,
        opts: &SimplexOptions,
        pin_artificials: bool,
    ) -> Result<()> {
        let mut since_refactor = 0usize;
        loop {
            if self.iterations >= opts.max_iterations {
                return Err(Error::IterationLimit(opts.max_iterations));
            }
            if let Step::Optimal = self.step(cost, enterable, opts, pin_artificials)? {
                return Ok(());
            }
            self.iterations += 1;
            since_refactor += 1;
            if since_refactor >= opts.refactor_every {
                self.refactor()?;
                since_refactor = 0;
            }
        }
    }

    fn step(
        &mut self,
        cost: &dyn Fn(usize) -> f64,
        enterable: &dyn Fn(usize) -> bool,
        opts: &SimplexOptions,
        pin_artificials: bool,
    ) -> Result<Step> {
        let y = self.duals(cost);
        let bland = opts.bland_only;
        let mut entering = None;
        let mut best = -opts.tolerance;
        for j in 0..self.n {
            if self.is_basic[j] || !enterable(j) {
                continue;
            }
            let d = self.reduced_cost(j, &y, cost);
            if d < best {
                entering = Some(j);
                if bland {
                    break;
                }
                best = d;
            }
        }
        let Some(q) = entering else {
            return Ok(Step::Optimal);
        };
        let alpha = self.ftran(q);
        let scale = alpha.iter().fold(1.0f64, |a, v| a.max(v.abs()));
        let tol = opts.pivot_tolerance * scale;
        let mut leave: Option<(usize, f64)> = None;
        for r in 0..self.m {
            let a = alpha[r];
            let forced = pin_artificials && self.basis[r] >= self.n && a.abs() > tol;
            if !(a > tol || forced) {
                continue;
            }
            let ratio = if forced { 0.0 } else { (self.xb[r] / a).max(0.0) };
            let better = match leave {
                None => true,
                Some((lr, lt)) => {
                    let tie_break = if bland {
                        self.basis[r] < self.basis[lr]
                    } else {
                        self.lex_less(r, a, lr, alpha[lr])
                    };
                    ratio < lt - 1e-14 || (ratio <= lt + 1e-14 && tie_break)
                }
            };
            if better {
                leave = Some((r, ratio));
            }
        }
        let Some((row, t)) = leave else {
            return Err(Error::Unbounded { column: q });
        };
        self.pivot(row, q, &alpha, t);
        Ok(Step::Pivoted)
    }

    /// Whether row `r` of `B⁻¹ / a` precedes row `s` of `B⁻¹ / b`
    /// lexicographically.
    fn lex_less(&self, r: usize, a: f64, s: usize, b: f64) -> bool {
        let m = self.m;
        let (ra, sb) = (&self.binv[r * m..(r + 1) * m], &self.binv[s * m..(s + 1) * m]);
        for (u, v) in ra.iter().zip(sb) {
            let (u, v) = (u / a, v / b);
            if (u - v).abs() > 1e-12 * (1.0 + u.abs().max(v.abs())) {
                return u < v;
            }
        }
        a.abs() > b.abs()
    }

    fn solution(&self, cost: &dyn Fn(usize) -> f64) -> LpSolution {
        let mut x = vec![0.0; self.n];
        for (r, &j) in self.basis.iter().enumerate() {
            if j < self.n {
                x[j] = self.xb[r].max(0.0);
            }
        }
        let y = self.duals(cost);
        let reduced_costs = (0..self.n).map(|j| self.reduced_cost(j, &y, cost)).collect();
        let value = x.iter().enumerate().map(|(j, v)| cost(j) * v).sum();
        LpSolution {
            x,
            value,
            duals: y,
            reduced_costs,
            basis: self.basis.clone(),
            iterations: self.iterations,
        }
    }
}

fn check_shapes(a: &SparseColumns, b: &[f64], c: &[f64]) -> Result<()> {
    if b.len() != a.rows() || c.len() != a.cols() {
        return Err(Error::DimensionMismatch {
            expected: a.cols(),
            got: c.len(),
        });
    }
    if b.iter().any(|v| !(*v >= 0.0)) || c.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter(
            "simplex needs b ≥ 0 and finite costs".into(),
        ));
    }
    Ok(())
}

/// Solves `min cᵀx, Ax = b, x ≥ 0`.
pub fn solve(a: &SparseColumns, b: &[f64], c: &[f64], opts: &SimplexOptions) -> Result<LpSolution> {
    check_shapes(a, b, c)?;
    let n = a.cols();
    let mut t = Tableau::new(a, b);
    let phase1 = |j: usize| if j >= n { 1.0 } else { 0.0 };
    t.optimize(&phase1, &|_| true, opts, false)?;
    let infeasibility: f64 = t
        .basis
        .iter()
        .zip(&t.xb)
        .filter(|(j, _)| **j >= n)
        .map(|(_, v)| *v)
        .sum();
    if infeasibility > opts.feasibility_tolerance {
        let row = t
            .basis
            .iter()
            .zip(&t.xb)
            .position(|(j, v)| *j >= n && *v > 0.0)
            .unwrap_or(0);
        return Err(Error::Infeasible {
            objective: infeasibility,
            row,
        });
    }
    // Drive zero-level artificials out where some real column can replace them.
    for row in 0..t.m {
        if t.basis[row] < n {
            continue;
        }
        let binv_row: Vec<f64> = t.binv[row * t.m..(row + 1) * t.m].to_vec();
        let candidate = (0..n).find(|&j| {
            !t.is_basic[j] && a.dot_column(j, &binv_row).abs() > 1e-7
        });
        if let Some(j) = candidate {
            let alpha = t.ftran(j);
            t.pivot(row, j, &alpha, 0.0);
        }
    }
    t.refactor()?;
    let phase1_iterations = t.iterations;
    let cost = |j: usize| if j < n { c[j] } else { 0.0 };
    t.optimize(&cost, &|_| true, opts, true)?;
    debug!(
        "simplex: {} rows, {} columns, {} phase-1 and {} phase-2 pivots",
        t.m,
        n,
        phase1_iterations,
        t.iterations - phase1_iterations
    );
    Ok(t.solution(&cost))
}

/// Re-optimizes from the feasible basis of `start` with new costs, letting
/// only columns with `allowed[j]` enter.
pub fn resolve(
    a: &SparseColumns,
    b: &[f64],
    c: &[f64],
    allowed: &[bool],
    start: &LpSolution,
    opts: &SimplexOptions,
) -> Result<LpSolution> {
    check_shapes(a, b, c)?;
    let n = a.cols();
    if allowed.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: allowed.len(),
        });
    }
    let mut t = Tableau::from_basis(a, b, &start.basis)?;
    if t.xb.iter().any(|v| *v < -opts.feasibility_tolerance) {
        return Err(Error::InvalidParameter("warm basis is not feasible".into()));
    }
    let cost = |j: usize| if j < n { c[j] } else { 0.0 };
    t.optimize(&cost, &|j| allowed[j], opts, true)?;
    Ok(t.solution(&cost))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn dense(rows: &[&[f64]]) -> SparseColumns {
        let m = rows.len();
        let n = rows[0].len();
        let mut a = SparseColumns::new(m);
        for j in 0..n {
            a.push_column((0..m).filter(|&r| rows[r][j] != 0.0).map(|r| (r, rows[r][j])));
        }
        a
    }

    #[test]
    fn textbook_problem() {
        // max 3x + 5y s.t. x ≤ 4, 2y ≤ 12, 3x + 2y ≤ 18 (optimum 36 at (2, 6)).
        let a = dense(&[
            &[1.0, 0.0, 1.0, 0.0, 0.0],
            &[0.0, 2.0, 0.0, 1.0, 0.0],
            &[3.0, 2.0, 0.0, 0.0, 1.0],
        ]);
        let sol = solve(&a, &[4.0, 12.0, 18.0], &[-3.0, -5.0, 0.0, 0.0, 0.0], &Default::default())
            .unwrap();
        assert!((sol.value + 36.0).abs() < 1e-12);
        assert!((sol.x[0] - 2.0).abs() < 1e-12 && (sol.x[1] - 6.0).abs() < 1e-12);
        // Strong duality: yᵀb equals the optimum.
        let yb: f64 = sol.duals.iter().zip([4.0, 12.0, 18.0]).map(|(y, b)| y * b).sum();
        assert!((yb - sol.value).abs() < 1e-12);
        assert!(sol.reduced_costs.iter().all(|d| *d >= -1e-12));
    }

    #[test]
    fn infeasible_and_unbounded() {
        let a = dense(&[&[1.0, 1.0], &[1.0, 1.0]]);
        assert!(matches!(
            solve(&a, &[1.0, 2.0], &[0.0, 0.0], &Default::default()),
            Err(Error::Infeasible { .. })
        ));
        let a = dense(&[&[1.0, -1.0]]);
        assert!(matches!(
            solve(&a, &[1.0], &[0.0, -1.0], &Default::default()),
            Err(Error::Unbounded { .. })
        ));
    }

    #[test]
    fn redundant_rows_are_tolerated() {
        let a = dense(&[&[1.0, 1.0, 0.0], &[1.0, 1.0, 0.0], &[0.0, 1.0, 1.0]]);
        let sol = solve(&a, &[1.0, 1.0, 1.0], &[1.0, 2.0, 1.0], &Default::default()).unwrap();
        assert!((sol.value - 2.0).abs() < 1e-12);
        let r = a.mul(&sol.x);
        assert!(r.iter().zip([1.0, 1.0, 1.0]).all(|(u, v)| (u - v).abs() < 1e-12));
    }

    #[test]
    fn resolve_stays_on_face() {
        // Simplex Σx = 1: every vertex optimal for zero cost; a restricted
        // re-solve picks the cheapest allowed vertex.
        let a = dense(&[&[1.0, 1.0, 1.0, 1.0]]);
        let sol = solve(&a, &[1.0], &[0.0; 4], &Default::default()).unwrap();
        let allowed = [false, true, true, false];
        let again =
            resolve(&a, &[1.0], &[5.0, 3.0, 2.0, -9.0], &allowed, &sol, &Default::default());
        let again = again.unwrap();
        assert!(again.x[2] > 0.99, "{:?}", again.x);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]
        /// Random feasible transportation problems: primal feasibility,
        /// dual feasibility and a zero duality gap.
        #[test]
        fn optimality_certificate(
            supply in proptest::collection::vec(0.1f64..2.0, 3),
            costs in proptest::collection::vec(0.0f64..5.0, 9),
            bland in any::<bool>(),
        ) {
            let total: f64 = supply.iter().sum();
            let demand = [total / 3.0; 3];
            let mut a = SparseColumns::new(6);
            for s in 0..3 {
                for t in 0..3 {
                    a.push_column([(s, 1.0), (3 + t, 1.0)]);
                }
            }
            let b: Vec<f64> = supply.iter().chain(&demand).copied().collect();
            let opts = SimplexOptions { bland_only: bland, ..Default::default() };
            let sol = solve(&a, &b, &costs, &opts).unwrap();
            let ax = a.mul(&sol.x);
            for (u, v) in ax.iter().zip(&b) {
                prop_assert!((u - v).abs() < 1e-9);
            }
            prop_assert!(sol.x.iter().all(|v| *v >= 0.0));
            prop_assert!(sol.reduced_costs.iter().all(|d| *d >= -1e-9));
            let yb: f64 = sol.duals.iter().zip(&b).map(|(y, b)| y * b).sum();
            prop_assert!((yb - sol.value).abs() < 1e-9);
        }
    }
}
