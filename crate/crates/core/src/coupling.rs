//! Switching rates `c_ij` and the coupling operator
//! `Θφ(x, i) = Σ_j c_ij (φ(x, i) - φ(x, j))`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::GridFunction;

/// Nonnegative `m × m` rates. Symmetry is not enforced here so that the
/// assumption checker can report it; diagonal entries never contribute.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct CouplingMatrix {
    m: usize,
    rates: Vec<f64>,
}

impl CouplingMatrix {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let m = rows.len();
        if m == 0 {
            return Err(Error::InvalidParameter("coupling matrix is empty".into()));
        }
        if let Some(r) = rows.iter().find(|r| r.len() != m) {
            return Err(Error::DimensionMismatch {
                expected: m,
                got: r.len(),
            });
        }
        let rates: Vec<f64> = rows.into_iter().flatten().collect();
        if let Some(v) = rates.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::InvalidParameter(format!(
                "switching rate {v} must be finite and nonnegative"
            )));
        }
        Ok(Self { m, rates })
    }

    /// All off-diagonal rates equal to `rate`.
    pub fn uniform(m: usize, rate: f64) -> Result<Self> {
        Self::new(
            (0..m)
                .map(|i| (0..m).map(|j| if i == j { 0.0 } else { rate }).collect())
                .collect(),
        )
    }

    pub fn components(&self) -> usize {
        self.m
    }

    pub fn rate(&self, i: usize, j: usize) -> f64 {
        self.rates[i * self.m + j]
    }

    pub fn is_symmetric(&self) -> bool {
        self.max_asymmetry() == 0.0
    }

    pub fn max_asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.m {
            for j in 0..i {
                worst = worst.max((self.rate(i, j) - self.rate(j, i)).abs());
            }
        }
        worst
    }

    /// `max_i Σ_{j≠i} c_ij`, the stiffness of Θ.
    pub fn max_row_sum(&self) -> f64 {
        (0..self.m)
            .map(|i| (0..self.m).filter(|&j| j != i).map(|j| self.rate(i, j)).sum())
            .fold(0.0, f64::max)
    }

    /// Θ applied to the `m` component values at one node.
    #[inline]
    pub fn apply_at(&self, phi: &[f64], out: &mut [f64]) {
        for i in 0..self.m {
            let mut acc = 0.0;
            for j in 0..self.m {
                if j != i {
                    acc += self.rate(i, j) * (phi[i] - phi[j]);
                }
            }
            out[i] = acc;
        }
    }

    /// Transpose of Θ at one node, `(Θᵀσ)_i = Σ_j (c_ij σ_i - c_ji σ_j)`.
    /// Equals Θ when `c` is symmetric.
    #[inline]
    pub fn apply_transpose_at(&self, sigma: &[f64], out: &mut [f64]) {
        for i in 0..self.m {
            let mut acc = 0.0;
            for j in 0..self.m {
                if j != i {
                    acc += self.rate(i, j) * sigma[i] - self.rate(j, i) * sigma[j];
                }
            }
            out[i] = acc;
        }
    }
}

impl TryFrom<Vec<Vec<f64>>> for CouplingMatrix {
    type Error = Error;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        Self::new(rows)
    }
}

impl From<CouplingMatrix> for Vec<Vec<f64>> {
    fn from(c: CouplingMatrix) -> Self {
        c.rates.chunks(c.m).map(|r| r.to_vec()).collect()
    }
}

/// Θφ at every node.
pub fn apply_coupling(c: &CouplingMatrix, phi: &GridFunction) -> Result<GridFunction> {
    let m = phi.grid().components();
    if m != c.components() {
        return Err(Error::DimensionMismatch {
            expected: c.components(),
            got: m,
        });
    }
    let mut out = GridFunction::zeros(*phi.grid());
    for (src, dst) in phi.values().chunks(m).zip(out.values_mut().chunks_mut(m)) {
        c.apply_at(src, dst);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::PeriodicGrid;
    use proptest::prelude::*;

    fn single_node(values: Vec<f64>) -> GridFunction {
        let m = values.len();
        let grid = PeriodicGrid::new(1, 8, m).unwrap();
        let mut all = Vec::new();
        for _ in 0..8 {
            all.extend_from_slice(&values);
        }
        GridFunction::from_values(grid, all).unwrap()
    }

    #[test]
    fn two_components() {
        let c = CouplingMatrix::uniform(2, 1.0).unwrap();
        let out = apply_coupling(&c, &single_node(vec![3.0, 1.0])).unwrap();
        assert_eq!(out.get(0, 0), 2.0);
        assert_eq!(out.get(0, 1), -2.0);
    }

    #[test]
    fn three_components() {
        let c = CouplingMatrix::uniform(3, 1.0).unwrap();
        let out = apply_coupling(&c, &single_node(vec![1.0, 2.0, 3.0])).unwrap();
        assert_eq!(&out.values()[..3], &[-3.0, 0.0, 3.0]);
    }

    #[test]
    fn constant_in_component_is_annihilated() {
        let c = CouplingMatrix::new(vec![
            vec![5.0, 0.3, 2.0],
            vec![0.3, 0.0, 1.1],
            vec![2.0, 1.1, 7.0],
        ])
        .unwrap();
        let out = apply_coupling(&c, &single_node(vec![4.2, 4.2, 4.2])).unwrap();
        assert!(out.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn diagonal_is_ignored() {
        let a = CouplingMatrix::new(vec![vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let b = CouplingMatrix::new(vec![vec![9.0, 1.0], vec![1.0, 3.0]]).unwrap();
        let phi = single_node(vec![0.5, -1.5]);
        assert_eq!(
            apply_coupling(&a, &phi).unwrap().values(),
            apply_coupling(&b, &phi).unwrap().values()
        );
    }

    #[test]
    fn rejects_bad_input() {
        assert!(CouplingMatrix::new(vec![vec![0.0, -1.0], vec![-1.0, 0.0]]).is_err());
        assert!(CouplingMatrix::new(vec![vec![0.0, 1.0]]).is_err());
        let c = CouplingMatrix::uniform(3, 1.0).unwrap();
        assert!(matches!(
            apply_coupling(&c, &single_node(vec![1.0, 2.0])),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    fn symmetric_rates(m: usize) -> impl Strategy<Value = CouplingMatrix> {
        proptest::collection::vec(0.0..5.0f64, m * m).prop_map(move |raw| {
            let rows = (0..m)
                .map(|i| {
                    (0..m)
                        .map(|j| if i <= j { raw[i * m + j] } else { raw[j * m + i] })
                        .collect()
                })
                .collect();
            CouplingMatrix::new(rows).unwrap()
        })
    }

    proptest! {
        #[test]
        fn self_adjoint_and_zero_column_sum(
            c in symmetric_rates(3),
            f in proptest::collection::vec(-10.0..10.0f64, 3),
            g in proptest::collection::vec(-10.0..10.0f64, 3),
        ) {
            let mut tf = [0.0; 3];
            let mut tg = [0.0; 3];
            c.apply_at(&f, &mut tf);
            c.apply_at(&g, &mut tg);
            let lhs: f64 = f.iter().zip(&tg).map(|(a, b)| a * b).sum();
            let rhs: f64 = g.iter().zip(&tf).map(|(a, b)| a * b).sum();
            prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
            prop_assert!(tf.iter().sum::<f64>().abs() <= 1e-12);
            let mut tt = [0.0; 3];
            c.apply_transpose_at(&f, &mut tt);
            for k in 0..3 {
                prop_assert!((tt[k] - tf[k]).abs() <= 1e-12);
            }
        }

        #[test]
        fn linear(
            c in symmetric_rates(4),
            f in proptest::collection::vec(-10.0..10.0f64, 4),
            g in proptest::collection::vec(-10.0..10.0f64, 4),
            a in -3.0..3.0f64,
        ) {
            let mix: Vec<f64> = f.iter().zip(&g).map(|(x, y)| a * x + y).collect();
            let (mut tf, mut tg, mut tm) = ([0.0; 4], [0.0; 4], [0.0; 4]);
            c.apply_at(&f, &mut tf);
            c.apply_at(&g, &mut tg);
            c.apply_at(&mix, &mut tm);
            for k in 0..4 {
                prop_assert!((tm[k] - (a * tf[k] + tg[k])).abs() <= 1e-10);
            }
        }

        #[test]
        fn transpose_pairs_with_asymmetric_rates(
            raw in proptest::collection::vec(0.0..5.0f64, 9),
            f in proptest::collection::vec(-10.0..10.0f64, 3),
            s in proptest::collection::vec(-10.0..10.0f64, 3),
        ) {
            let c = CouplingMatrix::new(raw.chunks(3).map(|r| r.to_vec()).collect()).unwrap();
            let (mut tf, mut ts) = ([0.0; 3], [0.0; 3]);
            c.apply_at(&f, &mut tf);
            c.apply_transpose_at(&s, &mut ts);
            let lhs: f64 = s.iter().zip(&tf).map(|(a, b)| a * b).sum();
            let rhs: f64 = f.iter().zip(&ts).map(|(a, b)| a * b).sum();
            prop_assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + lhs.abs()));
        }
    }
}
