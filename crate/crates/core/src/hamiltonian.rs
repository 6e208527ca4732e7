//! Hamiltonians `H(x, p, i)` and their Lagrangians.
//!
//! The solvers are generic over [`Hamiltonian`], so tests can inject
//! Hamiltonians outside the built-in families (e.g. a concave one to exercise
//! the assumption checker). [`HamiltonianSpec`] is the configured problem:
//! one of three parametric families with a closed-form dual, minus a
//! potential, plus a constant shift.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::potential::Potential;

/// Default half-width of the momentum box used by the numeric Legendre transform.
pub const LEGENDRE_P_MAX: f64 = 64.0;

pub trait Hamiltonian: Sync {
    fn dim(&self) -> usize;

    fn components(&self) -> usize;

    fn value(&self, x: &[f64], p: &[f64], i: usize) -> f64;

    fn grad_p(&self, x: &[f64], p: &[f64], i: usize, out: &mut [f64]);

    fn grad_x(&self, x: &[f64], p: &[f64], i: usize, out: &mut [f64]);

    /// Row-major `d × d` Hessian in `p`. Defaults to central differences of
    /// [`Hamiltonian::grad_p`].
    fn hessian_p(&self, x: &[f64], p: &[f64], i: usize, out: &mut [f64]) {
        let d = self.dim();
        let step = 1e-5;
        let mut pp = p.to_vec();
        let mut gp = vec![0.0; d];
        let mut gm = vec![0.0; d];
        for col in 0..d {
            pp[col] = p[col] + step;
            self.grad_p(x, &pp, i, &mut gp);
            pp[col] = p[col] - step;
            self.grad_p(x, &pp, i, &mut gm);
            pp[col] = p[col];
            for row in 0..d {
                out[row * d + col] = (gp[row] - gm[row]) / (2.0 * step);
            }
        }
    }

    /// `L(x, q, i) = sup_p { p·q - H(x, p, i) }`.
    fn lagrangian(&self, x: &[f64], q: &[f64], i: usize) -> Result<f64> {
        numeric_legendre(self, x, q, i, LEGENDRE_P_MAX)
    }
}

/// Maximizes `p·q - H(x, p, i)` over the box `[-p_max, p_max]^d` by a coarse
/// lattice search followed by repeated zooming around the best sample.
///
/// Fails if the best coarse sample lies on the box boundary, which happens
/// when `p_max` is too small or `H` is not superlinear.
pub fn numeric_legendre<H: Hamiltonian + ?Sized>(
    ham: &H,
    x: &[f64],
    q: &[f64],
    i: usize,
    p_max: f64,
) -> Result<f64> {
    let d = ham.dim();
    let objective = |p: &[f64]| -> f64 {
        p.iter().zip(q).map(|(a, b)| a * b).sum::<f64>() - ham.value(x, p, i)
    };
    let coarse = if d == 1 { 801 } else { 81 };
    let (mut best, mut best_val, on_edge) =
        lattice_max(&objective, &vec![0.0; d], p_max, coarse);
    if on_edge {
        return Err(Error::LegendreBoundary { p_max });
    }
    let mut half = 2.0 * p_max / (coarse - 1) as f64;
    while half > 1e-11 * (1.0 + p_max) {
        let (b, v, _) = lattice_max(&objective, &best, half, 11);
        if v >= best_val {
            best = b;
            best_val = v;
        }
        half *= 0.4;
    }
    Ok(best_val)
}

fn lattice_max<F: Fn(&[f64]) -> f64>(
    f: &F,
    center: &[f64],
    half: f64,
    points: usize,
) -> (Vec<f64>, f64, bool) {
    let d = center.len();
    let step = 2.0 * half / (points - 1) as f64;
    let mut idx = vec![0usize; d];
    let mut p = vec![0.0; d];
    let mut best = center.to_vec();
    let mut best_val = f64::NEG_INFINITY;
    let mut best_edge = false;
    loop {
        for k in 0..d {
            p[k] = center[k] - half + step * idx[k] as f64;
        }
        let v = f(&p);
        if v > best_val {
            best_val = v;
            best.copy_from_slice(&p);
            best_edge = idx.iter().any(|&j| j == 0 || j == points - 1);
        }
        let mut k = 0;
        loop {
            if k == d {
                return (best, best_val, best_edge);
            }
            idx[k] += 1;
            if idx[k] < points {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
    }
}

/// Kinetic part of a built-in family.
#[derive(Clone, Debug)]
pub enum Family {
    /// `|p|² / 2`
    Quadratic,
    /// `p·A(i)p / 2` with `A(i)` symmetric positive definite.
    AnisotropicQuadratic(Vec<Anisotropy>),
    /// `|p|⁴ / 4`
    Quartic,
}

/// A symmetric positive definite matrix together with its inverse.
#[derive(Clone, Debug)]
pub struct Anisotropy {
    dim: usize,
    matrix: Vec<f64>,
    inverse: Vec<f64>,
}

impl Anisotropy {
    pub fn new(dim: usize, rows: &[Vec<f64>]) -> Result<Self> {
        if rows.len() != dim || rows.iter().any(|r| r.len() != dim) {
            return Err(Error::InvalidParameter(format!(
                "anisotropy matrix must be {dim}x{dim}"
            )));
        }
        let matrix: Vec<f64> = rows.iter().flatten().copied().collect();
        for r in 0..dim {
            for c in 0..dim {
                if (matrix[r * dim + c] - matrix[c * dim + r]).abs() > 1e-14 {
                    return Err(Error::InvalidParameter(
                        "anisotropy matrix must be symmetric".into(),
                    ));
                }
            }
        }
        let m = DMatrix::from_row_slice(dim, dim, &matrix);
        let chol = m.clone().cholesky().ok_or_else(|| {
            Error::InvalidParameter("anisotropy matrix must be positive definite".into())
        })?;
        let inv = chol.inverse();
        let inverse = (0..dim * dim).map(|k| inv[(k / dim, k % dim)]).collect();
        Ok(Self {
            dim,
            matrix,
            inverse,
        })
    }

    fn apply(&self, v: &[f64], out: &mut [f64]) {
        mat_vec(&self.matrix, self.dim, v, out)
    }

    fn apply_inverse(&self, v: &[f64], out: &mut [f64]) {
        mat_vec(&self.inverse, self.dim, v, out)
    }

    fn quad(&self, v: &[f64]) -> f64 {
        quad_form(&self.matrix, self.dim, v)
    }

    fn quad_inverse(&self, v: &[f64]) -> f64 {
        quad_form(&self.inverse, self.dim, v)
    }
}

fn mat_vec(a: &[f64], d: usize, v: &[f64], out: &mut [f64]) {
    for r in 0..d {
        out[r] = (0..d).map(|c| a[r * d + c] * v[c]).sum();
    }
}

fn quad_form(a: &[f64], d: usize, v: &[f64]) -> f64 {
    let mut acc = 0.0;
    for r in 0..d {
        for c in 0..d {
            acc += v[r] * a[r * d + c] * v[c];
        }
    }
    acc
}

fn norm_sq(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum()
}

/// `H(x, p, i) = kinetic(p, i) - f(x, i) + shift`.
#[derive(Clone, Debug)]
pub struct HamiltonianSpec {
    pub family: Family,
    pub potential: Potential,
    pub shift: f64,
}

impl HamiltonianSpec {
    pub fn new(family: Family, potential: Potential) -> Result<Self> {
        if let Family::AnisotropicQuadratic(mats) = &family {
            if mats.len() != potential.components() {
                return Err(Error::InvalidParameter(format!(
                    "{} anisotropy matrices for {} components",
                    mats.len(),
                    potential.components()
                )));
            }
            if let Some(a) = mats.iter().find(|a| a.dim != potential.dim()) {
                return Err(Error::DimensionMismatch {
                    expected: potential.dim(),
                    got: a.dim,
                });
            }
        }
        Ok(Self {
            family,
            potential,
            shift: 0.0,
        })
    }

    pub fn quadratic(potential: Potential) -> Self {
        Self {
            family: Family::Quadratic,
            potential,
            shift: 0.0,
        }
    }

    pub fn with_shift(mut self, shift: f64) -> Self {
        self.shift = shift;
        self
    }

    fn check(&self, x: &[f64], v: &[f64], i: usize) -> Result<Vec<f64>> {
        let d = self.dim();
        if i >= self.components() {
            return Err(Error::ComponentIndex {
                index: i,
                count: self.components(),
            });
        }
        for s in [x, v] {
            if s.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: s.len(),
                });
            }
        }
        if x.iter().chain(v).any(|a| !a.is_finite()) {
            return Err(Error::NonFinite(format!("x = {x:?}, vector = {v:?}")));
        }
        Ok(x.iter().map(|a| a.rem_euclid(1.0)).collect())
    }

    /// Checked `H(x, p, i)` with `x` reduced modulo 1.
    pub fn eval(&self, x: &[f64], p: &[f64], i: usize) -> Result<f64> {
        let x = self.check(x, p, i)?;
        Ok(self.value(&x, p, i))
    }

    /// Checked `L(x, q, i)`, closed form for every built-in family.
    pub fn eval_lagrangian(&self, x: &[f64], q: &[f64], i: usize) -> Result<f64> {
        let x = self.check(x, q, i)?;
        self.lagrangian(&x, q, i)
    }

    /// Checked `(D_pH, D_xH)`.
    pub fn derivatives(&self, x: &[f64], p: &[f64], i: usize) -> Result<(Vec<f64>, Vec<f64>)> {
        let x = self.check(x, p, i)?;
        let mut dp = vec![0.0; self.dim()];
        let mut dx = vec![0.0; self.dim()];
        self.grad_p(&x, p, i, &mut dp);
        self.grad_x(&x, p, i, &mut dx);
        Ok((dp, dx))
    }

    /// `D_qL(x, q, i)`, the inverse of `p ↦ D_pH(x, p, i)`.
    pub fn lagrangian_grad_q(&self, _x: &[f64], q: &[f64], i: usize, out: &mut [f64]) {
        match &self.family {
            Family::Quadratic => out.copy_from_slice(q),
            Family::AnisotropicQuadratic(a) => a[i].apply_inverse(q, out),
            Family::Quartic => {
                let n = norm_sq(q).sqrt();
                let scale = if n > 0.0 { n.powf(-2.0 / 3.0) } else { 0.0 };
                for (o, v) in out.iter_mut().zip(q) {
                    *o = scale * v;
                }
            }
        }
    }

    fn kinetic(&self, p: &[f64], i: usize) -> f64 {
        match &self.family {
            Family::Quadratic => 0.5 * norm_sq(p),
            Family::AnisotropicQuadratic(a) => 0.5 * a[i].quad(p),
            Family::Quartic => 0.25 * norm_sq(p).powi(2),
        }
    }
}

impl Hamiltonian for HamiltonianSpec {
    fn dim(&self) -> usize {
        self.potential.dim()
    }

    fn components(&self) -> usize {
        self.potential.components()
    }

    fn value(&self, x: &[f64], p: &[f64], i: usize) -> f64 {
        self.kinetic(p, i) - self.potential.value(x, i) + self.shift
    }

    fn grad_p(&self, _x: &[f64], p: &[f64], i: usize, out: &mut [f64]) {
        match &self.family {
            Family::Quadratic => out.copy_from_slice(p),
            Family::AnisotropicQuadratic(a) => a[i].apply(p, out),
            Family::Quartic => {
                let n2 = norm_sq(p);
                for (o, v) in out.iter_mut().zip(p) {
                    *o = n2 * v;
                }
            }
        }
    }

    fn grad_x(&self, x: &[f64], _p: &[f64], i: usize, out: &mut [f64]) {
        self.potential.gradient(x, i, out);
        out.iter_mut().for_each(|g| *g = -*g);
    }

    fn hessian_p(&self, _x: &[f64], p: &[f64], i: usize, out: &mut [f64]) {
        let d = self.dim();
        match &self.family {
            Family::Quadratic => {
                for r in 0..d {
                    for c in 0..d {
                        out[r * d + c] = if r == c { 1.0 } else { 0.0 };
                    }
                }
            }
            Family::AnisotropicQuadratic(a) => out.copy_from_slice(&a[i].matrix),
            Family::Quartic => {
                let n2 = norm_sq(p);
                for r in 0..d {
                    for c in 0..d {
                        out[r * d + c] = 2.0 * p[r] * p[c] + if r == c { n2 } else { 0.0 };
                    }
                }
            }
        }
    }

    fn lagrangian(&self, x: &[f64], q: &[f64], i: usize) -> Result<f64> {
        let kinetic_dual = match &self.family {
            Family::Quadratic => 0.5 * norm_sq(q),
            Family::AnisotropicQuadratic(a) => 0.5 * a[i].quad_inverse(q),
            Family::Quartic => 0.75 * norm_sq(q).powf(2.0 / 3.0),
        };
        Ok(kinetic_dual + self.potential.value(x, i) - self.shift)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::{ScalarField, TrigPolynomial};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn sin2(m: usize) -> Potential {
        Potential::uniform(1, m, ScalarField::Trig(TrigPolynomial::sin_squared(1, 1))).unwrap()
    }

    fn zero(d: usize) -> Potential {
        Potential::zero(d, 1)
    }

    #[test]
    fn hamiltonian_values() {
        let quad = HamiltonianSpec::quadratic(zero(1));
        assert_eq!(quad.eval(&[0.3], &[2.0], 0).unwrap(), 2.0);
        let quad = HamiltonianSpec::quadratic(sin2(2));
        assert_eq!(quad.eval(&[0.0], &[0.0], 1).unwrap(), 0.0);
        let quartic = HamiltonianSpec::new(Family::Quartic, zero(1)).unwrap();
        assert_eq!(quartic.eval(&[0.7], &[1.0], 0).unwrap(), 0.25);
    }

    #[test]
    fn eval_reduces_x_and_rejects_bad_input() {
        let quad = HamiltonianSpec::quadratic(sin2(2));
        let a = quad.eval(&[0.25], &[1.0], 0).unwrap();
        let b = quad.eval(&[3.25], &[1.0], 0).unwrap();
        let c = quad.eval(&[-0.75], &[1.0], 0).unwrap();
        assert!((a - b).abs() < 1e-12 && (a - c).abs() < 1e-12);
        assert!(matches!(
            quad.eval(&[0.0], &[0.0], 2),
            Err(Error::ComponentIndex { .. })
        ));
        assert!(matches!(
            quad.eval(&[f64::NAN], &[0.0], 0),
            Err(Error::NonFinite(_))
        ));
        assert!(quad.eval(&[0.0, 0.0], &[0.0], 0).is_err());
    }

    #[test]
    fn lagrangian_values() {
        let quad = HamiltonianSpec::quadratic(sin2(1));
        assert_eq!(quad.eval_lagrangian(&[0.0], &[0.0], 0).unwrap(), 0.0);
        let x = 0.3;
        let l = quad.eval_lagrangian(&[x], &[1.5], 0).unwrap();
        assert!((l - (1.125 + (PI * x).sin().powi(2))).abs() < 1e-14);
        let free = HamiltonianSpec::quadratic(zero(1));
        assert_eq!(free.eval_lagrangian(&[0.1], &[2.0], 0).unwrap(), 2.0);
    }

    /// Brute-force sup of `p q - p⁴/4` over `p ∈ [-4, 4]` with step 1e-4.
    fn quartic_dual_oracle(q: f64) -> f64 {
        (0..=80_000)
            .map(|k| -4.0 + 1e-4 * k as f64)
            .map(|p| p * q - 0.25 * p.powi(4))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    #[test]
    fn quartic_lagrangian_matches_brute_force() {
        let oracle = quartic_dual_oracle(1.0);
        assert!((oracle - 0.75).abs() < 1e-7);
        let quartic = HamiltonianSpec::new(Family::Quartic, zero(1)).unwrap();
        let closed = quartic.eval_lagrangian(&[0.0], &[1.0], 0).unwrap();
        assert!((closed - 0.75).abs() < 1e-14);
        let numeric = numeric_legendre(&quartic, &[0.0], &[1.0], 0, 8.0).unwrap();
        assert!((numeric - 0.75).abs() < 1e-10);
        for q in [-2.0, -0.3, 0.0, 0.7, 3.0] {
            let closed = quartic.eval_lagrangian(&[0.0], &[q], 0).unwrap();
            assert!((closed - quartic_dual_oracle(q)).abs() < 1e-6, "q = {q}");
        }
    }

    #[test]
    fn numeric_legendre_matches_closed_forms_in_two_dimensions() {
        let pot = Potential::uniform(2, 1, ScalarField::Trig(TrigPolynomial::sin_squared(2, 1)))
            .unwrap();
        let aniso = Anisotropy::new(2, &[vec![2.0, 0.5], vec![0.5, 1.0]]).unwrap();
        let specs = [
            HamiltonianSpec::quadratic(pot.clone()),
            HamiltonianSpec::new(Family::AnisotropicQuadratic(vec![aniso]), pot.clone()).unwrap(),
            HamiltonianSpec::new(Family::Quartic, pot).unwrap(),
        ];
        for spec in &specs {
            let x = [0.2, 0.7];
            let q = [0.8, -0.4];
            let closed = spec.eval_lagrangian(&x, &q, 0).unwrap();
            let numeric = numeric_legendre(spec, &x, &q, 0, 6.0).unwrap();
            assert!((closed - numeric).abs() < 1e-8, "{:?}", spec.family);
        }
    }

    #[test]
    fn numeric_legendre_reports_small_box() {
        let quad = HamiltonianSpec::quadratic(zero(1));
        // Maximizer is p = q = 5, outside the box.
        assert!(matches!(
            numeric_legendre(&quad, &[0.0], &[5.0], 0, 2.0),
            Err(Error::LegendreBoundary { .. })
        ));
    }

    #[test]
    fn derivatives_quadratic() {
        let free = HamiltonianSpec::quadratic(zero(1));
        let (dp, dx) = free.derivatives(&[0.4], &[3.0], 0).unwrap();
        assert_eq!(dp, vec![3.0]);
        assert_eq!(dx, vec![0.0]);
    }

    #[test]
    fn grad_x_against_finite_difference() {
        // f = sin²(πx): f'(1/4) = π sin(π/2) = π, so D_xH = -π.
        let spec = HamiltonianSpec::quadratic(sin2(1));
        let (_, dx) = spec.derivatives(&[0.25], &[0.0], 0).unwrap();
        let h = 1e-6;
        let fd = (spec.eval(&[0.25 + h], &[0.0], 0).unwrap()
            - spec.eval(&[0.25 - h], &[0.0], 0).unwrap())
            / (2.0 * h);
        assert!((fd + PI).abs() < 1e-6);
        assert!((dx[0] + PI).abs() < 1e-12);
    }

    #[test]
    fn legendre_involution_on_closed_form_families() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let pot = Potential::uniform(2, 2, ScalarField::Trig(TrigPolynomial::sin_squared(2, 1)))
            .unwrap();
        let mats = vec![
            Anisotropy::new(2, &[vec![2.0, 0.5], vec![0.5, 1.0]]).unwrap(),
            Anisotropy::new(2, &[vec![1.0, -0.2], vec![-0.2, 0.5]]).unwrap(),
        ];
        let specs = [
            HamiltonianSpec::quadratic(pot.clone()),
            HamiltonianSpec::new(Family::AnisotropicQuadratic(mats), pot.clone()).unwrap(),
            HamiltonianSpec::new(Family::Quartic, pot).unwrap(),
        ];
        for spec in &specs {
            for _ in 0..100 {
                let x = [rng.gen::<f64>(), rng.gen::<f64>()];
                let p = [rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)];
                let i = rng.gen_range(0..2);
                let mut q = [0.0; 2];
                let mut back = [0.0; 2];
                spec.grad_p(&x, &p, i, &mut q);
                spec.lagrangian_grad_q(&x, &q, i, &mut back);
                for k in 0..2 {
                    assert!((back[k] - p[k]).abs() < 1e-8, "{:?}", spec.family);
                }
                // Fenchel equality at the pair (p, D_pH(p)).
                let h = spec.value(&x, &p, i);
                let l = spec.lagrangian(&x, &q, i).unwrap();
                let pq: f64 = p.iter().zip(&q).map(|(a, b)| a * b).sum();
                assert!((h + l - pq).abs() < 1e-8 * (1.0 + pq.abs()));
            }
        }
    }

    #[test]
    fn anisotropy_validation() {
        assert!(Anisotropy::new(2, &[vec![1.0, 2.0], vec![0.0, 1.0]]).is_err());
        assert!(Anisotropy::new(2, &[vec![1.0, 2.0], vec![2.0, 1.0]]).is_err());
        assert!(Anisotropy::new(2, &[vec![1.0, 0.0]]).is_err());
    }
}
