//! Periodic potentials `f(x, i)` on the torus.
//!
//! Three sources are supported: trigonometric polynomials given by their
//! coefficients, expressions in the coordinates `x` (and `y` when d = 2), and
//! sampled tables that are turned into trigonometric interpolants.

use std::f64::consts::PI;
use std::fmt;

use exmex::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};

/// One Fourier mode `a cos(2π k·x) + b sin(2π k·x)`.
#[derive(Clone, Debug, PartialEq)]
pub struct TrigTerm {
    pub wave: Vec<i32>,
    pub cos: f64,
    pub sin: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrigPolynomial {
    dim: usize,
    constant: f64,
    terms: Vec<TrigTerm>,
}

impl TrigPolynomial {
    pub fn new(dim: usize, constant: f64, terms: Vec<TrigTerm>) -> Result<Self> {
        if terms.iter().any(|t| t.wave.len() != dim) {
            return Err(Error::Potential(format!(
                "every wave vector must have {dim} entries"
            )));
        }
        Ok(Self {
            dim,
            constant,
            terms,
        })
    }

    pub fn constant(dim: usize, value: f64) -> Self {
        Self {
            dim,
            constant: value,
            terms: Vec::new(),
        }
    }

    /// `sin²(π k x_0)` summed over coordinates, i.e. `Σ_j (1 - cos(2π k x_j)) / 2`.
    pub fn sin_squared(dim: usize, freq: i32) -> Self {
        let terms = (0..dim)
            .map(|axis| {
                let mut wave = vec![0; dim];
                wave[axis] = freq;
                TrigTerm {
                    wave,
                    cos: -0.5,
                    sin: 0.0,
                }
            })
            .collect();
        Self {
            dim,
            constant: 0.5 * dim as f64,
            terms,
        }
    }

    /// Adds a constant to the polynomial.
    pub fn plus(mut self, c: f64) -> Self {
        self.constant += c;
        self
    }

    /// Trigonometric interpolant of samples taken at `k / n`, `k ∈ {0..n-1}^d`,
    /// laid out with the first coordinate slowest.
    pub fn from_samples(dim: usize, n: usize, samples: &[f64]) -> Result<Self> {
        if !(1..=2).contains(&dim) {
            return Err(Error::UnsupportedDimension(dim));
        }
        let total = n.pow(dim as u32);
        if samples.len() != total || n == 0 {
            return Err(Error::Potential(format!(
                "table has {} samples, expected {n}^{dim} = {total}",
                samples.len()
            )));
        }
        let mut planner = FftPlanner::<f64>::new();
        let fft = planner.plan_fft_forward(n);
        let mut data: Vec<Complex<f64>> = samples.iter().map(|&v| Complex::new(v, 0.0)).collect();
        // Transform along the fastest axis, then along the slow one.
        for chunk in data.chunks_mut(n) {
            fft.process(chunk);
        }
        if dim == 2 {
            let mut column = vec![Complex::new(0.0, 0.0); n];
            for j in 0..n {
                for i in 0..n {
                    column[i] = data[i * n + j];
                }
                fft.process(&mut column);
                for i in 0..n {
                    data[i * n + j] = column[i];
                }
            }
        }
        let scale = 1.0 / total as f64;
        let signed = |k: usize| -> i32 {
            if 2 * k > n {
                k as i32 - n as i32
            } else {
                k as i32
            }
        };
        let mut constant = 0.0;
        let mut terms = Vec::new();
        for (flat, c) in data.iter().enumerate() {
            let idx: Vec<usize> = if dim == 1 {
                vec![flat]
            } else {
                vec![flat / n, flat % n]
            };
            let wave: Vec<i32> = idx.iter().map(|&k| signed(k)).collect();
            let c = *c * scale;
            if wave.iter().all(|&k| k == 0) {
                constant = c.re;
                continue;
            }
            // Each real mode appears twice (k and -k mod n); keep the one
            // with the smaller flat index and double it. Nyquist modes are
            // their own partner.
            let partner = idx
                .iter()
                .fold(0, |acc, &k| acc * n + (n - k) % n);
            let self_partner = partner == flat;
            if !self_partner && partner < flat {
                continue;
            }
            let weight = if self_partner { 1.0 } else { 2.0 };
            // c e^{-2πi k·x_j} convention: f(x) = Σ c_k e^{2πi k·x}.
            let a = weight * c.re;
            let b = -weight * c.im;
            if a.abs() > 1e-15 || b.abs() > 1e-15 {
                terms.push(TrigTerm { wave, cos: a, sin: b });
            }
        }
        Ok(Self {
            dim,
            constant,
            terms,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        let mut acc = self.constant;
        for t in &self.terms {
            let phase = 2.0 * PI * dot_wave(&t.wave, x);
            let (s, c) = phase.sin_cos();
            acc += t.cos * c + t.sin * s;
        }
        acc
    }

    pub fn gradient(&self, x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|g| *g = 0.0);
        for t in &self.terms {
            let phase = 2.0 * PI * dot_wave(&t.wave, x);
            let (s, c) = phase.sin_cos();
            let amp = 2.0 * PI * (-t.cos * s + t.sin * c);
            for (g, &k) in out.iter_mut().zip(&t.wave) {
                *g += amp * k as f64;
            }
        }
    }
}

fn dot_wave(wave: &[i32], x: &[f64]) -> f64 {
    wave.iter().zip(x).map(|(&k, &xi)| k as f64 * xi).sum()
}

/// A potential written as an expression in `x` (and `y`).
#[derive(Clone)]
pub struct ExprField {
    source: String,
    expr: FlatEx<f64>,
    partials: Vec<Option<FlatEx<f64>>>,
    /// For each expression variable, the coordinate it reads.
    coords: Vec<usize>,
}

impl fmt::Debug for ExprField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ExprField").field("source", &self.source).finish()
    }
}

impl ExprField {
    pub fn parse(source: &str, dim: usize) -> Result<Self> {
        let expr = FlatEx::<f64>::parse(source)
            .map_err(|e| Error::Potential(format!("cannot parse `{source}`: {e}")))?;
        let names = ["x", "y"];
        let mut coords = Vec::new();
        for name in expr.var_names() {
            match names.iter().position(|n| n == name) {
                Some(c) if c < dim => coords.push(c),
                _ => {
                    return Err(Error::Potential(format!(
                        "unknown variable `{name}` in `{source}` (d = {dim} allows {:?})",
                        &names[..dim]
                    )))
                }
            }
        }
        let mut partials = vec![None; dim];
        for (var, &coord) in coords.iter().enumerate() {
            let d = expr
                .clone()
                .partial(var)
                .map_err(|e| Error::Potential(format!("cannot differentiate `{source}`: {e}")))?;
            partials[coord] = Some(d);
        }
        Ok(Self {
            source: source.to_string(),
            expr,
            partials,
            coords,
        })
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    fn args(&self, x: &[f64]) -> [f64; 2] {
        let mut args = [0.0; 2];
        for (slot, &c) in args.iter_mut().zip(&self.coords) {
            *slot = x[c];
        }
        args
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        let args = self.args(x);
        self.expr
            .eval(&args[..self.coords.len()])
            .unwrap_or(f64::NAN)
    }

    pub fn gradient(&self, x: &[f64], out: &mut [f64]) {
        let args = self.args(x);
        for (g, p) in out.iter_mut().zip(&self.partials) {
            *g = match p {
                Some(p) => p.eval(&args[..self.coords.len()]).unwrap_or(f64::NAN),
                None => 0.0,
            };
        }
    }
}

#[derive(Clone, Debug)]
pub enum ScalarField {
    Trig(TrigPolynomial),
    Expr(ExprField),
}

impl ScalarField {
    pub fn value(&self, x: &[f64]) -> f64 {
        match self {
            ScalarField::Trig(t) => t.value(x),
            ScalarField::Expr(e) => e.value(x),
        }
    }

    pub fn gradient(&self, x: &[f64], out: &mut [f64]) {
        match self {
            ScalarField::Trig(t) => t.gradient(x, out),
            ScalarField::Expr(e) => e.gradient(x, out),
        }
    }
}

/// `f(x, i)`: one scalar field per component.
#[derive(Clone, Debug)]
pub struct Potential {
    dim: usize,
    fields: Vec<ScalarField>,
}

impl Potential {
    pub fn new(dim: usize, fields: Vec<ScalarField>) -> Result<Self> {
        if fields.is_empty() {
            return Err(Error::Potential("at least one component is required".into()));
        }
        if let Some(bad) = fields.iter().find_map(|f| match f {
            ScalarField::Trig(t) if t.dim() != dim => Some(t.dim()),
            _ => None,
        }) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: bad,
            });
        }
        let pot = Self { dim, fields };
        pot.check_periodic()?;
        Ok(pot)
    }

    /// The same field on every component.
    pub fn uniform(dim: usize, m: usize, field: ScalarField) -> Result<Self> {
        Self::new(dim, vec![field; m])
    }

    pub fn zero(dim: usize, m: usize) -> Self {
        Self {
            dim,
            fields: vec![ScalarField::Trig(TrigPolynomial::constant(dim, 0.0)); m],
        }
    }

    /// Builds a potential from per-component samples on a regular `n^d` lattice.
    /// Samples must be nonnegative.
    pub fn from_table(dim: usize, n: usize, columns: &[Vec<f64>]) -> Result<Self> {
        let mut fields = Vec::with_capacity(columns.len());
        for (i, col) in columns.iter().enumerate() {
            if let Some(v) = col.iter().find(|v| !v.is_finite() || **v < 0.0) {
                return Err(Error::Potential(format!(
                    "table value {v} for component {} is negative or non-finite",
                    i + 1
                )));
            }
            fields.push(ScalarField::Trig(TrigPolynomial::from_samples(dim, n, col)?));
        }
        Self::new(dim, fields)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn components(&self) -> usize {
        self.fields.len()
    }

    pub fn field(&self, i: usize) -> &ScalarField {
        &self.fields[i]
    }

    pub fn value(&self, x: &[f64], i: usize) -> f64 {
        self.fields[i].value(x)
    }

    pub fn gradient(&self, x: &[f64], i: usize, out: &mut [f64]) {
        self.fields[i].gradient(x, out)
    }

    /// Expressions are not periodic by construction; sample the faces of the
    /// unit cell and reject mismatches.
    fn check_periodic(&self) -> Result<()> {
        const SAMPLES: usize = 16;
        for (i, field) in self.fields.iter().enumerate() {
            if !matches!(field, ScalarField::Expr(_)) {
                continue;
            }
            for axis in 0..self.dim {
                for s in 0..SAMPLES {
                    let mut lo = vec![s as f64 / SAMPLES as f64 + 0.013; self.dim];
                    lo[axis] = 0.0;
                    let mut hi = lo.clone();
                    hi[axis] = 1.0;
                    let (a, b) = (field.value(&lo), field.value(&hi));
                    if !a.is_finite() || (a - b).abs() > 1e-9 * (1.0 + a.abs()) {
                        return Err(Error::Potential(format!(
                            "component {} is not 1-periodic along axis {axis}: f = {a} vs {b}",
                            i + 1
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}
