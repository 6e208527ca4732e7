//! Periodic convolution with the standard bump mollifier.

use log::debug;

use super::{GridFunction, MAX_DIM};
use crate::error::{Error, Result};

/// `γ(r) = exp(-1 / (1 - r²))` for `r < 1`, zero otherwise.
fn bump(r2: f64) -> f64 {
    if r2 < 1.0 {
        (-1.0 / (1.0 - r2)).exp()
    } else {
        0.0
    }
}

/// Convolves every component with `γ^δ(y) = δ^{-d} γ(y / δ)` sampled on the
/// grid and renormalized to unit mass.
///
/// The bump has compact support of radius `δ`, so nothing is truncated. When
/// `δ < 2h` fewer than a handful of nodes carry weight; the input is returned
/// unchanged with a warning.
pub fn mollify(phi: &GridFunction, delta: f64) -> Result<GridFunction> {
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "mollifier width must be positive, got {delta}"
        )));
    }
    let g = *phi.grid();
    let h = g.h();
    if delta < 2.0 * h {
        debug!("mollifier width {delta:e} is below 2h = {:e}; skipping mollification", 2.0 * h);
        return Ok(phi.clone());
    }
    let d = g.dim();
    let reach = (delta / h).floor() as isize;
    let mut stencil: Vec<([isize; MAX_DIM], f64)> = Vec::new();
    let span: Vec<isize> = (-reach..=reach).collect();
    let second: &[isize] = if d == 2 { &span } else { &[0] };
    for &a in &span {
        for &b in second {
            let r2 = ((a * a + b * b) as f64) * h * h / (delta * delta);
            let w = bump(r2);
            if w > 0.0 {
                stencil.push(([a, b], w));
            }
        }
    }
    let total: f64 = stencil.iter().map(|s| s.1).sum();
    stencil.iter_mut().for_each(|s| s.1 /= total);

    let m = g.components();
    let mut out = GridFunction::zeros(g);
    let mut acc = vec![0.0; m];
    for node in 0..g.nodes() {
        acc.iter_mut().for_each(|a| *a = 0.0);
        for (off, w) in &stencil {
            let mut src = node;
            for k in 0..d {
                src = g.offset(src, k, off[k]);
            }
            for (a, v) in acc.iter_mut().zip(phi.at(src)) {
                *a += w * v;
            }
        }
        for (i, a) in acc.iter().enumerate() {
            out.set(node, i, *a);
        }
    }
    Ok(out)
}
