//! CSV and gnuplot writers for the objects the core crate has no writer for.

use std::io::Write;

use wkam_core::evolve::TimeSlab;
use wkam_core::mather::DiscreteMeasure;
use wkam_core::{GridFunction, Result};

fn coords(f: &GridFunction, node: usize, sep: &str) -> String {
    let g = f.grid();
    let c = g.coords(node);
    c[..g.dim()].iter().map(|v| v.to_string()).collect::<Vec<_>>().join(sep)
}

/// `x[,y],i,value` with 1-based components.
pub fn grid_function_csv(f: &GridFunction, out: &mut Vec<u8>) -> Result<()> {
    let g = f.grid();
    writeln!(out, "{},i,value", if g.dim() == 1 { "x" } else { "x,y" })?;
    for node in 0..g.nodes() {
        let x = coords(f, node, ",");
        for (i, v) in f.at(node).iter().enumerate() {
            writeln!(out, "{x},{},{v:e}", i + 1)?;
        }
    }
    Ok(())
}

/// One line per node, `x [y] v_1 .. v_m`; in 2D a blank line closes each
/// scan line so `splot` draws a surface.
pub fn grid_function_dat(f: &GridFunction, out: &mut Vec<u8>) -> Result<()> {
    let g = f.grid();
    let m = g.components();
    writeln!(
        out,
        "# {} {}",
        if g.dim() == 1 { "x" } else { "x y" },
        (1..=m).map(|i| format!("v{i}")).collect::<Vec<_>>().join(" ")
    )?;
    for node in 0..g.nodes() {
        let vals: Vec<String> = f.at(node).iter().map(|v| format!("{v:e}")).collect();
        writeln!(out, "{} {}", coords(f, node, " "), vals.join(" "))?;
        if g.dim() == 2 && (node + 1) % g.n() == 0 {
            writeln!(out)?;
        }
    }
    Ok(())
}

/// Frames as gnuplot data blocks separated by two blank lines, so
/// `plot ... index k` selects frame `k`.
pub fn slab_dat(slab: &TimeSlab, out: &mut Vec<u8>) -> Result<()> {
    for (t, f) in slab.times().iter().zip(slab.frames()) {
        writeln!(out, "# t = {t}")?;
        grid_function_dat(f, out)?;
        writeln!(out, "\n")?;
    }
    Ok(())
}

/// `x [y] q [q2] i weight` per atom.
pub fn measure_dat(mu: &DiscreteMeasure, out: &mut Vec<u8>) -> Result<()> {
    let g = mu.grid();
    let d = g.dim();
    writeln!(out, "# {} i weight", if d == 1 { "x q" } else { "x y q1 q2" })?;
    for (k, w) in mu.atoms() {
        let x = g.coords(k.x);
        let q = mu.vgrid().coords(k.q);
        let xs: Vec<String> = x[..d].iter().map(|v| v.to_string()).collect();
        let qs: Vec<String> = q[..d].iter().map(|v| v.to_string()).collect();
        writeln!(out, "{} {} {} {w:e}", xs.join(" "), qs.join(" "), k.i + 1)?;
    }
    Ok(())
}

/// At most `frames` evenly spaced frames of `slab`, first and last
/// included. The stride is the smallest divisor of the step count that is
/// large enough, so the spacing stays uniform.
pub fn thin(slab: &TimeSlab, frames: usize) -> Result<TimeSlab> {
    let steps = slab.len() - 1;
    if slab.len() <= frames {
        return Ok(slab.clone());
    }
    let min_stride = steps.div_ceil(frames.max(2) - 1);
    let stride = (min_stride..=steps).find(|s| steps % s == 0).unwrap_or(steps);
    let idx: Vec<usize> = (0..=steps).step_by(stride).collect();
    TimeSlab::new(
        *slab.grid(),
        idx.iter().map(|&n| slab.times()[n]).collect(),
        idx.iter().map(|&n| slab.frame(n).clone()).collect(),
    )
}
