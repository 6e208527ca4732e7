//! Discrete uniqueness sets: thresholded projected supports, closed up by
//! one grid cell.

use std::collections::BTreeSet;
use std::io::{BufWriter, Write};

use super::measure::DiscreteMeasure;
use crate::error::{Error, Result};
use crate::grid::PeriodicGrid;

/// A set of `(node, component)` pairs on one grid.
#[derive(Clone, Debug, PartialEq)]
pub struct UniquenessSet {
    grid: PeriodicGrid,
    members: BTreeSet<(usize, usize)>,
}

impl UniquenessSet {
    pub fn new(grid: PeriodicGrid, members: impl IntoIterator<Item = (usize, usize)>) -> Self {
        Self {
            grid,
            members: members.into_iter().collect(),
        }
    }

    pub fn grid(&self) -> &PeriodicGrid {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, node: usize, i: usize) -> bool {
        self.members.contains(&(node, i))
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.members.iter().copied()
    }

    /// Whether some member of component `i` lies within `radius` of `x`.
    pub fn reaches(&self, x: &[f64], i: usize, radius: f64) -> bool {
        self.members
            .iter()
            .any(|&(node, j)| j == i && self.grid.distance_to_point(node, x) <= radius + 1e-12)
    }

    /// Adds every node at max-norm offset one from a member, same component.
    pub fn dilate(&self) -> Self {
        let g = self.grid;
        let mut out = self.members.clone();
        for &(node, i) in &self.members {
            for a in -1..=1isize {
                let n1 = g.offset(node, 0, a);
                if g.dim() == 1 {
                    out.insert((n1, i));
                } else {
                    for b in -1..=1isize {
                        out.insert((g.offset(n1, 1, b), i));
                    }
                }
            }
        }
        Self { grid: g, members: out }
    }

    /// Rows `x[,y],i` with components numbered from 1.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = BufWriter::new(out);
        let d = self.grid.dim();
        writeln!(w, "{}", if d == 1 { "x,i" } else { "x,y,i" })?;
        for &(node, i) in &self.members {
            let x = self.grid.coords(node);
            for v in &x[..d] {
                write!(w, "{v},")?;
            }
            writeln!(w, "{}", i + 1)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Union over `measures` of the `(x, i)` with marginal mass at least
/// `threshold`, dilated by one cell. Empty when the threshold exceeds every
/// marginal mass.
pub fn uniqueness_set(measures: &[DiscreteMeasure], threshold: f64) -> Result<UniquenessSet> {
    let first = measures
        .first()
        .ok_or_else(|| Error::Precondition("uniqueness set of an empty measure list".into()))?;
    let grid = *first.grid();
    let m = grid.components();
    let mut members = BTreeSet::new();
    for mu in measures {
        if *mu.grid() != grid {
            return Err(Error::GridMismatch("measures live on different grids".into()));
        }
        for (k, w) in mu.position_marginal().iter().enumerate() {
            if *w >= threshold {
                members.insert((k / m, k % m));
            }
        }
    }
    Ok(UniquenessSet { grid, members }.dilate())
}
