//! Time-indexed sequences of grid functions.

use std::io::{BufRead, BufReader, BufWriter, Read, Write};

use crate::error::{Error, Result};
use crate::grid::{GridFunction, PeriodicGrid};

/// Magic bytes opening the binary slab layout.
pub const SLAB_MAGIC: &[u8; 8] = b"WKAMSLB1";

/// Frames of a grid function at uniformly spaced times in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeSlab {
    grid: PeriodicGrid,
    times: Vec<f64>,
    frames: Vec<GridFunction>,
}

impl TimeSlab {
    pub fn new(grid: PeriodicGrid, times: Vec<f64>, frames: Vec<GridFunction>) -> Result<Self> {
        if times.len() != frames.len() || times.is_empty() {
            return Err(Error::InvalidParameter(format!(
                "{} times for {} frames",
                times.len(),
                frames.len()
            )));
        }
        if let Some(f) = frames.iter().find(|f| *f.grid() != grid) {
            return Err(Error::GridMismatch(format!("{:?} vs {:?}", f.grid(), grid)));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidParameter("slab times must increase".into()));
        }
        if times.len() > 2 {
            let step = times[1] - times[0];
            if times
                .windows(2)
                .any(|w| ((w[1] - w[0]) - step).abs() > 1e-9 * step.max(1e-300) + 1e-14)
            {
                return Err(Error::InvalidParameter("slab times must be uniformly spaced".into()));
            }
        }
        Ok(Self {
            grid,
            times,
            frames,
        })
    }

    pub fn grid(&self) -> &PeriodicGrid {
        &self.grid
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn frames(&self) -> &[GridFunction] {
        &self.frames
    }

    pub fn frame(&self, n: usize) -> &GridFunction {
        &self.frames[n]
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn last(&self) -> &GridFunction {
        self.frames.last().expect("slab is never empty")
    }

    /// Spacing between stored frames (zero for a single frame).
    pub fn dt(&self) -> f64 {
        if self.times.len() < 2 {
            0.0
        } else {
            self.times[1] - self.times[0]
        }
    }

    pub fn check_compatible(&self, other: &TimeSlab) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch(format!("{:?} vs {:?}", self.grid, other.grid)));
        }
        if self.times.len() != other.times.len()
            || self
                .times
                .iter()
                .zip(&other.times)
                .any(|(a, b)| (a - b).abs() > 1e-12)
        {
            return Err(Error::GridMismatch("slabs have different time grids".into()));
        }
        Ok(())
    }

    /// `max_n ‖frame_n - v‖_∞`.
    pub fn max_deviation(&self, v: &GridFunction) -> Result<f64> {
        let mut worst: f64 = 0.0;
        for f in &self.frames {
            worst = worst.max(f.max_abs_diff(v)?);
        }
        Ok(worst)
    }

    /// One row per (frame, node, component): `frame,t,x[,y],i,value`, with
    /// components numbered from 1.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = BufWriter::new(out);
        let d = self.grid.dim();
        let axes = if d == 1 { "x" } else { "x,y" };
        writeln!(w, "frame,t,{axes},i,value")?;
        for (n, (t, f)) in self.times.iter().zip(&self.frames).enumerate() {
            for node in 0..self.grid.nodes() {
                let c = self.grid.coords(node);
                let coords = if d == 1 {
                    format!("{}", c[0])
                } else {
                    format!("{},{}", c[0], c[1])
                };
                for i in 0..self.grid.components() {
                    writeln!(w, "{n},{t},{coords},{},{:e}", i + 1, f.get(node, i))?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Binary layout, all little-endian: the 8 magic bytes, `d`, `N`, `m` as
    /// `u32`, the frame count as `u64`, the frame times as `f64`, then every
    /// frame's values as `f64` in node-major order (`node * m + i`).
    pub fn write_binary<W: Write>(&self, out: W) -> Result<()> {
        let mut w = BufWriter::new(out);
        w.write_all(SLAB_MAGIC)?;
        for v in [self.grid.dim(), self.grid.n(), self.grid.components()] {
            w.write_all(&(v as u32).to_le_bytes())?;
        }
        w.write_all(&(self.frames.len() as u64).to_le_bytes())?;
        for t in &self.times {
            w.write_all(&t.to_le_bytes())?;
        }
        for f in &self.frames {
            for v in f.values() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_binary<R: Read>(input: R) -> Result<Self> {
        let mut r = BufReader::new(input);
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != SLAB_MAGIC {
            return Err(Error::Config("not a slab file (bad magic)".into()));
        }
        let mut u32buf = [0u8; 4];
        let mut dims = [0usize; 3];
        for d in dims.iter_mut() {
            r.read_exact(&mut u32buf)?;
            *d = u32::from_le_bytes(u32buf) as usize;
        }
        let grid = PeriodicGrid::new(dims[0], dims[1], dims[2])?;
        let mut u64buf = [0u8; 8];
        r.read_exact(&mut u64buf)?;
        let count = u64::from_le_bytes(u64buf) as usize;
        let read_f64 = |r: &mut BufReader<R>| -> Result<f64> {
            let mut b = [0u8; 8];
            r.read_exact(&mut b)?;
            Ok(f64::from_le_bytes(b))
        };
        let mut times = Vec::with_capacity(count);
        for _ in 0..count {
            times.push(read_f64(&mut r)?);
        }
        let mut frames = Vec::with_capacity(count);
        for _ in 0..count {
            let mut vals = Vec::with_capacity(grid.len());
            for _ in 0..grid.len() {
                vals.push(read_f64(&mut r)?);
            }
            frames.push(GridFunction::from_values(grid, vals)?);
        }
        Self::new(grid, times, frames)
    }

    /// Reads the CSV layout written by [`TimeSlab::write_csv`].
    pub fn read_csv<R: Read>(input: R, grid: PeriodicGrid) -> Result<Self> {
        let reader = BufReader::new(input);
        let mut times: Vec<f64> = Vec::new();
        let mut frames: Vec<Vec<f64>> = Vec::new();
        let d = grid.dim();
        for (lineno, line) in reader.lines().enumerate() {
            let line = line?;
            if lineno == 0 || line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 4 + d {
                return Err(Error::Config(format!(
                    "slab csv line {}: expected {} fields",
                    lineno + 1,
                    4 + d
                )));
            }
            let parse = |s: &str| -> Result<f64> {
                s.trim().parse::<f64>().map_err(|e| {
                    Error::Config(format!("slab csv line {}: {e}", lineno + 1))
                })
            };
            let n = parse(fields[0])? as usize;
            if n == frames.len() {
                times.push(parse(fields[1])?);
                frames.push(Vec::with_capacity(grid.len()));
            } else if n + 1 != frames.len() {
                return Err(Error::Config(format!(
                    "slab csv line {}: frames must be contiguous",
                    lineno + 1
                )));
            }
            frames[n].push(parse(fields[3 + d])?);
        }
        let frames = frames
            .into_iter()
            .map(|v| GridFunction::from_values(grid, v))
            .collect::<Result<Vec<_>>>()?;
        Self::new(grid, times, frames)
    }
}
