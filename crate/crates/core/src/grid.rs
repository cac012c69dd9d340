//! Uniform size grid on `[0, W]`, sampled distributions, linear interpolation
//! and trapezoidal moments.

use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{domain, ModelError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    upper: f64,
    cells: usize,
}

impl Grid {
    /// `N` equal cells on `[0, W]`; nodes `w_n = n W / N`.
    pub fn uniform(upper: f64, cells: usize) -> Result<Self> {
        if !(upper > 0.0 && upper.is_finite()) {
            return Err(domain(format!("grid upper bound must be > 0, got {upper}")));
        }
        if cells < 2 {
            return Err(domain(format!("grid needs at least 2 cells, got {cells}")));
        }
        Ok(Self { upper, cells })
    }

    pub fn upper(&self) -> f64 {
        self.upper
    }

    pub fn cells(&self) -> usize {
        self.cells
    }

    pub fn len(&self) -> usize {
        self.cells + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self) -> f64 {
        self.upper / self.cells as f64
    }

    #[inline]
    pub fn node(&self, n: usize) -> f64 {
        if n == self.cells {
            self.upper
        } else {
            self.upper * n as f64 / self.cells as f64
        }
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..=self.cells).map(move |n| self.node(n))
    }

    /// Trapezoid weight of node `n` (spacing included).
    #[inline]
    pub fn weight(&self, n: usize) -> f64 {
        if n == 0 || n == self.cells {
            0.5 * self.spacing()
        } else {
            self.spacing()
        }
    }

    /// Cell `i` and fraction `t ∈ [0,1]` with `w = (1−t) w_i + t w_{i+1}`.
    /// `None` beyond `W`.
    #[inline]
    pub fn locate(&self, w: f64) -> Option<(usize, f64)> {
        if w > self.upper || w.is_nan() {
            return None;
        }
        let w = w.max(0.0);
        let h = self.spacing();
        let mut i = ((w / h).floor() as usize).min(self.cells - 1);
        if w >= self.node(i + 1) && i + 1 < self.cells {
            i += 1;
        }
        if w < self.node(i) && i > 0 {
            i -= 1;
        }
        let lo = self.node(i);
        if w == lo {
            return Some((i, 0.0));
        }
        let hi = self.node(i + 1);
        if w == hi {
            return Some((i, 1.0));
        }
        Some((i, ((w - lo) / (hi - lo)).clamp(0.0, 1.0)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Distribution {
    grid: Grid,
    values: Vec<f64>,
    time: f64,
}

impl Distribution {
    pub fn new(grid: Grid, values: Vec<f64>, time: f64) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(ModelError::GridMismatch(format!(
                "{} values for {} nodes",
                values.len(),
                grid.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(domain(format!("non-finite value at node {i}")));
        }
        if !(time >= 0.0) {
            return Err(domain(format!("time stamp must be >= 0, got {time}")));
        }
        Ok(Self { grid, values, time })
    }

    pub fn zeros(grid: Grid) -> Self {
        Self {
            grid,
            values: vec![0.0; grid.len()],
            time: 0.0,
        }
    }

    /// Samples `f` at every node.
    pub fn from_fn(grid: Grid, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(grid, grid.nodes().map(f).collect(), 0.0)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn with_time(mut self, time: f64) -> Self {
        self.time = time;
        self
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub(crate) fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Piecewise-linear reconstruction `f̂(w)`; zero beyond `W`.
    pub fn interpolate(&self, w: f64) -> Result<f64> {
        if w < 0.0 || w.is_nan() {
            return Err(domain(format!("interpolation at negative mass {w}")));
        }
        Ok(self.interp(w))
    }

    #[inline]
    pub(crate) fn interp(&self, w: f64) -> f64 {
        interp_values(&self.grid, &self.values, w)
    }

    /// `M_m = ∫ w^m f dw` by the trapezoidal rule.
    pub fn moment(&self, m: f64) -> f64 {
        trapezoid_moment(self, m)
    }

    pub fn biomass(&self) -> f64 {
        self.moment(1.0)
    }

    pub fn count(&self) -> f64 {
        self.moment(0.0)
    }

    /// Linear resampling onto another grid (zero beyond this grid's `W`).
    pub fn resample(&self, target: Grid) -> Distribution {
        Distribution {
            grid: target,
            values: target.nodes().map(|w| self.interp(w)).collect(),
            time: self.time,
        }
    }

    pub fn scaled(&self, factor: f64) -> Distribution {
        Distribution {
            grid: self.grid,
            values: self.values.iter().map(|v| v * factor).collect(),
            time: self.time,
        }
    }

    /// Writes the `w,f` snapshot CSV with 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "w,f")?;
        for (w, f) in self.grid.nodes().zip(&self.values) {
            writeln!(out, "{w:.16e},{f:.16e}")?;
        }
        Ok(())
    }

    /// Reads a `w,f` CSV and resamples it linearly onto `grid`.
    ///
    /// Rows must be sorted by increasing `w`; values beyond the last row are 0.
    pub fn read_csv<R: BufRead>(input: R, grid: Grid) -> Result<Distribution> {
        let mut pts: Vec<(f64, f64)> = Vec::new();
        for (lineno, line) in input.lines().enumerate() {
            let line = line.map_err(|e| domain(format!("csv read: {e}")))?;
            let line = line.trim();
            if line.is_empty() || (lineno == 0 && line.starts_with('w')) {
                continue;
            }
            let mut it = line.split(',');
            let parse = |s: Option<&str>| -> Result<f64> {
                s.map(str::trim)
                    .ok_or_else(|| domain(format!("csv line {}: missing column", lineno + 1)))?
                    .parse::<f64>()
                    .map_err(|e| domain(format!("csv line {}: {e}", lineno + 1)))
            };
            let w = parse(it.next())?;
            let f = parse(it.next())?;
            if let Some(&(prev, _)) = pts.last() {
                if w <= prev {
                    return Err(domain(format!("csv line {}: w not increasing", lineno + 1)));
                }
            }
            pts.push((w, f));
        }
        if pts.len() < 2 {
            return Err(domain("csv needs at least two rows"));
        }
        let eval = |w: f64| -> f64 {
            let j = pts.partition_point(|&(x, _)| x < w);
            if j == 0 {
                return if w == pts[0].0 { pts[0].1 } else { 0.0 };
            }
            if j == pts.len() {
                return 0.0;
            }
            let (x0, f0) = pts[j - 1];
            let (x1, f1) = pts[j];
            if w == x1 {
                return f1;
            }
            (f0 * (x1 - w) + f1 * (w - x0)) / (x1 - x0)
        };
        Distribution::new(grid, grid.nodes().map(eval).collect(), 0.0)
    }
}

#[inline]
pub(crate) fn interp_values(grid: &Grid, values: &[f64], w: f64) -> f64 {
    match grid.locate(w) {
        None => 0.0,
        Some((i, t)) => {
            if t == 0.0 {
                values[i]
            } else if t == 1.0 {
                values[i + 1]
            } else {
                values[i] + t * (values[i + 1] - values[i])
            }
        }
    }
}

pub fn make_uniform_grid(upper: f64, cells: usize) -> Result<Grid> {
    Grid::uniform(upper, cells)
}

/// `h Σ c_n w_n^m f_n` with half weights at both ends. The `w = 0` node only
/// contributes for `m = 0`.
pub fn trapezoid_moment(d: &Distribution, m: f64) -> f64 {
    let g = d.grid();
    let start = if m > 0.0 { 1 } else { 0 };
    let mut acc = 0.0;
    for n in start..g.len() {
        let f = d.values[n];
        if f != 0.0 {
            acc += g.weight(n) * g.node(n).powf(m) * f;
        }
    }
    acc
}

/// `f_n = left + (right − left) n / N` at `t = 0`.
pub fn linear_initial_condition(grid: Grid, left: f64, right: f64) -> Result<Distribution> {
    if !(left >= 0.0 && right >= 0.0) {
        return Err(domain(format!(
            "initial endpoints must be >= 0, got ({left}, {right})"
        )));
    }
    let n = grid.cells() as f64;
    let values = (0..grid.len())
        .map(|i| left + (right - left) * i as f64 / n)
        .collect();
    Distribution::new(grid, values, 0.0)
}
