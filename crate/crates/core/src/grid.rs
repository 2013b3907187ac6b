//! Uniform time grids on `[0, T]` and real functions sampled on them.

use crate::error::{Error, Result};

/// Uniform discretization `t_i = i T / n`, `i = 0..=n`, of `[0, T]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    horizon: f64,
    n: usize,
}

impl Grid {
    pub fn new(horizon: f64, n: usize) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::InvalidGrid(format!(
                "horizon must be positive and finite, got {horizon}"
            )));
        }
        if n < 2 {
            return Err(Error::InvalidGrid(format!(
                "need at least 2 steps, got {n}"
            )));
        }
        Ok(Self { horizon, n })
    }

    #[inline]
    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// Number of steps; there are `n + 1` points.
    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn step(&self) -> f64 {
        self.horizon / self.n as f64
    }

    #[inline]
    pub fn point(&self, i: usize) -> f64 {
        if i == self.n {
            self.horizon
        } else {
            self.horizon * i as f64 / self.n as f64
        }
    }

    pub fn points(&self) -> Vec<f64> {
        (0..=self.n).map(|i| self.point(i)).collect()
    }

    /// Midpoint of cell `j`, i.e. of `[t_j, t_{j+1}]`.
    #[inline]
    pub fn midpoint(&self, j: usize) -> f64 {
        self.horizon * (j as f64 + 0.5) / self.n as f64
    }

    /// Index of the grid point equal to `t` (up to a relative tolerance of 1e-9 of a step).
    pub fn index_of(&self, t: f64) -> Option<usize> {
        let x = t / self.step();
        let i = x.round();
        if i < 0.0 || i > self.n as f64 || (x - i).abs() > 1e-9 {
            None
        } else {
            Some(i as usize)
        }
    }

    /// Index of the cell containing `t` (the last cell for `t = T`).
    pub fn cell_of(&self, t: f64) -> usize {
        let j = (t / self.step()).floor();
        if j < 0.0 {
            0
        } else {
            (j as usize).min(self.n - 1)
        }
    }

    /// The grid `[0, t_m]` made of the first `m` cells.
    pub fn truncated(&self, m: usize) -> Result<Grid> {
        if m > self.n {
            return Err(Error::InvalidGrid(format!(
                "cannot truncate {} steps to {m}",
                self.n
            )));
        }
        Grid::new(self.point(m), m)
    }

    pub fn check_same(&self, other: &Grid) -> Result<()> {
        if self.n != other.n || (self.horizon - other.horizon).abs() > 1e-12 * self.horizon {
            return Err(Error::GridMismatch(format!(
                "(T = {}, n = {}) vs (T = {}, n = {})",
                self.horizon, self.n, other.horizon, other.n
            )));
        }
        Ok(())
    }
}

/// Real values at the `n + 1` points of a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    grid: Grid,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n() + 1 {
            return Err(Error::GridMismatch(format!(
                "expected {} values, got {}",
                grid.n() + 1,
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("non-finite value at index {i}")));
        }
        Ok(Self { grid, values })
    }

    pub fn from_fn(grid: Grid, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(grid, grid.points().into_iter().map(f).collect())
    }

    pub fn zeros(grid: Grid) -> Self {
        Self {
            grid,
            values: vec![0.0; grid.n() + 1],
        }
    }

    #[inline]
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Piecewise-linear interpolation between grid values.
    pub fn interpolate(&self, t: f64) -> f64 {
        let j = self.grid.cell_of(t);
        let h = self.grid.step();
        let x = (t - self.grid.point(j)) / h;
        self.values[j] + (self.values[j + 1] - self.values[j]) * x
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}
